#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kenkf/experiment.hpp"

using namespace kenkf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal_run_config() {
  return json{
      {"problem", {{"name", "elliptic-tc1"}, {"n", 8}, {"gamma", 0.1}}},
      {"solver", {{"ensemble_size", 8}}},
  };
}

json tiny_run_config(const std::string& dir) {
  json j = minimal_run_config();
  j["solver"]["max_iterations"] = 4;
  j["solver"]["stopping"] = "time-only";
  j["solver"]["seed"] = 3;
  j["output"] = {{"directory", dir}};
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::size_t data_rows(const std::string& csv) {
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  return lines == 0 ? 0 : lines - 1;  // minus the header
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("kenkf_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  fs::path operator/(const std::string& leaf) const { return path / leaf; }
};

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2) << "\n";
}

/// Runs the command line under the shell; returns the process exit code.
int run_cli(const std::string& args) {
  const std::string cmd = std::string(KENKF_CLI_PATH) + " " + args;
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

void expect_config_error(json broken, const std::string& needle) {
  try {
    parse_run_config(broken);
    FAIL_CHECK("expected a config error mentioning \"" << needle << "\"");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find(needle) != std::string::npos);
  }
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("a minimal config gets the documented defaults") {
    const RunSpec spec = parse_run_config(minimal_run_config());
    CHECK(spec.problem.kind == ProblemKind::kEllipticTc1);
    CHECK(spec.problem.n == 8);
    CHECK(spec.problem.gamma == 0.1);
    CHECK(spec.problem.data_seed == 0);
    CHECK(spec.solver.ensemble_size == 8);
    CHECK(spec.solver.subsample_size == 8);  // defaults to J
    CHECK_FALSE(spec.subsample_explicit);
    CHECK(spec.solver.lambda2 == 0.0);
    CHECK(std::isinf(spec.solver.t_fin));
    CHECK(spec.solver.max_iterations == 100000);
    CHECK(spec.solver.seed == 1);
    CHECK(spec.solver.stopping == Stopping::kDiscrepancy);
    CHECK(spec.solver.noise_kind == InjectedNoise::kGaussian);
    CHECK_FALSE(spec.solver.discrepancy_threshold.has_value());
    CHECK(spec.output.directory == "out");
    CHECK(spec.output.trace);
    CHECK(spec.output.ensemble);
    CHECK(spec.output.reconstruction);
    CHECK(spec.output.snapshot_every == 0);
  }

  TEST_CASE("config validation names the offending key") {
    json j = minimal_run_config();
    j["solver"]["bogus"] = 1;
    expect_config_error(j, "solver.bogus");

    j = minimal_run_config();
    j["problem"].erase("gamma");
    expect_config_error(j, "problem.gamma");

    j = minimal_run_config();
    j["problem"]["gamma"] = "small";
    expect_config_error(j, "problem.gamma");

    j = minimal_run_config();
    j["problem"]["n"] = 1;
    expect_config_error(j, "problem.n");

    j = minimal_run_config();
    j["problem"]["name"] = "unknown-benchmark";
    expect_config_error(j, "problem.name");

    j = minimal_run_config();
    j["solver"]["ensemble_size"] = 1;
    expect_config_error(j, "solver.ensemble_size");

    j = minimal_run_config();
    j["solver"]["subsample_size"] = 9;  // above J
    expect_config_error(j, "solver.subsample_size");

    j = minimal_run_config();
    j["solver"]["stopping"] = "whenever";
    expect_config_error(j, "solver.stopping");

    j = minimal_run_config();
    j["solver"]["noise"] = "pink";
    expect_config_error(j, "solver.noise");

    j = minimal_run_config();
    j["solver"]["t_fin"] = -2.0;
    expect_config_error(j, "solver.t_fin");

    j = minimal_run_config();
    j["solver"]["lambda2"] = -1.0;
    expect_config_error(j, "solver.lambda2");

    expect_config_error(json{{"solver", {{"ensemble_size", 4}}}}, "problem");
    expect_config_error(json::array({1, 2}), "config");
  }

  TEST_CASE("the 2-d benchmark takes no mesh and requires an explicit threshold") {
    json j{{"problem", {{"name", "nonlinear-2d"}}},
           {"solver", {{"ensemble_size", 16}, {"discrepancy_threshold", 0.02}}}};
    const RunSpec spec = parse_run_config(j);
    CHECK(spec.problem.kind == ProblemKind::kNonlinear2d);
    CHECK(spec.solver.discrepancy_threshold == 0.02);

    json mesh = j;
    mesh["problem"]["n"] = 16;  // elliptic-only key
    expect_config_error(mesh, "problem.n");

    json bare = j;
    bare["solver"].erase("discrepancy_threshold");
    expect_config_error(bare, "discrepancy_threshold");

    // With time-only stopping no threshold is needed.
    bare["solver"]["stopping"] = "time-only";
    bare["solver"]["max_iterations"] = 3;
    CHECK_NOTHROW(parse_run_config(bare));
  }

  TEST_CASE("t_fin accepts null as an explicit unbounded horizon") {
    json j = minimal_run_config();
    j["solver"]["t_fin"] = nullptr;
    CHECK(std::isinf(parse_run_config(j).solver.t_fin));
    j["solver"]["t_fin"] = 2.5;
    CHECK(parse_run_config(j).solver.t_fin == 2.5);
  }

  TEST_CASE("the resolved config echo replays to the same spec") {
    json j = minimal_run_config();
    j["solver"]["lambda2"] = 1e-3;
    j["solver"]["subsample_size"] = 4;
    j["output"] = {{"directory", "somewhere"}, {"snapshot_every", 3}};
    const RunSpec spec = parse_run_config(j);
    const RunSpec replay = parse_run_config(run_config_json(spec));
    CHECK(replay.problem.kind == spec.problem.kind);
    CHECK(replay.problem.n == spec.problem.n);
    CHECK(replay.problem.gamma == spec.problem.gamma);
    CHECK(replay.solver.ensemble_size == spec.solver.ensemble_size);
    CHECK(replay.solver.subsample_size == spec.solver.subsample_size);
    CHECK(replay.solver.lambda2 == spec.solver.lambda2);
    CHECK(replay.solver.seed == spec.solver.seed);
    CHECK(replay.output.directory == spec.output.directory);
    CHECK(replay.output.snapshot_every == spec.output.snapshot_every);
    CHECK(std::isinf(replay.solver.t_fin));
  }

  TEST_CASE("a manifest parses as a config by its embedded echo") {
    const RunSpec spec = parse_run_config(minimal_run_config());
    json manifest;
    manifest["config"] = run_config_json(spec);
    manifest["result"] = {{"stop_reason", "whatever"}};
    const RunSpec replay = parse_run_config(manifest);
    CHECK(replay.problem.n == spec.problem.n);
    CHECK(replay.solver.ensemble_size == spec.solver.ensemble_size);
  }

  TEST_CASE("problem instantiation matches the requested benchmark") {
    ProblemSpec spec;
    spec.kind = ProblemKind::kEllipticTc2;
    spec.n = 12;
    spec.gamma = 0.05;
    spec.data_seed = 4;
    const ProblemInstance inst = instantiate(spec);
    CHECK(inst.problem.model->input_dim() == 12);
    CHECK(inst.mesh.size() == 12);
    CHECK(inst.gamma == 0.05);
    REQUIRE(inst.problem.obs.eta.has_value());

    ProblemSpec nl;
    nl.kind = ProblemKind::kNonlinear2d;
    const ProblemInstance nli = instantiate(nl);
    CHECK(nli.problem.model->input_dim() == 2);
    CHECK(nli.mesh.size() == 0);
    CHECK_FALSE(nli.problem.obs.eta.has_value());
  }

  TEST_CASE("solve is deterministic for a fixed spec") {
    json j = minimal_run_config();
    j["solver"]["max_iterations"] = 5;
    j["solver"]["stopping"] = "time-only";
    const RunSpec spec = parse_run_config(j);
    const RunOutcome a = solve(spec);
    const RunOutcome b = solve(spec);
    CHECK(a.trace.rows.size() == b.trace.rows.size());
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.relative_error == b.relative_error);
  }

  TEST_CASE("a run writes the configured artifacts") {
    TempDir dir("run_artifacts");
    json j = tiny_run_config(dir.str());
    j["output"]["snapshot_every"] = 2;
    const RunSpec spec = parse_run_config(j);
    const RunOutcome out = execute_run(spec, true);

    REQUIRE(fs::exists(dir / "trace.csv"));
    REQUIRE(fs::exists(dir / "ensemble.csv"));
    REQUIRE(fs::exists(dir / "reconstruction.csv"));
    REQUIRE(fs::exists(dir / "manifest.json"));
    // Iterations 0 and 2 in a 4-update run.
    CHECK(fs::exists(dir / "snapshot-000000.csv"));
    CHECK(fs::exists(dir / "snapshot-000002.csv"));
    CHECK_FALSE(fs::exists(dir / "snapshot-000001.csv"));

    const std::string trace = slurp(dir / "trace.csv");
    CHECK(trace.rfind("t,eps,v,r,V,R,misfit,rho", 0) == 0);
    CHECK(data_rows(trace) == out.trace.rows.size() + 1);  // rows + final state

    const std::string recon = slurp(dir / "reconstruction.csv");
    CHECK(recon.rfind("x,u_mean,u_truth,p_mean", 0) == 0);
    CHECK(data_rows(recon) == 8);

    const std::string ens = slurp(dir / "ensemble.csv");
    CHECK(data_rows(ens) == 8);  // one row per member

    const json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest.at("result").at("stop_reason") == "max_iterations");
    CHECK(manifest.at("result").at("iterations") == 4);
    CHECK(manifest.at("config").at("solver").at("seed") == 3);
    CHECK(manifest.at("result").at("mean_estimator").size() == 8);
    CHECK(manifest.at("result").at("final").contains("misfit"));
  }

  TEST_CASE("artifact toggles suppress the writers") {
    TempDir dir("run_minimal");
    json j = tiny_run_config(dir.str());
    j["output"]["trace"] = false;
    j["output"]["ensemble"] = false;
    j["output"]["reconstruction"] = false;
    execute_run(parse_run_config(j), true);
    CHECK_FALSE(fs::exists(dir / "trace.csv"));
    CHECK_FALSE(fs::exists(dir / "ensemble.csv"));
    CHECK_FALSE(fs::exists(dir / "reconstruction.csv"));
    CHECK(fs::exists(dir / "manifest.json"));  // the manifest always lands
  }

  TEST_CASE("repeated runs produce byte-identical artifacts") {
    TempDir a("replay_a");
    TempDir b("replay_b");
    json j = tiny_run_config(a.str());
    execute_run(parse_run_config(j), true);
    j["output"]["directory"] = b.str();
    execute_run(parse_run_config(j), true);
    CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
    CHECK(slurp(a / "ensemble.csv") == slurp(b / "ensemble.csv"));
    CHECK(slurp(a / "reconstruction.csv") == slurp(b / "reconstruction.csv"));
  }

  TEST_CASE("sweep validation") {
    json j = minimal_run_config();
    j["sweep"] = {{"parameter", "ensemble_size"}, {"values", {4, 6}}};
    const SweepSpec spec = parse_sweep_config(j);
    CHECK(spec.parameter == "ensemble_size");
    REQUIRE(spec.values.size() == 2);
    CHECK(spec.values[0] == 4);

    json bad = minimal_run_config();
    bad["sweep"] = {{"parameter", "gamma"}, {"values", {1, 2}}};
    CHECK_THROWS_AS(parse_sweep_config(bad), ConfigError);

    bad = minimal_run_config();
    bad["sweep"] = {{"parameter", "ensemble_size"}, {"values", json::array()}};
    CHECK_THROWS_AS(parse_sweep_config(bad), ConfigError);

    bad = minimal_run_config();
    bad["sweep"] = {{"parameter", "ensemble_size"}, {"values", {1}}};
    CHECK_THROWS_AS(parse_sweep_config(bad), ConfigError);

    bad = minimal_run_config();
    bad["sweep"] = {{"parameter", "subsample_size"}, {"values", {9}}};  // above J = 8
    CHECK_THROWS_AS(parse_sweep_config(bad), ConfigError);

    CHECK_THROWS_AS(parse_sweep_config(minimal_run_config()), ConfigError);
  }

  TEST_CASE("sweeps run one experiment per value with shifted seeds") {
    TempDir dir("sweep_lib");
    json j = tiny_run_config(dir.str());
    j["solver"]["max_iterations"] = 3;
    j["sweep"] = {{"parameter", "ensemble_size"}, {"values", {4, 6}}};
    const SweepSpec spec = parse_sweep_config(j);
    const auto outcomes = execute_sweep(spec, false, true);
    REQUIRE(outcomes.size() == 2);
    CHECK(outcomes[0].trace.final_members.cols() == 4);
    CHECK(outcomes[1].trace.final_members.cols() == 6);

    const std::string csv = slurp(dir / "sweep.csv");
    CHECK(csv.rfind("value,seed,stop,iterations,t_final,misfit,v,r,V,R,V_lin,R_lin,"
                    "relative_error,wall_seconds", 0) == 0);
    CHECK(data_rows(csv) == 2);

    // Seeds are base + list index.
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    std::getline(lines, line);
    CHECK(line.rfind("4,3,", 0) == 0);
    std::getline(lines, line);
    CHECK(line.rfind("6,4,", 0) == 0);
  }

  TEST_CASE("an ensemble sweep clamps an explicit subsample size") {
    TempDir dir("sweep_clamp");
    json j = tiny_run_config(dir.str());
    j["solver"]["max_iterations"] = 2;
    j["solver"]["subsample_size"] = 6;
    j["sweep"] = {{"parameter", "ensemble_size"}, {"values", {4, 8}}};
    // J = 4 forces M down to 4; without the clamp run() would refuse M > J.
    const auto outcomes = execute_sweep(parse_sweep_config(j), false, true);
    REQUIRE(outcomes.size() == 2);
    CHECK(outcomes[0].trace.final_members.cols() == 4);
  }

  TEST_CASE("parallel and sequential sweeps agree") {
    TempDir dir_a("sweep_seq");
    TempDir dir_b("sweep_par");
    json j = tiny_run_config(dir_a.str());
    j["solver"]["max_iterations"] = 3;
    j["sweep"] = {{"parameter", "subsample_size"}, {"values", {4, 8}}};
    const auto seq = execute_sweep(parse_sweep_config(j), false, true);
    j["output"]["directory"] = dir_b.str();
    const auto par = execute_sweep(parse_sweep_config(j), true, true);
    REQUIRE(seq.size() == par.size());
    for (std::size_t i = 0; i < seq.size(); ++i)
      CHECK((seq[i].mean - par[i].mean).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("phase configs parse with defaults and validation") {
    const json j{{"system", {{"y", 2.0}, {"g", 1.0}, {"lambda2", 32.0}}}};
    const PhaseSpec spec = parse_phase_config(j);
    CHECK(spec.system.y == 2.0);
    CHECK(spec.n == 40);
    CHECK(spec.nullcline_samples == 200);
    CHECK(spec.trajectories.empty());

    CHECK_THROWS_AS(parse_phase_config(json{{"system", {{"y", 1.0}, {"g", 0.0}}}}),
                    ConfigError);
    CHECK_THROWS_AS(parse_phase_config(json::object()), ConfigError);
    json bad = j;
    bad["grid"] = {{"n", 1}};
    CHECK_THROWS_AS(parse_phase_config(bad), ConfigError);
  }

  TEST_CASE("a phase portrait writes the plane, nullclines, equilibria and orbits") {
    TempDir dir("phase_lib");
    json j{{"system", {{"y", 2.0}, {"g", 1.0}, {"lambda2", 32.0}}},
           {"grid", {{"n", 6}, {"nullcline_samples", 9}}},
           {"trajectories", json::array({{{"m", 2.0}, {"e", 6.0}, {"t_end", 1.0}}})},
           {"output", {{"directory", dir.str()}}}};
    execute_phase(parse_phase_config(j), true);

    CHECK(data_rows(slurp(dir / "field.csv")) == 36);
    CHECK(data_rows(slurp(dir / "nullclines.csv")) == 4 * 9);
    CHECK(data_rows(slurp(dir / "fixed_points.csv")) == 2);
    CHECK(data_rows(slurp(dir / "trajectories.csv")) >= 2);
    const std::string fp = slurp(dir / "fixed_points.csv");
    CHECK(fp.rfind("label,m,e,stability,eig1_re,eig1_im,eig2_re,eig2_im,parabola_family",
                   0) == 0);
  }

  TEST_CASE("exit codes distinguish divergence from regular stops") {
    CHECK(exit_code_for(StopReason::kDiscrepancyMet) == 0);
    CHECK(exit_code_for(StopReason::kTimeReached) == 0);
    CHECK(exit_code_for(StopReason::kMaxIterations) == 0);
    CHECK(exit_code_for(StopReason::kNumericDivergence) == 3);
  }

  TEST_CASE("command line: config errors exit with code 2") {
    TempDir dir("cli_errors");
    CHECK(run_cli("run --config " + (dir / "missing.json").string() +
                  " > /dev/null 2>&1") == 2);

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run_cli("run --config " + (dir / "broken.json").string() +
                  " > /dev/null 2>&1") == 2);

    json j = minimal_run_config();
    j["solver"]["mystery"] = true;
    write_json(dir / "unknown.json", j);
    CHECK(run_cli("run --config " + (dir / "unknown.json").string() +
                  " > /dev/null 2>&1") == 2);
  }

  TEST_CASE("command line: run executes, honours overrides and stays quiet") {
    TempDir dir("cli_run");
    const fs::path out1 = dir / "a";
    json j = tiny_run_config(out1.string());
    write_json(dir / "run.json", j);

    const fs::path stdout_txt = dir / "stdout.txt";
    CHECK(run_cli("run --config " + (dir / "run.json").string() + " > " +
                  stdout_txt.string() + " 2>&1") == 0);
    CHECK(fs::exists(out1 / "manifest.json"));
    CHECK(slurp(stdout_txt).find("[run]") != std::string::npos);

    // --out and --seed override the config; --quiet silences the report.
    const fs::path out2 = dir / "b";
    CHECK(run_cli("run --config " + (dir / "run.json").string() + " --out " +
                  out2.string() + " --seed 77 --quiet > " + stdout_txt.string() +
                  " 2>&1") == 0);
    const json manifest = json::parse(slurp(out2 / "manifest.json"));
    CHECK(manifest.at("config").at("solver").at("seed") == 77);
    CHECK(manifest.at("config").at("output").at("directory") == out2.string());
    CHECK(slurp(stdout_txt).empty());
  }

  TEST_CASE("command line: a manifest is a valid config (replay)") {
    TempDir dir("cli_replay");
    const fs::path out1 = dir / "a";
    const fs::path out2 = dir / "b";
    json j = tiny_run_config(out1.string());
    write_json(dir / "run.json", j);
    REQUIRE(run_cli("run --config " + (dir / "run.json").string() + " --quiet") == 0);
    REQUIRE(run_cli("run --config " + (out1 / "manifest.json").string() + " --out " +
                    out2.string() + " --quiet") == 0);
    CHECK(slurp(out1 / "trace.csv") == slurp(out2 / "trace.csv"));
    CHECK(slurp(out1 / "ensemble.csv") == slurp(out2 / "ensemble.csv"));
  }

  TEST_CASE("command line: phase and sweep subcommands") {
    TempDir dir("cli_phase_sweep");
    json phase{{"system", {{"y", 2.0}, {"g", 1.0}}},
               {"grid", {{"n", 4}, {"nullcline_samples", 5}}},
               {"output", {{"directory", (dir / "phase").string()}}}};
    write_json(dir / "phase.json", phase);
    CHECK(run_cli("phase --config " + (dir / "phase.json").string() + " --quiet") == 0);
    CHECK(fs::exists(dir / "phase" / "field.csv"));
    CHECK(fs::exists(dir / "phase" / "nullclines.csv"));
    CHECK(fs::exists(dir / "phase" / "fixed_points.csv"));

    json sweep = tiny_run_config((dir / "sweep").string());
    sweep["solver"]["max_iterations"] = 2;
    sweep["sweep"] = {{"parameter", "ensemble_size"}, {"values", {4, 6}}};
    write_json(dir / "sweep.json", sweep);
    CHECK(run_cli("sweep --config " + (dir / "sweep.json").string() + " --quiet") == 0);
    CHECK(fs::exists(dir / "sweep" / "sweep.csv"));
  }

  TEST_CASE("command line: missing subcommand or flags fail fast") {
    CHECK(run_cli("> /dev/null 2>&1") != 0);
    CHECK(run_cli("run > /dev/null 2>&1") != 0);  // --config is required
  }
}
