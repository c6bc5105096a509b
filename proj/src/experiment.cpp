#include "kenkf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <utility>

#include "kenkf/csv.hpp"

namespace kenkf {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ConfigError("config error: \"" + key + "\" " + what);
}

/// Wraps one JSON object: typed getters with full-path error messages, plus
/// rejection of any key no getter consumed. Explicit null counts as absent.
class Section {
 public:
  Section(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j_->is_object()) fail(path_.empty() ? "config" : path_, "must be an object");
  }

  std::string sub(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool present(const char* key) const {
    auto it = j_->find(key);
    return it != j_->end() && !it->is_null();
  }

  const json* get(const char* key) {
    seen_.push_back(key);
    auto it = j_->find(key);
    if (it == j_->end() || it->is_null()) return nullptr;
    return &*it;
  }

  double number(const char* key, std::optional<double> def = std::nullopt) {
    const json* v = get(key);
    if (!v) {
      if (def) return *def;
      fail(sub(key), "is required");
    }
    if (!v->is_number()) fail(sub(key), "must be a number");
    return v->get<double>();
  }

  std::optional<double> maybe_number(const char* key) {
    const json* v = get(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(sub(key), "must be a number or null");
    return v->get<double>();
  }

  std::int64_t integer(const char* key, std::optional<std::int64_t> def = std::nullopt) {
    const json* v = get(key);
    if (!v) {
      if (def) return *def;
      fail(sub(key), "is required");
    }
    if (!v->is_number_integer()) fail(sub(key), "must be an integer");
    return v->get<std::int64_t>();
  }

  std::uint64_t uinteger(const char* key, std::uint64_t def) {
    const json* v = get(key);
    if (!v) return def;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0)
      return static_cast<std::uint64_t>(v->get<std::int64_t>());
    fail(sub(key), "must be a nonnegative integer");
  }

  std::string str(const char* key, std::optional<std::string> def = std::nullopt) {
    const json* v = get(key);
    if (!v) {
      if (def) return *def;
      fail(sub(key), "is required");
    }
    if (!v->is_string()) fail(sub(key), "must be a string");
    return v->get<std::string>();
  }

  bool boolean(const char* key, bool def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(sub(key), "must be a boolean");
    return v->get<bool>();
  }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError("config error: unknown key \"" + sub(it.key()) + "\"");
  }

 private:
  const json* j_;
  std::string path_;
  std::vector<std::string> seen_;
};

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot open \"" + path + "\"");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config error: " + path + ": " + e.what());
  }
}

RunSpec parse_run_body(const json& root, const json** sweep_out) {
  Section top(root, "");
  const json* jp = top.get("problem");
  const json* js = top.get("solver");
  const json* jo = top.get("output");
  if (sweep_out) *sweep_out = top.get("sweep");
  top.finish();
  if (!jp) fail("problem", "is required");
  if (!js) fail("solver", "is required");

  RunSpec spec;
  {
    Section p(*jp, "problem");
    spec.problem.name = p.str("name");
    if (spec.problem.name == "elliptic-tc1")
      spec.problem.kind = ProblemKind::kEllipticTc1;
    else if (spec.problem.name == "elliptic-tc2")
      spec.problem.kind = ProblemKind::kEllipticTc2;
    else if (spec.problem.name == "nonlinear-2d")
      spec.problem.kind = ProblemKind::kNonlinear2d;
    else
      fail("problem.name", "unknown problem \"" + spec.problem.name +
                               "\" (expected elliptic-tc1, elliptic-tc2 or nonlinear-2d)");
    if (spec.problem.kind != ProblemKind::kNonlinear2d) {
      const std::int64_t n = p.integer("n");
      if (n < 2) fail("problem.n", "must be an integer >= 2");
      spec.problem.n = n;
      spec.problem.gamma = p.number("gamma");
      if (!(spec.problem.gamma > 0.0)) fail("problem.gamma", "must be > 0");
      spec.problem.data_seed = p.uinteger("data_seed", 0);
    }
    p.finish();  // flags n/gamma/data_seed as unknown for nonlinear-2d
  }
  {
    Section s(*js, "solver");
    const std::int64_t big_j = s.integer("ensemble_size");
    if (big_j < 2) fail("solver.ensemble_size", "must be an integer >= 2");
    spec.solver.ensemble_size = big_j;
    spec.subsample_explicit = s.present("subsample_size");
    const std::int64_t big_m = s.integer("subsample_size", big_j);
    if (big_m < 2 || big_m > big_j)
      fail("solver.subsample_size", "must lie in [2, ensemble_size]");
    spec.solver.subsample_size = big_m;
    spec.solver.lambda2 = s.number("lambda2", 0.0);
    if (spec.solver.lambda2 < 0.0) fail("solver.lambda2", "must be >= 0");
    if (const auto tf = s.maybe_number("t_fin")) {
      if (!(*tf > 0.0)) fail("solver.t_fin", "must be > 0");
      spec.solver.t_fin = *tf;
    }
    const std::int64_t nt = s.integer("max_iterations", 100000);
    if (nt < 0) fail("solver.max_iterations", "must be >= 0");
    spec.solver.max_iterations = nt;
    spec.solver.seed = s.uinteger("seed", 1);
    const std::string stopping = s.str("stopping", std::string("discrepancy"));
    if (stopping == "discrepancy")
      spec.solver.stopping = Stopping::kDiscrepancy;
    else if (stopping == "time-only")
      spec.solver.stopping = Stopping::kTimeOnly;
    else
      fail("solver.stopping", "must be \"discrepancy\" or \"time-only\"");
    const std::string noise = s.str("noise", std::string("gaussian"));
    if (noise == "gaussian")
      spec.solver.noise_kind = InjectedNoise::kGaussian;
    else if (noise == "none")
      spec.solver.noise_kind = InjectedNoise::kNone;
    else
      fail("solver.noise", "must be \"gaussian\" or \"none\"");
    if (const auto th = s.maybe_number("discrepancy_threshold")) {
      if (!(*th >= 0.0)) fail("solver.discrepancy_threshold", "must be >= 0");
      spec.solver.discrepancy_threshold = *th;
    }
    s.finish();
  }
  if (jo) {
    Section o(*jo, "output");
    spec.output.directory = o.str("directory", std::string("out"));
    spec.output.trace = o.boolean("trace", true);
    spec.output.ensemble = o.boolean("ensemble", true);
    spec.output.reconstruction = o.boolean("reconstruction", true);
    const std::int64_t se = o.integer("snapshot_every", 0);
    if (se < 0) fail("output.snapshot_every", "must be >= 0");
    spec.output.snapshot_every = se;
    o.finish();
  }
  if (spec.problem.kind == ProblemKind::kNonlinear2d &&
      spec.solver.stopping == Stopping::kDiscrepancy &&
      !spec.solver.discrepancy_threshold)
    fail("solver.discrepancy_threshold",
         "is required for nonlinear-2d (its fixed data carry no synthetic noise draw)");
  return spec;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void write_members_csv(const std::string& path, const Matrix& members) {
  std::vector<std::string> header(static_cast<std::size_t>(members.rows()));
  for (Eigen::Index i = 0; i < members.rows(); ++i)
    header[static_cast<std::size_t>(i)] = "u" + std::to_string(i);
  CsvWriter w(header);
  for (Eigen::Index j = 0; j < members.cols(); ++j) w.add_row(members.col(j));
  w.write(path);
}

void write_trace_csv(const std::string& path, const IterationTrace& tr) {
  CsvWriter w({"t", "eps", "v", "r", "V", "R", "misfit", "rho"});
  auto push = [&w](const DiagnosticsRecord& d) {
    w.add_row(std::vector<double>{d.t, d.eps, d.v, d.r, d.big_v, d.big_r, d.misfit, d.rho});
  };
  for (const auto& d : tr.rows) push(d);
  push(tr.final_state);  // stopping state, eps = 0
  w.write(path);
}

void write_reconstruction_csv(const std::string& path, const ProblemInstance& inst,
                              const Vector& mean) {
  const Vector p_mean = inst.problem.model->apply(mean);
  CsvWriter w({"x", "u_mean", "u_truth", "p_mean"});
  for (Eigen::Index i = 0; i < inst.mesh.size(); ++i)
    w.add_row(std::vector<double>{inst.mesh[i], mean[i], inst.problem.u_ref[i], p_mean[i]});
  w.write(path);
}

void write_manifest(const std::string& path, const RunSpec& spec, const RunOutcome& out) {
  const IterationTrace& tr = out.trace;
  const DiagnosticsRecord& f = tr.final_state;
  json result;
  result["stop_reason"] = to_string(tr.stop);
  result["iterations"] = static_cast<std::int64_t>(tr.rows.size());
  result["t_final"] = number_or_null(tr.t_final);
  result["threshold"] = number_or_null(tr.threshold);
  result["wall_seconds"] = out.wall_seconds;
  result["final"] = json{{"t", f.t},         {"misfit", f.misfit},
                         {"v", f.v},         {"r", f.r},
                         {"V", f.big_v},     {"R", f.big_r},
                         {"V_lin", f.big_v_lin}, {"R_lin", f.big_r_lin},
                         {"rho", f.rho}};
  if (out.mean.size() <= 16)
    result["mean_estimator"] = std::vector<double>(out.mean.data(), out.mean.data() + out.mean.size());
  result["relative_error"] = number_or_null(out.relative_error);
  json manifest;
  manifest["config"] = run_config_json(spec);
  manifest["result"] = result;
  atomic_write_text(path, manifest.dump(2) + "\n");
}

RunOutcome solve_impl(const RunSpec& spec, const ProblemInstance& inst, const RunHooks& hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  out.trace = run(inst.problem, spec.solver, hooks);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.mean = out.trace.final_members.rowwise().mean();
  const double denom = out.mean.squaredNorm();
  out.relative_error = denom > 0.0
                           ? (out.mean - inst.problem.u_ref).squaredNorm() / denom
                           : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double stop_code(StopReason stop) { return static_cast<double>(static_cast<int>(stop)); }

}  // namespace

RunSpec parse_run_config(const json& j) {
  const json* root = &j;
  if (j.is_object() && j.contains("config")) {
    Section top(j, "");
    const json* c = top.get("config");
    top.get("result");  // manifests replay as-is; past results are ignored
    top.finish();
    if (!c) fail("config", "is required");
    root = c;
  }
  return parse_run_body(*root, nullptr);
}

RunSpec load_run_config(const std::string& path) { return parse_run_config(load_json(path)); }

json run_config_json(const RunSpec& spec) {
  json problem;
  problem["name"] = spec.problem.name;
  if (spec.problem.kind != ProblemKind::kNonlinear2d) {
    problem["n"] = static_cast<std::int64_t>(spec.problem.n);
    problem["gamma"] = spec.problem.gamma;
    problem["data_seed"] = spec.problem.data_seed;
  }
  json solver;
  solver["ensemble_size"] = static_cast<std::int64_t>(spec.solver.ensemble_size);
  solver["subsample_size"] = static_cast<std::int64_t>(spec.solver.subsample_size);
  solver["lambda2"] = spec.solver.lambda2;
  solver["t_fin"] = number_or_null(spec.solver.t_fin);
  solver["max_iterations"] = static_cast<std::int64_t>(spec.solver.max_iterations);
  solver["seed"] = spec.solver.seed;
  solver["stopping"] =
      spec.solver.stopping == Stopping::kDiscrepancy ? "discrepancy" : "time-only";
  solver["noise"] =
      spec.solver.noise_kind == InjectedNoise::kGaussian ? "gaussian" : "none";
  solver["discrepancy_threshold"] = spec.solver.discrepancy_threshold
                                        ? json(*spec.solver.discrepancy_threshold)
                                        : json(nullptr);
  json output;
  output["directory"] = spec.output.directory;
  output["trace"] = spec.output.trace;
  output["ensemble"] = spec.output.ensemble;
  output["reconstruction"] = spec.output.reconstruction;
  output["snapshot_every"] = static_cast<std::int64_t>(spec.output.snapshot_every);
  return json{{"problem", problem}, {"solver", solver}, {"output", output}};
}

ProblemInstance instantiate(const ProblemSpec& spec) {
  switch (spec.kind) {
    case ProblemKind::kEllipticTc1: {
      EllipticLinearProblem ep =
          build_linear_elliptic(spec.n, EllipticProfile::kOne, spec.gamma, spec.data_seed);
      return {ep.as_problem(spec.name), ep.mesh, ep.gamma};
    }
    case ProblemKind::kEllipticTc2: {
      EllipticLinearProblem ep =
          build_linear_elliptic(spec.n, EllipticProfile::kSin8, spec.gamma, spec.data_seed);
      return {ep.as_problem(spec.name), ep.mesh, ep.gamma};
    }
    case ProblemKind::kNonlinear2d: {
      NonlinearEllipticProblem np = build_nonlinear_elliptic();
      return {np.as_problem(spec.name), Vector(), np.gamma};
    }
  }
  throw std::logic_error("instantiate: unhandled problem kind");
}

RunOutcome solve(const RunSpec& spec) {
  return solve_impl(spec, instantiate(spec.problem), {});
}

RunOutcome execute_run(const RunSpec& spec, bool quiet) {
  namespace fs = std::filesystem;
  const ProblemInstance inst = instantiate(spec.problem);
  const std::string dir = spec.output.directory;
  fs::create_directories(dir);

  RunHooks hooks;
  if (spec.output.snapshot_every > 0) {
    const Eigen::Index every = spec.output.snapshot_every;
    hooks.on_iteration = [dir, every](Eigen::Index n, double, const Matrix& members) {
      if (n % every != 0) return;
      char name[64];
      std::snprintf(name, sizeof(name), "snapshot-%06lld.csv", static_cast<long long>(n));
      write_members_csv(dir + "/" + name, members);
    };
  }

  const RunOutcome out = solve_impl(spec, inst, hooks);
  if (spec.output.trace) write_trace_csv(dir + "/trace.csv", out.trace);
  if (spec.output.ensemble) write_members_csv(dir + "/ensemble.csv", out.trace.final_members);
  if (spec.output.reconstruction && inst.mesh.size() > 0)
    write_reconstruction_csv(dir + "/reconstruction.csv", inst, out.mean);
  write_manifest(dir + "/manifest.json", spec, out);

  if (!quiet)
    std::printf("[run] %s: %s after %zu iterations, t=%.6g, misfit=%.6g, wall=%.2fs\n",
                spec.problem.name.c_str(), to_string(out.trace.stop), out.trace.rows.size(),
                out.trace.t_final, out.trace.final_state.misfit, out.wall_seconds);
  return out;
}

PhaseSpec parse_phase_config(const json& j) {
  Section top(j, "");
  const json* jsys = top.get("system");
  const json* jgrid = top.get("grid");
  const json* jtraj = top.get("trajectories");
  const json* jout = top.get("output");
  top.finish();
  if (!jsys) fail("system", "is required");

  PhaseSpec spec;
  {
    Section s(*jsys, "system");
    spec.system.y = s.number("y");
    spec.system.g = s.number("g");
    if (spec.system.g == 0.0) fail("system.g", "must be nonzero");
    spec.system.lambda2 = s.number("lambda2", 0.0);
    if (spec.system.lambda2 < 0.0) fail("system.lambda2", "must be >= 0");
    s.finish();
  }
  if (jgrid) {
    Section g(*jgrid, "grid");
    spec.m_min = g.number("m_min", 0.0);
    spec.m_max = g.number("m_max", 4.0);
    spec.e_min = g.number("e_min", 0.0);
    spec.e_max = g.number("e_max", 10.0);
    const std::int64_t n = g.integer("n", 40);
    if (n < 2) fail("grid.n", "must be an integer >= 2");
    spec.n = static_cast<int>(n);
    const std::int64_t ns = g.integer("nullcline_samples", 200);
    if (ns < 2) fail("grid.nullcline_samples", "must be an integer >= 2");
    spec.nullcline_samples = static_cast<int>(ns);
    if (!(spec.m_max > spec.m_min)) fail("grid.m_max", "must exceed m_min");
    if (!(spec.e_max > spec.e_min)) fail("grid.e_max", "must exceed e_min");
    g.finish();
  }
  if (jtraj) {
    if (!jtraj->is_array()) fail("trajectories", "must be an array");
    for (std::size_t i = 0; i < jtraj->size(); ++i) {
      Section t((*jtraj)[i], "trajectories[" + std::to_string(i) + "]");
      TrajectoryStart ts;
      ts.p0.m = t.number("m");
      ts.p0.e = t.number("e");
      ts.t_end = t.number("t_end", 10.0);
      if (!(ts.t_end >= 0.0)) fail(t.sub("t_end"), "must be >= 0");
      ts.tol = t.number("tol", 1e-10);
      if (!(ts.tol > 0.0)) fail(t.sub("tol"), "must be > 0");
      t.finish();
      spec.trajectories.push_back(ts);
    }
  }
  if (jout) {
    Section o(*jout, "output");
    spec.directory = o.str("directory", std::string("out"));
    o.finish();
  }
  return spec;
}

PhaseSpec load_phase_config(const std::string& path) {
  return parse_phase_config(load_json(path));
}

namespace {

double branch_code(const std::string& id) {
  if (id == "dm-parabola") return 0.0;
  if (id == "dm-vertical") return 1.0;
  if (id == "de-parabola") return 2.0;
  if (id == "de-line") return 3.0;
  if (id == "de-upper") return 4.0;
  return 5.0;  // de-lower
}

double label_code(const std::string& label) {
  if (label == "F0") return 0.0;
  if (label == "F1") return 1.0;
  if (label == "F1+") return 2.0;
  return 3.0;  // F1-
}

double stability_code(Stability s) {
  switch (s) {
    case Stability::kNonHyperbolic: return 0.0;
    case Stability::kStable: return 1.0;
    case Stability::kUnstable: return 2.0;
  }
  return 0.0;
}

}  // namespace

void execute_phase(const PhaseSpec& spec, bool quiet) {
  namespace fs = std::filesystem;
  fs::create_directories(spec.directory);
  const ScalarMomentSystem& sys = spec.system;

  {
    CsvWriter w({"m", "e", "dm", "de"});
    for (const auto& s :
         vector_field_grid(sys, spec.m_min, spec.m_max, spec.e_min, spec.e_max, spec.n))
      w.add_row(std::vector<double>{s.m, s.e, s.dm, s.de});
    w.write(spec.directory + "/field.csv");
  }
  {
    CsvWriter w({"branch", "component", "m", "e"});
    const int ns = spec.nullcline_samples;
    for (const auto& b : nullclines(sys)) {
      const double code = branch_code(b.id);
      for (int i = 0; i < ns; ++i) {
        const double frac = static_cast<double>(i) / (ns - 1);
        if (b.vertical) {
          const double e = spec.e_min + frac * (spec.e_max - spec.e_min);
          w.add_row(std::vector<double>{code, static_cast<double>(b.component), b.m_value, e});
        } else {
          const double m = spec.m_min + frac * (spec.m_max - spec.m_min);
          w.add_row(std::vector<double>{code, static_cast<double>(b.component), m, b.e_of_m(m)});
        }
      }
    }
    w.write(spec.directory + "/nullclines.csv");
  }
  {
    CsvWriter w({"label", "m", "e", "stability", "eig1_re", "eig1_im", "eig2_re", "eig2_im",
                 "parabola_family"});
    const FixedPointReport rep = fixed_points(sys);
    for (const auto& f : rep.points)
      w.add_row(std::vector<double>{label_code(f.label), f.point.m, f.point.e,
                                    stability_code(f.stability), f.eigenvalues[0].real(),
                                    f.eigenvalues[0].imag(), f.eigenvalues[1].real(),
                                    f.eigenvalues[1].imag(), rep.parabola_family ? 1.0 : 0.0});
    w.write(spec.directory + "/fixed_points.csv");
  }
  if (!spec.trajectories.empty()) {
    CsvWriter w({"trajectory", "t", "m", "e", "blew_up"});
    for (std::size_t i = 0; i < spec.trajectories.size(); ++i) {
      const TrajectoryStart& ts = spec.trajectories[i];
      const Trajectory tr = integrate(sys, ts.p0, ts.t_end, ts.tol);
      for (std::size_t k = 0; k < tr.t.size(); ++k)
        w.add_row(std::vector<double>{static_cast<double>(i), tr.t[k], tr.points[k].m,
                                      tr.points[k].e, tr.blew_up ? 1.0 : 0.0});
    }
    w.write(spec.directory + "/trajectories.csv");
  }
  if (!quiet)
    std::printf("[phase] y=%g g=%g lambda2=%g: wrote %dx%d field%s to %s\n", sys.y, sys.g,
                sys.lambda2, spec.n, spec.n,
                spec.trajectories.empty() ? "" : " and trajectories", spec.directory.c_str());
}

SweepSpec parse_sweep_config(const json& j) {
  const json* jsweep = nullptr;
  SweepSpec spec;
  spec.base = parse_run_body(j, &jsweep);
  if (!jsweep) fail("sweep", "is required");
  Section s(*jsweep, "sweep");
  spec.parameter = s.str("parameter");
  if (spec.parameter != "ensemble_size" && spec.parameter != "subsample_size")
    fail("sweep.parameter", "must be \"ensemble_size\" or \"subsample_size\"");
  const json* vals = s.get("values");
  if (!vals) fail("sweep.values", "is required");
  if (!vals->is_array() || vals->empty())
    fail("sweep.values", "must be a nonempty array of integers");
  for (const auto& v : *vals) {
    if (!v.is_number_integer()) fail("sweep.values", "must be a nonempty array of integers");
    const std::int64_t x = v.get<std::int64_t>();
    if (x < 2) fail("sweep.values", "entries must be integers >= 2");
    spec.values.push_back(x);
  }
  s.finish();
  if (spec.parameter == "subsample_size")
    for (const Eigen::Index v : spec.values)
      if (v > spec.base.solver.ensemble_size)
        fail("sweep.values", "subsample values must not exceed ensemble_size");
  return spec;
}

SweepSpec load_sweep_config(const std::string& path) {
  return parse_sweep_config(load_json(path));
}

std::vector<RunOutcome> execute_sweep(const SweepSpec& spec, bool parallel, bool quiet) {
  namespace fs = std::filesystem;
  const bool by_ensemble = spec.parameter == "ensemble_size";
  std::vector<RunSpec> runs;
  runs.reserve(spec.values.size());
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    RunSpec rs = spec.base;
    const Eigen::Index v = spec.values[i];
    if (by_ensemble) {
      rs.solver.ensemble_size = v;
      rs.solver.subsample_size =
          spec.base.subsample_explicit ? std::min(spec.base.solver.subsample_size, v) : v;
    } else {
      rs.solver.subsample_size = v;
    }
    rs.solver.seed = spec.base.solver.seed + i;
    runs.push_back(std::move(rs));
  }

  std::vector<RunOutcome> outcomes(runs.size());
  if (parallel) {
    std::vector<std::future<RunOutcome>> futures;
    futures.reserve(runs.size());
    for (const RunSpec& rs : runs)
      futures.push_back(std::async(std::launch::async, [&rs] { return solve(rs); }));
    for (std::size_t i = 0; i < futures.size(); ++i) outcomes[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      outcomes[i] = solve(runs[i]);
      if (!quiet)
        std::printf("[sweep] %s=%lld: %s after %zu iterations, misfit=%.6g, wall=%.2fs\n",
                    spec.parameter.c_str(), static_cast<long long>(spec.values[i]),
                    to_string(outcomes[i].trace.stop), outcomes[i].trace.rows.size(),
                    outcomes[i].trace.final_state.misfit, outcomes[i].wall_seconds);
    }
  }

  fs::create_directories(spec.base.output.directory);
  CsvWriter w({"value", "seed", "stop", "iterations", "t_final", "misfit", "v", "r", "V", "R",
               "V_lin", "R_lin", "relative_error", "wall_seconds"});
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const RunOutcome& o = outcomes[i];
    const DiagnosticsRecord& f = o.trace.final_state;
    w.add_row(std::vector<double>{
        static_cast<double>(spec.values[i]), static_cast<double>(runs[i].solver.seed),
        stop_code(o.trace.stop), static_cast<double>(o.trace.rows.size()), o.trace.t_final,
        f.misfit, f.v, f.r, f.big_v, f.big_r, f.big_v_lin, f.big_r_lin, o.relative_error,
        o.wall_seconds});
  }
  w.write(spec.base.output.directory + "/sweep.csv");
  return outcomes;
}

int exit_code_for(StopReason stop) {
  return stop == StopReason::kNumericDivergence ? 3 : 0;
}

}  // namespace kenkf
