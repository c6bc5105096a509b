#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "kenkf/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonArgs* args, bool with_seed) {
  sub->add_option("--config", args->config_path, "Path to the JSON config file")
      ->required();
  sub->add_option("--out", args->out_dir, "Output directory (overrides the config)");
  if (with_seed)
    sub->add_option("--seed", args->seed, "Solver seed (overrides the config)");
  sub->add_flag("--quiet", args->quiet, "Suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinetic ensemble Kalman inversion: experiment runner and phase-plane tools"};
  app.require_subcommand(1);

  CommonArgs run_args, phase_args, sweep_args;
  bool sweep_parallel = false;

  CLI::App* cmd_run = app.add_subcommand("run", "Run one configured experiment");
  add_common(cmd_run, &run_args, true);

  CLI::App* cmd_phase =
      app.add_subcommand("phase", "Emit phase-plane data for the scalar moment system");
  add_common(cmd_phase, &phase_args, false);

  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "Run the experiment across a parameter list");
  add_common(cmd_sweep, &sweep_args, true);
  cmd_sweep->add_flag("--parallel", sweep_parallel, "Run the values concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  try {
    if (cmd_run->parsed()) {
      kenkf::RunSpec spec = kenkf::load_run_config(run_args.config_path);
      if (!run_args.out_dir.empty()) spec.output.directory = run_args.out_dir;
      if (run_args.seed) spec.solver.seed = *run_args.seed;
      const kenkf::RunOutcome out = kenkf::execute_run(spec, run_args.quiet);
      if (out.trace.stop == kenkf::StopReason::kNumericDivergence)
        std::fprintf(stderr, "run diverged: ensemble left the finite range\n");
      return kenkf::exit_code_for(out.trace.stop);
    }
    if (cmd_phase->parsed()) {
      kenkf::PhaseSpec spec = kenkf::load_phase_config(phase_args.config_path);
      if (!phase_args.out_dir.empty()) spec.directory = phase_args.out_dir;
      kenkf::execute_phase(spec, phase_args.quiet);
      return 0;
    }
    kenkf::SweepSpec spec = kenkf::load_sweep_config(sweep_args.config_path);
    if (!sweep_args.out_dir.empty()) spec.base.output.directory = sweep_args.out_dir;
    if (sweep_args.seed) spec.base.solver.seed = *sweep_args.seed;
    const auto outcomes = kenkf::execute_sweep(spec, sweep_parallel, sweep_args.quiet);
    int code = 0;
    for (const auto& o : outcomes) {
      if (o.trace.stop == kenkf::StopReason::kNumericDivergence) {
        std::fprintf(stderr, "sweep value diverged: ensemble left the finite range\n");
        code = 3;
      }
    }
    return code;
  } catch (const kenkf::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
