#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kenkf/meanfield.hpp"
#include "kenkf/moment_ode.hpp"
#include "kenkf/problems.hpp"

namespace kenkf {

/// Configuration or schema violation; the message names the offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ProblemKind { kEllipticTc1, kEllipticTc2, kNonlinear2d };

/// Problem block of a run config. The two elliptic problems need a mesh size
/// and noise level; the 2-d benchmark has fixed data and takes neither.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::kEllipticTc1;
  std::string name;
  Eigen::Index n = 0;
  double gamma = 0.0;
  std::uint64_t data_seed = 0;
};

struct OutputSpec {
  std::string directory = "out";
  bool trace = true;
  bool ensemble = true;
  bool reconstruction = true;
  Eigen::Index snapshot_every = 0;  // 0: no ensemble snapshots
};

struct RunSpec {
  ProblemSpec problem;
  SolverConfig solver;
  OutputSpec output;
  /// Whether the config named subsample_size; an ensemble-size sweep keeps
  /// M = J when it was defaulted and clamps an explicit M to each J.
  bool subsample_explicit = false;
};

/// Parse and validate a run config. Accepts either a plain config object or a
/// run manifest (object with a "config" key), so a manifest replays directly.
/// Throws ConfigError naming the offending key.
RunSpec parse_run_config(const nlohmann::json& j);
RunSpec load_run_config(const std::string& path);

/// Fully resolved config echo (defaults filled in) as embedded in manifests.
nlohmann::json run_config_json(const RunSpec& spec);

/// A constructed problem plus the pieces the artifact writers need.
struct ProblemInstance {
  Problem problem;
  Vector mesh;  // interior nodes; empty for the 2-d benchmark
  double gamma = 0.0;
};

ProblemInstance instantiate(const ProblemSpec& spec);

struct RunOutcome {
  IterationTrace trace;
  Vector mean;            // final ensemble mean
  double relative_error;  // ||mean - u_ref||^2 / ||mean||^2
  double wall_seconds = 0.0;
};

/// Solve only (no files): instantiate, run, summarize.
RunOutcome solve(const RunSpec& spec);

/// Solve and write the configured artifacts (trace.csv, ensemble.csv,
/// reconstruction.csv, snapshots, manifest.json) into output.directory.
RunOutcome execute_run(const RunSpec& spec, bool quiet);

struct TrajectoryStart {
  PhasePoint p0;
  double t_end = 10.0;
  double tol = 1e-10;
};

struct PhaseSpec {
  ScalarMomentSystem system;
  double m_min = 0.0, m_max = 4.0;
  double e_min = 0.0, e_max = 10.0;
  int n = 40;
  int nullcline_samples = 200;
  std::vector<TrajectoryStart> trajectories;
  std::string directory = "out";
};

PhaseSpec parse_phase_config(const nlohmann::json& j);
PhaseSpec load_phase_config(const std::string& path);

/// Writes field.csv, nullclines.csv, fixed_points.csv and (when starts are
/// listed) trajectories.csv.
void execute_phase(const PhaseSpec& spec, bool quiet);

struct SweepSpec {
  RunSpec base;
  std::string parameter;  // "ensemble_size" or "subsample_size"
  std::vector<Eigen::Index> values;
};

SweepSpec parse_sweep_config(const nlohmann::json& j);
SweepSpec load_sweep_config(const std::string& path);

/// Runs the base experiment once per value (seed = base seed + list index),
/// sequentially unless `parallel`, and writes one summary row per value to
/// sweep.csv. No per-run artifacts. Returns the outcomes in list order.
std::vector<RunOutcome> execute_sweep(const SweepSpec& spec, bool parallel, bool quiet);

/// 0 for any regular termination, 3 for numeric divergence.
int exit_code_for(StopReason stop);

}  // namespace kenkf
