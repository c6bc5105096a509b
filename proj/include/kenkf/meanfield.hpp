#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "kenkf/diagnostics.hpp"
#include "kenkf/ensemble.hpp"

namespace kenkf {

enum class Stopping { kDiscrepancy, kTimeOnly };
enum class InjectedNoise { kNone, kGaussian };
enum class StopReason { kDiscrepancyMet, kTimeReached, kMaxIterations, kNumericDivergence };

const char* to_string(StopReason reason);

/// Knobs of the kinetic particle scheme.
struct SolverConfig {
  Eigen::Index ensemble_size = 0;       // J
  Eigen::Index subsample_size = 0;      // M, 2 <= M <= J
  double lambda2 = 0.0;                 // isotropic noise covariance lambda^2 I
  std::optional<Matrix> lambda_full;    // full noise covariance, overrides lambda2
  double t_fin = std::numeric_limits<double>::infinity();
  Eigen::Index max_iterations = 100000;  // n_tot
  std::uint64_t seed = 0;
  Stopping stopping = Stopping::kDiscrepancy;
  InjectedNoise noise_kind = InjectedNoise::kGaussian;
  std::optional<double> discrepancy_threshold;  // required if the problem stores no eta
};

/// Stable step suggestion: eps = 1/rho for the spectral radius rho of
/// Cov * G^T Gamma G (linear) or of D(U) Gamma (nonlinear proxy; identical
/// spectrum for linear G). rho at the degeneracy floor returns the free step
/// t_fin.
struct StableStep {
  double eps = 0.0;
  double rho = 0.0;
};

/// Spectral radius of Cov * G^T Gamma G via deterministic power iteration on
/// the symmetric K-side operator Gamma^(1/2) G Cov G^T Gamma^(1/2) (same
/// nonzero spectrum). Keeps factorised forward models matrix-free.
double linear_stiffness_radius(const Matrix& cov, const ForwardModel& model,
                               const NoiseModel& noise);

/// Spectral radius of D Gamma via a dense symmetric eigensolve of
/// Gamma^(1/2) D Gamma^(1/2).
double nonlinear_stiffness_radius(const Matrix& d_cov, const NoiseModel& noise);

StableStep stable_epsilon(const MomentState& moments, const ForwardModel& model,
                          const NoiseModel& noise,
                          double t_fin = std::numeric_limits<double>::infinity());

StableStep stable_epsilon_nonlinear(
    const Matrix& d_cov, const NoiseModel& noise,
    double t_fin = std::numeric_limits<double>::infinity());

/// Moments of a uniformly drawn M-subsample without repetition (partial
/// Fisher-Yates on an index pool). Throws std::invalid_argument unless
/// 1 <= M <= J.
MomentState subsample_moments(const Ensemble& ens, Eigen::Index m, RngStream& rng);

/// One microscopic interaction for linear G:
///   u' = u* - eps (E_M - m_M (x) m_M) grad Phi(u*, y) + sqrt(eps) xi.
Vector interact(const Vector& u_star, const MomentState& moments_m,
                const ForwardModel& model, const NoiseModel& noise,
                const Vector& y, double eps, const Vector& xi);

/// Nonlinear variant u' = u* + eps C_M Gamma (y - G(u*)) + sqrt(eps) xi,
/// where cross_cov_m is the d x K cross covariance of the subsample. Equals
/// `interact` when G is linear and cross_cov_m = Cov_M G^T.
Vector interact_residual(const Vector& u_star, const Matrix& cross_cov_m,
                         const ForwardModel& model, const NoiseModel& noise,
                         const Vector& y, double eps, const Vector& xi);

/// Full run record: one row per executed update (diagnostics measured at the
/// start of the iteration), the final ensemble, and how the run ended. On
/// NumericDivergence the last finite ensemble is kept.
struct IterationTrace {
  std::vector<DiagnosticsRecord> rows;
  StopReason stop = StopReason::kMaxIterations;
  Matrix final_members;
  double t_final = 0.0;
  DiagnosticsRecord final_state;  // eps = 0; diagnostics of the final ensemble
  double threshold = std::numeric_limits<double>::quiet_NaN();
};

/// Optional per-iteration observers (snapshots etc.). `on_iteration` sees the
/// ensemble at the start of iteration n.
struct RunHooks {
  std::function<void(Eigen::Index n, double t, const Matrix& members)> on_iteration;
};

/// Adaptive kinetic scheme:
///   - stop when the misfit reaches the discrepancy threshold (inclusive),
///     time reaches t_fin, or max_iterations updates have run;
///   - eps from the full-ensemble stable step, clipped to t_fin - t;
///   - per particle: an independent M-subsample, a noise draw from the stream
///     keyed by (seed, iteration, particle), and one interaction.
/// With M = J the subsample is necessarily the whole ensemble: moments are
/// hoisted out of the particle loop and no subsampling randomness is drawn.
/// Results are bitwise independent of the worker count.
IterationTrace run(const Problem& problem, const SolverConfig& config,
                   const RunHooks& hooks = {});

/// Explicit Euler on the preconditioned gradient flow with the stable step,
/// additionally clipped so integration lands exactly on each sample time
/// (ascending). Calls `observer(t, ens)` at every sample time. Small-scale
/// study helper (collapse rates); linear models only.
void integrate_gradient_flow(Ensemble& ens, const ForwardModel& model,
                             const NoiseModel& noise, const Vector& y,
                             const std::vector<double>& sample_times,
                             const std::function<void(double, const Ensemble&)>& observer,
                             double safety = 1.0);

}  // namespace kenkf
