#pragma once

#include <string>

#include "kenkf/forward_model.hpp"

namespace kenkf {

/// Interacting particle system: J members of R^d stored as the columns of a
/// d x J matrix.
class Ensemble {
 public:
  Ensemble(Matrix members);

  Eigen::Index dim() const { return members_.rows(); }
  Eigen::Index size() const { return members_.cols(); }

  const Matrix& members() const { return members_; }
  Matrix& members() { return members_; }
  Vector member(Eigen::Index j) const { return members_.col(j); }
  Vector mean() const { return members_.rowwise().mean(); }

  bool all_finite() const { return members_.allFinite(); }

 private:
  Matrix members_;
};

/// First moment m and raw (uncentered) second moment E of an ensemble.
struct MomentState {
  Vector m;
  Matrix e;

  /// Covariance E - m (x) m. PSD up to roundoff.
  Matrix covariance() const { return e - m * m.transpose(); }
};

/// m = (1/J) sum u^j, E = (1/J) sum u^j (x) u^j.
MomentState empirical_moments(const Ensemble& ens);

/// Centered covariance (1/J) sum (u^j - mean)(u^j - mean)^T, accumulated in
/// centered form (better conditioned than E - m m^T when the mean dominates
/// the spread).
Matrix centered_covariance(const Ensemble& ens);

/// G applied to every member; K x J, column j = G(u^j).
Matrix apply_columns(const ForwardModel& model, const Matrix& members);

/// Cross covariance C(U) = (1/J) sum (u^j - mean) (x) (G(u^j) - Gmean), d x K.
/// Accepts linear and nonlinear models.
Matrix covariance_cu(const Ensemble& ens, const ForwardModel& model);

/// Output-space covariance D(U) = (1/J) sum (G(u^j) - Gmean) (x) ..., K x K.
Matrix covariance_du(const Ensemble& ens, const ForwardModel& model);

/// Same quantities computed from precomputed member images (K x J), avoiding
/// repeated forward applies.
Matrix covariance_cu_from_images(const Matrix& members, const Matrix& images);
Matrix covariance_du_from_images(const Matrix& images);

enum class EnkfNoise {
  kZero,          // Sigma = 0: deterministic update, all particles see y
  kGammaInverse,  // Sigma = Gamma^-1: y^j = y + xi^j, xi ~ N(0, dt^-1 Gamma^-1)
};

/// One step of the discrete-time ensemble Kalman update
///   u^{j,+} = u^j + C(U) (D(U) + dt^-1 Gamma^-1)^-1 (y^j - G(u^j)),
/// solved via Cholesky of the SPD bracket, never an explicit inverse.
/// Perturbations are drawn from `rng` in member order.
Ensemble discrete_enkf_step(const Ensemble& ens, const ForwardModel& model,
                            const NoiseModel& noise, const Vector& y, double dt,
                            EnkfNoise sigma, RngStream& rng);

/// Right-hand side of the preconditioned gradient flow, column j holding
///   -Cov(U) grad Phi(u^j, y) = Cov(U) G^T Gamma (y - G u^j).
/// Linear models only (throws std::logic_error otherwise).
Matrix gradient_flow_drift(const Ensemble& ens, const ForwardModel& model,
                           const NoiseModel& noise, const Vector& y);

/// Residual form C(U) Gamma (y - G(u^j)) per column; defined for linear and
/// nonlinear models, and identical to gradient_flow_drift when G is linear.
Matrix residual_drift(const Ensemble& ens, const ForwardModel& model,
                      const NoiseModel& noise, const Vector& y);

/// Snapshot, one row per member, header u0..u{d-1}, 17 significant digits.
void write_ensemble_csv(const Ensemble& ens, const std::string& path);

}  // namespace kenkf
