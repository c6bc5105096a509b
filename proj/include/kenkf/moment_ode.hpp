#pragma once

#include <array>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kenkf/ensemble.hpp"

namespace kenkf {

/// Scalar (d = K = 1) moment system
///   dm/dt = G (E - m^2)(y - G m)
///   dE/dt = 2 G (E - m^2)(y m - G E) + lambda2,
/// lambda2 = 0 for the noise-free dynamics, > 0 for the stabilized variant.
struct ScalarMomentSystem {
  double y = 0.0;
  double g = 1.0;  // scalar model, must be nonzero
  double lambda2 = 0.0;
};

struct PhasePoint {
  double m = 0.0;
  double e = 0.0;
};

/// Second moments an actual distribution can attain: E >= m^2.
inline bool admissible(const PhasePoint& p) { return p.e >= p.m * p.m; }

struct PhaseVelocity {
  double dm = 0.0;
  double de = 0.0;
};

PhaseVelocity rhs(const ScalarMomentSystem& sys, const PhasePoint& p);

/// Exact algebraic Jacobian of rhs at p.
Eigen::Matrix2d jacobian(const ScalarMomentSystem& sys, const PhasePoint& p);

/// Closed-form eigenvalues of a real 2x2 matrix via trace/determinant. Exact
/// zeros in, exact zeros out — no iterative eigensolver noise, which matters
/// for the double-zero spectra on the equilibrium parabola.
std::array<std::complex<double>, 2> eigenvalues_2x2(const Eigen::Matrix2d& a);

/// One nullcline curve. Vertical branches are the line m = m_value; all
/// others are graphs E = e_of_m(m).
struct NullclineBranch {
  std::string id;     // "dm-parabola", "dm-vertical", "de-parabola", "de-line",
                      // "de-upper", "de-lower"
  int component = 0;  // 0: zeroes dm/dt, 1: zeroes dE/dt
  bool vertical = false;
  double m_value = 0.0;
  std::function<double(double)> e_of_m;
};

/// dm/dt vanishes on E = m^2 and on m = y/G for any lambda2. dE/dt vanishes
/// on E = m^2 and E = (y/G) m when lambda2 = 0, and on the two roots
/// E = (m(y+Gm) +- sqrt(m^2 (y-Gm)^2 + 2 lambda2)) / (2G) when lambda2 > 0.
std::vector<NullclineBranch> nullclines(const ScalarMomentSystem& sys);

enum class Stability { kNonHyperbolic, kStable, kUnstable };

const char* to_string(Stability s);

struct FixedPoint {
  PhasePoint point;
  std::string label;  // "F0", "F1", "F1+", "F1-"
  Stability stability = Stability::kNonHyperbolic;
  std::array<std::complex<double>, 2> eigenvalues{};
};

struct FixedPointReport {
  std::vector<FixedPoint> points;
  /// lambda2 = 0: every point (k, k^2) of the parabola is an equilibrium with
  /// double-zero eigenvalues; the listed F0/F1 are its named representatives.
  bool parabola_family = false;
};

FixedPointReport fixed_points(const ScalarMomentSystem& sys);

/// For G > 0, the lower equilibrium F1- drops below E = 0 (leaves the
/// half-plane of realizable second moments) exactly when
/// lambda > sqrt(2) y^2 / G; this returns that bound.
double lambda_admissibility_bound(const ScalarMomentSystem& sys);

struct Trajectory {
  std::vector<double> t;
  std::vector<PhasePoint> points;
  bool blew_up = false;    // magnitude above 1e12 or step below 1e-14 (asymptote)
  bool truncated = false;  // stopped before t_end (blow-up or step budget)
  double t_last = 0.0;
};

/// Adaptive embedded Runge-Kutta 5(4) (Dormand-Prince pair) with per-step
/// mixed absolute/relative error control at `tol`. Records every accepted
/// step, landing exactly on t_end; finite-time asymptotes terminate cleanly
/// with blew_up set.
Trajectory integrate(const ScalarMomentSystem& sys, const PhasePoint& p0,
                     double t_end, double tol);

enum class ClosedFormKind {
  kNotCovered,
  kInverseLinear,  // lambda2 = 0, m0 = y/G:  E = y^2/G^2 + 1/(2 G^2 (C + t))
  kSquareRoot,     // lambda2 = 0, m0 != y/G: m = y/G +- 1/(G sqrt(-2C1 G t - 2C2 G))
  kTanh,           // lambda2 > 0, m0 = y/G:  E = y^2/G^2 + sqrt(2L)/(2G) tanh(sqrt(2L) G (C+t))
};

/// Analytic solution through p0 where one of the covered families applies.
/// Integration constants are always fitted numerically from the t = 0
/// conditions (monotone bisection to full double resolution). `at` is empty
/// when kind is kNotCovered; for a branch with a
/// finite-time asymptote, `at` returns NaNs at t >= valid_until.
struct ClosedFormSolution {
  ClosedFormKind kind = ClosedFormKind::kNotCovered;
  std::vector<double> constants;  // {C} or {C1, C2}
  double valid_until = std::numeric_limits<double>::infinity();
  std::function<PhasePoint(double)> at;
};

ClosedFormSolution closed_form_solutions(const ScalarMomentSystem& sys,
                                         const PhasePoint& p0);

struct VectorFieldSample {
  double m = 0.0;
  double e = 0.0;
  double dm = 0.0;
  double de = 0.0;
};

/// Inclusive n x n uniform grid over [m_lo, m_hi] x [e_lo, e_hi], outer loop
/// over m, inner over E.
std::vector<VectorFieldSample> vector_field_grid(const ScalarMomentSystem& sys,
                                                 double m_lo, double m_hi,
                                                 double e_lo, double e_hi, int n);

struct MomentRhs {
  Vector dm;
  Matrix de;
};

/// d-dimensional moment equations closed against a particle ensemble:
///   dm/dt = -Cov grad Phi(m, y)
///   dE/dt = (1/J) sum_j [ -(Cov grad Phi(u^j)) (x) u^j + transpose ] + lambda2 I,
/// with Cov = E - m (x) m from the ensemble's empirical moments. The scalar
/// reduction (d = K = 1, Gamma = 1) reproduces the ScalarMomentSystem rhs.
MomentRhs ddim_moment_rhs(const ForwardModel& model, const NoiseModel& noise,
                          const Vector& y, const Ensemble& ens, double lambda2);

}  // namespace kenkf
