#pragma once

#include <utility>
#include <vector>

#include "kenkf/ensemble.hpp"

namespace kenkf {

/// Per-iteration trace row. The first eight fields form the fixed CSV schema
/// t,eps,v,r,V,R,misfit,rho; the *_lin companions are the unsquared sums
/// (API / manifest only, see norm_summaries).
struct DiagnosticsRecord {
  double t = 0.0;
  double eps = 0.0;
  double v = 0.0;
  double r = 0.0;
  double big_v = 0.0;
  double big_r = 0.0;
  double misfit = 0.0;
  double rho = 0.0;
  double big_v_lin = 0.0;
  double big_r_lin = 0.0;
};

/// Spread deviations v^j = u^j - mean and truth residuals r^j = u^j - u_truth,
/// as d x J column blocks.
std::pair<Matrix, Matrix> deviations(const Ensemble& ens, const Vector& u_truth);

/// Ensemble-averaged norms:
///   v = (1/J) sum ||v^j||^2            r = (1/J) sum ||r^j||^2
///   V = (1/J) sum |V_jj|^2             R = (1/J) sum |R_jj|^2
/// where V_jj = <G v^j, G v^j>_{Gamma^-1} (precision-weighted) and R_jj is the
/// same with r^j. V and R deliberately square the already-quadratic diagonal
/// entries (quartic summaries); V_lin/R_lin keep the unsquared averages.
struct NormSummaries {
  double v = 0.0;
  double r = 0.0;
  double big_v = 0.0;
  double big_r = 0.0;
  double big_v_lin = 0.0;
  double big_r_lin = 0.0;
};

NormSummaries norm_summaries(const Ensemble& ens, const ForwardModel& model,
                             const NoiseModel& noise, const Vector& u_truth);

/// Same computation reusing precomputed member images (column j = G(u^j)) and
/// the image of the truth reference. This is the path the solver takes, and
/// for nonlinear models it is the natural extension (G-image differences in
/// place of G applied to differences; identical for linear G).
NormSummaries norm_summaries_from_images(const Matrix& members, const Matrix& images,
                                         const Vector& truth_image,
                                         const Vector& u_truth,
                                         const NoiseModel& noise);

/// Data misfit (1/J) sum ||G(u^j) - y||^2_{Gamma^-1}. For synthetic linear
/// data y = G u_truth + eta this equals (1/J) sum ||G r^j - eta||^2_{Gamma^-1}.
double misfit(const Ensemble& ens, const ForwardModel& model,
              const NoiseModel& noise, const Vector& y);

double misfit_from_images(const Matrix& images, const Vector& y,
                          const NoiseModel& noise);

/// Discrepancy threshold ||eta||_2^2 (plain Euclidean norm, deliberately
/// unweighted; see the stopping notes in the README).
double discrepancy_threshold(const Vector& eta);

/// Inclusive discrepancy test: stop as soon as misfit <= threshold.
bool discrepancy_stop(double misfit_value, double threshold);

/// Frobenius norm of the deviation Gram matrix R(t)_ij = <G v^i, G v^j>_Gamma
/// (covariance-weighted inner product; the collapse estimate bounds this by
/// O(J/t)). Computed from the smaller Gram side, never the J x J matrix when
/// K < J.
double collapse_gram_norm(const Ensemble& ens, const ForwardModel& model,
                          const NoiseModel& noise);

/// One gradient-flow collapse trace: ensemble size and (t, ||R(t)||_F) samples.
struct CollapseTrace {
  double ensemble_size = 0.0;
  std::vector<std::pair<double, double>> points;
};

struct CollapseFit {
  double slope = 0.0;          // d log||R|| / d log t
  double log_prefactor = 0.0;  // intercept at log t = 0
  double prefactor = 0.0;
  bool collapsed_at_start = false;
};

/// Least-squares line through (log t, log ||R||). Points with nonpositive
/// norm are excluded; if everything is at zero the trace is reported as
/// collapsed at start. Fewer than two usable points (and not collapsed)
/// throws std::invalid_argument.
CollapseFit collapse_rate(const CollapseTrace& trace);

/// Growth exponent of the prefactor across ensemble sizes: slope of
/// log prefactor vs log J. Needs at least two non-collapsed fits.
double collapse_prefactor_growth(const std::vector<CollapseTrace>& traces);

}  // namespace kenkf
