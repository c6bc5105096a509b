#include "kenkf/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace kenkf {

std::pair<Matrix, Matrix> deviations(const Ensemble& ens, const Vector& u_truth) {
  if (u_truth.size() != ens.dim())
    throw std::invalid_argument("deviations: truth dimension mismatch");
  const Vector mean = ens.mean();
  Matrix v = ens.members().colwise() - mean;
  Matrix r = ens.members().colwise() - u_truth;
  return {std::move(v), std::move(r)};
}

NormSummaries norm_summaries_from_images(const Matrix& members, const Matrix& images,
                                         const Vector& truth_image,
                                         const Vector& u_truth,
                                         const NoiseModel& noise) {
  const Eigen::Index j_count = members.cols();
  const double inv_j = 1.0 / static_cast<double>(j_count);
  const Vector mean = members.rowwise().mean();
  const Vector image_mean = images.rowwise().mean();

  NormSummaries s;
  for (Eigen::Index j = 0; j < j_count; ++j) {
    s.v += (members.col(j) - mean).squaredNorm();
    s.r += (members.col(j) - u_truth).squaredNorm();
    const double vjj = noise.precision_norm2(images.col(j) - image_mean);
    const double rjj = noise.precision_norm2(images.col(j) - truth_image);
    s.big_v_lin += vjj;
    s.big_r_lin += rjj;
    s.big_v += vjj * vjj;
    s.big_r += rjj * rjj;
  }
  s.v *= inv_j;
  s.r *= inv_j;
  s.big_v *= inv_j;
  s.big_r *= inv_j;
  s.big_v_lin *= inv_j;
  s.big_r_lin *= inv_j;
  return s;
}

NormSummaries norm_summaries(const Ensemble& ens, const ForwardModel& model,
                             const NoiseModel& noise, const Vector& u_truth) {
  const Matrix images = apply_columns(model, ens.members());
  return norm_summaries_from_images(ens.members(), images, model.apply(u_truth),
                                    u_truth, noise);
}

double misfit_from_images(const Matrix& images, const Vector& y,
                          const NoiseModel& noise) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < images.cols(); ++j)
    acc += noise.precision_norm2(images.col(j) - y);
  return acc / static_cast<double>(images.cols());
}

double misfit(const Ensemble& ens, const ForwardModel& model,
              const NoiseModel& noise, const Vector& y) {
  if (y.size() != model.output_dim())
    throw std::invalid_argument("misfit: data dimension mismatch");
  return misfit_from_images(apply_columns(model, ens.members()), y, noise);
}

double discrepancy_threshold(const Vector& eta) { return eta.squaredNorm(); }

bool discrepancy_stop(double misfit_value, double threshold) {
  return misfit_value <= threshold;
}

double collapse_gram_norm(const Ensemble& ens, const ForwardModel& model,
                          const NoiseModel& noise) {
  // R = W^T W with W = Gamma^(-1/2) G V; ||W^T W||_F = ||W W^T||_F, so use
  // whichever Gram side is smaller.
  const Matrix images = apply_columns(model, ens.members());
  Matrix w = images.colwise() - images.rowwise().mean().eval();
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    w.col(j) = noise.apply_covariance_sqrt(w.col(j));
  if (w.rows() <= w.cols()) return (w * w.transpose()).norm();
  return (w.transpose() * w).norm();
}

CollapseFit collapse_rate(const CollapseTrace& trace) {
  std::vector<std::pair<double, double>> logs;
  double max_norm = 0.0;
  for (const auto& [t, norm] : trace.points) {
    max_norm = std::max(max_norm, norm);
    if (t > 0.0 && norm > 0.0) logs.emplace_back(std::log(t), std::log(norm));
  }
  CollapseFit fit;
  if (max_norm <= 1e-300) {
    fit.collapsed_at_start = true;
    fit.slope = std::numeric_limits<double>::quiet_NaN();
    fit.log_prefactor = std::numeric_limits<double>::quiet_NaN();
    fit.prefactor = 0.0;
    return fit;
  }
  if (logs.size() < 2)
    throw std::invalid_argument("collapse_rate: need at least two positive samples");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(logs.size());
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300)
    throw std::invalid_argument("collapse_rate: degenerate time samples");
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.log_prefactor = (sy - fit.slope * sx) / n;
  fit.prefactor = std::exp(fit.log_prefactor);
  return fit;
}

double collapse_prefactor_growth(const std::vector<CollapseTrace>& traces) {
  std::vector<std::pair<double, double>> logs;
  for (const auto& trace : traces) {
    const CollapseFit fit = collapse_rate(trace);
    if (!fit.collapsed_at_start)
      logs.emplace_back(std::log(trace.ensemble_size), fit.log_prefactor);
  }
  if (logs.size() < 2)
    throw std::invalid_argument(
        "collapse_prefactor_growth: need two non-collapsed traces");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(logs.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace kenkf
