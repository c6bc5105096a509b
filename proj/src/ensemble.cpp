#include "kenkf/ensemble.hpp"

#include <Eigen/Cholesky>

#include <stdexcept>
#include <utility>
#include <vector>

#include "kenkf/csv.hpp"

namespace kenkf {

Ensemble::Ensemble(Matrix members) : members_(std::move(members)) {
  if (members_.rows() < 1)
    throw std::invalid_argument("ensemble: empty state dimension");
  if (members_.cols() < 2)
    throw std::invalid_argument("ensemble: at least two members required");
}

MomentState empirical_moments(const Ensemble& ens) {
  const Matrix& u = ens.members();
  const double inv_j = 1.0 / static_cast<double>(ens.size());
  MomentState ms;
  ms.m = u.rowwise().mean();
  ms.e = inv_j * (u * u.transpose());
  return ms;
}

Matrix centered_covariance(const Ensemble& ens) {
  const Matrix v = ens.members().colwise() - ens.mean();
  return (v * v.transpose()) / static_cast<double>(ens.size());
}

Matrix apply_columns(const ForwardModel& model, const Matrix& members) {
  Matrix images(model.output_dim(), members.cols());
  for (Eigen::Index j = 0; j < members.cols(); ++j)
    images.col(j) = model.apply(members.col(j));
  return images;
}

Matrix covariance_cu_from_images(const Matrix& members, const Matrix& images) {
  const Matrix vu = members.colwise() - members.rowwise().mean().eval();
  const Matrix vg = images.colwise() - images.rowwise().mean().eval();
  return (vu * vg.transpose()) / static_cast<double>(members.cols());
}

Matrix covariance_du_from_images(const Matrix& images) {
  const Matrix vg = images.colwise() - images.rowwise().mean().eval();
  return (vg * vg.transpose()) / static_cast<double>(images.cols());
}

Matrix covariance_cu(const Ensemble& ens, const ForwardModel& model) {
  return covariance_cu_from_images(ens.members(),
                                   apply_columns(model, ens.members()));
}

Matrix covariance_du(const Ensemble& ens, const ForwardModel& model) {
  return covariance_du_from_images(apply_columns(model, ens.members()));
}

Ensemble discrete_enkf_step(const Ensemble& ens, const ForwardModel& model,
                            const NoiseModel& noise, const Vector& y, double dt,
                            EnkfNoise sigma, RngStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("enkf step: dt must be positive");
  if (y.size() != model.output_dim())
    throw std::invalid_argument("enkf step: data dimension mismatch");

  const Matrix images = apply_columns(model, ens.members());
  const Matrix c = covariance_cu_from_images(ens.members(), images);
  const Matrix d = covariance_du_from_images(images);

  const Matrix bracket = d + noise.gamma_inv() / dt;
  Eigen::LLT<Matrix> llt(bracket);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(
        "enkf step: (D + dt^-1 Gamma^-1) failed Cholesky; cannot happen for SPD Gamma");

  Matrix innovations(y.size(), ens.size());
  const double noise_scale = 1.0 / std::sqrt(dt);
  for (Eigen::Index j = 0; j < ens.size(); ++j) {
    Vector yj = y;
    if (sigma == EnkfNoise::kGammaInverse)
      yj += noise_scale * noise.sample_covariance_noise(rng);
    innovations.col(j) = yj - images.col(j);
  }

  return Ensemble(ens.members() + c * llt.solve(innovations));
}

namespace {

// Covariance-times-columns with the cheaper Gram side: for J <= d the J x J
// product avoids ever forming the d x d covariance.
Matrix covariance_action(const Matrix& centered, const Matrix& z) {
  const double inv_j = 1.0 / static_cast<double>(centered.cols());
  if (centered.cols() <= centered.rows())
    return centered * ((centered.transpose() * z) * inv_j);
  const Matrix cov = (centered * centered.transpose()) * inv_j;
  return cov * z;
}

}  // namespace

Matrix gradient_flow_drift(const Ensemble& ens, const ForwardModel& model,
                           const NoiseModel& noise, const Vector& y) {
  if (!model.linear())
    throw std::logic_error("gradient_flow_drift: requires a linear model");
  const Matrix images = apply_columns(model, ens.members());
  Matrix z(ens.dim(), ens.size());
  for (Eigen::Index j = 0; j < ens.size(); ++j)
    z.col(j) = model.apply_adjoint(noise.apply_precision(y - images.col(j)));
  const Matrix centered = ens.members().colwise() - ens.mean();
  return covariance_action(centered, z);
}

Matrix residual_drift(const Ensemble& ens, const ForwardModel& model,
                      const NoiseModel& noise, const Vector& y) {
  const Matrix images = apply_columns(model, ens.members());
  const Matrix c = covariance_cu_from_images(ens.members(), images);
  Matrix w(y.size(), ens.size());
  for (Eigen::Index j = 0; j < ens.size(); ++j)
    w.col(j) = noise.apply_precision(y - images.col(j));
  return c * w;
}

void write_ensemble_csv(const Ensemble& ens, const std::string& path) {
  std::vector<std::string> header(ens.dim());
  for (Eigen::Index i = 0; i < ens.dim(); ++i) header[i] = "u" + std::to_string(i);
  CsvWriter csv(std::move(header));
  for (Eigen::Index j = 0; j < ens.size(); ++j) csv.add_row(ens.member(j).eval());
  csv.write(path);
}

}  // namespace kenkf
