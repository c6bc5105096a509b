#include "kenkf/forward_model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace kenkf {

Vector ForwardModel::apply(const Vector& u) const {
  if (u.size() != input_dim())
    throw std::invalid_argument("forward model: control has dimension " +
                                std::to_string(u.size()) + ", expected " +
                                std::to_string(input_dim()));
  return do_apply(u);
}

Vector ForwardModel::apply_adjoint(const Vector& w) const {
  if (!linear())
    throw std::logic_error("forward model: adjoint requires a linear model");
  if (w.size() != output_dim())
    throw std::invalid_argument("forward model: adjoint input has dimension " +
                                std::to_string(w.size()) + ", expected " +
                                std::to_string(output_dim()));
  return do_apply_adjoint(w);
}

Vector ForwardModel::do_apply_adjoint(const Vector&) const {
  throw std::logic_error("forward model: adjoint not implemented");
}

DenseLinearModel::DenseLinearModel(Matrix g) : g_(std::move(g)) {
  if (g_.rows() == 0 || g_.cols() == 0)
    throw std::invalid_argument("linear model: empty matrix");
}

NonlinearModel::NonlinearModel(std::function<Vector(const Vector&)> f,
                               Eigen::Index d, Eigen::Index k)
    : f_(std::move(f)), d_(d), k_(k) {
  if (d_ <= 0 || k_ <= 0)
    throw std::invalid_argument("nonlinear model: dimensions must be positive");
  if (!f_) throw std::invalid_argument("nonlinear model: empty map");
}

NoiseModel::NoiseModel(Matrix gamma) : dim_(gamma.rows()), gamma_(std::move(gamma)) {
  if (dim_ == 0 || gamma_.cols() != dim_)
    throw std::invalid_argument("noise model: Gamma must be square and nonempty");
  const double scale = gamma_.cwiseAbs().maxCoeff();
  if ((gamma_ - gamma_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, scale))
    throw std::invalid_argument("noise model: Gamma is not symmetric");
  gamma_ = 0.5 * (gamma_ + gamma_.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(gamma_);
  if (es.info() != Eigen::Success)
    throw std::invalid_argument("noise model: eigendecomposition failed");
  const Vector& lam = es.eigenvalues();
  if (lam.minCoeff() <= 1e-14 * std::max(1.0, lam.maxCoeff()))
    throw std::invalid_argument("noise model: Gamma is not positive definite");

  const Matrix& v = es.eigenvectors();
  gamma_inv_ = v * lam.cwiseInverse().asDiagonal() * v.transpose();
  gamma_sqrt_ = v * lam.cwiseSqrt().asDiagonal() * v.transpose();
  gamma_inv_sqrt_ = v * lam.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();

  diagonal_ = true;
  diag_precision_ = gamma_(0, 0);
  for (Eigen::Index i = 0; diagonal_ && i < dim_; ++i) {
    if (std::abs(gamma_(i, i) - diag_precision_) > 0) diagonal_ = false;
    for (Eigen::Index j = 0; diagonal_ && j < dim_; ++j)
      if (i != j && gamma_(i, j) != 0.0) diagonal_ = false;
  }
}

NoiseModel::NoiseModel(Eigen::Index k, double precision_scalar)
    : dim_(k), diagonal_(true), diag_precision_(precision_scalar) {
  gamma_ = precision_scalar * Matrix::Identity(k, k);
  gamma_inv_ = (1.0 / precision_scalar) * Matrix::Identity(k, k);
  gamma_sqrt_ = std::sqrt(precision_scalar) * Matrix::Identity(k, k);
  gamma_inv_sqrt_ = (1.0 / std::sqrt(precision_scalar)) * Matrix::Identity(k, k);
}

NoiseModel NoiseModel::white(Eigen::Index k, double gamma_std) {
  if (k <= 0) throw std::invalid_argument("noise model: dimension must be positive");
  if (!(gamma_std > 0.0))
    throw std::invalid_argument("noise model: noise level must be positive");
  return NoiseModel(k, 1.0 / (gamma_std * gamma_std));
}

Vector NoiseModel::apply_precision(const Vector& x) const {
  if (diagonal_) return diag_precision_ * x;
  return gamma_ * x;
}

Vector NoiseModel::apply_covariance(const Vector& x) const {
  if (diagonal_) return x / diag_precision_;
  return gamma_inv_ * x;
}

Vector NoiseModel::apply_precision_sqrt(const Vector& x) const {
  if (diagonal_) return std::sqrt(diag_precision_) * x;
  return gamma_sqrt_ * x;
}

Vector NoiseModel::apply_covariance_sqrt(const Vector& x) const {
  if (diagonal_) return x / std::sqrt(diag_precision_);
  return gamma_inv_sqrt_ * x;
}

double NoiseModel::precision_ip(const Vector& a, const Vector& b) const {
  if (diagonal_) return diag_precision_ * a.dot(b);
  return a.dot(gamma_ * b);
}

double NoiseModel::covariance_ip(const Vector& a, const Vector& b) const {
  if (diagonal_) return a.dot(b) / diag_precision_;
  return a.dot(gamma_inv_ * b);
}

Vector NoiseModel::sample_covariance_noise(RngStream& rng) const {
  Vector z(dim_);
  for (Eigen::Index i = 0; i < dim_; ++i) z[i] = rng.normal();
  return apply_covariance_sqrt(z);
}

Vector apply_forward(const ForwardModel& model, const Vector& u) {
  return model.apply(u);
}

double least_squares(const ForwardModel& model, const NoiseModel& noise,
                     const Vector& y, const Vector& u) {
  if (y.size() != model.output_dim())
    throw std::invalid_argument("least_squares: data dimension mismatch");
  const Vector res = y - model.apply(u);
  return 0.5 * noise.precision_norm2(res);
}

Vector gradient_phi(const ForwardModel& model, const NoiseModel& noise,
                    const Vector& y, const Vector& u) {
  if (!model.linear())
    throw std::logic_error("gradient_phi: closed-form gradient requires a linear model");
  if (y.size() != model.output_dim())
    throw std::invalid_argument("gradient_phi: data dimension mismatch");
  const Vector res = y - model.apply(u);
  return -model.apply_adjoint(noise.apply_precision(res));
}

}  // namespace kenkf
