#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "kenkf/rng.hpp"

namespace kenkf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Map from controls u in R^d to observations in R^K. Linear models expose
/// the adjoint so downstream code can form G^T Gamma (y - G u) without ever
/// materialising G when a factorised solve is cheaper.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual bool linear() const = 0;

  /// G(u). Throws std::invalid_argument on a dimension mismatch.
  Vector apply(const Vector& u) const;

  /// G^T w for linear models. Throws std::logic_error on nonlinear models.
  Vector apply_adjoint(const Vector& w) const;

 protected:
  virtual Vector do_apply(const Vector& u) const = 0;
  virtual Vector do_apply_adjoint(const Vector& w) const;
};

/// Linear model holding an explicit K x d matrix.
class DenseLinearModel final : public ForwardModel {
 public:
  explicit DenseLinearModel(Matrix g);

  Eigen::Index input_dim() const override { return g_.cols(); }
  Eigen::Index output_dim() const override { return g_.rows(); }
  bool linear() const override { return true; }
  const Matrix& matrix() const { return g_; }

 private:
  Vector do_apply(const Vector& u) const override { return g_ * u; }
  Vector do_apply_adjoint(const Vector& w) const override {
    return g_.transpose() * w;
  }
  Matrix g_;
};

/// Nonlinear model wrapping an arbitrary map.
class NonlinearModel final : public ForwardModel {
 public:
  NonlinearModel(std::function<Vector(const Vector&)> f, Eigen::Index d,
                 Eigen::Index k);

  Eigen::Index input_dim() const override { return d_; }
  Eigen::Index output_dim() const override { return k_; }
  bool linear() const override { return false; }

 private:
  Vector do_apply(const Vector& u) const override { return f_(u); }
  std::function<Vector(const Vector&)> f_;
  Eigen::Index d_;
  Eigen::Index k_;
};

/// Observation noise precision Gamma (SPD, K x K), with cached symmetric
/// roots of Gamma and Gamma^-1.
///
/// The weighted inner products use the subscript-as-inverse convention
/// <a, b>_Sigma = a^T Sigma^-1 b: the misfit norm <., .>_{Gamma^-1} weights by
/// Gamma (precision_ip), the ensemble-collapse norm <., .>_Gamma weights by
/// Gamma^-1 (covariance_ip).
class NoiseModel {
 public:
  /// Generic SPD precision. Rejects non-symmetric or non-positive-definite
  /// input with std::invalid_argument.
  explicit NoiseModel(Matrix gamma);

  /// White noise eta ~ N(0, gamma_std^2 I_k), i.e. Gamma = gamma_std^-2 I.
  static NoiseModel white(Eigen::Index k, double gamma_std);

  Eigen::Index dim() const { return dim_; }
  const Matrix& gamma() const { return gamma_; }
  const Matrix& gamma_inv() const { return gamma_inv_; }

  Vector apply_precision(const Vector& x) const;        // Gamma x
  Vector apply_covariance(const Vector& x) const;       // Gamma^-1 x
  Vector apply_precision_sqrt(const Vector& x) const;   // Gamma^(1/2) x
  Vector apply_covariance_sqrt(const Vector& x) const;  // Gamma^(-1/2) x

  double precision_ip(const Vector& a, const Vector& b) const;
  double covariance_ip(const Vector& a, const Vector& b) const;
  double precision_norm2(const Vector& a) const { return precision_ip(a, a); }
  double covariance_norm2(const Vector& a) const { return covariance_ip(a, a); }

  /// Draw from N(0, Gamma^-1), the observational noise law.
  Vector sample_covariance_noise(RngStream& rng) const;

  bool diagonal() const { return diagonal_; }

 private:
  NoiseModel(Eigen::Index k, double precision_scalar);  // white fast path

  Eigen::Index dim_;
  Matrix gamma_;
  bool diagonal_ = false;
  double diag_precision_ = 0.0;  // valid when diagonal_
  Matrix gamma_inv_;
  Matrix gamma_sqrt_;
  Matrix gamma_inv_sqrt_;
};

/// Data record: y, plus the synthetic noise draw when the data were
/// manufactured (needed by the discrepancy threshold ||eta||_2^2).
struct Observation {
  Vector y;
  std::optional<Vector> eta;
};

/// Everything a solver needs to attack one inverse problem: forward map,
/// noise precision, data, a truth/reference point for error diagnostics, and
/// a prior sampler (returns d x J member columns, consuming the stream in
/// member order).
struct Problem {
  std::string name;
  std::shared_ptr<const ForwardModel> model;
  NoiseModel noise;
  Observation obs;
  Vector u_ref;
  std::function<Matrix(Eigen::Index, RngStream&)> sample_prior;
};

/// G(u); identical to model.apply, provided as the named operation.
Vector apply_forward(const ForwardModel& model, const Vector& u);

/// Phi(u, y) = 1/2 || Gamma^(1/2) (y - G(u)) ||^2.
double least_squares(const ForwardModel& model, const NoiseModel& noise,
                     const Vector& y, const Vector& u);

/// grad Phi = -G^T Gamma (y - G u). Linear models only; throws
/// std::logic_error otherwise.
Vector gradient_phi(const ForwardModel& model, const NoiseModel& noise,
                    const Vector& y, const Vector& u);

}  // namespace kenkf
