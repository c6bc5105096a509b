#include "kenkf/problems.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace kenkf {

TridiagonalSolver::TridiagonalSolver(Vector sub, Vector diag, Vector super)
    : sub_(std::move(sub)), diag_(std::move(diag)), super_(std::move(super)) {
  const Eigen::Index n = diag_.size();
  if (n < 1 || sub_.size() != n - 1 || super_.size() != n - 1)
    throw std::invalid_argument("tridiagonal solver: band sizes inconsistent");
  c_prime_.resize(n - 1);
  Vector d = diag_;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    if (d[i] == 0.0)
      throw std::invalid_argument("tridiagonal solver: zero pivot");
    c_prime_[i] = super_[i] / d[i];
    d[i + 1] -= sub_[i] * c_prime_[i];
  }
  if (d[n - 1] == 0.0)
    throw std::invalid_argument("tridiagonal solver: zero pivot");
  diag_ = std::move(d);  // keep the eliminated diagonal
}

Vector TridiagonalSolver::solve(const Vector& rhs) const {
  const Eigen::Index n = diag_.size();
  if (rhs.size() != n)
    throw std::invalid_argument("tridiagonal solver: rhs dimension mismatch");
  Vector x(n);
  x[0] = rhs[0] / diag_[0];
  for (Eigen::Index i = 1; i < n; ++i)
    x[i] = (rhs[i] - sub_[i - 1] * x[i - 1]) / diag_[i];
  for (Eigen::Index i = n - 2; i >= 0; --i) x[i] -= c_prime_[i] * x[i + 1];
  return x;
}

namespace {

TridiagonalSolver make_shifted_laplacian(Eigen::Index n, double h) {
  const double off = -1.0 / (h * h);
  const double mid = 2.0 / (h * h) + 1.0;
  return TridiagonalSolver(Vector::Constant(n - 1, off), Vector::Constant(n, mid),
                           Vector::Constant(n - 1, off));
}

}  // namespace

EllipticInverseModel::EllipticInverseModel(Eigen::Index n)
    : n_(n),
      h_(std::numbers::pi / static_cast<double>(n + 1)),
      solver_(make_shifted_laplacian(n, std::numbers::pi / static_cast<double>(n + 1))) {
  if (n_ < 2)
    throw std::invalid_argument("elliptic model: need at least two interior nodes");
}

Matrix brownian_bridge_covariance(const Vector& points) {
  const Eigen::Index n = points.size();
  constexpr double pi = std::numbers::pi;
  for (Eigen::Index i = 0; i < n; ++i)
    if (points[i] < 0.0 || points[i] > pi)
      throw std::invalid_argument("brownian bridge: points must lie in [0, pi]");
  Matrix c(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double lo = std::min(points[i], points[j]);
      const double hi = std::max(points[i], points[j]);
      const double v = lo * (pi - hi) / pi;
      c(i, j) = v;
      c(j, i) = v;
    }
  return c;
}

BrownianBridgeSampler::BrownianBridgeSampler(const Vector& points) {
  const Matrix c = brownian_bridge_covariance(points);
  for (Eigen::Index i = 0; i < points.size(); ++i)
    if (c(i, i) == 0.0) pinned_.push_back(i);

  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("brownian bridge: eigendecomposition failed");
  Vector lam = es.eigenvalues();
  const double clamp = 1e-12 * std::max(lam.maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    lam[i] = lam[i] > clamp ? std::sqrt(lam[i]) : 0.0;
  root_ = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Matrix BrownianBridgeSampler::sample(Eigen::Index draws, RngStream& rng) const {
  const Eigen::Index n = root_.rows();
  Matrix z(n, draws);
  for (Eigen::Index j = 0; j < draws; ++j)
    for (Eigen::Index i = 0; i < n; ++i) z(i, j) = rng.normal();
  Matrix samples = root_ * z;
  // Zero-variance coordinates are almost surely zero; pin them exactly.
  for (const Eigen::Index i : pinned_) samples.row(i).setZero();
  return samples;
}

Problem EllipticLinearProblem::as_problem(const std::string& name) const {
  Problem p{name, model, noise, obs, u_true, {}};
  auto sampler = prior;
  p.sample_prior = [sampler](Eigen::Index draws, RngStream& rng) {
    return sampler->sample(draws, rng);
  };
  return p;
}

EllipticLinearProblem build_linear_elliptic(
    Eigen::Index n, EllipticProfile profile, double gamma, std::uint64_t seed,
    const std::function<double(double)>& custom_profile) {
  if (n < 2) throw std::invalid_argument("elliptic problem: n must be at least 2");
  if (!(gamma > 0.0))
    throw std::invalid_argument("elliptic problem: gamma must be positive");
  if (profile == EllipticProfile::kCustom && !custom_profile)
    throw std::invalid_argument("elliptic problem: custom profile missing");

  const double h = std::numbers::pi / static_cast<double>(n + 1);
  Vector mesh(n);
  for (Eigen::Index i = 0; i < n; ++i) mesh[i] = static_cast<double>(i + 1) * h;

  Vector u_true(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (profile) {
      case EllipticProfile::kOne: u_true[i] = 1.0; break;
      case EllipticProfile::kSin8: u_true[i] = std::sin(8.0 * mesh[i]); break;
      case EllipticProfile::kCustom: u_true[i] = custom_profile(mesh[i]); break;
    }
  }

  EllipticLinearProblem prob{.n = n,
                             .h = h,
                             .mesh = std::move(mesh),
                             .model = std::make_shared<EllipticInverseModel>(n),
                             .noise = NoiseModel::white(n, gamma),
                             .u_true = std::move(u_true),
                             .obs = {},
                             .gamma = gamma,
                             .prior = nullptr};

  RngStream data_rng = RngStream::keyed(seed, rng_tag::kData);
  Vector eta(n);
  for (Eigen::Index i = 0; i < n; ++i) eta[i] = gamma * data_rng.normal();
  prob.obs.y = prob.model->apply(prob.u_true) + eta;
  prob.obs.eta = std::move(eta);

  prob.prior = std::make_shared<BrownianBridgeSampler>(prob.mesh);
  return prob;
}

namespace {

Vector nonlinear_forward(const Vector& u) {
  const auto p = [&u](double x) {
    return u[1] * x + std::exp(-u[0]) * x * (1.0 - x) / 2.0;
  };
  Vector out(2);
  out[0] = p(0.25);
  out[1] = p(0.75);
  return out;
}

}  // namespace

Problem NonlinearEllipticProblem::as_problem(const std::string& name) const {
  Problem p{name, model, noise, obs, posterior_mean_reference, {}};
  p.sample_prior = [](Eigen::Index draws, RngStream& rng) {
    return sample_nonlinear_prior(draws, rng);
  };
  return p;
}

NonlinearEllipticProblem build_nonlinear_elliptic() {
  NonlinearEllipticProblem prob{
      std::make_shared<NonlinearModel>(nonlinear_forward, 2, 2),
      NoiseModel::white(2, 0.1),
      Observation{(Vector(2) << 27.5, 79.7).finished(), std::nullopt},
      0.1,
      (Vector(2) << -2.65, 104.5).finished(),
      (Vector(2) << -2.56, 104.77).finished()};
  return prob;
}

Matrix sample_nonlinear_prior(Eigen::Index draws, RngStream& rng) {
  Matrix u(2, draws);
  for (Eigen::Index j = 0; j < draws; ++j) {
    u(0, j) = rng.normal();
    u(1, j) = rng.uniform(90.0, 110.0);
  }
  return u;
}

}  // namespace kenkf
