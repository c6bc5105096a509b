#pragma once

#include <functional>
#include <memory>
#include <string>

#include "kenkf/ensemble.hpp"
#include "kenkf/forward_model.hpp"

namespace kenkf {

/// Solve-based application of a fixed tridiagonal system (Thomas algorithm,
/// factorisation cached at construction). Requires a diagonally dominant
/// matrix, which the shifted FD Laplacian always is.
class TridiagonalSolver {
 public:
  TridiagonalSolver(Vector sub, Vector diag, Vector super);
  Vector solve(const Vector& rhs) const;
  Eigen::Index size() const { return diag_.size(); }

 private:
  Vector sub_, diag_, super_;
  Vector c_prime_;  // forward-elimination multipliers, precomputed
};

/// G = A_h^-1 for A_h = tridiag(-1/h^2, 2/h^2 + 1, -1/h^2) on the n interior
/// nodes of a uniform grid over [0, pi] (homogeneous Dirichlet data). A_h is
/// SPD, so G is its own adjoint; applies are O(n) solves, no dense inverse.
class EllipticInverseModel final : public ForwardModel {
 public:
  explicit EllipticInverseModel(Eigen::Index n);

  Eigen::Index input_dim() const override { return n_; }
  Eigen::Index output_dim() const override { return n_; }
  bool linear() const override { return true; }
  double mesh_width() const { return h_; }

 private:
  Vector do_apply(const Vector& u) const override { return solver_.solve(u); }
  Vector do_apply_adjoint(const Vector& w) const override {
    return solver_.solve(w);
  }
  Eigen::Index n_;
  double h_;
  TridiagonalSolver solver_;
};

/// Brownian-bridge covariance on [0, pi]:
///   C0(x, x') = min(x,x') - x x' / pi = min(x,x') (pi - max(x,x')) / pi.
/// The product form is used so rows for pinned points (x = 0 or pi) are
/// exactly zero.
Matrix brownian_bridge_covariance(const Vector& points);

/// Draws from N(0, C0) at the given points, one column per draw, filled in
/// member order from `rng`. Zero-variance points come out exactly zero.
class BrownianBridgeSampler {
 public:
  explicit BrownianBridgeSampler(const Vector& points);
  Matrix sample(Eigen::Index draws, RngStream& rng) const;

 private:
  Matrix root_;
  std::vector<Eigen::Index> pinned_;
};

enum class EllipticProfile { kOne, kSin8, kCustom };

/// Linear benchmark: recover the source u of -p'' + p = u on [0, pi] from
/// noisy point values of p. Data are synthesised as y = G u_true + eta,
/// eta ~ N(0, gamma^2 I), with the draw kept for the discrepancy threshold.
/// The prior is the Brownian bridge pinned at the interval ends.
struct EllipticLinearProblem {
  Eigen::Index n = 0;
  double h = 0.0;
  Vector mesh;  // interior nodes x_i = (i+1) h, h = pi / (n+1)
  std::shared_ptr<const EllipticInverseModel> model;
  NoiseModel noise;
  Vector u_true;
  Observation obs;
  double gamma = 0.0;
  std::shared_ptr<const BrownianBridgeSampler> prior;

  Problem as_problem(const std::string& name) const;
};

EllipticLinearProblem build_linear_elliptic(
    Eigen::Index n, EllipticProfile profile, double gamma, std::uint64_t seed,
    const std::function<double(double)>& custom_profile = {});

/// Nonlinear benchmark: p(x) = u2 x + exp(-u1) x (1 - x) / 2 observed at
/// x = 1/4 and 3/4; fixed data y = (27.5, 79.7), gamma = 0.1. No synthetic
/// noise draw exists, so the discrepancy threshold must come from config.
/// The stored reference point is the posterior mean used for error reporting.
struct NonlinearEllipticProblem {
  std::shared_ptr<const NonlinearModel> model;
  NoiseModel noise;
  Observation obs;
  double gamma = 0.1;
  Vector posterior_mean_reference;  // (-2.65, 104.5)
  Vector kinetic_mean_reference;    // (-2.56, 104.77)

  Problem as_problem(const std::string& name) const;
};

NonlinearEllipticProblem build_nonlinear_elliptic();

/// Prior for the nonlinear benchmark: u1 ~ N(0, 1), u2 ~ U(90, 110),
/// independent across members, (u1, u2) drawn in that order per member.
Matrix sample_nonlinear_prior(Eigen::Index draws, RngStream& rng);

}  // namespace kenkf
