#include "kenkf/meanfield.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "kenkf/parallel.hpp"

namespace kenkf {

namespace {

// Spectral radii below this are treated as fully collapsed: the quadratic
// interaction term is numerically gone and the step is only limited by the
// time horizon ("free step").
constexpr double kRhoFloor = 1e-14;
constexpr int kPowerMaxIter = 600;
constexpr double kPowerTol = 1e-13;

StableStep make_step(double rho, double t_fin) {
  StableStep step;
  step.rho = rho;
  step.eps = rho <= kRhoFloor ? t_fin : std::min(1.0 / rho, t_fin);
  return step;
}

}  // namespace

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kDiscrepancyMet:
      return "discrepancy_met";
    case StopReason::kTimeReached:
      return "time_reached";
    case StopReason::kMaxIterations:
      return "max_iterations";
    case StopReason::kNumericDivergence:
      return "numeric_divergence";
  }
  return "unknown";
}

double linear_stiffness_radius(const Matrix& cov, const ForwardModel& model,
                               const NoiseModel& noise) {
  if (!model.linear())
    throw std::logic_error("linear_stiffness_radius: model must be linear");
  if (cov.rows() != model.input_dim() || cov.cols() != model.input_dim())
    throw std::invalid_argument("linear_stiffness_radius: covariance shape mismatch");

  const Eigen::Index k = model.output_dim();
  const auto apply_s = [&](const Vector& w) -> Vector {
    // S = Gamma^(1/2) G Cov G^T Gamma^(1/2); same nonzero spectrum as
    // Cov G^T Gamma G but symmetric PSD, so the Rayleigh quotient of the
    // power iterate converges monotonically to the radius.
    const Vector u = model.apply_adjoint(noise.apply_precision_sqrt(w));
    return noise.apply_precision_sqrt(model.apply(cov * u));
  };

  // Fixed-key start vector: deterministic, and a dense splitmix draw has no
  // structured alignment with any data-dependent eigenspace.
  RngStream rs = RngStream::keyed(0x9d2c5680ULL, static_cast<std::uint64_t>(k));
  Vector w(k);
  for (Eigen::Index i = 0; i < k; ++i) w[i] = rs.normal();
  const double w0 = w.norm();
  if (w0 == 0.0) return 0.0;  // unreachable: Box-Muller radius is positive
  w /= w0;

  double lambda = 0.0;
  for (int it = 0; it < kPowerMaxIter; ++it) {
    const Vector sw = apply_s(w);
    const double rayleigh = w.dot(sw);
    const double nn = sw.norm();
    if (nn == 0.0) return 0.0;  // iterate annihilated: collapsed covariance
    w = sw / nn;
    const double drift = std::abs(rayleigh - lambda);
    lambda = rayleigh;
    if (drift <= kPowerTol * std::max(std::abs(lambda), 1e-30)) break;
  }
  return std::max(lambda, 0.0);
}

double nonlinear_stiffness_radius(const Matrix& d_cov, const NoiseModel& noise) {
  const Eigen::Index k = noise.dim();
  if (d_cov.rows() != k || d_cov.cols() != k)
    throw std::invalid_argument("nonlinear_stiffness_radius: covariance shape mismatch");

  Matrix b(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Vector e = Vector::Zero(k);
    e[i] = 1.0;
    b.col(i) = noise.apply_precision_sqrt(d_cov * noise.apply_precision_sqrt(e));
  }
  const Matrix sym = 0.5 * (b + b.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("nonlinear_stiffness_radius: eigensolver failed");
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

StableStep stable_epsilon(const MomentState& moments, const ForwardModel& model,
                          const NoiseModel& noise, double t_fin) {
  if (!model.linear())
    throw std::logic_error(
        "stable_epsilon: nonlinear models use stable_epsilon_nonlinear on D(U)");
  return make_step(linear_stiffness_radius(moments.covariance(), model, noise), t_fin);
}

StableStep stable_epsilon_nonlinear(const Matrix& d_cov, const NoiseModel& noise,
                                    double t_fin) {
  return make_step(nonlinear_stiffness_radius(d_cov, noise), t_fin);
}

MomentState subsample_moments(const Ensemble& ens, Eigen::Index m, RngStream& rng) {
  const Eigen::Index j_count = ens.size();
  if (m < 1 || m > j_count)
    throw std::invalid_argument("subsample_moments: need 1 <= M <= ensemble size");
  if (m == j_count) return empirical_moments(ens);  // the only M-subset; no draws

  std::vector<std::uint32_t> pool(static_cast<std::size_t>(j_count));
  std::iota(pool.begin(), pool.end(), 0U);
  std::vector<std::uint32_t> idx;
  rng.sample_without_replacement(static_cast<std::size_t>(m), pool, idx);

  const Matrix& u = ens.members();
  MomentState s;
  s.m = Vector::Zero(ens.dim());
  s.e = Matrix::Zero(ens.dim(), ens.dim());
  for (const std::uint32_t kk : idx) {
    const auto col = u.col(static_cast<Eigen::Index>(kk));
    s.m += col;
    s.e.noalias() += col * col.transpose();
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  s.m *= inv_m;
  s.e *= inv_m;
  return s;
}

Vector interact(const Vector& u_star, const MomentState& moments_m,
                const ForwardModel& model, const NoiseModel& noise, const Vector& y,
                double eps, const Vector& xi) {
  if (xi.size() != u_star.size())
    throw std::invalid_argument("interact: noise dimension mismatch");
  const Vector g = gradient_phi(model, noise, y, u_star);
  const Vector cov_g = moments_m.e * g - moments_m.m * moments_m.m.dot(g);
  return u_star - eps * cov_g + std::sqrt(eps) * xi;
}

Vector interact_residual(const Vector& u_star, const Matrix& cross_cov_m,
                         const ForwardModel& model, const NoiseModel& noise,
                         const Vector& y, double eps, const Vector& xi) {
  if (xi.size() != u_star.size())
    throw std::invalid_argument("interact_residual: noise dimension mismatch");
  if (cross_cov_m.rows() != u_star.size() || cross_cov_m.cols() != model.output_dim())
    throw std::invalid_argument("interact_residual: cross covariance shape mismatch");
  const Vector r = y - model.apply(u_star);
  return u_star + eps * (cross_cov_m * noise.apply_precision(r)) +
         std::sqrt(eps) * xi;
}

IterationTrace run(const Problem& problem, const SolverConfig& config,
                   const RunHooks& hooks) {
  if (!problem.model) throw std::invalid_argument("run: problem has no forward model");
  const ForwardModel& model = *problem.model;
  const NoiseModel& noise = problem.noise;
  const Vector& y = problem.obs.y;
  const Eigen::Index d = model.input_dim();
  const Eigen::Index k = model.output_dim();
  const Eigen::Index big_j = config.ensemble_size;
  const Eigen::Index big_m = config.subsample_size;

  if (big_j < 2) throw std::invalid_argument("run: ensemble_size must be at least 2");
  if (big_m < 2 || big_m > big_j)
    throw std::invalid_argument("run: subsample_size must lie in [2, ensemble_size]");
  if (config.lambda2 < 0.0)
    throw std::invalid_argument("run: lambda2 must be nonnegative");
  if (!(config.t_fin > 0.0))
    throw std::invalid_argument("run: t_fin must be positive");
  if (config.max_iterations < 0)
    throw std::invalid_argument("run: max_iterations must be nonnegative");
  if (y.size() != k) throw std::invalid_argument("run: observation dimension mismatch");
  if (noise.dim() != k) throw std::invalid_argument("run: noise dimension mismatch");
  if (problem.u_ref.size() != d)
    throw std::invalid_argument("run: reference dimension mismatch");
  if (!problem.sample_prior)
    throw std::invalid_argument("run: problem has no prior sampler");

  const bool gaussian = config.noise_kind == InjectedNoise::kGaussian;
  const double lambda = std::sqrt(config.lambda2);
  Matrix lambda_root;  // empty when the noise covariance is lambda2 * I
  if (config.lambda_full) {
    const Matrix& lf = *config.lambda_full;
    if (lf.rows() != d || lf.cols() != d)
      throw std::invalid_argument("run: lambda_full must be d x d");
    const Matrix sym = 0.5 * (lf + lf.transpose());
    if ((lf - sym).cwiseAbs().maxCoeff() >
        1e-12 * std::max(1.0, lf.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("run: lambda_full must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("run: lambda_full eigensolver failed");
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, top))
      throw std::invalid_argument("run: lambda_full must be positive semidefinite");
    lambda_root = es.eigenvectors() *
                  es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose();
  }
  const bool full_noise = lambda_root.size() > 0;

  double threshold = std::numeric_limits<double>::quiet_NaN();
  if (config.stopping == Stopping::kDiscrepancy) {
    if (config.discrepancy_threshold) {
      threshold = *config.discrepancy_threshold;
    } else if (problem.obs.eta) {
      threshold = discrepancy_threshold(*problem.obs.eta);
    } else {
      throw std::invalid_argument(
          "run: discrepancy stopping needs a threshold (problem stores no noise draw)");
    }
  }

  RngStream prior_rng = RngStream::keyed(config.seed, rng_tag::kPrior);
  Matrix members = problem.sample_prior(big_j, prior_rng);
  if (members.rows() != d || members.cols() != big_j)
    throw std::runtime_error("run: prior sampler returned a wrong-shaped ensemble");

  const Vector truth_image = model.apply(problem.u_ref);

  IterationTrace trace;
  trace.threshold = threshold;

  const int threads = worker_count();
  double t = 0.0;
  Eigen::Index iter = 0;  // committed updates so far

  Matrix images(k, big_j);
  Matrix zcols;  // linear path: column j = G^T Gamma (y - G u^j)
  Matrix wcols;  // nonlinear path: column j = Gamma (y - G(u^j))
  Matrix next(d, big_j);

  while (true) {
    parallel_for(
        static_cast<std::size_t>(big_j),
        [&](std::size_t jj) {
          const auto j = static_cast<Eigen::Index>(jj);
          images.col(j) = model.apply(members.col(j));
        },
        threads);
    const double phi_bar = misfit_from_images(images, y, noise);
    const NormSummaries norms =
        norm_summaries_from_images(members, images, truth_image, problem.u_ref, noise);

    DiagnosticsRecord state;
    state.t = t;
    state.v = norms.v;
    state.r = norms.r;
    state.big_v = norms.big_v;
    state.big_r = norms.big_r;
    state.big_v_lin = norms.big_v_lin;
    state.big_r_lin = norms.big_r_lin;
    state.misfit = phi_bar;

    StopReason stop = StopReason::kMaxIterations;
    bool done = false;
    if (config.stopping == Stopping::kDiscrepancy &&
        discrepancy_stop(phi_bar, threshold)) {
      stop = StopReason::kDiscrepancyMet;
      done = true;
    } else if (iter >= config.max_iterations) {
      stop = StopReason::kMaxIterations;
      done = true;
    } else if (!(config.t_fin - t > 0.0)) {
      stop = StopReason::kTimeReached;
      done = true;
    }

    Matrix cov;  // linear: full-ensemble covariance, reused by the M = J drift
    if (!done) {
      const double remaining = config.t_fin - t;
      StableStep step;
      if (model.linear()) {
        const Vector mean_u = members.rowwise().mean();
        const Matrix centered = members.colwise() - mean_u;
        cov.noalias() = (centered * centered.transpose()) / static_cast<double>(big_j);
        step = make_step(linear_stiffness_radius(cov, model, noise), remaining);
      } else {
        step = stable_epsilon_nonlinear(covariance_du_from_images(images), noise,
                                        remaining);
      }
      state.rho = step.rho;
      double eps = step.eps;
      // A collapsed ensemble on an unbounded horizon would ask for an infinite
      // free step; a unit step keeps sqrt(eps) * xi finite.
      if (!std::isfinite(eps)) eps = 1.0;
      const bool lands_on_end = std::isfinite(remaining) && eps >= remaining;
      const double sq = std::sqrt(eps);

      if (hooks.on_iteration) hooks.on_iteration(iter, t, members);

      if (model.linear()) {
        zcols.resize(d, big_j);
        parallel_for(
            static_cast<std::size_t>(big_j),
            [&](std::size_t jj) {
              const auto j = static_cast<Eigen::Index>(jj);
              zcols.col(j) =
                  model.apply_adjoint(noise.apply_precision(y - images.col(j)));
            },
            threads);
      } else {
        wcols.resize(k, big_j);
        parallel_for(
            static_cast<std::size_t>(big_j),
            [&](std::size_t jj) {
              const auto j = static_cast<Eigen::Index>(jj);
              wcols.col(j) = noise.apply_precision(y - images.col(j));
            },
            threads);
      }

      if (big_m == big_j) {
        // The only M-subset is the whole ensemble: hoist the moments out of
        // the particle loop (one GEMM) and draw no subsampling randomness.
        Matrix drift(d, big_j);
        if (model.linear()) {
          drift.noalias() = cov * zcols;
        } else {
          const Vector mean_u = members.rowwise().mean();
          const Vector mean_g = images.rowwise().mean();
          const Matrix centered_u = members.colwise() - mean_u;
          const Matrix centered_g = images.colwise() - mean_g;
          const Matrix cross =
              (centered_u * centered_g.transpose()) / static_cast<double>(big_j);
          drift.noalias() = cross * wcols;
        }
        parallel_for(
            static_cast<std::size_t>(big_j),
            [&](std::size_t jj) {
              const auto j = static_cast<Eigen::Index>(jj);
              RngStream st = RngStream::keyed(config.seed, rng_tag::kUpdate,
                                              static_cast<std::uint64_t>(iter),
                                              static_cast<std::uint64_t>(j));
              Vector xi = Vector::Zero(d);
              if (gaussian) {
                for (Eigen::Index i = 0; i < d; ++i) xi[i] = st.normal();
                if (full_noise)
                  xi = (lambda_root * xi).eval();
                else
                  xi *= lambda;
              }
              next.col(j) = members.col(j) + eps * drift.col(j) + sq * xi;
            },
            threads);
      } else {
        const double inv_m = 1.0 / static_cast<double>(big_m);
        parallel_for(
            static_cast<std::size_t>(big_j),
            [&](std::size_t jj) {
              const auto j = static_cast<Eigen::Index>(jj);
              thread_local std::vector<std::uint32_t> pool;
              thread_local std::vector<std::uint32_t> idx;
              if (pool.size() != static_cast<std::size_t>(big_j)) {
                pool.resize(static_cast<std::size_t>(big_j));
                std::iota(pool.begin(), pool.end(), 0U);
              }
              RngStream st = RngStream::keyed(config.seed, rng_tag::kUpdate,
                                              static_cast<std::uint64_t>(iter),
                                              static_cast<std::uint64_t>(j));
              st.sample_without_replacement(static_cast<std::size_t>(big_m), pool, idx);

              Vector msub = Vector::Zero(d);
              for (const std::uint32_t kk : idx)
                msub += members.col(static_cast<Eigen::Index>(kk));
              msub *= inv_m;

              // Fused covariance action: (E_M - m_M (x) m_M) g accumulated as
              // (1/M) sum (u_k - m_M) <u_k - m_M, g>, O(M d) with the
              // differences formed first (no large-mean cancellation).
              Vector driftj = Vector::Zero(d);
              if (model.linear()) {
                const auto zj = zcols.col(j);
                Vector diff(d);
                for (const std::uint32_t kk : idx) {
                  diff = members.col(static_cast<Eigen::Index>(kk)) - msub;
                  driftj.noalias() += diff * diff.dot(zj);
                }
              } else {
                Vector gsub = Vector::Zero(k);
                for (const std::uint32_t kk : idx)
                  gsub += images.col(static_cast<Eigen::Index>(kk));
                gsub *= inv_m;
                const auto wj = wcols.col(j);
                Vector diff_g(k);
                for (const std::uint32_t kk : idx) {
                  diff_g = images.col(static_cast<Eigen::Index>(kk)) - gsub;
                  driftj.noalias() +=
                      (members.col(static_cast<Eigen::Index>(kk)) - msub) *
                      diff_g.dot(wj);
                }
              }
              driftj *= inv_m;

              Vector xi = Vector::Zero(d);
              if (gaussian) {
                for (Eigen::Index i = 0; i < d; ++i) xi[i] = st.normal();
                if (full_noise)
                  xi = (lambda_root * xi).eval();
                else
                  xi *= lambda;
              }
              next.col(j) = members.col(j) + eps * driftj + sq * xi;
            },
            threads);
      }

      if (next.allFinite()) {
        state.eps = eps;
        trace.rows.push_back(state);
        members.swap(next);
        t = lands_on_end ? config.t_fin : t + eps;
        ++iter;
        continue;
      }
      // The update blew up: keep the last finite ensemble and the rows of the
      // updates that did complete.
      stop = StopReason::kNumericDivergence;
      done = true;
    }

    if (state.rho == 0.0) {
      // Stop fired before the stable step was computed; report the radius of
      // the final ensemble anyway so the record is complete.
      if (model.linear()) {
        const Vector mean_u = members.rowwise().mean();
        const Matrix centered = members.colwise() - mean_u;
        const Matrix cfin =
            (centered * centered.transpose()) / static_cast<double>(big_j);
        state.rho = linear_stiffness_radius(cfin, model, noise);
      } else {
        state.rho = nonlinear_stiffness_radius(covariance_du_from_images(images), noise);
      }
    }
    state.eps = 0.0;
    trace.stop = stop;
    trace.final_state = state;
    trace.final_members = members;
    trace.t_final = t;
    return trace;
  }
}

void integrate_gradient_flow(Ensemble& ens, const ForwardModel& model,
                             const NoiseModel& noise, const Vector& y,
                             const std::vector<double>& sample_times,
                             const std::function<void(double, const Ensemble&)>& observer,
                             double safety) {
  if (!model.linear())
    throw std::logic_error("integrate_gradient_flow: linear models only");
  if (!(safety > 0.0))
    throw std::invalid_argument("integrate_gradient_flow: safety must be positive");
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < 0.0 || !std::isfinite(sample_times[i]))
      throw std::invalid_argument("integrate_gradient_flow: sample times must be finite and nonnegative");
    if (i > 0 && !(sample_times[i] > sample_times[i - 1]))
      throw std::invalid_argument("integrate_gradient_flow: sample times must be strictly increasing");
  }

  double t = 0.0;
  for (const double target : sample_times) {
    while (t < target) {
      const Matrix cov = centered_covariance(ens);
      const double rho = linear_stiffness_radius(cov, model, noise);
      const double gap = target - t;
      const double eps = rho <= kRhoFloor ? gap : std::min(safety / rho, gap);
      ens.members() += eps * gradient_flow_drift(ens, model, noise, y);
      if (eps >= gap) {
        t = target;
      } else {
        const double advanced = t + eps;
        // A subnormal step that cannot move t any more jumps to the sample
        // time instead of spinning.
        t = advanced > t ? advanced : target;
      }
    }
    if (observer) observer(t, ens);
  }
}

}  // namespace kenkf
