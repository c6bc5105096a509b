#include "kenkf/moment_ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kenkf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_system(const ScalarMomentSystem& sys) {
  if (sys.g == 0.0) throw std::invalid_argument("ScalarMomentSystem: g must be nonzero");
  if (!(sys.lambda2 >= 0.0)) throw std::invalid_argument("ScalarMomentSystem: lambda2 must be >= 0");
  if (!std::isfinite(sys.y) || !std::isfinite(sys.g) || !std::isfinite(sys.lambda2))
    throw std::invalid_argument("ScalarMomentSystem: parameters must be finite");
}

/// Bisect phi (strictly monotone between lo and hi, phi(lo) and phi(hi) of
/// opposite sign; infinities allowed at the ends) down to adjacent doubles.
double bisect(const std::function<double(double)>& phi, double lo, double hi) {
  double flo = phi(lo);
  double fhi = phi(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (!(flo < 0.0) == !(fhi < 0.0))
    throw std::runtime_error("bisect: endpoints do not bracket a root");
  for (int it = 0; it < 4000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= std::min(lo, hi) || mid >= std::max(lo, hi)) break;  // adjacent
    const double fmid = phi(mid);
    if (fmid == 0.0) return mid;
    if ((fmid < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

PhaseVelocity rhs(const ScalarMomentSystem& sys, const PhasePoint& p) {
  const double spread = p.e - p.m * p.m;
  const double res = sys.y - sys.g * p.m;
  PhaseVelocity v;
  v.dm = sys.g * spread * res;
  v.de = 2.0 * sys.g * spread * (sys.y * p.m - sys.g * p.e) + sys.lambda2;
  return v;
}

Eigen::Matrix2d jacobian(const ScalarMomentSystem& sys, const PhasePoint& p) {
  const double g = sys.g;
  const double y = sys.y;
  const double m = p.m;
  const double e = p.e;
  const double spread = e - m * m;
  Eigen::Matrix2d a;
  a(0, 0) = -2.0 * g * m * (y - g * m) - g * g * spread;
  a(0, 1) = g * (y - g * m);
  a(1, 0) = -4.0 * g * m * (y * m - g * e) + 2.0 * g * y * spread;
  a(1, 1) = 2.0 * g * (y * m - g * e) - 2.0 * g * g * spread;
  return a;
}

std::array<std::complex<double>, 2> eigenvalues_2x2(const Eigen::Matrix2d& a) {
  const double half_tr = 0.5 * (a(0, 0) + a(1, 1));
  const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  const double disc = half_tr * half_tr - det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return {std::complex<double>(half_tr - s, 0.0),
            std::complex<double>(half_tr + s, 0.0)};
  }
  const double w = std::sqrt(-disc);
  return {std::complex<double>(half_tr, -w), std::complex<double>(half_tr, w)};
}

std::vector<NullclineBranch> nullclines(const ScalarMomentSystem& sys) {
  check_system(sys);
  std::vector<NullclineBranch> out;
  out.push_back({"dm-parabola", 0, false, 0.0, [](double m) { return m * m; }});
  out.push_back({"dm-vertical", 0, true, sys.y / sys.g, {}});
  const double y = sys.y;
  const double g = sys.g;
  if (sys.lambda2 == 0.0) {
    out.push_back({"de-parabola", 1, false, 0.0, [](double m) { return m * m; }});
    out.push_back({"de-line", 1, false, 0.0, [y, g](double m) { return y * m / g; }});
  } else {
    const double l2 = sys.lambda2;
    auto root = [y, g, l2](double m, double sign) {
      const double q = m * (y - g * m);
      return (m * (y + g * m) + sign * std::sqrt(q * q + 2.0 * l2)) / (2.0 * g);
    };
    out.push_back({"de-upper", 1, false, 0.0, [root](double m) { return root(m, 1.0); }});
    out.push_back({"de-lower", 1, false, 0.0, [root](double m) { return root(m, -1.0); }});
  }
  return out;
}

const char* to_string(Stability s) {
  switch (s) {
    case Stability::kNonHyperbolic: return "non-hyperbolic";
    case Stability::kStable: return "stable";
    case Stability::kUnstable: return "unstable";
  }
  return "?";
}

FixedPointReport fixed_points(const ScalarMomentSystem& sys) {
  check_system(sys);
  FixedPointReport rep;
  const double mc = sys.y / sys.g;
  if (sys.lambda2 == 0.0) {
    rep.parabola_family = true;
    const PhasePoint f0{0.0, 0.0};
    const PhasePoint f1{mc, mc * mc};
    for (const auto& [p, label] : {std::pair{f0, "F0"}, std::pair{f1, "F1"}}) {
      FixedPoint fp;
      fp.point = p;
      fp.label = label;
      fp.eigenvalues = eigenvalues_2x2(jacobian(sys, p));
      fp.stability = Stability::kNonHyperbolic;
      rep.points.push_back(std::move(fp));
    }
    return rep;
  }
  const double base = mc * mc;
  const double shift = std::sqrt(2.0 * sys.lambda2) / (2.0 * sys.g);
  for (const auto& [sign, label] : {std::pair{1.0, "F1+"}, std::pair{-1.0, "F1-"}}) {
    FixedPoint fp;
    fp.point = {mc, base + sign * shift};
    fp.label = label;
    fp.eigenvalues = eigenvalues_2x2(jacobian(sys, fp.point));
    const double re0 = fp.eigenvalues[0].real();
    const double re1 = fp.eigenvalues[1].real();
    if (re0 < 0.0 && re1 < 0.0)
      fp.stability = Stability::kStable;
    else if (re0 > 0.0 || re1 > 0.0)
      fp.stability = Stability::kUnstable;
    else
      fp.stability = Stability::kNonHyperbolic;
    rep.points.push_back(std::move(fp));
  }
  return rep;
}

double lambda_admissibility_bound(const ScalarMomentSystem& sys) {
  check_system(sys);
  return std::sqrt(2.0) * sys.y * sys.y / sys.g;
}

namespace {

// Dormand-Prince 5(4) pair.
constexpr double kA21 = 1.0 / 5.0;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                 kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0,
                 kA63 = 46732.0 / 5247.0, kA64 = 49.0 / 176.0,
                 kA65 = -5103.0 / 18656.0;
constexpr double kB1 = 35.0 / 384.0, kB3 = 500.0 / 1113.0, kB4 = 125.0 / 192.0,
                 kB5 = -2187.0 / 6784.0, kB6 = 11.0 / 84.0;
// Fifth-order weights minus the embedded fourth-order weights.
constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0, kE4 = 71.0 / 1920.0,
                 kE5 = -17253.0 / 339200.0, kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;

constexpr double kBlowupMagnitude = 1e12;
constexpr double kMinStep = 1e-14;
constexpr long kMaxSteps = 5'000'000;

}  // namespace

Trajectory integrate(const ScalarMomentSystem& sys, const PhasePoint& p0,
                     double t_end, double tol) {
  check_system(sys);
  if (!(tol > 0.0)) throw std::invalid_argument("integrate: tol must be > 0");
  if (!(t_end >= 0.0)) throw std::invalid_argument("integrate: t_end must be >= 0");
  if (!std::isfinite(p0.m) || !std::isfinite(p0.e))
    throw std::invalid_argument("integrate: initial point must be finite");

  using Vec2 = Eigen::Vector2d;
  auto f = [&sys](const Vec2& v) -> Vec2 {
    const PhaseVelocity pv = rhs(sys, {v[0], v[1]});
    return Vec2(pv.dm, pv.de);
  };

  Trajectory traj;
  double t = 0.0;
  Vec2 u(p0.m, p0.e);
  traj.t.push_back(t);
  traj.points.push_back({u[0], u[1]});
  if (t_end == 0.0) {
    traj.t_last = 0.0;
    return traj;
  }

  Vec2 k1 = f(u);
  double h;
  {
    const double d0 = std::max(u.cwiseAbs().maxCoeff(), 1.0);
    const double d1 = k1.cwiseAbs().maxCoeff();
    h = (d1 > 1e-12) ? 0.01 * d0 / d1 : 1e-3;
    h = std::min(h, t_end);
  }

  for (long step = 0; step < kMaxSteps; ++step) {
    if (t >= t_end) break;
    h = std::min(h, t_end - t);

    const Vec2 k2 = f(u + h * (kA21 * k1));
    const Vec2 k3 = f(u + h * (kA31 * k1 + kA32 * k2));
    const Vec2 k4 = f(u + h * (kA41 * k1 + kA42 * k2 + kA43 * k3));
    const Vec2 k5 = f(u + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4));
    const Vec2 k6 = f(u + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5));
    const Vec2 u5 = u + h * (kB1 * k1 + kB3 * k3 + kB4 * k4 + kB5 * k5 + kB6 * k6);
    const Vec2 k7 = f(u5);
    const Vec2 ev = h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 + kE7 * k7);

    double err = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double sc = tol + tol * std::max(std::abs(u[i]), std::abs(u5[i]));
      const double r = ev[i] / sc;
      err += r * r;
    }
    err = std::sqrt(0.5 * err);
    if (!std::isfinite(err)) err = 1e10;

    if (err <= 1.0) {
      t = (h >= t_end - t) ? t_end : t + h;
      u = u5;
      k1 = k7;
      traj.t.push_back(t);
      traj.points.push_back({u[0], u[1]});
      if (std::abs(u[0]) > kBlowupMagnitude || std::abs(u[1]) > kBlowupMagnitude) {
        traj.blew_up = true;
        traj.truncated = true;
        break;
      }
      if (t >= t_end) break;
    }

    const double factor = std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
    h *= factor;
    if (h < kMinStep) {  // step collapse: finite-time asymptote
      traj.blew_up = true;
      traj.truncated = true;
      break;
    }
  }

  if (t < t_end && !traj.blew_up) traj.truncated = true;
  traj.t_last = t;
  return traj;
}

ClosedFormSolution closed_form_solutions(const ScalarMomentSystem& sys,
                                         const PhasePoint& p0) {
  check_system(sys);
  ClosedFormSolution sol;
  const double y = sys.y;
  const double g = sys.g;
  const double mc = y / g;           // m-coordinate of the invariant line
  const double base = mc * mc;
  const bool on_line = std::abs(p0.m - mc) <= 1e-12 * (1.0 + std::abs(mc));

  if (sys.lambda2 == 0.0 && on_line) {
    // m constant, E - y^2/G^2 solves a pure quadratic decay:
    //   E(t) = y^2/G^2 + 1/(2 G^2 (C + t)).
    if (p0.e == base) return sol;  // equilibrium: no finite constant
    const double side = (p0.e > base) ? 1.0 : -1.0;
    auto phi = [g, base, e0 = p0.e](double c) { return base + 1.0 / (2.0 * g * g * c) - e0; };
    const double c = (side > 0.0) ? bisect(phi, 5e-324, 1e300) : bisect(phi, -1e300, -5e-324);
    sol.kind = ClosedFormKind::kInverseLinear;
    sol.constants = {c};
    sol.valid_until = (c < 0.0) ? -c : kInf;
    sol.at = [g, base, mc, c, valid = sol.valid_until](double t) -> PhasePoint {
      if (t >= valid) return {kNan, kNan};
      return {mc, base + 1.0 / (2.0 * g * g * (c + t))};
    };
    return sol;
  }

  if (sys.lambda2 == 0.0) {
    // General starting point: s(t) = -2 C1 G t - 2 C2 G with
    //   m = y/G + sgn / (G sqrt(s)),  E = m^2 - C1 / (G s).
    const double q = (p0.m - mc) * (p0.m - mc);  // = 1/(G^2 s0)
    auto psi = [g, q](double s) { return 1.0 / (g * g * s) - q; };
    const double s0 = bisect(psi, 5e-324, 1e300);
    const double c1 = -(p0.e - p0.m * p0.m) * g * s0;
    const double c2 = -s0 / (2.0 * g);
    const double sgn = (g * p0.m - y > 0.0) ? 1.0 : -1.0;
    sol.kind = ClosedFormKind::kSquareRoot;
    sol.constants = {c1, c2};
    // s hits zero (asymptote) iff it decreases: 2 C1 G > 0, i.e. E0 < m0^2
    // is impossible for admissible data, so admissible starts never blow up
    // on this branch; inadmissible ones do at s0 / (2 C1 G).
    sol.valid_until = (2.0 * c1 * g > 0.0) ? s0 / (2.0 * c1 * g) : kInf;
    sol.at = [g, mc, c1, c2, sgn, valid = sol.valid_until](double t) -> PhasePoint {
      if (t >= valid) return {kNan, kNan};
      const double s = -2.0 * c1 * g * t - 2.0 * c2 * g;
      if (!(s > 0.0)) return {kNan, kNan};
      const double m = mc + sgn / (g * std::sqrt(s));
      return {m, m * m - c1 / (g * s)};
    };
    return sol;
  }

  if (on_line) {
    // Stabilized dynamics on the invariant line: tanh relaxation between the
    // two equilibria E = y^2/G^2 +- sqrt(2 lambda2)/(2G); only starts inside
    // that open band lie on this solution family.
    const double w = std::sqrt(2.0 * sys.lambda2) / (2.0 * g);
    const double a = std::sqrt(2.0 * sys.lambda2) * g;
    if (!(std::abs(p0.e - base) < std::abs(w))) return sol;
    const double bracket = 50.0 / std::abs(a);
    auto phi = [base, w, a, e0 = p0.e](double c) { return base + w * std::tanh(a * c) - e0; };
    const double c = bisect(phi, -bracket, bracket);
    sol.kind = ClosedFormKind::kTanh;
    sol.constants = {c};
    sol.at = [base, mc, w, a, c](double t) -> PhasePoint {
      return {mc, base + w * std::tanh(a * (c + t))};
    };
    return sol;
  }

  return sol;  // lambda2 > 0 off the invariant line: not covered
}

std::vector<VectorFieldSample> vector_field_grid(const ScalarMomentSystem& sys,
                                                 double m_lo, double m_hi,
                                                 double e_lo, double e_hi, int n) {
  check_system(sys);
  if (n < 2) throw std::invalid_argument("vector_field_grid: n must be >= 2");
  if (!(m_hi > m_lo) || !(e_hi > e_lo))
    throw std::invalid_argument("vector_field_grid: empty range");
  std::vector<VectorFieldSample> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  const double dm = (m_hi - m_lo) / (n - 1);
  const double de = (e_hi - e_lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double m = (i == n - 1) ? m_hi : m_lo + i * dm;
    for (int j = 0; j < n; ++j) {
      const double e = (j == n - 1) ? e_hi : e_lo + j * de;
      const PhaseVelocity v = rhs(sys, {m, e});
      out.push_back({m, e, v.dm, v.de});
    }
  }
  return out;
}

MomentRhs ddim_moment_rhs(const ForwardModel& model, const NoiseModel& noise,
                          const Vector& y, const Ensemble& ens, double lambda2) {
  if (!(lambda2 >= 0.0)) throw std::invalid_argument("ddim_moment_rhs: lambda2 must be >= 0");
  if (y.size() != model.output_dim())
    throw std::invalid_argument("ddim_moment_rhs: data dimension mismatch");
  const MomentState ms = empirical_moments(ens);
  const Matrix cov = ms.covariance();
  const Matrix& u = ens.members();
  const Eigen::Index d = u.rows();
  const Eigen::Index big_j = u.cols();

  MomentRhs out;
  out.dm = -(cov * gradient_phi(model, noise, y, ms.m));
  out.de = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < big_j; ++j) {
    const Vector gj = cov * gradient_phi(model, noise, y, u.col(j));
    out.de.noalias() -= gj * u.col(j).transpose();
    out.de.noalias() -= u.col(j) * gj.transpose();
  }
  out.de /= static_cast<double>(big_j);
  out.de += lambda2 * Matrix::Identity(d, d);
  return out;
}

}  // namespace kenkf
