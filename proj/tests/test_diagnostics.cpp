#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kenkf/diagnostics.hpp"

using namespace kenkf;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng) {
  Matrix a(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = rng.normal();
  return a;
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("deviations split into spread and truth residual") {
    Matrix members(1, 2);
    members << 0, 2;
    const auto [v, r] = deviations(Ensemble(members), Vector::Constant(1, 0.5));
    CHECK(v(0, 0) == doctest::Approx(-1.0));
    CHECK(v(0, 1) == doctest::Approx(1.0));
    CHECK(r(0, 0) == doctest::Approx(-0.5));
    CHECK(r(0, 1) == doctest::Approx(1.5));
  }

  TEST_CASE("norm summaries on a frozen scalar instance") {
    // Members {0, 2}, truth 1, G = 1, gamma = 1: all four deviations have
    // unit norm, so v = r = 1, the Gram diagonals are 1 and their squared
    // averages V = R = 1 as well.
    Matrix members(1, 2);
    members << 0, 2;
    DenseLinearModel model(Matrix::Identity(1, 1));
    const NoiseModel noise = NoiseModel::white(1, 1.0);
    const NormSummaries s =
        norm_summaries(Ensemble(members), model, noise, Vector::Ones(1));
    CHECK(s.v == doctest::Approx(1.0));
    CHECK(s.r == doctest::Approx(1.0));
    CHECK(s.big_v == doctest::Approx(1.0));
    CHECK(s.big_r == doctest::Approx(1.0));
    CHECK(s.big_v_lin == doctest::Approx(1.0));
    CHECK(s.big_r_lin == doctest::Approx(1.0));
  }

  TEST_CASE("the quartic summaries square the precision-weighted diagonals") {
    // Members {0, 4}, truth 2, G = 1, gamma = 0.5 (Gamma = 4):
    // deviations +-2, v = r = 4; diagonals <G d, G d>_{Gamma^-1} = 4 * 4 = 16,
    // so V_lin = 16 and V = 16^2 = 256.
    Matrix members(1, 2);
    members << 0, 4;
    DenseLinearModel model(Matrix::Identity(1, 1));
    const NoiseModel noise = NoiseModel::white(1, 0.5);
    const NormSummaries s =
        norm_summaries(Ensemble(members), model, noise, Vector::Constant(1, 2.0));
    CHECK(s.v == doctest::Approx(4.0));
    CHECK(s.r == doctest::Approx(4.0));
    CHECK(s.big_v_lin == doctest::Approx(16.0));
    CHECK(s.big_r_lin == doctest::Approx(16.0));
    CHECK(s.big_v == doctest::Approx(256.0));
    CHECK(s.big_r == doctest::Approx(256.0));
  }

  TEST_CASE("image-based summaries match the direct computation") {
    RngStream rng = RngStream::keyed(23);
    const Ensemble ens(random_matrix(3, 6, rng));
    DenseLinearModel model(random_matrix(2, 3, rng));
    const NoiseModel noise = NoiseModel::white(2, 0.3);
    const Vector truth = random_matrix(3, 1, rng).col(0);

    const NormSummaries a = norm_summaries(ens, model, noise, truth);
    const Matrix images = apply_columns(model, ens.members());
    const NormSummaries b = norm_summaries_from_images(ens.members(), images,
                                                       model.apply(truth), truth, noise);
    CHECK(a.v == doctest::Approx(b.v).epsilon(1e-12));
    CHECK(a.r == doctest::Approx(b.r).epsilon(1e-12));
    CHECK(a.big_v == doctest::Approx(b.big_v).epsilon(1e-12));
    CHECK(a.big_r == doctest::Approx(b.big_r).epsilon(1e-12));
    CHECK(a.big_v_lin == doctest::Approx(b.big_v_lin).epsilon(1e-12));
    CHECK(a.big_r_lin == doctest::Approx(b.big_r_lin).epsilon(1e-12));
  }

  TEST_CASE("misfit on a frozen instance") {
    // Both members at 3, G = 1, y = 1, gamma = 1: residual 2, misfit 4.
    Matrix members(1, 2);
    members << 3, 3;
    DenseLinearModel model(Matrix::Identity(1, 1));
    const NoiseModel noise = NoiseModel::white(1, 1.0);
    CHECK(misfit(Ensemble(members), model, noise, Vector::Ones(1)) == doctest::Approx(4.0));
  }

  TEST_CASE("misfit at the truth equals the precision-weighted noise norm") {
    RngStream rng = RngStream::keyed(29);
    const Eigen::Index d = 4, k = 3, j = 5;
    DenseLinearModel model(random_matrix(k, d, rng));
    const double gamma = 0.2;
    const NoiseModel noise = NoiseModel::white(k, gamma);
    const Vector truth = random_matrix(d, 1, rng).col(0);
    const Vector eta = random_matrix(k, 1, rng).col(0);
    const Vector y = model.apply(truth) + eta;

    Matrix members(d, j);
    for (Eigen::Index c = 0; c < j; ++c) members.col(c) = truth;
    const double phi = misfit(Ensemble(members), model, noise, y);
    CHECK(phi == doctest::Approx(noise.precision_norm2(eta)).epsilon(1e-12));
    CHECK(phi == doctest::Approx(eta.squaredNorm() / (gamma * gamma)).epsilon(1e-12));
  }

  TEST_CASE("misfit from images matches the direct path") {
    RngStream rng = RngStream::keyed(31);
    const Ensemble ens(random_matrix(3, 7, rng));
    DenseLinearModel model(random_matrix(2, 3, rng));
    const NoiseModel noise = NoiseModel::white(2, 0.6);
    const Vector y = random_matrix(2, 1, rng).col(0);
    const Matrix images = apply_columns(model, ens.members());
    CHECK(misfit(ens, model, noise, y) ==
          doctest::Approx(misfit_from_images(images, y, noise)).epsilon(1e-13));
  }

  TEST_CASE("discrepancy threshold is the plain squared norm of the draw") {
    Vector eta(3);
    eta << 1, -2, 2;
    CHECK(discrepancy_threshold(eta) == 9.0);
  }

  TEST_CASE("discrepancy stop is inclusive at the threshold") {
    Vector eta(2);
    eta << 3, 4;
    const double thr = discrepancy_threshold(eta);  // 25
    CHECK(discrepancy_stop(thr, thr));          // equality stops
    CHECK(discrepancy_stop(24.999, thr));
    CHECK_FALSE(discrepancy_stop(2.0 * thr, thr));  // double the level continues
  }

  TEST_CASE("collapse gram norm on a frozen scalar instance") {
    // Members {0, 2}, G = 1, gamma = 1: deviations -+1, Gram entries
    // <G v_i, G v_j>_Gamma = +-1, Frobenius norm 2.
    Matrix members(1, 2);
    members << 0, 2;
    DenseLinearModel model(Matrix::Identity(1, 1));
    const NoiseModel noise = NoiseModel::white(1, 1.0);
    CHECK(collapse_gram_norm(Ensemble(members), model, noise) == doctest::Approx(2.0));
  }

  TEST_CASE("collapse gram norm weights by the noise covariance") {
    // Same ensemble, gamma = 2: <a, b>_Gamma = a Gamma^-1 b = 4 a b,
    // every Gram entry scales by 4 and the norm becomes 8.
    Matrix members(1, 2);
    members << 0, 2;
    DenseLinearModel model(Matrix::Identity(1, 1));
    const NoiseModel noise = NoiseModel::white(1, 2.0);
    CHECK(collapse_gram_norm(Ensemble(members), model, noise) == doctest::Approx(8.0));
  }

  TEST_CASE("collapse rate recovers an exact power law") {
    CollapseTrace trace;
    trace.ensemble_size = 40;
    const double c = 7.5;
    for (double t : {10.0, 30.0, 100.0, 300.0, 1000.0})
      trace.points.emplace_back(t, c / t);
    const CollapseFit fit = collapse_rate(trace);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(fit.prefactor == doctest::Approx(c).epsilon(1e-10));
    CHECK_FALSE(fit.collapsed_at_start);
  }

  TEST_CASE("collapse rate flags an already-collapsed trace") {
    CollapseTrace trace;
    trace.ensemble_size = 10;
    trace.points.emplace_back(1.0, 0.0);
    trace.points.emplace_back(2.0, 0.0);
    const CollapseFit fit = collapse_rate(trace);
    CHECK(fit.collapsed_at_start);
  }

  TEST_CASE("collapse rate needs two usable points") {
    CollapseTrace trace;
    trace.ensemble_size = 10;
    trace.points.emplace_back(1.0, 0.5);
    CHECK_THROWS_AS(collapse_rate(trace), std::invalid_argument);
  }

  TEST_CASE("prefactor growth across ensemble sizes") {
    // Prefactors proportional to J give growth exponent 1.
    std::vector<CollapseTrace> traces;
    for (double j : {10.0, 20.0, 40.0}) {
      CollapseTrace t;
      t.ensemble_size = j;
      for (double time : {10.0, 100.0, 1000.0}) t.points.emplace_back(time, 0.3 * j / time);
      traces.push_back(t);
    }
    CHECK(collapse_prefactor_growth(traces) == doctest::Approx(1.0).epsilon(1e-10));
  }
}
