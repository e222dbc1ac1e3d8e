#include "visits/numerics.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace visits;

namespace {

std::vector<double> full_knots(const SplineBasisSpec& spec) {
  std::vector<double> knots;
  for (int i = 0; i <= spec.degree; ++i) knots.push_back(spec.boundary_lo);
  knots.insert(knots.end(), spec.interior_knots.begin(),
               spec.interior_knots.end());
  for (int i = 0; i <= spec.degree; ++i) knots.push_back(spec.boundary_hi);
  return knots;
}

}  // namespace

TEST_CASE("bspline basis: repeated x gives a rank-1 design") {
  std::vector<double> xs(10, 2.5);
  const auto spec = make_quantile_basis(xs, 3);
  const Eigen::MatrixXd B = bspline_basis(xs, spec);
  REQUIRE(B.rows() == 10);
  REQUIRE(B.cols() == 3);
  for (int i = 1; i < 10; ++i) CHECK((B.row(i) - B.row(0)).norm() == 0.0);
}

TEST_CASE("bspline basis: full basis rows sum to one") {
  std::vector<double> data;
  for (int i = 0; i <= 50; ++i) data.push_back(0.3 + 0.17 * i);
  const auto spec = make_quantile_basis(data, 6, 3, /*include_intercept=*/true);
  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i)
    grid.push_back(spec.boundary_lo +
                   (spec.boundary_hi - spec.boundary_lo) * i / 200.0);
  const Eigen::MatrixXd B = bspline_basis(grid, spec);
  for (Eigen::Index i = 0; i < B.rows(); ++i)
    CHECK(std::abs(B.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("bspline basis matches the recursive oracle, boundary included") {
  std::vector<double> data;
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> unif(0.5, 6.0);
  for (int i = 0; i < 200; ++i) data.push_back(unif(rng));
  const auto spec = make_quantile_basis(data, 5, 3, /*include_intercept=*/true);
  const std::vector<double> knots = full_knots(spec);

  std::vector<double> eval = {spec.boundary_lo, spec.boundary_hi};
  for (double k : spec.interior_knots) eval.push_back(k);
  for (int i = 1; i < 40; ++i)
    eval.push_back(spec.boundary_lo +
                   (spec.boundary_hi - spec.boundary_lo) * i / 40.0);

  const Eigen::MatrixXd B = bspline_basis(eval, spec);
  for (std::size_t r = 0; r < eval.size(); ++r)
    for (int j = 0; j < spec.df; ++j)
      CHECK(std::abs(B(static_cast<Eigen::Index>(r), j) -
                     oracles::bspline_recursive(j, spec.degree, eval[r],
                                                knots)) < 1e-12);
}

TEST_CASE("bspline basis is deterministic and rejects df < degree") {
  std::vector<double> data = {1.0, 2.0, 3.0, 4.0};
  const auto spec = make_quantile_basis(data, 3);
  const Eigen::MatrixXd a = bspline_basis(data, spec);
  const Eigen::MatrixXd b = bspline_basis(data, spec);
  CHECK((a - b).norm() == 0.0);
  CHECK_THROWS(make_quantile_basis(data, 2));
}

TEST_CASE("fit_wls: exact linear data reproduces the line") {
  const int n = 12;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n), w(n);
  std::vector<int> cluster(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = 0.3 * i;
    y(i) = 2.0 + 5.0 * X(i, 1);
    w(i) = 0.5 + (i % 3);
    cluster[i] = i % 4;
  }
  const LinearFit fit = fit_wls(X, y, w, cluster);
  CHECK(std::abs(fit.coef(0) - 2.0) < 1e-10);
  CHECK(std::abs(fit.coef(1) - 5.0) < 1e-10);
  CHECK(fit.cov->norm() < 1e-12);
}

TEST_CASE("fit_wls: constant weights match unit weights") {
  std::mt19937 rng(7);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int n = 30;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  std::vector<int> cluster(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = noise(rng);
    X(i, 2) = noise(rng);
    y(i) = 1.0 - X(i, 1) + 0.5 * X(i, 2) + noise(rng);
    cluster[i] = i / 5;
  }
  const LinearFit unit = fit_wls(X, y, Eigen::VectorXd::Ones(n), cluster);
  const LinearFit scaled =
      fit_wls(X, y, Eigen::VectorXd::Constant(n, 3.7), cluster);
  CHECK((unit.coef - scaled.coef).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("fit_wls: sandwich matches the direct matrix formula") {
  // 10 rows, 2 clusters, frozen values.
  Eigen::MatrixXd X(10, 2);
  Eigen::VectorXd y(10), w(10);
  std::vector<int> cluster = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  std::mt19937 rng(123);
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = noise(rng);
    y(i) = 0.5 + 2.0 * X(i, 1) + noise(rng);
    w(i) = unif(rng);
  }
  const LinearFit fit = fit_wls(X, y, w, cluster);

  // Oracle: assemble each factor of the sandwich by hand.
  const Eigen::MatrixXd W = w.asDiagonal();
  const Eigen::MatrixXd bread = (X.transpose() * W * X).inverse();
  const Eigen::VectorXd resid = y - X * fit.coef;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (int i = 0; i < 10; ++i)
      if (cluster[static_cast<std::size_t>(i)] == c)
        s += X.row(i).transpose() * w(i) * resid(i);
    meat += s * s.transpose();
  }
  const Eigen::MatrixXd expected = bread * meat * bread;
  CHECK((*fit.cov - expected).lpNorm<Eigen::Infinity>() < 1e-10);

  // Estimating-equation residual condition at the solution.
  const Eigen::VectorXd grad = X.transpose() * (w.asDiagonal() * resid);
  CHECK(grad.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("fit_wls: rank deficiency is reported with the columns") {
  Eigen::MatrixXd X(6, 3);
  Eigen::VectorXd y(6);
  std::vector<int> cluster = {0, 0, 1, 1, 2, 2};
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i;
    X(i, 2) = 2.0 * i;  // collinear with column 1
    y(i) = i;
  }
  CHECK_THROWS_WITH_AS(fit_wls(X, y, Eigen::VectorXd::Ones(6), cluster),
                       doctest::Contains("rank deficient"),
                       std::runtime_error);
}

TEST_CASE("exponential MLE: intercept-only closed form") {
  Eigen::VectorXd exposure(4), events(4);
  exposure << 1.0, 2.0, 1.5, 1.5;  // totals 6
  events << 1, 1, 1, 0;            // 3 events
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
  const LinearFit fit = fit_exponential_survival(exposure, events, X);
  CHECK(std::abs(std::exp(fit.coef(0)) - 0.5) < 1e-10);
  CHECK(std::abs(fit.coef(0) - std::log(0.5)) < 1e-10);
}

TEST_CASE("exponential MLE: no events is an error") {
  Eigen::VectorXd exposure(3), events(3);
  exposure << 1.0, 2.0, 3.0;
  events << 0, 0, 0;
  CHECK_THROWS_WITH_AS(
      fit_exponential_survival(exposure, events, Eigen::MatrixXd::Ones(3, 1)),
      doctest::Contains("no events"), std::runtime_error);
}

TEST_CASE("exponential MLE matches the zooming grid oracle") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = 20;
  Eigen::VectorXd exposure(n), events(n);
  Eigen::MatrixXd X(n, 2);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = unif(rng) * 2.0 - 1.0;
    const double rate = std::exp(-0.4 + 0.8 * X(i, 1));
    exposure(i) = -std::log(1.0 - unif(rng)) / rate;
    events(i) = unif(rng) < 0.8 ? 1.0 : 0.0;
    if (events(i) == 0.0) exposure(i) *= unif(rng);
    exposure(i) = std::max(exposure(i), 1e-3);
  }
  if (events.sum() == 0) events(0) = 1.0;
  const LinearFit fit = fit_exponential_survival(exposure, events, X);
  const Eigen::Vector2d oracle =
      oracles::exp_survival_grid_oracle(exposure, events, X);
  CHECK(std::abs(fit.coef(0) - oracle(0)) < 1e-6);
  CHECK(std::abs(fit.coef(1) - oracle(1)) < 1e-6);

  // Score condition at the reported optimum.
  const Eigen::ArrayXd mu = exposure.array() * (X * fit.coef).array().exp();
  const Eigen::VectorXd score = X.transpose() * (events.array() - mu).matrix();
  CHECK(score.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("quantile regression: intercept-only median") {
  Eigen::VectorXd y(3);
  y << 1, 2, 9;
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
  const LinearFit fit = fit_quantile_reg(y, X, 0.5);
  CHECK(fit.coef(0) == 2.0);
}

TEST_CASE("quantile regression: noiseless line is exact") {
  Eigen::VectorXd y(8);
  Eigen::MatrixXd X(8, 2);
  for (int i = 0; i < 8; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = 0.7 * i - 2.0;
    y(i) = 2.0 * X(i, 1) + 1.0;
  }
  const LinearFit fit = fit_quantile_reg(y, X, 0.5);
  CHECK(std::abs(fit.coef(0) - 1.0) < 1e-12);
  CHECK(std::abs(fit.coef(1) - 2.0) < 1e-12);
}

TEST_CASE("quantile regression meets the enumerated LP optimum") {
  std::mt19937 rng(99);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double tau : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    const int n = 15;
    Eigen::VectorXd y(n);
    Eigen::MatrixXd X(n, 2);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = noise(rng) * 2.0;
      y(i) = 0.3 - 1.2 * X(i, 1) + noise(rng);
    }
    const LinearFit fit = fit_quantile_reg(y, X, tau);
    const double oracle = oracles::quantile_lp_optimum(y, X, tau);
    CHECK(fit.objective <= oracle + 1e-6);
    CHECK(fit.objective >= oracle - 1e-9);

    // Optimality bracketing on the residual signs.
    const Eigen::VectorXd r = y - X * fit.coef;
    int neg = 0, nonpos = 0;
    for (int i = 0; i < n; ++i) {
      if (r(i) < -1e-9) ++neg;
      if (r(i) <= 1e-9) ++nonpos;
    }
    CHECK(static_cast<double>(neg) / n <= tau + 1e-12);
    CHECK(static_cast<double>(nonpos) / n >= tau - 1e-12);
  }
}

TEST_CASE("quantile regression with a spline design meets the oracle") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(1.0, 6.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  const int n = 18;
  std::vector<double> xs(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i)] = unif(rng);
    y(i) = std::sin(xs[static_cast<std::size_t>(i)]) + noise(rng);
  }
  const auto spec = make_quantile_basis(xs, 3);
  const Eigen::MatrixXd X = design_with_intercept(xs, spec);
  const LinearFit fit = fit_quantile_reg(y, X, 0.25);
  const double oracle = oracles::quantile_lp_optimum(y, X, 0.25);
  CHECK(fit.objective <= oracle + 1e-6);
}

TEST_CASE("quantile regression rejects degenerate designs") {
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  Eigen::MatrixXd X(4, 2);
  X.col(0).setOnes();
  X.col(1).setConstant(2.0);  // no variation: collinear with the intercept
  CHECK_THROWS_WITH_AS(fit_quantile_reg(y, X, 0.5),
                       doctest::Contains("degenerate"), std::runtime_error);
}

TEST_CASE("normal_cdf basics and symmetry") {
  CHECK(normal_cdf(3.0, 3.0, 1.0) == 0.5);
  CHECK(std::abs(normal_cdf(4.96, 3.0, 1.0) - 0.97500) < 1e-5);
  for (double x : {-2.5, -0.3, 0.0, 1.7, 4.2}) {
    const double lhs = normal_cdf(x, 1.0, 2.0) + normal_cdf(2.0 - x, 1.0, 2.0);
    CHECK(std::abs(lhs - 1.0) < 1e-12);
  }
  CHECK_THROWS(normal_cdf(0.0, 0.0, 0.0));
  CHECK_THROWS(normal_cdf(0.0, 0.0, -1.0));
}

TEST_CASE("normal_cdf tracks the high-precision oracle on a dense grid") {
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = -10.0 + 20.0 * i / 999.0;
    const double err =
        std::abs(normal_cdf(x, 0.0, 1.0) - oracles::normal_cdf_oracle(x, 0, 1));
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("trapezoid rule: constants, linears, and a quadratic") {
  std::vector<double> ones(1001, 1.0);
  CHECK(std::abs(trapezoid_integral(ones, 0.007) - 7.0) < 1e-12);

  std::vector<double> lin(701);
  for (int i = 0; i <= 700; ++i) lin[static_cast<std::size_t>(i)] = 3.0 - 0.01 * i * 0.4;
  // Linear integrand: trapezoid is exact.
  double exact = 0.0;
  {
    const double a = lin.front(), b = lin.back(), len = 0.01 * 700;
    exact = 0.5 * (a + b) * len;
  }
  CHECK(std::abs(trapezoid_integral(lin, 0.01) - exact) < 1e-10);

  std::vector<double> quad(1001);
  for (int i = 0; i <= 1000; ++i) {
    const double t = 0.007 * i;
    quad[static_cast<std::size_t>(i)] = t * t;
  }
  CHECK(std::abs(trapezoid_integral(quad, 0.007) - 343.0 / 3.0) < 1e-3);

  std::vector<double> one = {1.0};
  CHECK_THROWS(trapezoid_integral(one, 0.1));
}

TEST_CASE("type-7 quantile interpolation") {
  CHECK(quantile_type7({1, 2, 3, 4}, 0.25) == 1.75);
  CHECK(quantile_type7({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile_type7({5}, 0.5) == 5.0);
  CHECK(quantile_type7({3, 1, 2}, 0.5) == 2.0);
}
