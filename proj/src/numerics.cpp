#include "visits/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace visits {

namespace {

// Non-zero basis values at x by the Cox-de Boor recursion (NURBS book A2.2).
// Returns the index of the first non-zero basis function.
int deboor_nonzero(double x, int degree, const std::vector<double>& knots,
                   std::vector<double>& values) {
  const int n_knots = static_cast<int>(knots.size());
  const int span_lo = degree;
  const int span_hi = n_knots - degree - 2;
  int span;
  if (x >= knots[span_hi + 1]) {
    span = span_hi;
  } else {
    auto it = std::upper_bound(knots.begin() + span_lo,
                               knots.begin() + span_hi + 1, x);
    span = static_cast<int>(it - knots.begin()) - 1;
    if (span < span_lo) span = span_lo;
  }
  values.assign(degree + 1, 0.0);
  values[0] = 1.0;
  std::vector<double> left(degree + 1), right(degree + 1);
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  return span - degree;
}

std::vector<double> full_knot_vector(const SplineBasisSpec& spec) {
  std::vector<double> knots;
  knots.reserve(spec.interior_knots.size() + 2 * (spec.degree + 1));
  for (int i = 0; i <= spec.degree; ++i) knots.push_back(spec.boundary_lo);
  knots.insert(knots.end(), spec.interior_knots.begin(),
               spec.interior_knots.end());
  for (int i = 0; i <= spec.degree; ++i) knots.push_back(spec.boundary_hi);
  return knots;
}

}  // namespace

SplineBasisSpec make_quantile_basis(std::span<const double> xs, int df,
                                    int degree, bool include_intercept) {
  if (degree < 1) throw std::invalid_argument("spline degree must be >= 1");
  const int n_interior = df - degree - (include_intercept ? 1 : 0);
  if (n_interior < 0)
    throw std::invalid_argument(
        "basis df too small for degree " + std::to_string(degree) +
        " (need df >= " + std::to_string(degree + (include_intercept ? 1 : 0)) +
        ")");
  if (xs.empty()) throw std::invalid_argument("no data for basis knots");
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  SplineBasisSpec spec;
  spec.degree = degree;
  spec.df = df;
  spec.include_intercept = include_intercept;
  spec.boundary_lo = sorted.front();
  spec.boundary_hi = sorted.back();
  if (!(spec.boundary_hi - spec.boundary_lo > 0)) {
    // Degenerate data range: widen so the basis stays evaluable.
    spec.boundary_lo -= 0.5;
    spec.boundary_hi += 0.5;
  }
  for (int k = 1; k <= n_interior; ++k) {
    const double p = static_cast<double>(k) / (n_interior + 1);
    double q = quantile_type7(sorted, p);
    q = std::min(std::max(q, spec.boundary_lo), spec.boundary_hi);
    spec.interior_knots.push_back(q);
  }
  return spec;
}

Eigen::MatrixXd bspline_basis(std::span<const double> xs,
                              const SplineBasisSpec& spec, int* n_clamped) {
  if (spec.df < spec.degree + (spec.include_intercept ? 1 : 0))
    throw std::invalid_argument("basis df too small for degree");
  const int n_full = static_cast<int>(spec.interior_knots.size()) +
                     spec.degree + 1;
  const int expected_df = spec.include_intercept ? n_full : n_full - 1;
  if (expected_df != spec.df)
    throw std::invalid_argument("basis spec df inconsistent with knots");
  const std::vector<double> knots = full_knot_vector(spec);

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(xs.size()), spec.df);
  std::vector<double> values;
  int clamped = 0;
  const int drop = spec.include_intercept ? 0 : 1;
  for (std::size_t row = 0; row < xs.size(); ++row) {
    double x = xs[row];
    if (x < spec.boundary_lo) {
      x = spec.boundary_lo;
      ++clamped;
    } else if (x > spec.boundary_hi) {
      x = spec.boundary_hi;
      ++clamped;
    }
    const int first = deboor_nonzero(x, spec.degree, knots, values);
    for (int j = 0; j <= spec.degree; ++j) {
      const int col = first + j - drop;
      if (col >= 0 && col < spec.df)
        out(static_cast<Eigen::Index>(row), col) = values[j];
    }
  }
  if (n_clamped) *n_clamped = clamped;
  return out;
}

Eigen::MatrixXd design_with_intercept(std::span<const double> xs,
                                      const SplineBasisSpec& spec,
                                      int* n_clamped) {
  const Eigen::MatrixXd basis = bspline_basis(xs, spec, n_clamped);
  Eigen::MatrixXd design(basis.rows(), basis.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(basis.cols()) = basis;
  return design;
}

LinearFit fit_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights,
                  std::span<const int> cluster) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || weights.size() != n ||
      static_cast<Eigen::Index>(cluster.size()) != n)
    throw std::invalid_argument("fit_wls: size mismatch");
  if (n < p) throw std::invalid_argument("fit_wls: fewer rows than columns");
  if ((weights.array() <= 0).any())
    throw std::invalid_argument("fit_wls: weights must be positive");

  const Eigen::ArrayXd sw = weights.array().sqrt();
  const Eigen::MatrixXd Xw = sw.matrix().asDiagonal() * X;
  const Eigen::VectorXd yw = (y.array() * sw).matrix();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  if (qr.rank() < p) {
    std::ostringstream msg;
    msg << "fit_wls: design is rank deficient; dependent columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k) msg << ' ' << perm(k);
    throw std::runtime_error(msg.str());
  }

  LinearFit fit;
  fit.coef = qr.solve(yw);
  const Eigen::VectorXd resid = y - X * fit.coef;
  fit.objective = (weights.array() * resid.array().square()).sum();

  const Eigen::MatrixXd bread_inv = Xw.transpose() * Xw;
  const Eigen::MatrixXd bread = bread_inv.ldlt().solve(
      Eigen::MatrixXd::Identity(p, p));

  // Score per cluster, summed in cluster-label order for determinism.
  std::map<int, Eigen::VectorXd> scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd term = X.row(i).transpose() * (weights(i) * resid(i));
    auto [it, inserted] = scores.try_emplace(cluster[i], term);
    if (!inserted) it->second += term;
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (const auto& [label, s] : scores) meat += s * s.transpose();
  Eigen::MatrixXd cov = bread * meat * bread;
  fit.cov = 0.5 * (cov + cov.transpose());
  return fit;
}

LinearFit fit_exponential_survival(const Eigen::VectorXd& exposure,
                                   const Eigen::VectorXd& events,
                                   const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (exposure.size() != n || events.size() != n)
    throw std::invalid_argument("fit_exponential_survival: size mismatch");
  if ((exposure.array() <= 0).any())
    throw std::invalid_argument(
        "fit_exponential_survival: exposures must be positive");
  const double total_events = events.sum();
  const double total_exposure = exposure.sum();
  if (total_events <= 0)
    throw std::runtime_error("no events in stratum");

  const auto loglik = [&](const Eigen::VectorXd& gamma) {
    const Eigen::ArrayXd eta = (X * gamma).array();
    return (events.array() * eta - exposure.array() * eta.exp()).sum();
  };

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
  gamma(0) = std::log(total_events / total_exposure);
  double ll = loglik(gamma);

  std::ostringstream trace;
  constexpr int kMaxIter = 100;
  constexpr int kMaxHalvings = 30;
  LinearFit fit;
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    const Eigen::ArrayXd eta = (X * gamma).array();
    const Eigen::ArrayXd mu = exposure.array() * eta.exp();
    const Eigen::VectorXd grad = X.transpose() * (events.array() - mu).matrix();
    const Eigen::MatrixXd info =
        X.transpose() * mu.matrix().asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error(
          "fit_exponential_survival: singular information matrix");
    const Eigen::VectorXd delta = ldlt.solve(grad);

    double step = 1.0;
    double ll_new = ll;
    Eigen::VectorXd cand = gamma;
    bool improved = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      cand = gamma + step * delta;
      ll_new = loglik(cand);
      if (std::isfinite(ll_new) && ll_new > ll) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    trace << "iter " << iter << " loglik " << ll_new << '\n';
    if (!improved) break;  // flat to floating-point resolution
    const double change = ll_new - ll;
    gamma = cand;
    ll = ll_new;
    fit.iterations = iter;
    if (change < 1e-10) break;
    if (iter == kMaxIter)
      throw std::runtime_error("fit_exponential_survival: no convergence in " +
                               std::to_string(kMaxIter) + " iterations\n" +
                               trace.str());
  }

  // Polish: the loglik plateau can leave a small score; extra Newton steps
  // are kept only while they shrink it.
  for (int polish = 0; polish < 5; ++polish) {
    const Eigen::ArrayXd mu = exposure.array() * (X * gamma).array().exp();
    const Eigen::VectorXd score =
        X.transpose() * (events.array() - mu).matrix();
    const double norm = score.lpNorm<Eigen::Infinity>();
    if (norm < 1e-12) break;
    const Eigen::MatrixXd info = X.transpose() * mu.matrix().asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd cand = gamma + ldlt.solve(score);
    const double ll_cand = loglik(cand);
    if (!std::isfinite(ll_cand) || ll_cand < ll - 1e-8) break;
    const Eigen::ArrayXd mu_cand =
        exposure.array() * (X * cand).array().exp();
    const Eigen::VectorXd score_cand =
        X.transpose() * (events.array() - mu_cand).matrix();
    if (score_cand.lpNorm<Eigen::Infinity>() >= norm) break;
    gamma = cand;
    ll = ll_cand;
  }

  fit.coef = gamma;
  fit.objective = ll;
  const Eigen::ArrayXd mu_final =
      exposure.array() * (X * gamma).array().exp();
  const Eigen::MatrixXd info_final =
      X.transpose() * mu_final.matrix().asDiagonal() * X;
  fit.cov = info_final.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  return fit;
}

namespace {

// One vertex-exchange step support: objective of the check loss.
double quantile_objective(const Eigen::VectorXd& resid, double tau) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    const double u = resid(i);
    s += u >= 0 ? tau * u : (tau - 1.0) * u;
  }
  return s;
}

}  // namespace

LinearFit fit_quantile_reg(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                           double tau) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw std::invalid_argument("fit_quantile_reg: size mismatch");
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("fit_quantile_reg: tau must be in (0,1)");
  if (n < p) throw std::invalid_argument("fit_quantile_reg: fewer rows than columns");
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p)
      throw std::runtime_error("fit_quantile_reg: degenerate design matrix");
  }

  const double yscale =
      std::max(1.0, y.size() ? y.cwiseAbs().maxCoeff() : 1.0);
  const double ztol = 1e-10 * yscale;

  // Warm start: least squares, then pick p independent rows with the
  // smallest residuals as the initial interpolation set.
  Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  {
    const Eigen::VectorXd r0 = (y - X * beta).cwiseAbs();
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return r0(a) < r0(b); });
  }
  std::vector<int> basis;
  Eigen::MatrixXd B(p, p);
  for (int idx : order) {
    if (static_cast<Eigen::Index>(basis.size()) == p) break;
    B.row(static_cast<Eigen::Index>(basis.size())) = X.row(idx);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(
        B.topRows(static_cast<Eigen::Index>(basis.size()) + 1));
    if (qr.rank() == static_cast<Eigen::Index>(basis.size()) + 1)
      basis.push_back(idx);
  }
  if (static_cast<Eigen::Index>(basis.size()) < p)
    throw std::runtime_error("fit_quantile_reg: degenerate design matrix");

  const auto solve_basis = [&]() {
    Eigen::MatrixXd Xb(p, p);
    Eigen::VectorXd yb(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      Xb.row(k) = X.row(basis[static_cast<std::size_t>(k)]);
      yb(k) = y(basis[static_cast<std::size_t>(k)]);
    }
    beta = Xb.partialPivLu().solve(yb);
  };
  solve_basis();

  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  const auto refresh_membership = [&]() {
    std::fill(in_basis.begin(), in_basis.end(), 0);
    for (int idx : basis) in_basis[static_cast<std::size_t>(idx)] = 1;
  };
  refresh_membership();

  const double opt_tol = 1e-9 * (1.0 + yscale);
  const int max_iter = 200 + 10 * static_cast<int>(n);
  LinearFit fit;
  for (int iter = 0; iter < max_iter; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd resid = y - X * beta;
    for (int idx : basis) resid(idx) = 0.0;

    Eigen::MatrixXd Xb(p, p);
    for (Eigen::Index k = 0; k < p; ++k)
      Xb.row(k) = X.row(basis[static_cast<std::size_t>(k)]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Xb);

    double best_deriv = 0.0;
    int best_h = -1;
    double best_sign = 1.0;
    std::vector<Eigen::VectorXd> a_cache(static_cast<std::size_t>(p));
    for (Eigen::Index h = 0; h < p; ++h) {
      // Edge direction: keeps every basis residual at zero except point h.
      Eigen::VectorXd eh = Eigen::VectorXd::Zero(p);
      eh(h) = 1.0;
      const Eigen::VectorXd delta = lu.solve(eh);
      const Eigen::VectorXd a = X * delta;
      a_cache[static_cast<std::size_t>(h)] = a;
      double d_plus = 1.0 - tau;  // leaving residual turns negative
      double d_minus = tau;       // leaving residual turns positive
      for (Eigen::Index i = 0; i < n; ++i) {
        if (in_basis[static_cast<std::size_t>(i)]) continue;
        const double ai = a(i);
        const double ri = resid(i);
        if (ri > ztol) {
          d_plus -= tau * ai;
          d_minus += tau * ai;
        } else if (ri < -ztol) {
          d_plus += (1.0 - tau) * ai;
          d_minus -= (1.0 - tau) * ai;
        } else {
          d_plus += ai > 0 ? (1.0 - tau) * ai : -tau * ai;
          d_minus += ai < 0 ? -(1.0 - tau) * ai : tau * ai;
        }
      }
      if (d_plus < best_deriv) {
        best_deriv = d_plus;
        best_h = static_cast<int>(h);
        best_sign = 1.0;
      }
      if (d_minus < best_deriv) {
        best_deriv = d_minus;
        best_h = static_cast<int>(h);
        best_sign = -1.0;
      }
    }
    if (best_h < 0 || best_deriv >= -opt_tol) break;  // vertex optimal

    const Eigen::VectorXd a = best_sign * a_cache[static_cast<std::size_t>(best_h)];
    // Residual i hits zero at t_i = r_i / a_i along the edge; the objective
    // slope gains |a_i| at each crossing. Walk to the first sign change.
    std::vector<std::pair<double, int>> crossings;
    crossings.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const double ai = a(i);
      const double ri = resid(i);
      if (std::abs(ai) < 1e-14) continue;
      if (std::abs(ri) <= ztol) continue;  // already counted in the derivative
      const double t = ri / ai;
      if (t > 0) crossings.emplace_back(t, static_cast<int>(i));
    }
    std::stable_sort(crossings.begin(), crossings.end());
    double slope = best_deriv;
    int entering = -1;
    for (const auto& [t, i] : crossings) {
      slope += std::abs(a(i));
      if (slope >= 0) {
        entering = i;
        break;
      }
    }
    if (entering < 0)
      throw std::runtime_error(
          "fit_quantile_reg: descent did not terminate (degenerate data)");
    basis[static_cast<std::size_t>(best_h)] = entering;
    refresh_membership();
    solve_basis();
    if (iter + 1 == max_iter)
      throw std::runtime_error("fit_quantile_reg: iteration limit reached");
  }

  fit.coef = beta;
  fit.objective = quantile_objective(y - X * beta, tau);
  return fit;
}

double normal_cdf(double x, double mean, double sd) {
  if (!(sd > 0)) throw std::invalid_argument("normal_cdf: sd must be positive");
  const double z = (x - mean) / sd;
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double trapezoid_integral(std::span<const double> values, double dx) {
  if (values.size() < 2)
    throw std::invalid_argument("trapezoid_integral: need at least 2 points");
  if (!(dx > 0)) throw std::invalid_argument("trapezoid_integral: dx must be positive");
  double sum = 0.5 * (values.front() + values.back());
  for (std::size_t i = 1; i + 1 < values.size(); ++i) sum += values[i];
  return sum * dx;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty())
    throw std::invalid_argument("quantile_type7: empty sample");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("quantile_type7: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = p * (static_cast<double>(values.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace visits
