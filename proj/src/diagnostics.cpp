#include "visits/diagnostics.hpp"

#include "visits/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace visits {

namespace {

// Uncensored gaps with both S and R recorded.
struct GapPairs {
  std::vector<double> s;
  std::vector<double> r;
};

GapPairs collect_pairs(const Dataset& data) {
  GapPairs out;
  for (const auto& rows : data.patients) {
    for (const VisitRow& row : rows) {
      if (!row.gap_forward || row.censored || !row.rec_interval) continue;
      out.s.push_back(*row.gap_forward);
      out.r.push_back(*row.rec_interval);
    }
  }
  return out;
}

QuantileSummary summarize(std::vector<double> values) {
  QuantileSummary q;
  q.n = static_cast<int>(values.size());
  q.median = quantile_type7(values, 0.5);
  q.q25 = quantile_type7(values, 0.25);
  q.q75 = quantile_type7(values, 0.75);
  q.min = *std::min_element(values.begin(), values.end());
  q.max = *std::max_element(values.begin(), values.end());
  return q;
}

}  // namespace

MadResult mad_explained(const Dataset& data) {
  const GapPairs pairs = collect_pairs(data);
  MadResult out;
  out.n_gaps = static_cast<int>(pairs.s.size());
  if (out.n_gaps < 2)
    throw std::runtime_error("mad_explained: need at least 2 gaps with S and R");

  const double overall_median = quantile_type7(pairs.s, 0.5);
  std::vector<double> abs_dev(pairs.s.size());
  for (std::size_t i = 0; i < pairs.s.size(); ++i)
    abs_dev[i] = std::abs(pairs.s[i] - overall_median);
  out.unadjusted = quantile_type7(abs_dev, 0.5);
  if (out.unadjusted == 0.0) {
    out.adjusted = 0.0;
    return out;  // fraction stays absent: no variability to explain
  }

  // Median regression of S on R, linear predictor. When R carries no
  // information (constant), the conditional median is the overall median.
  const Eigen::Index n = static_cast<Eigen::Index>(pairs.s.size());
  Eigen::VectorXd fitted(n);
  const bool r_constant =
      std::all_of(pairs.r.begin(), pairs.r.end(),
                  [&](double r) { return r == pairs.r.front(); });
  if (r_constant) {
    fitted.setConstant(overall_median);
  } else {
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = pairs.r[static_cast<std::size_t>(i)];
      y(i) = pairs.s[static_cast<std::size_t>(i)];
    }
    const LinearFit fit = fit_quantile_reg(y, X, 0.5);
    fitted = X * fit.coef;
  }

  std::vector<double> adj_dev(pairs.s.size());
  for (std::size_t i = 0; i < pairs.s.size(); ++i)
    adj_dev[i] = std::abs(pairs.s[i] - fitted(static_cast<Eigen::Index>(i)));
  out.adjusted = quantile_type7(adj_dev, 0.5);

  double fraction = 1.0 - out.adjusted / out.unadjusted;
  if (fraction < 0) {
    out.clamped = true;
    fraction = 0.0;
  }
  out.fraction = fraction;
  return out;
}

AgreementBands agreement_bands(const Dataset& data,
                               std::span<const double> taus, BandScale scale,
                               int basis_df, int grid_points) {
  const GapPairs pairs = collect_pairs(data);
  const Eigen::Index n = static_cast<Eigen::Index>(pairs.s.size());
  if (n < basis_df + 2)
    throw std::runtime_error("agreement_bands: not enough gaps for the basis");
  if (grid_points < 2)
    throw std::invalid_argument("agreement_bands: need at least 2 grid points");

  AgreementBands out;
  out.scale = scale;
  out.taus.assign(taus.begin(), taus.end());

  const SplineBasisSpec basis = make_quantile_basis(pairs.r, basis_df);
  const Eigen::MatrixXd X = design_with_intercept(pairs.r, basis);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = pairs.s[static_cast<std::size_t>(i)];
    const double r = pairs.r[static_cast<std::size_t>(i)];
    y(i) = scale == BandScale::kDifference ? s - r : s / r;
  }

  out.r_grid.resize(static_cast<std::size_t>(grid_points));
  const double lo = basis.boundary_lo;
  const double hi = basis.boundary_hi;
  for (int k = 0; k < grid_points; ++k)
    out.r_grid[static_cast<std::size_t>(k)] =
        lo + (hi - lo) * k / (grid_points - 1);
  const Eigen::MatrixXd Xg = design_with_intercept(out.r_grid, basis);

  for (double tau : taus) {
    const LinearFit fit = fit_quantile_reg(y, X, tau);
    const Eigen::VectorXd curve = Xg * fit.coef;
    out.values.emplace_back(curve.data(), curve.data() + curve.size());
  }

  // Quantile crossing: a higher tau's curve dipping below a lower tau's.
  for (std::size_t a = 0; a + 1 < out.values.size(); ++a) {
    if (out.taus[a + 1] < out.taus[a]) continue;
    for (std::size_t k = 0; k < out.r_grid.size(); ++k) {
      if (out.values[a + 1][k] < out.values[a][k]) {
        out.crossing_warning = true;
        break;
      }
    }
  }
  return out;
}

CategorySummary category_summary(const Dataset& data,
                                 const WindowPolicy& policy) {
  CategorySummary out;
  for (const auto& rows : data.patients) {
    for (const VisitRow& row : rows) {
      if (!row.gap_forward || row.censored || !row.rec_interval) continue;
      const VisitCategory cat =
          classify_gap(*row.gap_forward, *row.rec_interval, policy);
      ++out.counts[static_cast<int>(cat)];
      ++out.total;
    }
  }
  if (out.total > 0)
    for (int c = 0; c < kNumCategories; ++c)
      out.proportions[c] =
          static_cast<double>(out.counts[c]) / static_cast<double>(out.total);
  return out;
}

IntervalSummary interval_summary(const Dataset& data) {
  std::vector<double> s, r, ratio, diff, das;
  for (const auto& rows : data.patients) {
    for (const VisitRow& row : rows) {
      if (row.das) das.push_back(*row.das);
      if (row.rec_interval) r.push_back(*row.rec_interval);
      if (!row.gap_forward || row.censored) continue;
      s.push_back(*row.gap_forward);
      if (row.rec_interval) {
        ratio.push_back(*row.gap_forward / *row.rec_interval);
        diff.push_back(*row.gap_forward - *row.rec_interval);
      }
    }
  }
  IntervalSummary out;
  if (!s.empty()) out.observed = summarize(std::move(s));
  if (!r.empty()) out.recommended = summarize(std::move(r));
  if (!ratio.empty()) out.ratio = summarize(std::move(ratio));
  if (!diff.empty()) out.difference = summarize(std::move(diff));
  if (!das.empty()) out.das = summarize(std::move(das));
  return out;
}

DiagnosticsReport run_diagnostics(const Dataset& data,
                                  const WindowPolicy& policy) {
  DiagnosticsReport report;
  report.mad = mad_explained(data);
  report.categories = category_summary(data, policy);
  report.intervals = interval_summary(data);
  for (const auto& rows : data.patients)
    for (const VisitRow& row : rows)
      if (row.gap_forward && !row.censored && !row.rec_interval)
        ++report.n_gaps_missing_rec;
  return report;
}

}  // namespace visits
