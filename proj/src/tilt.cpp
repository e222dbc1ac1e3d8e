#include "visits/tilt.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace visits {

double q_value(double d_increase, const TiltConfig& config) {
  return normal_cdf(d_increase, config.q_mean, config.q_sd);
}

namespace {

LinearFit fit_one_normalizer(const std::vector<double>& recs,
                             const std::vector<double>& d_values,
                             double alpha, const TiltConfig& config,
                             const SplineBasisSpec& basis) {
  const Eigen::Index n = static_cast<Eigen::Index>(recs.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i)
    y(i) = std::exp(-alpha * q_value(d_values[static_cast<std::size_t>(i)],
                                     config));
  const Eigen::MatrixXd X = design_with_intercept(recs, basis);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  std::vector<int> cluster(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < cluster.size(); ++i)
    cluster[i] = static_cast<int>(i);
  LinearFit fit = fit_wls(X, y, w, cluster);
  const Eigen::VectorXd fitted = X * fit.coef;
  if ((fitted.array() <= 0).any())
    throw std::runtime_error("normalizer non-positive; reduce basis df");
  return fit;
}

}  // namespace

NormalizerModels fit_normalizers(const Dataset& data, const TiltConfig& config,
                                 const SplineBasisSpec& basis,
                                 const WindowPolicy& policy) {
  std::vector<double> recs;
  std::vector<double> d_values;
  for (const auto& rows : data.patients) {
    for (const VisitRow& row : rows) {
      if (!row.rec_interval || !row.das_increase_forward) continue;
      if (config.normalizer_rows == NormalizerRows::kOutOfWindow) {
        if (!row.gap_forward || row.censored) continue;
        const VisitCategory cat =
            classify_gap(*row.gap_forward, *row.rec_interval, policy);
        if (!is_out_of_window(cat)) continue;
      }
      recs.push_back(*row.rec_interval);
      d_values.push_back(*row.das_increase_forward);
    }
  }
  if (static_cast<int>(recs.size()) < basis.df + 1)
    throw std::runtime_error(
        "fit_normalizers: fewer gaps with observed D and R than basis "
        "coefficients");
  NormalizerModels out;
  out.basis = basis;
  out.alpha_e = config.alpha_e;
  out.alpha_l = config.alpha_l;
  out.early = fit_one_normalizer(recs, d_values, config.alpha_e, config, basis);
  out.late = fit_one_normalizer(recs, d_values, config.alpha_l, config, basis);
  return out;
}

namespace {

double predict_normalizer(const SplineBasisSpec& basis, const LinearFit& fit,
                          double rec) {
  const double xs[1] = {rec};
  const Eigen::MatrixXd X = design_with_intercept(xs, basis);
  const double value = (X * fit.coef)(0);
  if (!(value > 0))
    throw std::runtime_error("normalizer non-positive; reduce basis df");
  return value;
}

}  // namespace

double NormalizerModels::predict_early(double rec) const {
  return predict_normalizer(basis, early, rec);
}

double NormalizerModels::predict_late(double rec) const {
  return predict_normalizer(basis, late, rec);
}

std::optional<double> tilted_intensity(double aar_rate, VisitCategory category,
                                       std::optional<double> d_increase,
                                       double rec,
                                       const NormalizerModels& normalizers,
                                       const TiltConfig& config) {
  if (!(aar_rate > 0))
    throw std::invalid_argument("tilted_intensity: rate must be positive");
  if (category == VisitCategory::kInWindow) return aar_rate;
  const double alpha =
      is_early_side(category) ? config.alpha_e : config.alpha_l;
  // alpha = 0 degenerates to the identity exactly.
  if (alpha == 0.0) return aar_rate;
  if (!d_increase) return std::nullopt;
  const double c_hat = is_early_side(category)
                           ? normalizers.predict_early(rec)
                           : normalizers.predict_late(rec);
  return aar_rate * c_hat * std::exp(alpha * q_value(*d_increase, config));
}

WeightTable compute_tilted_weights(const Dataset& data,
                                   const IntensityModelSet& models,
                                   const NormalizerModels& normalizers,
                                   const TiltConfig& config,
                                   const WindowPolicy& policy) {
  const auto rates = compute_gap_rates(data, models, policy);
  std::vector<std::vector<std::optional<double>>> raw(rates.size());
  for (std::size_t pi = 0; pi < rates.size(); ++pi) {
    raw[pi].resize(rates[pi].size());
    for (std::size_t j = 0; j < rates[pi].size(); ++j) {
      const GapRate& g = rates[pi][j];
      if (!g.aar_rate || !g.category || !g.rec) continue;
      raw[pi][j] = tilted_intensity(*g.aar_rate, *g.category, g.d_increase,
                                    *g.rec, normalizers, config);
    }
  }
  return assemble_weight_table(data, raw);
}

}  // namespace visits
