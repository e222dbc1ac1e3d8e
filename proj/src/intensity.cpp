#include "visits/intensity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace visits {

std::vector<RiskRow> build_risk_table(const Dataset& data,
                                      const WindowPolicy& policy) {
  std::vector<RiskRow> table;
  for (const auto& rows : data.patients) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const VisitRow& row = rows[j];
      if (!row.gap_forward || !row.rec_interval) continue;
      const RiskDecomposition dec =
          decompose_risk(*row.gap_forward, row.rec_interval, row.censored,
                         policy);
      RiskRow out;
      out.patient_id = row.patient_id;
      out.gap_index = row.visit_index;
      out.rec = *row.rec_interval;
      out.gap_months = *row.gap_forward;
      out.censored = row.censored;
      out.exposure = dec.time_at_risk;
      out.event_category = dec.event_category;
      if (dec.event_category)
        out.event[static_cast<int>(*dec.event_category)] = 1;
      out.d_increase = row.das_increase_forward;
      table.push_back(std::move(out));
    }
  }
  return table;
}

bool IntensityModelSet::all_fitted() const {
  return std::all_of(fits.begin(), fits.end(),
                     [](const CategoryFit& f) { return f.fit.has_value(); });
}

std::string IntensityModelSet::first_error() const {
  for (const auto& f : fits)
    if (!f.fit) return f.error;
  return {};
}

IntensityModelSet fit_intensity_models(std::span<const RiskRow> rows,
                                       const SplineBasisSpec& basis) {
  IntensityModelSet set;
  set.basis = basis;
  for (int c = 0; c < kNumCategories; ++c) {
    const auto category = static_cast<VisitCategory>(c);
    const bool needs_outcome = is_out_of_window(category);
    std::vector<double> exposure, recs;
    std::vector<double> events;
    for (const RiskRow& row : rows) {
      if (!row.exposure[c]) continue;
      if (needs_outcome && !row.d_increase) continue;
      exposure.push_back(*row.exposure[c]);
      events.push_back(static_cast<double>(row.event[c]));
      recs.push_back(row.rec);
    }
    CategoryFit& slot = set.fits[c];
    slot.n_rows = static_cast<int>(exposure.size());
    slot.n_events = static_cast<int>(
        std::count(events.begin(), events.end(), 1.0));
    for (double t : exposure) slot.total_exposure += t;
    if (exposure.empty()) {
      slot.error = "no exposure rows in stratum " +
                   std::string(category_name(category)) +
                   "; consider coarser categories";
      continue;
    }
    if (slot.n_events == 0) {
      slot.error = "no events in stratum " +
                   std::string(category_name(category)) +
                   "; consider coarser categories";
      continue;
    }
    try {
      const Eigen::MatrixXd X = design_with_intercept(recs, basis);
      slot.fit = fit_exponential_survival(
          Eigen::Map<const Eigen::VectorXd>(exposure.data(),
                                            static_cast<Eigen::Index>(
                                                exposure.size())),
          Eigen::Map<const Eigen::VectorXd>(events.data(),
                                            static_cast<Eigen::Index>(
                                                events.size())),
          X);
    } catch (const std::exception& e) {
      slot.error = std::string(category_name(category)) + ": " + e.what();
    }
  }
  return set;
}

IntensityModelSet fit_intensity_models(std::span<const RiskRow> rows,
                                       int basis_df) {
  std::vector<double> recs;
  recs.reserve(rows.size());
  for (const RiskRow& row : rows) recs.push_back(row.rec);
  if (recs.empty())
    throw std::runtime_error("fit_intensity_models: empty risk table");
  return fit_intensity_models(rows, make_quantile_basis(recs, basis_df));
}

double predict_intensity(const IntensityModelSet& models, double rec,
                         VisitCategory category, int* n_clamped) {
  const CategoryFit& slot = models.for_category(category);
  if (!slot.fit)
    throw std::runtime_error("predict_intensity: no fitted model for " +
                             std::string(category_name(category)) +
                             (slot.error.empty() ? "" : " (" + slot.error + ")"));
  const double xs[1] = {rec};
  const Eigen::MatrixXd X = design_with_intercept(xs, models.basis, n_clamped);
  return std::exp((X * slot.fit->coef)(0));
}

std::vector<std::vector<GapRate>> compute_gap_rates(
    const Dataset& data, const IntensityModelSet& models,
    const WindowPolicy& policy) {
  std::vector<std::vector<GapRate>> all;
  all.reserve(data.patients.size());
  for (const auto& rows : data.patients) {
    std::vector<GapRate> rates(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const VisitRow& row = rows[j];
      GapRate& g = rates[j];
      g.rec = row.rec_interval;
      g.d_increase = row.das_increase_forward;
      if (!row.gap_forward || row.censored || !row.rec_interval) continue;
      const VisitCategory cat =
          classify_gap(*row.gap_forward, *row.rec_interval, policy);
      g.category = cat;
      // Out-of-window models are fitted only where the outcome change is
      // observed; their predictions stay undefined on the other gaps so the
      // AAR and tilted pipelines drop identical rows.
      if (is_out_of_window(cat) && !row.das_increase_forward) continue;
      if (!models.for_category(cat).fit) continue;
      g.aar_rate = predict_intensity(models, *row.rec_interval, cat);
    }
    all.push_back(std::move(rates));
  }
  return all;
}

WeightTable assemble_weight_table(
    const Dataset& data,
    const std::vector<std::vector<std::optional<double>>>& raw_rates) {
  WeightTable table;
  table.per_patient.reserve(data.patients.size());
  for (std::size_t pi = 0; pi < data.patients.size(); ++pi) {
    const auto& rates = raw_rates[pi];
    std::vector<WeightEntry> entries(rates.size());
    for (std::size_t j = 0; j < rates.size(); ++j) {
      if (rates[j] && *rates[j] > 0) entries[j].raw = 1.0 / *rates[j];
      if (j > 0) entries[j].lagged = entries[j - 1].raw;
      entries[j].final_weight = j == 0 ? std::optional<double>(1.0)
                                       : entries[j].lagged;
    }
    table.per_patient.push_back(std::move(entries));
  }
  return table;
}

WeightTable compute_weights(const Dataset& data,
                            const IntensityModelSet& models,
                            const WindowPolicy& policy) {
  const auto rates = compute_gap_rates(data, models, policy);
  std::vector<std::vector<std::optional<double>>> raw(rates.size());
  for (std::size_t pi = 0; pi < rates.size(); ++pi) {
    raw[pi].resize(rates[pi].size());
    for (std::size_t j = 0; j < rates[pi].size(); ++j)
      raw[pi][j] = rates[pi][j].aar_rate;
  }
  return assemble_weight_table(data, raw);
}

std::size_t WeightTable::n_defined() const {
  std::size_t n = 0;
  for (const auto& rows : per_patient)
    for (const auto& e : rows)
      if (e.final_weight) ++n;
  return n;
}

double WeightTable::max_over_median() const {
  std::vector<double> w;
  for (const auto& rows : per_patient)
    for (const auto& e : rows)
      if (e.final_weight) w.push_back(*e.final_weight);
  if (w.empty()) return 0.0;
  std::sort(w.begin(), w.end());
  const double median = w[w.size() / 2];
  if (!(median > 0)) return 0.0;
  return w.back() / median;
}

}  // namespace visits
