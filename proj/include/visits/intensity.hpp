#pragma once

#include "visits/dataset.hpp"
#include "visits/numerics.hpp"
#include "visits/windows.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace visits {

/// One inter-visit gap, decomposed for the piecewise intensity fits.
/// event[c] = 1 only for the category the visit landed in (all zero when
/// the gap is censored); exposure[c] is the time at risk in that window.
struct RiskRow {
  std::string patient_id;
  int gap_index = 0;  // visit_index of the row opening the gap
  double rec = 0.0;   // months
  double gap_months = 0.0;
  bool censored = false;
  std::array<std::optional<double>, kNumCategories> exposure;
  std::array<int, kNumCategories> event{0, 0, 0, 0, 0};
  std::optional<VisitCategory> event_category;
  std::optional<double> d_increase;  // DAS increase over the gap
};

/// One row per gap with a recorded recommendation; censored final gaps
/// contribute exposure with zero events.
std::vector<RiskRow> build_risk_table(const Dataset& data,
                                      const WindowPolicy& policy = {});

struct CategoryFit {
  std::optional<LinearFit> fit;
  std::string error;  // set when the stratum could not be fitted
  int n_rows = 0;
  int n_events = 0;
  double total_exposure = 0.0;
};

/// The five category-specific exponential intensity models sharing one
/// spline basis of R. The out-of-window strata are fitted only on gaps with
/// an observed outcome change, the in-window stratum on all gaps.
struct IntensityModelSet {
  SplineBasisSpec basis;
  std::array<CategoryFit, kNumCategories> fits;

  const CategoryFit& for_category(VisitCategory c) const {
    return fits[static_cast<int>(c)];
  }
  bool all_fitted() const;
  std::string first_error() const;
};

IntensityModelSet fit_intensity_models(std::span<const RiskRow> rows,
                                       const SplineBasisSpec& basis);

/// Convenience: basis built from the risk-table R values at the given df.
IntensityModelSet fit_intensity_models(std::span<const RiskRow> rows,
                                       int basis_df);

/// Rate per month at the given R; R outside the basis boundary is clamped.
/// Throws when the category model is missing.
double predict_intensity(const IntensityModelSet& models, double rec,
                         VisitCategory category, int* n_clamped = nullptr);

/// Weights aligned with dataset rows. raw is the inverse intensity of the
/// gap opening at this visit; lagged shifts it to the arriving visit; and
/// final_weight is lagged with the first visit pinned to one.
struct WeightEntry {
  std::optional<double> raw;
  std::optional<double> lagged;
  std::optional<double> final_weight;
};

struct WeightTable {
  std::vector<std::vector<WeightEntry>> per_patient;

  std::size_t n_defined() const;
  double max_over_median() const;  // 0 when undefined
};

WeightTable compute_weights(const Dataset& data,
                            const IntensityModelSet& models,
                            const WindowPolicy& policy = {});

/// Internal plumbing shared with the tilted pipeline: per-row AAR rate and
/// the gap facts needed to transform it.
struct GapRate {
  std::optional<double> aar_rate;
  std::optional<VisitCategory> category;
  std::optional<double> rec;
  std::optional<double> d_increase;
};

std::vector<std::vector<GapRate>> compute_gap_rates(
    const Dataset& data, const IntensityModelSet& models,
    const WindowPolicy& policy);

WeightTable assemble_weight_table(
    const Dataset& data,
    const std::vector<std::vector<std::optional<double>>>& raw_rates);

}  // namespace visits
