#pragma once

#include "visits/dataset.hpp"
#include "visits/windows.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace visits {

/// How much of the spread in observed gaps the recommendations explain:
/// 1 - MAD(S about its fitted conditional median given R) / MAD(S about its
/// overall median). Fraction is absent when the unadjusted MAD is zero and
/// clamped at zero (with a flag) when the regression fits worse.
struct MadResult {
  double unadjusted = 0.0;
  double adjusted = 0.0;
  std::optional<double> fraction;
  bool clamped = false;
  int n_gaps = 0;
};

MadResult mad_explained(const Dataset& data);

enum class BandScale { kDifference, kRatio };

/// Quantile-regression agreement bands: per tau, S-R (or S/R) regressed on a
/// spline of R and evaluated over a uniform R grid.
struct AgreementBands {
  BandScale scale = BandScale::kDifference;
  std::vector<double> taus;
  std::vector<double> r_grid;
  std::vector<std::vector<double>> values;  // [tau][grid point]
  bool crossing_warning = false;
};

AgreementBands agreement_bands(const Dataset& data,
                               std::span<const double> taus,
                               BandScale scale, int basis_df = 3,
                               int grid_points = 101);

struct CategorySummary {
  std::array<int, kNumCategories> counts{};
  std::array<double, kNumCategories> proportions{};
  int total = 0;
};

/// Counts over gaps with a recommendation and an uncensored observed gap.
CategorySummary category_summary(const Dataset& data,
                                 const WindowPolicy& policy = {});

struct QuantileSummary {
  int n = 0;
  double median = 0.0, q25 = 0.0, q75 = 0.0, min = 0.0, max = 0.0;
};

/// Visit-level summary shapes: observed/recommended gaps, their ratio and
/// difference (censored gaps excluded), and the outcome score.
struct IntervalSummary {
  std::optional<QuantileSummary> observed;
  std::optional<QuantileSummary> recommended;
  std::optional<QuantileSummary> ratio;
  std::optional<QuantileSummary> difference;
  std::optional<QuantileSummary> das;
};

IntervalSummary interval_summary(const Dataset& data);

struct DiagnosticsReport {
  MadResult mad;
  CategorySummary categories;
  IntervalSummary intervals;
  int n_gaps_missing_rec = 0;
};

DiagnosticsReport run_diagnostics(const Dataset& data,
                                  const WindowPolicy& policy = {});

}  // namespace visits
