#include "visits/windows.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace visits {

std::string_view category_name(VisitCategory c) {
  switch (c) {
    case VisitCategory::kVeryEarly: return "very_early";
    case VisitCategory::kEarly: return "early";
    case VisitCategory::kInWindow: return "in_window";
    case VisitCategory::kLate: return "late";
    case VisitCategory::kVeryLate: return "very_late";
  }
  return "?";
}

std::optional<VisitCategory> category_from_name(std::string_view name) {
  for (int i = 0; i < kNumCategories; ++i) {
    const auto c = static_cast<VisitCategory>(i);
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

void WindowPolicy::validate() const {
  if (!(0 < early_offset && early_offset < very_early_offset))
    throw std::invalid_argument(
        "window policy: need 0 < early_offset < very_early_offset");
  if (!(1 < late_factor && late_factor < very_late_factor))
    throw std::invalid_argument(
        "window policy: need 1 < late_factor < very_late_factor");
}

CategoryBounds category_boundaries(double rec, const WindowPolicy& policy) {
  policy.validate();
  if (!(rec > 0))
    throw std::invalid_argument("recommended interval must be positive");

  const double ve_end = std::max(rec - policy.very_early_offset, 0.0);
  const double e_end = std::max(rec - policy.early_offset, 0.0);
  const double iw_end = policy.late_factor * rec;
  const double l_end = policy.very_late_factor * rec;
  const double inf = std::numeric_limits<double>::infinity();

  CategoryBounds bounds;
  // g < R - 1            -> very early   [0, ve_end)
  // R - 1 <= g < R - 0.5 -> early        [ve_end, e_end)
  // otherwise in-window                  [e_end, 1.5R]
  // 1.5R < g <= 2R       -> late         (iw_end, l_end]
  // g > 2R               -> very late    (l_end, inf)
  if (ve_end > 0)
    bounds[0] = CategoryInterval{0.0, ve_end, true, false};
  if (e_end > ve_end)
    bounds[1] = CategoryInterval{ve_end, e_end, true, false};
  bounds[2] = CategoryInterval{e_end, iw_end, true, true};
  bounds[3] = CategoryInterval{iw_end, l_end, false, true};
  bounds[4] = CategoryInterval{l_end, inf, false, false};
  return bounds;
}

VisitCategory classify_gap(double gap, double rec, const WindowPolicy& policy) {
  policy.validate();
  if (!(gap > 0)) throw std::invalid_argument("gap must be positive");
  if (!(rec > 0))
    throw std::invalid_argument("recommended interval must be positive");
  if (gap < rec - policy.very_early_offset) return VisitCategory::kVeryEarly;
  if (gap < rec - policy.early_offset) return VisitCategory::kEarly;
  if (gap > policy.very_late_factor * rec) return VisitCategory::kVeryLate;
  if (gap > policy.late_factor * rec) return VisitCategory::kLate;
  return VisitCategory::kInWindow;
}

RiskDecomposition decompose_risk(double exposure, std::optional<double> rec,
                                 bool censored, const WindowPolicy& policy) {
  policy.validate();
  if (!(exposure > 0))
    throw std::invalid_argument("exposure must be positive");
  RiskDecomposition out;
  if (!rec) return out;  // impossible to calculate the time at risk
  out.valid = true;

  // Window breakpoints along the gap axis; min(exposure, b) differences
  // telescope so the present durations sum to the exposure exactly.
  const double ve_end = std::max(*rec - policy.very_early_offset, 0.0);
  const double e_end = std::max(*rec - policy.early_offset, 0.0);
  const double iw_end = policy.late_factor * *rec;
  const double l_end = policy.very_late_factor * *rec;
  const double inf = std::numeric_limits<double>::infinity();
  const double breaks[6] = {0.0, ve_end, e_end, iw_end, l_end, inf};
  for (int c = 0; c < kNumCategories; ++c) {
    const double lo = std::min(exposure, breaks[c]);
    const double hi = std::min(exposure, breaks[c + 1]);
    if (hi > lo) out.time_at_risk[c] = hi - lo;
  }
  if (!censored) out.event_category = classify_gap(exposure, *rec, policy);
  return out;
}

}  // namespace visits
