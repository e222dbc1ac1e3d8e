#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace visits {

enum class VisitCategory { kVeryEarly = 0, kEarly, kInWindow, kLate, kVeryLate };

inline constexpr int kNumCategories = 5;

std::string_view category_name(VisitCategory c);
std::optional<VisitCategory> category_from_name(std::string_view name);

inline bool is_out_of_window(VisitCategory c) {
  return c != VisitCategory::kInWindow;
}
inline bool is_early_side(VisitCategory c) {
  return c == VisitCategory::kVeryEarly || c == VisitCategory::kEarly;
}
inline bool is_late_side(VisitCategory c) {
  return c == VisitCategory::kLate || c == VisitCategory::kVeryLate;
}

/// Month-scale window thresholds around the recommended interval. Defaults
/// are the clinical choices: very early = more than 1 month earlier than
/// recommended, early = between 0.5 and 1 month earlier, late = between
/// 1.5x and 2x the recommendation, very late = beyond 2x.
struct WindowPolicy {
  double very_early_offset = 1.0;  // months
  double early_offset = 0.5;       // months
  double late_factor = 1.5;
  double very_late_factor = 2.0;

  void validate() const;
};

/// One category's gap-time interval; half-open/closed exactly as the
/// classification inequalities dictate.
struct CategoryInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = true;
  bool hi_closed = false;

  bool contains(double g) const {
    if (g < lo || (g == lo && !lo_closed)) return false;
    if (g > hi || (g == hi && !hi_closed)) return false;
    return true;
  }
  double length() const { return hi - lo; }
};

/// Intervals over gap time for the five categories, in enum order; empty
/// windows (impossible for the given R) are absent.
using CategoryBounds = std::array<std::optional<CategoryInterval>, kNumCategories>;

CategoryBounds category_boundaries(double rec, const WindowPolicy& policy = {});

VisitCategory classify_gap(double gap, double rec, const WindowPolicy& policy = {});

/// Time at risk per category for one inter-visit gap: duration in each
/// window crossed before the visit (or censoring) happened. Durations are
/// strictly positive or absent.
struct RiskDecomposition {
  std::array<std::optional<double>, kNumCategories> time_at_risk;
  std::optional<VisitCategory> event_category;  // absent when censored
  bool valid = false;                           // false when R is absent
};

RiskDecomposition decompose_risk(double exposure, std::optional<double> rec,
                                 bool censored, const WindowPolicy& policy = {});

}  // namespace visits
