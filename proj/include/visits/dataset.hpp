#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace visits {

struct UnitConstants {
  static constexpr double weeks_per_month = 4.345;
  static constexpr double days_per_month = 30.417;
};

enum class IntervalUnit { kDays, kWeeks, kMonths };

/// Converts an interval to months using the fixed unit constants.
double convert_interval(double value, IntervalUnit unit);

/// One clinic visit. Gap quantities look forward: gap_forward is the
/// interval to the next visit (or, on a censored final row, the exposure
/// from the visit to the end of the study), and rec_interval is the
/// recommendation assigned at this visit for when the next should happen.
struct VisitRow {
  std::string patient_id;
  int visit_index = 0;
  std::optional<std::string> calendar_date;  // ISO yyyy-mm-dd
  double time_since_dx = 0.0;                // years
  std::optional<double> das;                 // outcome score in [0,12]
  std::optional<double> gap_forward;         // months (S)
  bool censored = false;
  std::optional<double> rec_interval;        // months (R)
  std::optional<double> das_diff_forward;
  std::optional<double> das_increase_forward;  // D = max(diff, 0)
};

struct Dataset {
  std::vector<std::vector<VisitRow>> patients;  // grouped, file order
  std::optional<double> study_end_years;

  std::size_t n_rows() const;
};

struct ParseError : std::runtime_error {
  ParseError(int line_number, const std::string& message)
      : std::runtime_error("line " + std::to_string(line_number) + ": " +
                           message),
        line(line_number) {}
  int line;
};

struct ParseOptions {
  bool strict_integer_das = false;
  double gap_rel_tolerance = 1e-6;  // supplied S vs gap derived from times
};

/// Parses the visit CSV (header id,date,time_since_dx,DAS,S,censor,R;
/// empty field = missing), validates the per-patient invariants, fills
/// gap_forward from the visit times where S is absent, and derives the
/// forward outcome changes.
Dataset parse_dataset(std::string_view csv_text, const ParseOptions& opts = {});

/// Fills das_diff_forward / das_increase_forward from consecutive rows with
/// observed outcomes. Idempotent.
Dataset derive_diffs(Dataset data);

/// CSV in the same column layout as the parser expects, doubles in
/// shortest-round-trip form.
std::string serialize_dataset(const Dataset& data);

}  // namespace visits
