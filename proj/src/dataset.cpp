#include "visits/dataset.hpp"

#include "visits/format.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace visits {

namespace {

constexpr std::string_view kHeader = "id,date,time_since_dx,DAS,S,censor,R";

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_missing(const std::string& field) {
  return field.empty() || field == "NA";
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

double parse_number(const std::string& field, int line, const char* what) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw ParseError(line, std::string("malformed ") + what + " '" + field + "'");
  return value;
}

bool looks_like_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

}  // namespace

double convert_interval(double value, IntervalUnit unit) {
  if (value < 0)
    throw std::invalid_argument("convert_interval: negative interval");
  switch (unit) {
    case IntervalUnit::kDays:
      return value / UnitConstants::days_per_month;
    case IntervalUnit::kWeeks:
      return value / UnitConstants::weeks_per_month;
    case IntervalUnit::kMonths:
      return value;
  }
  throw std::invalid_argument("convert_interval: unknown unit");
}

std::size_t Dataset::n_rows() const {
  std::size_t n = 0;
  for (const auto& rows : patients) n += rows.size();
  return n;
}

Dataset parse_dataset(std::string_view csv_text, const ParseOptions& opts) {
  Dataset data;
  std::vector<std::string> patient_order;
  std::map<std::string, std::size_t> patient_slot;

  std::size_t pos = 0;
  int line_number = 0;
  bool saw_header = false;
  while (pos <= csv_text.size()) {
    const std::size_t eol = csv_text.find('\n', pos);
    std::string_view line = csv_text.substr(
        pos, eol == std::string_view::npos ? csv_text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? csv_text.size() + 1 : eol + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (!saw_header && pos > csv_text.size()) break;
      continue;
    }

    if (!saw_header) {
      if (trim(line) != kHeader)
        throw ParseError(line_number,
                         "expected header '" + std::string(kHeader) + "'");
      saw_header = true;
      continue;
    }

    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 7)
      throw ParseError(line_number, "malformed row: expected 7 fields, got " +
                                        std::to_string(f.size()));

    VisitRow row;
    if (is_missing(f[0])) throw ParseError(line_number, "missing patient id");
    row.patient_id = f[0];
    if (!is_missing(f[1])) {
      if (!looks_like_iso_date(f[1]))
        throw ParseError(line_number, "malformed date '" + f[1] + "'");
      row.calendar_date = f[1];
    }
    row.time_since_dx = parse_number(f[2], line_number, "time_since_dx");
    if (row.time_since_dx < 0)
      throw ParseError(line_number, "negative time_since_dx");
    if (!is_missing(f[3])) {
      const double das = parse_number(f[3], line_number, "DAS");
      if (das < 0 || das > 12)
        throw ParseError(line_number, "DAS outside [0,12]");
      if (opts.strict_integer_das && das != std::floor(das))
        throw ParseError(line_number, "non-integer DAS with strict checking on");
      row.das = das;
    }
    if (!is_missing(f[4])) {
      const double s = parse_number(f[4], line_number, "S");
      if (s <= 0) throw ParseError(line_number, "non-positive gap S");
      row.gap_forward = s;
    }
    const double censor = parse_number(f[5], line_number, "censor");
    if (censor != 0 && censor != 1)
      throw ParseError(line_number, "censor must be 0 or 1");
    row.censored = censor == 1;
    if (!is_missing(f[6])) {
      const double r = parse_number(f[6], line_number, "R");
      if (r <= 0)
        throw ParseError(line_number, "non-positive recommended interval R");
      row.rec_interval = r;
    }

    auto [it, inserted] =
        patient_slot.try_emplace(row.patient_id, data.patients.size());
    if (inserted) data.patients.emplace_back();
    auto& rows = data.patients[it->second];
    if (!rows.empty()) {
      const VisitRow& prev = rows.back();
      if (prev.censored)
        throw ParseError(line_number, "patient " + row.patient_id +
                                          ": censor=1 on a non-final row");
      if (!(row.time_since_dx > prev.time_since_dx))
        throw ParseError(line_number,
                         "patient " + row.patient_id +
                             ": time_since_dx not strictly increasing");
      const double derived = (row.time_since_dx - prev.time_since_dx) * 12.0;
      if (prev.gap_forward) {
        const double supplied = *prev.gap_forward;
        const double scale = std::max(std::abs(supplied), std::abs(derived));
        if (std::abs(supplied - derived) > opts.gap_rel_tolerance * scale)
          throw ParseError(line_number,
                           "patient " + row.patient_id + ": supplied gap " +
                               fmt_double(supplied) +
                               " inconsistent with visit times (derived " +
                               fmt_double(derived) + ")");
      } else {
        rows.back().gap_forward = derived;
      }
    }
    row.visit_index = static_cast<int>(rows.size());
    rows.push_back(std::move(row));
  }

  // Final-row checks need the whole patient; report at end of input.
  for (const auto& rows : data.patients) {
    const VisitRow& last = rows.back();
    if (last.censored && !last.gap_forward)
      throw ParseError(line_number, "patient " + last.patient_id +
                                        ": censored final visit has no "
                                        "recorded exposure in S");
    if (!last.censored && last.gap_forward)
      throw ParseError(line_number, "patient " + last.patient_id +
                                        ": gap S recorded on an uncensored "
                                        "final visit");
  }

  return derive_diffs(std::move(data));
}

Dataset derive_diffs(Dataset data) {
  for (auto& rows : data.patients) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (j + 1 < rows.size() && rows[j].das && rows[j + 1].das) {
        const double diff = *rows[j + 1].das - *rows[j].das;
        rows[j].das_diff_forward = diff;
        rows[j].das_increase_forward = std::max(diff, 0.0);
      } else {
        rows[j].das_diff_forward.reset();
        rows[j].das_increase_forward.reset();
      }
    }
  }
  return data;
}

std::string serialize_dataset(const Dataset& data) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const auto& rows : data.patients) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const VisitRow& row = rows[j];
      out << row.patient_id << ',';
      if (row.calendar_date) out << *row.calendar_date;
      out << ',' << fmt_double(row.time_since_dx) << ',';
      if (row.das) out << fmt_double(*row.das);
      out << ',';
      if (row.gap_forward) out << fmt_double(*row.gap_forward);
      out << ',' << (row.censored ? '1' : '0') << ',';
      if (row.rec_interval) out << fmt_double(*row.rec_interval);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace visits
