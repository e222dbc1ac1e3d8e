#include "visits/dataset.hpp"
#include "visits/diagnostics.hpp"
#include "visits/format.hpp"
#include "visits/intensity.hpp"
#include "visits/outcome.hpp"
#include "visits/sensitivity.hpp"
#include "visits/simulator.hpp"
#include "visits/tilt.hpp"
#include "visits/windows.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace visits;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPartialGrid = 4;

// Flat key=value configuration with typed accessors. Defaults live here;
// a config file and repeated --set flags override them in that order.
class RunConfig {
 public:
  RunConfig() {
    values_ = {
        {"auc.increment", "0.007"},
        {"auc.timerange", "7"},
        {"basis.r_df", "3"},
        {"basis.time_df", "3"},
        {"elicit.alphas", "0,1,2,3,4,5,6,7"},
        {"elicit.d_max", "12"},
        {"elicit.d_step", "0.25"},
        {"elicit.r_set", "2,6,12"},
        {"elicit.target_hi", "0.99"},
        {"elicit.target_lo", "0.6"},
        {"elicit.use_normalizer", "true"},
        {"grid.alpha_e_start", "0"},
        {"grid.alpha_e_step", "0.5"},
        {"grid.alpha_e_stop", "7"},
        {"grid.alpha_l_start", "0"},
        {"grid.alpha_l_step", "0.5"},
        {"grid.alpha_l_stop", "7"},
        {"jobs", "1"},
        {"parse.gap_tolerance", "1e-6"},
        {"parse.strict_integer_das", "false"},
        {"seed", "1"},
        {"sensitivity.trajectory_cells", "0:0;4:0;7:0"},
        {"tilt.normalizer_rows", "all"},
        {"tilt.q_mean", "3"},
        {"tilt.q_sd", "1"},
        {"weights.cap", "0"},
        {"window.early_offset", "0.5"},
        {"window.late_factor", "1.5"},
        {"window.very_early_offset", "1"},
        {"window.very_late_factor", "2"},
    };
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto strip = [](const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string stripped = strip(line);
      if (stripped.empty()) continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config line " + std::to_string(line_no) +
                                 ": expected key = value");
      set(strip(stripped.substr(0, eq)), strip(stripped.substr(eq + 1)));
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (values_.find(key) == values_.end())
      throw std::runtime_error("unknown config key '" + key + "'");
    values_[key] = value;
  }

  void apply_overrides(const std::vector<std::string>& pairs) {
    for (const std::string& pair : pairs) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("--set expects key=value, got '" + pair + "'");
      set(pair.substr(0, eq), pair.substr(eq + 1));
    }
  }

  double num(const std::string& key) const { return std::stod(at(key)); }
  int integer(const std::string& key) const { return std::stoi(at(key)); }
  bool flag(const std::string& key) const {
    const std::string& v = at(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config key '" + key + "' expects a boolean");
  }
  const std::string& at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw std::runtime_error("unknown config key '" + key + "'");
    return it->second;
  }

  std::vector<double> num_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(at(key));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(std::stod(item));
    return out;
  }

  std::vector<std::pair<double, double>> pair_list(
      const std::string& key) const {
    std::vector<std::pair<double, double>> out;
    std::stringstream ss(at(key));
    std::string item;
    while (std::getline(ss, item, ';')) {
      if (item.empty()) continue;
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw std::runtime_error("config key '" + key +
                                 "' expects a:b pairs separated by ';'");
      out.emplace_back(std::stod(item.substr(0, colon)),
                       std::stod(item.substr(colon + 1)));
    }
    return out;
  }

  WindowPolicy window_policy() const {
    WindowPolicy policy;
    policy.very_early_offset = num("window.very_early_offset");
    policy.early_offset = num("window.early_offset");
    policy.late_factor = num("window.late_factor");
    policy.very_late_factor = num("window.very_late_factor");
    policy.validate();
    return policy;
  }

  ParseOptions parse_options() const {
    ParseOptions opts;
    opts.strict_integer_das = flag("parse.strict_integer_das");
    opts.gap_rel_tolerance = num("parse.gap_tolerance");
    return opts;
  }

  TiltConfig tilt_config() const {
    TiltConfig config;
    config.q_mean = num("tilt.q_mean");
    config.q_sd = num("tilt.q_sd");
    const std::string& rows = at("tilt.normalizer_rows");
    if (rows == "all") {
      config.normalizer_rows = NormalizerRows::kAll;
    } else if (rows == "out_of_window") {
      config.normalizer_rows = NormalizerRows::kOutOfWindow;
    } else {
      throw std::runtime_error(
          "tilt.normalizer_rows must be 'all' or 'out_of_window'");
    }
    return config;
  }

  std::string echo() const {
    std::ostringstream out;
    for (const auto& [key, value] : values_)
      out << key << " = " << value << '\n';
    return out.str();
  }

 private:
  std::map<std::string, std::string> values_;  // sorted echo for free
};

// Deterministic run log: counts and warnings only, mirrored to stderr.
class RunLog {
 public:
  void note(const std::string& line) { lines_.push_back(line); }
  void warn(const std::string& line) { lines_.push_back("warning: " + line); }
  std::string str() const {
    std::string out;
    for (const auto& l : lines_) {
      out += l;
      out += '\n';
    }
    return out;
  }
  void to_stderr() const { std::cerr << str(); }

 private:
  std::vector<std::string> lines_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_run_files(const fs::path& dir, const RunConfig& config,
                     const RunLog& log) {
  write_file(dir / "config_echo.txt", config.echo());
  write_file(dir / "run.log", log.str());
  log.to_stderr();
}

Dataset load_dataset(const std::string& input, const RunConfig& config,
                     RunLog& log) {
  const Dataset data = parse_dataset(read_file(input), config.parse_options());
  log.note("parsed " + std::to_string(data.patients.size()) + " patients, " +
           std::to_string(data.n_rows()) + " visits");
  return data;
}

std::string opt_str(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string();
}

// Fitted AAR pipeline shared by fit-aar, sensitivity, and elicit.
struct AarPipeline {
  Dataset data;
  std::vector<RiskRow> risk;
  IntensityModelSet models;
  WeightTable weights;
};

AarPipeline build_aar(const std::string& input, const RunConfig& config,
                      RunLog& log, bool require_all_fitted) {
  AarPipeline p;
  p.data = load_dataset(input, config, log);
  const WindowPolicy policy = config.window_policy();
  p.risk = build_risk_table(p.data, policy);
  log.note("risk table: " + std::to_string(p.risk.size()) + " gaps");
  if (p.risk.empty())
    throw std::runtime_error("no gaps with a recorded recommendation");
  p.models = fit_intensity_models(p.risk, config.integer("basis.r_df"));
  for (int c = 0; c < kNumCategories; ++c) {
    const CategoryFit& fit = p.models.fits[c];
    if (fit.fit)
      log.note("intensity " +
               std::string(category_name(static_cast<VisitCategory>(c))) +
               ": " + std::to_string(fit.n_events) + " events / " +
               fmt_double(fit.total_exposure) + " months at risk");
    else
      log.warn("intensity " +
               std::string(category_name(static_cast<VisitCategory>(c))) +
               " not fitted: " + fit.error);
  }
  if (require_all_fitted && !p.models.all_fitted())
    throw std::runtime_error("intensity model missing: " +
                             p.models.first_error());
  p.weights = compute_weights(p.data, p.models, policy);
  const double ratio = p.weights.max_over_median();
  if (ratio > 100)
    log.warn("weight max/median ratio " + fmt_double(ratio) +
             " exceeds 100; consider weights.cap");
  const double cap = config.num("weights.cap");
  if (cap > 0) {
    int capped = 0;
    for (auto& rows : p.weights.per_patient)
      for (auto& e : rows)
        if (e.final_weight && *e.final_weight > cap) {
          e.final_weight = cap;
          ++capped;
        }
    log.note("capped " + std::to_string(capped) + " weights at " +
             fmt_double(cap));
  }
  log.note("weights defined for " + std::to_string(p.weights.n_defined()) +
           " visits");
  return p;
}

std::string weights_csv(const AarPipeline& p, const WindowPolicy& policy) {
  std::ostringstream out;
  out << "patient_id,visit_index,time_since_dx,das,gap_forward,rec_interval,"
         "gap_category,raw_weight,lag_weight,weight\n";
  for (std::size_t pi = 0; pi < p.data.patients.size(); ++pi) {
    const auto& rows = p.data.patients[pi];
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const VisitRow& row = rows[j];
      const WeightEntry& w = p.weights.per_patient[pi][j];
      std::string category;
      if (row.gap_forward && row.rec_interval && !row.censored)
        category = category_name(
            classify_gap(*row.gap_forward, *row.rec_interval, policy));
      out << row.patient_id << ',' << row.visit_index << ','
          << fmt_double(row.time_since_dx) << ',' << opt_str(row.das) << ','
          << opt_str(row.gap_forward) << ',' << opt_str(row.rec_interval)
          << ',' << category << ',' << opt_str(w.raw) << ','
          << opt_str(w.lagged) << ',' << opt_str(w.final_weight) << '\n';
    }
  }
  return out.str();
}

std::string intensity_models_csv(const IntensityModelSet& models) {
  std::ostringstream out;
  int max_coef = 0;
  for (const auto& f : models.fits)
    if (f.fit)
      max_coef = std::max(max_coef, static_cast<int>(f.fit->coef.size()));
  out << "category,status,n_rows,n_events,total_exposure";
  for (int k = 0; k < max_coef; ++k) out << ",coef_" << k;
  out << '\n';
  for (int c = 0; c < kNumCategories; ++c) {
    const CategoryFit& f = models.fits[c];
    out << category_name(static_cast<VisitCategory>(c)) << ','
        << (f.fit ? "ok" : "error") << ',' << f.n_rows << ',' << f.n_events
        << ',' << fmt_double(f.total_exposure);
    for (int k = 0; k < max_coef; ++k) {
      out << ',';
      if (f.fit && k < f.fit->coef.size()) out << fmt_double(f.fit->coef(k));
    }
    out << '\n';
  }
  return out.str();
}

std::string trajectory_csv(
    const std::vector<std::pair<std::string, TrajectoryGrid>>& curves) {
  std::ostringstream out;
  out << "time,mean_das,label\n";
  for (const auto& [label, grid] : curves)
    for (std::size_t k = 0; k < grid.times.size(); ++k)
      out << fmt_double(grid.times[k]) << ',' << fmt_double(grid.values[k])
          << ',' << label << '\n';
  return out.str();
}

json quantile_json(const std::optional<QuantileSummary>& q) {
  if (!q) return nullptr;
  return json{{"n", q->n},     {"median", q->median}, {"q25", q->q25},
              {"q75", q->q75}, {"min", q->min},       {"max", q->max}};
}

int cmd_validate(const std::string& input, const RunConfig& config) {
  json report;
  try {
    const Dataset data =
        parse_dataset(read_file(input), config.parse_options());
    std::size_t gaps = 0;
    for (const auto& rows : data.patients)
      for (const auto& row : rows)
        if (row.gap_forward) ++gaps;
    report["ok"] = true;
    report["n_patients"] = data.patients.size();
    report["n_visits"] = data.n_rows();
    report["n_gaps"] = gaps;
    std::cout << report.dump(2) << '\n';
    return kExitOk;
  } catch (const ParseError& e) {
    report["ok"] = false;
    report["error"] = e.what();
    report["line"] = e.line;
    std::cout << report.dump(2) << '\n';
    return kExitValidation;
  }
}

int cmd_classify(const std::string& input, const std::string& out_dir,
                 const RunConfig& config) {
  RunLog log;
  const Dataset data = load_dataset(input, config, log);
  const WindowPolicy policy = config.window_policy();
  std::ostringstream csv;
  csv << "patient_id,visit_index,gap_months,rec_months,censored,valid,"
         "event_category,very_early_time,early_time,in_window_time,late_time,"
         "very_late_time\n";
  std::size_t n_gaps = 0, n_invalid = 0;
  for (const auto& rows : data.patients) {
    for (const VisitRow& row : rows) {
      if (!row.gap_forward) continue;
      ++n_gaps;
      const RiskDecomposition dec = decompose_risk(
          *row.gap_forward, row.rec_interval, row.censored, policy);
      if (!dec.valid) ++n_invalid;
      csv << row.patient_id << ',' << row.visit_index << ','
          << fmt_double(*row.gap_forward) << ',' << opt_str(row.rec_interval)
          << ',' << (row.censored ? 1 : 0) << ',' << (dec.valid ? 1 : 0) << ','
          << (dec.event_category ? category_name(*dec.event_category)
                                 : std::string_view());
      for (int c = 0; c < kNumCategories; ++c)
        csv << ',' << opt_str(dec.time_at_risk[c]);
      csv << '\n';
    }
  }
  log.note("classified " + std::to_string(n_gaps) + " gaps (" +
           std::to_string(n_invalid) + " without a recommendation)");
  write_file(fs::path(out_dir) / "gaps.csv", csv.str());
  write_run_files(out_dir, config, log);
  return kExitOk;
}

int cmd_diagnose(const std::string& input, const std::string& out_dir,
                 const RunConfig& config) {
  RunLog log;
  const Dataset data = load_dataset(input, config, log);
  const WindowPolicy policy = config.window_policy();
  const DiagnosticsReport report = run_diagnostics(data, policy);

  json j;
  j["mad"] = {{"unadjusted", report.mad.unadjusted},
              {"adjusted", report.mad.adjusted},
              {"n_gaps", report.mad.n_gaps},
              {"clamped", report.mad.clamped}};
  if (report.mad.fraction)
    j["mad"]["fraction"] = *report.mad.fraction;
  else
    j["mad"]["fraction"] = nullptr;
  json cats;
  for (int c = 0; c < kNumCategories; ++c) {
    const auto name =
        std::string(category_name(static_cast<VisitCategory>(c)));
    cats["counts"][name] = report.categories.counts[c];
    cats["proportions"][name] = report.categories.proportions[c];
  }
  cats["total"] = report.categories.total;
  j["categories"] = cats;
  j["intervals"] = {
      {"observed", quantile_json(report.intervals.observed)},
      {"recommended", quantile_json(report.intervals.recommended)},
      {"ratio", quantile_json(report.intervals.ratio)},
      {"difference", quantile_json(report.intervals.difference)},
      {"das", quantile_json(report.intervals.das)}};
  j["n_gaps_missing_rec"] = report.n_gaps_missing_rec;

  const std::vector<double> taus = {0.05, 0.25, 0.75, 0.95};
  std::ostringstream bands_csv;
  bands_csv << "R,tau,value,scale\n";
  for (const BandScale scale : {BandScale::kDifference, BandScale::kRatio}) {
    const AgreementBands bands =
        agreement_bands(data, taus, scale, config.integer("basis.r_df"));
    const char* name =
        scale == BandScale::kDifference ? "difference" : "ratio";
    if (bands.crossing_warning)
      log.warn(std::string("quantile crossing in the ") + name + " bands");
    for (std::size_t ti = 0; ti < bands.taus.size(); ++ti)
      for (std::size_t k = 0; k < bands.r_grid.size(); ++k)
        bands_csv << fmt_double(bands.r_grid[k]) << ','
                  << fmt_double(bands.taus[ti]) << ','
                  << fmt_double(bands.values[ti][k]) << ',' << name << '\n';
  }

  if (report.mad.fraction)
    log.note("MAD explained fraction: " + fmt_double(*report.mad.fraction));
  log.note("gaps without a recommendation: " +
           std::to_string(report.n_gaps_missing_rec));
  write_file(fs::path(out_dir) / "diagnostics.json", j.dump(2) + "\n");
  write_file(fs::path(out_dir) / "bands.csv", bands_csv.str());
  write_run_files(out_dir, config, log);
  return kExitOk;
}

int cmd_fit_aar(const std::string& input, const std::string& out_dir,
                const RunConfig& config) {
  RunLog log;
  const AarPipeline p = build_aar(input, config, log, false);
  const WindowPolicy policy = config.window_policy();
  const double timerange = config.num("auc.timerange");
  const double increment = config.num("auc.increment");

  const SplineBasisSpec time_basis =
      make_outcome_basis(p.data, p.weights, config.integer("basis.time_df"));
  const GeeFit unweighted =
      fit_outcome(p.data, p.weights, time_basis, FitWeighting::kUnitWeights,
                  "unweighted");
  const GeeFit weighted = fit_outcome(p.data, p.weights, time_basis,
                                      FitWeighting::kWeighted, "aar");
  const double auc_unweighted =
      trajectory_auc(unweighted, timerange, increment);
  const double auc_aar = trajectory_auc(weighted, timerange, increment);
  log.note("AUC unweighted: " + fmt_double(auc_unweighted));
  log.note("AUC IIW-GEE (AAR): " + fmt_double(auc_aar));

  write_file(fs::path(out_dir) / "weights.csv", weights_csv(p, policy));
  write_file(fs::path(out_dir) / "intensity_models.csv",
             intensity_models_csv(p.models));
  write_file(fs::path(out_dir) / "trajectory.csv",
             trajectory_csv(
                 {{"unweighted",
                   predict_trajectory(unweighted, 0.0, timerange, 0.1)},
                  {"aar", predict_trajectory(weighted, 0.0, timerange, 0.1)}}));
  json summary;
  summary["auc"] = {{"unweighted", auc_unweighted}, {"aar", auc_aar}};
  summary["rows"] = {{"used", weighted.n_rows_used},
                     {"dropped_missing_das", weighted.n_dropped_missing_das},
                     {"dropped_missing_weight",
                      weighted.n_dropped_missing_weight}};
  summary["weights"] = {{"defined", p.weights.n_defined()},
                        {"max_over_median", p.weights.max_over_median()}};
  summary["time_basis"] = {{"df", time_basis.df},
                           {"boundary_lo", time_basis.boundary_lo},
                           {"boundary_hi", time_basis.boundary_hi}};
  write_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  write_run_files(out_dir, config, log);
  return kExitOk;
}

int cmd_sensitivity(const std::string& input, const std::string& out_dir,
                    const RunConfig& config) {
  RunLog log;
  const AarPipeline p = build_aar(input, config, log, false);

  SensitivityOptions opt;
  opt.alpha_e_grid = {config.num("grid.alpha_e_start"),
                      config.num("grid.alpha_e_stop"),
                      config.num("grid.alpha_e_step")};
  opt.alpha_l_grid = {config.num("grid.alpha_l_start"),
                      config.num("grid.alpha_l_stop"),
                      config.num("grid.alpha_l_step")};
  opt.base_config = config.tilt_config();
  opt.policy = config.window_policy();
  opt.time_basis_df = config.integer("basis.time_df");
  opt.timerange = config.num("auc.timerange");
  opt.increment = config.num("auc.increment");
  opt.trajectory_cells = config.pair_list("sensitivity.trajectory_cells");
  opt.jobs = config.integer("jobs");

  const SensitivityGrid grid = run_grid(p.data, p.models, opt);
  int failures = 0;
  for (const auto& cell : grid.cells)
    if (!cell.auc) ++failures;
  if (failures > 0)
    log.warn(std::to_string(failures) + " of " +
             std::to_string(grid.cells.size()) + " grid cells failed");
  else
    log.note("grid complete: " + std::to_string(grid.cells.size()) +
             " cells");

  write_file(fs::path(out_dir) / "heatmap.csv", export_heatmap_csv(grid));
  std::ostringstream traj;
  traj << "alpha_e,alpha_l,time,mean_das\n";
  for (const auto& cell : grid.trajectories) {
    if (!cell.error.empty()) {
      log.warn("trajectory at (" + fmt_double(cell.alpha_e) + ", " +
               fmt_double(cell.alpha_l) + ") skipped: " + cell.error);
      continue;
    }
    for (std::size_t k = 0; k < cell.trajectory.times.size(); ++k)
      traj << fmt_double(cell.alpha_e) << ',' << fmt_double(cell.alpha_l)
           << ',' << fmt_double(cell.trajectory.times[k]) << ','
           << fmt_double(cell.trajectory.values[k]) << '\n';
  }
  write_file(fs::path(out_dir) / "trajectories.csv", traj.str());

  json summary;
  summary["cells"] = grid.cells.size();
  summary["failed_cells"] = failures;
  if (grid.at(0, 0).auc) summary["auc_at_origin"] = *grid.at(0, 0).auc;
  write_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  write_run_files(out_dir, config, log);
  return failures > 0 ? kExitPartialGrid : kExitOk;
}

int cmd_elicit(const std::string& input, const std::string& out_dir,
               const RunConfig& config) {
  RunLog log;
  const AarPipeline p = build_aar(input, config, log, false);
  if (!p.models.for_category(VisitCategory::kVeryEarly).fit)
    throw std::runtime_error(
        "very-early intensity model not fitted: " +
        p.models.for_category(VisitCategory::kVeryEarly).error);
  const bool use_normalizer = config.flag("elicit.use_normalizer");
  const TiltConfig base = config.tilt_config();
  const WindowPolicy policy = config.window_policy();

  const std::vector<double> r_set = config.num_list("elicit.r_set");
  for (double rec : r_set)
    if (rec < p.models.basis.boundary_lo || rec > p.models.basis.boundary_hi)
      log.warn("elicitation R = " + fmt_double(rec) +
               " clamps to the fitted basis range [" +
               fmt_double(p.models.basis.boundary_lo) + ", " +
               fmt_double(p.models.basis.boundary_hi) + "]");
  const std::vector<double> alphas = config.num_list("elicit.alphas");
  std::vector<double> d_grid;
  const double d_max = config.num("elicit.d_max");
  const double d_step = config.num("elicit.d_step");
  for (double d = 0.0; d <= d_max + 1e-12; d += d_step) d_grid.push_back(d);

  std::ostringstream csv;
  csv << "rec_months,alpha_e,d_increase,probability\n";
  for (double rec : r_set) {
    for (double alpha : alphas) {
      TiltConfig cfg = base;
      cfg.alpha_e = alpha;
      std::optional<NormalizerModels> norm;
      if (use_normalizer && alpha != 0.0)
        norm = fit_normalizers(p.data, cfg, p.models.basis, policy);
      const ElicitationCurve curve = elicitation_curve(
          rec, alpha, d_grid, p.models, norm ? &*norm : nullptr, cfg, policy);
      for (std::size_t k = 0; k + 1 < curve.probability.size(); ++k)
        if (curve.probability[k + 1] < curve.probability[k] - 1e-12)
          throw std::runtime_error(
              "elicitation curve not monotone in D (R = " + fmt_double(rec) +
              ", alpha = " + fmt_double(alpha) + ")");
      for (std::size_t k = 0; k < curve.d_grid.size(); ++k)
        csv << fmt_double(rec) << ',' << fmt_double(alpha) << ','
            << fmt_double(curve.d_grid[k]) << ','
            << fmt_double(curve.probability[k]) << '\n';
    }
  }

  NormalizerBuilder builder = [&](double alpha) {
    TiltConfig cfg = base;
    cfg.alpha_e = alpha;
    return fit_normalizers(p.data, cfg, p.models.basis, policy);
  };
  const PlausibleRange range = plausible_alpha_range(
      p.models, use_normalizer ? &builder : nullptr, r_set,
      {config.num("elicit.target_lo"), config.num("elicit.target_hi")}, base,
      policy);
  json j;
  j["targets"] = {config.num("elicit.target_lo"),
                  config.num("elicit.target_hi")};
  j["alpha_lo"] = range.alpha_lo;
  j["alpha_hi"] = range.alpha_hi;
  j["use_normalizer"] = use_normalizer;
  j["per_rec"] = json::array();
  for (const auto& per : range.per_rec)
    j["per_rec"].push_back({{"rec_months", per.rec},
                            {"alpha_at_lo_target", per.alpha_at_lo_target},
                            {"alpha_at_hi_target", per.alpha_at_hi_target}});
  log.note("plausible alpha range: [" + fmt_double(range.alpha_lo) + ", " +
           fmt_double(range.alpha_hi) + "]");

  write_file(fs::path(out_dir) / "elicitation_curves.csv", csv.str());
  write_file(fs::path(out_dir) / "plausible_range.json", j.dump(2) + "\n");
  write_run_files(out_dir, config, log);
  return kExitOk;
}

int cmd_simulate(const std::string& spec_path, const std::string& out_csv,
                 const std::string& truth_csv, int jobs,
                 const std::string& seed_override) {
  ScenarioSpec spec = parse_scenario(read_file(spec_path));
  if (!seed_override.empty()) spec.seed = std::stoull(seed_override);
  const Dataset data = simulate_dataset(spec, jobs);
  write_file(out_csv, serialize_dataset(data));
  std::cerr << "simulated " << data.patients.size() << " patients, "
            << data.n_rows() << " visits\n";
  if (!truth_csv.empty()) {
    const int n = static_cast<int>(spec.horizon_years / spec.truth_increment +
                                   1e-10);
    std::vector<double> grid(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k)
      grid[static_cast<std::size_t>(k)] = k * spec.truth_increment;
    const auto truth = true_mean(spec, grid);
    std::ostringstream csv;
    csv << "time,mean_das,se\n";
    for (const TruthPoint& point : truth)
      csv << fmt_double(point.t) << ',' << fmt_double(point.mean) << ','
          << fmt_double(point.se) << '\n';
    write_file(truth_csv, csv.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Visit-interval analysis: inverse-intensity-weighted trajectories and "
      "tilting-based sensitivity analysis for irregular longitudinal data"};
  app.require_subcommand(1);

  std::string input, out_dir, config_path;
  std::vector<std::string> overrides;
  int jobs_flag = 0;
  const auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("-i,--input", input, "input visit CSV")->required();
    if (needs_out)
      cmd->add_option("-o,--out", out_dir, "output directory")->required();
    cmd->add_option("-c,--config", config_path, "flat key=value config file");
    cmd->add_option("--set", overrides,
                    "override a config key (key=value, repeatable)");
    return cmd;
  };

  auto* validate = add_common(
      app.add_subcommand("validate", "parse and check the input"), false);
  auto* classify = add_common(
      app.add_subcommand("classify",
                         "per-gap visit categories and time at risk"),
      true);
  auto* diagnose = add_common(
      app.add_subcommand("diagnose",
                         "agreement diagnostics and summary shapes"),
      true);
  auto* fit_aar = add_common(
      app.add_subcommand("fit-aar",
                         "intensity models, weights, and the IIW-GEE"),
      true);
  auto* sensitivity = add_common(
      app.add_subcommand("sensitivity",
                         "AUC over the (alpha_e, alpha_l) grid"),
      true);
  sensitivity->add_option("--jobs", jobs_flag, "parallel grid cells");
  auto* elicit = add_common(
      app.add_subcommand("elicit",
                         "elicitation curves and the plausible alpha range"),
      true);

  auto* simulate_cmd =
      app.add_subcommand("simulate", "generate a synthetic cohort");
  std::string spec_path, sim_out, sim_truth, sim_seed;
  int sim_jobs = 1;
  simulate_cmd->add_option("--spec", spec_path, "scenario key=value file")
      ->required();
  simulate_cmd->add_option("--out", sim_out, "output dataset CSV")->required();
  simulate_cmd->add_option("--truth", sim_truth, "output truth CSV");
  simulate_cmd->add_option("--jobs", sim_jobs, "parallel patients");
  simulate_cmd->add_option("--seed", sim_seed, "override the scenario seed");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config;
    if (!config_path.empty()) config.load_file(config_path);
    config.apply_overrides(overrides);
    if (jobs_flag > 0) config.set("jobs", std::to_string(jobs_flag));

    if (validate->parsed()) return cmd_validate(input, config);
    if (classify->parsed()) return cmd_classify(input, out_dir, config);
    if (diagnose->parsed()) return cmd_diagnose(input, out_dir, config);
    if (fit_aar->parsed()) return cmd_fit_aar(input, out_dir, config);
    if (sensitivity->parsed()) return cmd_sensitivity(input, out_dir, config);
    if (elicit->parsed()) return cmd_elicit(input, out_dir, config);
    if (simulate_cmd->parsed())
      return cmd_simulate(spec_path, sim_out, sim_truth, sim_jobs, sim_seed);
  } catch (const ParseError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
