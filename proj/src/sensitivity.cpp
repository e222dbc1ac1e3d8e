#include "visits/sensitivity.hpp"

#include "visits/format.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace visits {

namespace {

constexpr double kTwoWeeksMonths = 2.0 / UnitConstants::weeks_per_month;

}  // namespace

std::vector<double> GridSpec::values() const {
  if (!(step > 0)) throw std::invalid_argument("grid step must be positive");
  if (stop < start) throw std::invalid_argument("grid stop before start");
  const int n = static_cast<int>(std::floor((stop - start) / step + 1e-10));
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k)
    out[static_cast<std::size_t>(k)] = start + k * step;
  return out;
}

bool SensitivityGrid::complete() const {
  return std::all_of(cells.begin(), cells.end(),
                     [](const SensitivityCell& c) { return c.auc.has_value(); });
}

SensitivityGrid run_grid(const Dataset& data, const IntensityModelSet& models,
                         const SensitivityOptions& options) {
  SensitivityGrid grid;
  grid.alpha_e = options.alpha_e_grid.values();
  grid.alpha_l = options.alpha_l_grid.values();
  grid.cells.resize(grid.alpha_e.size() * grid.alpha_l.size());

  // The row filter (outcome + defined weight) does not depend on alpha, so
  // one time basis serves every cell and the (0,0) cell reproduces the AAR
  // fit exactly.
  const WeightTable aar_weights = compute_weights(data, models, options.policy);
  const SplineBasisSpec time_basis =
      make_outcome_basis(data, aar_weights, options.time_basis_df);

  const auto run_cell = [&](std::size_t ei, std::size_t li,
                            SensitivityCell& cell) {
    cell.alpha_e = grid.alpha_e[ei];
    cell.alpha_l = grid.alpha_l[li];
    try {
      TiltConfig config = options.base_config;
      config.alpha_e = cell.alpha_e;
      config.alpha_l = cell.alpha_l;
      const NormalizerModels normalizers =
          fit_normalizers(data, config, models.basis, options.policy);
      const WeightTable weights = compute_tilted_weights(
          data, models, normalizers, config, options.policy);
      const GeeFit fit =
          fit_outcome(data, weights, time_basis, FitWeighting::kWeighted,
                      "anar");
      cell.auc = trajectory_auc(fit, options.timerange, options.increment);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  };

  const std::size_t n_cells = grid.cells.size();
  const int workers = std::max(1, options.jobs);
  if (workers == 1) {
    for (std::size_t k = 0; k < n_cells; ++k)
      run_cell(k / grid.alpha_l.size(), k % grid.alpha_l.size(),
               grid.cells[k]);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t k = static_cast<std::size_t>(w); k < n_cells;
             k += static_cast<std::size_t>(workers))
          run_cell(k / grid.alpha_l.size(), k % grid.alpha_l.size(),
                   grid.cells[k]);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& [ae, al] : options.trajectory_cells) {
    CellTrajectory traj;
    traj.alpha_e = ae;
    traj.alpha_l = al;
    try {
      TiltConfig config = options.base_config;
      config.alpha_e = ae;
      config.alpha_l = al;
      const NormalizerModels normalizers =
          fit_normalizers(data, config, models.basis, options.policy);
      const WeightTable weights = compute_tilted_weights(
          data, models, normalizers, config, options.policy);
      const GeeFit fit = fit_outcome(data, weights, time_basis,
                                     FitWeighting::kWeighted, "anar");
      traj.trajectory = predict_trajectory(fit, 0.0, options.timerange,
                                           options.trajectory_increment);
    } catch (const std::exception& e) {
      traj.error = e.what();
    }
    grid.trajectories.push_back(std::move(traj));
  }
  return grid;
}

std::string export_heatmap_csv(const SensitivityGrid& grid) {
  std::ostringstream out;
  out << "alpha_e,alpha_l,auc,auc_rounded,status\n";
  for (std::size_t ei = 0; ei < grid.alpha_e.size(); ++ei) {
    for (std::size_t li = 0; li < grid.alpha_l.size(); ++li) {
      const SensitivityCell& cell = grid.at(ei, li);
      out << fmt_double(cell.alpha_e) << ',' << fmt_double(cell.alpha_l)
          << ',';
      if (cell.auc) {
        const double rounded = std::round(*cell.auc * 10.0) / 10.0;
        out << fmt_double(*cell.auc) << ',' << fmt_double(rounded) << ",ok\n";
      } else {
        std::string msg = cell.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        out << ",,error: " << msg << '\n';
      }
    }
  }
  return out.str();
}

SensitivityGrid parse_heatmap_csv(std::string_view csv) {
  SensitivityGrid grid;
  std::vector<SensitivityCell> cells;
  std::size_t pos = 0;
  bool header = true;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string_view::npos) eol = csv.size();
    const std::string line(csv.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != "alpha_e,alpha_l,auc,auc_rounded,status")
        throw std::runtime_error("heatmap csv: unexpected header");
      header = false;
      continue;
    }
    SensitivityCell cell;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (int k = 0; k < 4; ++k) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos)
        throw std::runtime_error("heatmap csv: malformed row");
      f.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    f.push_back(line.substr(start));
    cell.alpha_e = std::stod(f[0]);
    cell.alpha_l = std::stod(f[1]);
    if (f[4] == "ok") cell.auc = std::stod(f[2]);
    else cell.error = f[4];
    cells.push_back(std::move(cell));
  }
  for (const SensitivityCell& c : cells) {
    if (grid.alpha_e.empty() || grid.alpha_e.back() != c.alpha_e) {
      if (std::find(grid.alpha_e.begin(), grid.alpha_e.end(), c.alpha_e) ==
          grid.alpha_e.end())
        grid.alpha_e.push_back(c.alpha_e);
    }
    if (std::find(grid.alpha_l.begin(), grid.alpha_l.end(), c.alpha_l) ==
        grid.alpha_l.end())
      grid.alpha_l.push_back(c.alpha_l);
  }
  if (cells.size() != grid.alpha_e.size() * grid.alpha_l.size())
    throw std::runtime_error("heatmap csv: not a full grid");
  grid.cells = std::move(cells);
  return grid;
}

double elicitation_probability(double rec, double d_increase, double alpha_e,
                               const IntensityModelSet& models,
                               const NormalizerModels* normalizers,
                               const TiltConfig& config,
                               const WindowPolicy& policy) {
  if (!(rec > policy.very_early_offset))
    throw std::runtime_error("very-early window empty for R = " +
                             fmt_double(rec));
  const double rate =
      predict_intensity(models, rec, VisitCategory::kVeryEarly);
  double tilted = rate;
  if (alpha_e != 0.0) {
    const double c_hat =
        normalizers ? normalizers->predict_early(rec) : 1.0;
    tilted = rate * c_hat * std::exp(alpha_e * q_value(d_increase, config));
  }
  return 1.0 - std::exp(-tilted * kTwoWeeksMonths);
}

ElicitationCurve elicitation_curve(double rec, double alpha_e,
                                   std::span<const double> d_grid,
                                   const IntensityModelSet& models,
                                   const NormalizerModels* normalizers,
                                   const TiltConfig& config,
                                   const WindowPolicy& policy) {
  ElicitationCurve curve;
  curve.rec = rec;
  curve.alpha = alpha_e;
  curve.d_grid.assign(d_grid.begin(), d_grid.end());
  curve.probability.reserve(d_grid.size());
  for (double d : d_grid)
    curve.probability.push_back(elicitation_probability(
        rec, d, alpha_e, models, normalizers, config, policy));
  return curve;
}

namespace {

// D -> infinity pushes q to 1, so the asymptote needs only the rate and the
// alpha-specific normalizer value.
double asymptote(double alpha, double rec, const IntensityModelSet& models,
                 const NormalizerBuilder* builder) {
  const double rate =
      predict_intensity(models, rec, VisitCategory::kVeryEarly);
  const double c_hat = builder ? (*builder)(alpha).predict_early(rec) : 1.0;
  return 1.0 - std::exp(-rate * c_hat * std::exp(alpha) * kTwoWeeksMonths);
}

double solve_alpha(double target, double rec, const IntensityModelSet& models,
                   const NormalizerBuilder* builder) {
  constexpr double kLo = 0.0;
  constexpr double kHi = 50.0;
  const double f_lo = asymptote(kLo, rec, models, builder) - target;
  const double f_hi = asymptote(kHi, rec, models, builder) - target;
  if (f_lo > 0 || f_hi < 0)
    throw std::runtime_error("elicitation target " + fmt_double(target) +
                             " unreachable within alpha in [0,50] for R = " +
                             fmt_double(rec));
  if (f_lo == 0) return kLo;
  double lo = kLo, hi = kHi;
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double f = asymptote(mid, rec, models, builder) - target;
    if (f < 0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

PlausibleRange plausible_alpha_range(const IntensityModelSet& models,
                                     const NormalizerBuilder* builder,
                                     std::span<const double> rec_set,
                                     std::pair<double, double> targets,
                                     const TiltConfig& config,
                                     const WindowPolicy& policy) {
  (void)config;
  if (rec_set.empty())
    throw std::invalid_argument("plausible_alpha_range: empty R set");
  PlausibleRange out;
  bool first = true;
  for (double rec : rec_set) {
    if (!(rec > policy.very_early_offset))
      throw std::runtime_error("very-early window empty for R = " +
                               fmt_double(rec));
    PlausibleRange::PerRec per;
    per.rec = rec;
    per.alpha_at_lo_target = solve_alpha(targets.first, rec, models, builder);
    per.alpha_at_hi_target = solve_alpha(targets.second, rec, models, builder);
    if (first) {
      out.alpha_lo = per.alpha_at_lo_target;
      out.alpha_hi = per.alpha_at_hi_target;
      first = false;
    } else {
      out.alpha_lo = std::min(out.alpha_lo, per.alpha_at_lo_target);
      out.alpha_hi = std::max(out.alpha_hi, per.alpha_at_hi_target);
    }
    out.per_rec.push_back(per);
  }
  return out;
}

}  // namespace visits
