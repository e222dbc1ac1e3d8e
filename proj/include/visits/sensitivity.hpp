#pragma once

#include "visits/dataset.hpp"
#include "visits/intensity.hpp"
#include "visits/outcome.hpp"
#include "visits/tilt.hpp"
#include "visits/windows.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace visits {

struct GridSpec {
  double start = 0.0;
  double stop = 7.0;
  double step = 0.5;

  std::vector<double> values() const;
};

struct SensitivityCell {
  double alpha_e = 0.0;
  double alpha_l = 0.0;
  std::optional<double> auc;
  std::string error;  // set when this cell failed
};

struct CellTrajectory {
  double alpha_e = 0.0;
  double alpha_l = 0.0;
  TrajectoryGrid trajectory;
  std::string error;  // set when this cell's refit failed
};

/// AUC of the tilted IIW-GEE over the (alpha_e, alpha_l) grid, row-major in
/// alpha_e then alpha_l. Failed cells carry their error and are skipped.
struct SensitivityGrid {
  std::vector<double> alpha_e;
  std::vector<double> alpha_l;
  std::vector<SensitivityCell> cells;
  std::vector<CellTrajectory> trajectories;

  const SensitivityCell& at(std::size_t ei, std::size_t li) const {
    return cells[ei * alpha_l.size() + li];
  }
  bool complete() const;
};

struct SensitivityOptions {
  GridSpec alpha_e_grid;
  GridSpec alpha_l_grid;
  TiltConfig base_config;  // alphas ignored; q and normalizer-row policy used
  WindowPolicy policy;
  int time_basis_df = 3;
  double timerange = 7.0;
  double increment = 0.007;
  double trajectory_increment = 0.1;
  std::vector<std::pair<double, double>> trajectory_cells;
  int jobs = 1;
};

/// Per cell: normalizer fits, tilted weights, outcome fit, AUC. Cells are
/// independent; results do not depend on the job count.
SensitivityGrid run_grid(const Dataset& data, const IntensityModelSet& models,
                         const SensitivityOptions& options);

std::string export_heatmap_csv(const SensitivityGrid& grid);
SensitivityGrid parse_heatmap_csv(std::string_view csv);

/// Probability of a visit within the next two weeks for a patient in the
/// very-early window, at the tilted intensity: 1 - exp(-rate * 2/4.345).
/// Pass normalizers = nullptr for the plain c_hat = 1 variant.
double elicitation_probability(double rec, double d_increase, double alpha_e,
                               const IntensityModelSet& models,
                               const NormalizerModels* normalizers,
                               const TiltConfig& config,
                               const WindowPolicy& policy = {});

struct ElicitationCurve {
  double rec = 0.0;
  double alpha = 0.0;
  std::vector<double> d_grid;
  std::vector<double> probability;
};

ElicitationCurve elicitation_curve(double rec, double alpha_e,
                                   std::span<const double> d_grid,
                                   const IntensityModelSet& models,
                                   const NormalizerModels* normalizers,
                                   const TiltConfig& config,
                                   const WindowPolicy& policy = {});

struct PlausibleRange {
  struct PerRec {
    double rec = 0.0;
    double alpha_at_lo_target = 0.0;
    double alpha_at_hi_target = 0.0;
  };
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
  std::vector<PerRec> per_rec;
};

/// Smallest alpha whose D->inf asymptote reaches the low target and largest
/// reaching the high one, searched by bisection over [0, 50] per R. The
/// builder supplies alpha-specific normalizer fits; pass nullptr for c=1.
using NormalizerBuilder = std::function<NormalizerModels(double alpha_e)>;

PlausibleRange plausible_alpha_range(
    const IntensityModelSet& models, const NormalizerBuilder* builder,
    std::span<const double> rec_set,
    std::pair<double, double> targets = {0.6, 0.99},
    const TiltConfig& config = {}, const WindowPolicy& policy = {});

}  // namespace visits
