#pragma once

#include "visits/dataset.hpp"
#include "visits/intensity.hpp"
#include "visits/numerics.hpp"

#include <string>
#include <vector>

namespace visits {

/// Marginal outcome model: weighted least squares of the outcome on a
/// time-since-diagnosis spline with working independence, cluster-robust
/// covariance by patient.
struct GeeFit {
  LinearFit fit;
  SplineBasisSpec time_basis;
  std::string weight_label;
  int n_rows_used = 0;
  int n_dropped_missing_das = 0;
  int n_dropped_missing_weight = 0;
};

enum class FitWeighting { kWeighted, kUnitWeights };

/// Fits on the rows that have both an observed outcome and a defined weight;
/// the unit-weight variant uses exactly the same rows so the weighted and
/// unweighted models see identical data.
GeeFit fit_outcome(const Dataset& data, const WeightTable& weights,
                   const SplineBasisSpec& time_basis,
                   FitWeighting weighting = FitWeighting::kWeighted,
                   std::string label = "aar");

/// Time basis built from the rows fit_outcome would use.
SplineBasisSpec make_outcome_basis(const Dataset& data,
                                   const WeightTable& weights, int df);

struct TrajectoryGrid {
  std::vector<double> times;
  std::vector<double> values;
};

/// Basis evaluated on seq(t_start, t_end, by=increment), clamped at the
/// boundary knots, times the coefficients.
TrajectoryGrid predict_trajectory(const GeeFit& fit, double t_start,
                                  double t_end, double increment);

double trajectory_auc(const GeeFit& fit, double timerange = 7.0,
                      double increment = 0.007);

/// seq(from, to, by): grid the R code builds for prediction and the AUC.
std::vector<double> uniform_grid(double from, double to, double by);

}  // namespace visits
