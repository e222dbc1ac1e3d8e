#include "visits/outcome.hpp"

#include <cmath>
#include <stdexcept>

namespace visits {

namespace {

struct OutcomeRows {
  std::vector<double> times;
  std::vector<double> das;
  std::vector<double> weights;
  std::vector<int> cluster;
  int dropped_das = 0;
  int dropped_weight = 0;
};

OutcomeRows collect_rows(const Dataset& data, const WeightTable& weights) {
  if (weights.per_patient.size() != data.patients.size())
    throw std::invalid_argument("fit_outcome: weight table shape mismatch");
  OutcomeRows out;
  for (std::size_t pi = 0; pi < data.patients.size(); ++pi) {
    const auto& rows = data.patients[pi];
    const auto& wrows = weights.per_patient[pi];
    if (wrows.size() != rows.size())
      throw std::invalid_argument("fit_outcome: weight table shape mismatch");
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (!rows[j].das) {
        ++out.dropped_das;
        continue;
      }
      if (!wrows[j].final_weight) {
        ++out.dropped_weight;
        continue;
      }
      out.times.push_back(rows[j].time_since_dx);
      out.das.push_back(*rows[j].das);
      out.weights.push_back(*wrows[j].final_weight);
      out.cluster.push_back(static_cast<int>(pi));
    }
  }
  return out;
}

}  // namespace

SplineBasisSpec make_outcome_basis(const Dataset& data,
                                   const WeightTable& weights, int df) {
  const OutcomeRows rows = collect_rows(data, weights);
  if (rows.times.empty())
    throw std::runtime_error("make_outcome_basis: no usable rows");
  return make_quantile_basis(rows.times, df);
}

GeeFit fit_outcome(const Dataset& data, const WeightTable& weights,
                   const SplineBasisSpec& time_basis, FitWeighting weighting,
                   std::string label) {
  OutcomeRows rows = collect_rows(data, weights);
  const Eigen::Index n = static_cast<Eigen::Index>(rows.times.size());
  if (n < time_basis.df + 1)
    throw std::runtime_error("fit_outcome: fewer rows than basis coefficients");

  const Eigen::MatrixXd X = design_with_intercept(rows.times, time_basis);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(rows.das.data(), n);
  Eigen::VectorXd w =
      weighting == FitWeighting::kWeighted
          ? Eigen::Map<const Eigen::VectorXd>(rows.weights.data(), n).eval()
          : Eigen::VectorXd::Ones(n).eval();

  GeeFit fit;
  fit.fit = fit_wls(X, y, w, rows.cluster);
  fit.time_basis = time_basis;
  fit.weight_label = std::move(label);
  fit.n_rows_used = static_cast<int>(n);
  fit.n_dropped_missing_das = rows.dropped_das;
  fit.n_dropped_missing_weight = rows.dropped_weight;
  return fit;
}

std::vector<double> uniform_grid(double from, double to, double by) {
  if (!(by > 0)) throw std::invalid_argument("uniform_grid: by must be positive");
  if (!(to > from)) throw std::invalid_argument("uniform_grid: to must exceed from");
  // R's seq(): n = floor((to - from) / by) with a fuzz against binary error.
  const int n = static_cast<int>(std::floor((to - from) / by + 1e-10));
  std::vector<double> grid(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) grid[static_cast<std::size_t>(k)] = from + k * by;
  return grid;
}

TrajectoryGrid predict_trajectory(const GeeFit& fit, double t_start,
                                  double t_end, double increment) {
  TrajectoryGrid out;
  out.times = uniform_grid(t_start, t_end, increment);
  const Eigen::MatrixXd X = design_with_intercept(out.times, fit.time_basis);
  const Eigen::VectorXd pred = X * fit.fit.coef;
  out.values.assign(pred.data(), pred.data() + pred.size());
  return out;
}

double trajectory_auc(const GeeFit& fit, double timerange, double increment) {
  const TrajectoryGrid grid = predict_trajectory(fit, 0.0, timerange, increment);
  return trapezoid_integral(grid.values, increment);
}

}  // namespace visits
