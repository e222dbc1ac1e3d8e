#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace visits {

/// Layout of a degree-k B-spline basis with fixed knots. `df` is the number
/// of basis columns produced: the full (partition-of-unity) basis when
/// `include_intercept` is true, otherwise the same basis with its first
/// column dropped so the caller can prepend a constant column.
struct SplineBasisSpec {
  int degree = 3;
  int df = 3;
  bool include_intercept = false;
  double boundary_lo = 0.0;
  double boundary_hi = 1.0;
  std::vector<double> interior_knots;  // sorted, strictly inside the boundary
};

/// Builds a spec whose interior knots sit at equally spaced quantiles of xs
/// and whose boundary knots are the data range.
SplineBasisSpec make_quantile_basis(std::span<const double> xs, int df,
                                    int degree = 3,
                                    bool include_intercept = false);

/// Evaluates the basis at each x (rows) by Cox-de Boor recursion.
/// Points outside the boundary are clamped; *n_clamped, when given, receives
/// the count.
Eigen::MatrixXd bspline_basis(std::span<const double> xs,
                              const SplineBasisSpec& spec,
                              int* n_clamped = nullptr);

/// [1 | basis] design matrix, the usual regression layout.
Eigen::MatrixXd design_with_intercept(std::span<const double> xs,
                                      const SplineBasisSpec& spec,
                                      int* n_clamped = nullptr);

struct LinearFit {
  Eigen::VectorXd coef;
  std::optional<Eigen::MatrixXd> cov;  // cluster-robust sandwich when computed
  int iterations = 0;
  double objective = 0.0;  // log-likelihood or loss at the solution
};

/// Weighted least squares with a cluster-robust sandwich covariance.
/// cluster holds one integer label per row.
LinearFit fit_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights, std::span<const int> cluster);

/// Exponential survival regression on the log-rate scale: maximizes
/// sum_i d_i*eta_i - t_i*exp(eta_i) with eta = X*gamma, by Newton-Raphson
/// with step halving. X's first column must be the intercept.
LinearFit fit_exponential_survival(const Eigen::VectorXd& exposure,
                                   const Eigen::VectorXd& events,
                                   const Eigen::MatrixXd& X);

/// Quantile regression: minimizes sum_i rho_tau(y_i - x_i*beta) by vertex
/// exchange on the piecewise-linear objective.
LinearFit fit_quantile_reg(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                           double tau);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

/// Uniform-grid trapezoid rule: dx everywhere, dx/2 at the two endpoints.
double trapezoid_integral(std::span<const double> values, double dx);

/// Type-7 quantile (linear interpolation at p*(n-1)+1) of an unsorted sample.
double quantile_type7(std::vector<double> values, double p);

}  // namespace visits
