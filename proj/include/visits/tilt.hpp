#pragma once

#include "visits/dataset.hpp"
#include "visits/intensity.hpp"
#include "visits/numerics.hpp"
#include "visits/windows.hpp"

#include <optional>

namespace visits {

/// Which gaps feed the normalizing-constant regressions: every gap with an
/// observed outcome change (matching the reference computation) or only the
/// out-of-window ones.
enum class NormalizerRows { kAll, kOutOfWindow };

struct TiltConfig {
  double alpha_e = 0.0;
  double alpha_l = 0.0;
  double q_mean = 3.0;
  double q_sd = 1.0;
  NormalizerRows normalizer_rows = NormalizerRows::kAll;
};

/// Phi((D - q_mean) / q_sd): the tilting-curve building block. Callers apply
/// the alpha multiplier.
double q_value(double d_increase, const TiltConfig& config = {});

/// The two normalizing-constant regressions: exp(-alpha * q(D)) on a spline
/// basis of R, one per alpha side. Fitted values estimate
/// E[exp(-alpha q(D)) | R, visit occurred].
struct NormalizerModels {
  SplineBasisSpec basis;
  LinearFit early;
  LinearFit late;
  double alpha_e = 0.0;
  double alpha_l = 0.0;

  double predict_early(double rec) const;
  double predict_late(double rec) const;
};

NormalizerModels fit_normalizers(const Dataset& data, const TiltConfig& config,
                                 const SplineBasisSpec& basis,
                                 const WindowPolicy& policy = {});

/// Tilts an AAR rate per the category-specific exponential-tilting model:
/// out-of-window rates become rate * c_hat(R) * exp(alpha * q(D)), in-window
/// rates are unchanged. Absent when D is needed but missing.
std::optional<double> tilted_intensity(double aar_rate, VisitCategory category,
                                       std::optional<double> d_increase,
                                       double rec,
                                       const NormalizerModels& normalizers,
                                       const TiltConfig& config);

/// Same alignment pipeline as compute_weights, applied to tilted rates.
WeightTable compute_tilted_weights(const Dataset& data,
                                   const IntensityModelSet& models,
                                   const NormalizerModels& normalizers,
                                   const TiltConfig& config,
                                   const WindowPolicy& policy = {});

}  // namespace visits
