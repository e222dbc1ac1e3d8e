#pragma once

#include "visits/dataset.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace visits {

/// Maps the score seen at a visit to the recommended interval until the next
/// one. Steps are (min score, interval) pairs, descending by score; the last
/// step catches everything below the other thresholds.
struct PhysicianRule {
  struct Step {
    double min_das;
    double interval_months;
  };
  std::vector<Step> steps;

  double interval_for(double das) const;
};

PhysicianRule default_rule();

enum class Mechanism { kAcar, kAar, kAnar };

/// Synthetic cohort generator with known truth. The latent score is
/// mu(t) = a + b*exp(-c*t) plus a patient intercept and an
/// Ornstein-Uhlenbeck wiggle. Visits: ACAR follows a fixed interval, AAR
/// follows the physician rule applied to the observed score with lognormal
/// adherence noise, and ANAR adds Poisson flares that bump the latent score
/// and pull the next visit forward after a short delay.
struct ScenarioSpec {
  Mechanism mechanism = Mechanism::kAar;
  int n_patients = 100;
  double horizon_years = 7.0;

  double mean_a = 1.5;
  double mean_b = 5.5;
  double mean_c = 0.9;
  double between_sd = 0.8;
  double within_sd = 0.45;
  double noise_corr_months = 3.0;

  PhysicianRule rule = default_rule();
  double rec_jitter_sd = 0.0;       // log-scale jitter on the recommendation
  double adherence_sd = 0.2;        // log-scale gap noise
  double adherence_wide_sd = 0.0;   // occasional larger deviations
  double adherence_wide_prob = 0.0;
  double acar_interval_months = 3.0;

  double flare_rate_per_year = 0.0;
  double flare_bump_lo = 2.0;
  double flare_bump_hi = 4.0;
  double flare_decay_months = 1.0;
  double flare_visit_delay_months = 0.25;

  bool round_das = true;
  bool clamp_das = true;
  std::uint64_t seed = 1;

  int truth_draws = 100000;
  double truth_increment = 0.007;

  void validate() const;
  double mean_at(double t_years) const;
};

struct TruthPoint {
  double t = 0.0;
  double mean = 0.0;
  double se = 0.0;  // zero for the closed form
};

struct SimOutput {
  Dataset dataset;
  std::vector<TruthPoint> truth;
};

/// Marginal mean of the recorded score at each grid time: the closed form
/// mu(t) when no rounding, clamping, or flares intervene, otherwise a
/// seeded Monte-Carlo oracle with its standard error.
std::vector<TruthPoint> true_mean(const ScenarioSpec& spec,
                                  std::span<const double> t_grid,
                                  int mc_draws = 0 /* 0: spec.truth_draws */);

SimOutput simulate(const ScenarioSpec& spec, int jobs = 1);

/// Dataset only, skipping the truth grid.
Dataset simulate_dataset(const ScenarioSpec& spec, int jobs = 1);

/// Flat key=value scenario file (one `key = value` per line, # comments).
ScenarioSpec parse_scenario(std::string_view text);
std::string serialize_scenario(const ScenarioSpec& spec);

}  // namespace visits
