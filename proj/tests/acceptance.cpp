// Acceptance suite: one test case per criterion, one PASS/FAIL line each.
// The heavier cases run the same scenarios end to end that the CLI exposes;
// the CLI binary itself is exercised for the determinism criterion.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "visits/dataset.hpp"
#include "visits/diagnostics.hpp"
#include "visits/intensity.hpp"
#include "visits/numerics.hpp"
#include "visits/outcome.hpp"
#include "visits/sensitivity.hpp"
#include "visits/simulator.hpp"
#include "visits/tilt.hpp"
#include "visits/windows.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace visits;
namespace fs = std::filesystem;

namespace {

using clock_type = std::chrono::steady_clock;

double elapsed_s(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

struct Criterion {
  int number;
  std::string name;
  bool ok = true;
  clock_type::time_point start = clock_type::now();

  void expect(bool condition) { ok = ok && condition; }
  ~Criterion() {
    std::printf("criterion %d: %s  [%s]  (%.2fs)\n", number,
                ok ? "PASS" : "FAIL", name.c_str(), elapsed_s(start));
    std::fflush(stdout);
  }
};

std::string worked_example_csv() {
  std::ostringstream out;
  out << "id,date,time_since_dx,DAS,S,censor,R\n";
  double t = 0.0383;
  const double gaps[6] = {0.690, 0.460, 1.38, 2.30, 4.14, 4.60};
  const char* das[7] = {"10", "10", "7", "", "5", "3", "4"};
  const char* rec[7] = {"0.460", "0.460", "2", "2", "", "2", ""};
  for (int j = 0; j < 7; ++j) {
    out << "1,,";
    out.precision(17);
    out << t << ',' << das[j] << ',';
    if (j < 6) out << gaps[j];
    out << ",0," << rec[j] << '\n';
    if (j < 6) t += gaps[j] / 12.0;
  }
  return out.str();
}

ScenarioSpec aar_scenario(int n_patients, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.mechanism = Mechanism::kAar;
  spec.n_patients = n_patients;
  spec.seed = seed;
  spec.rec_jitter_sd = 0.08;
  spec.adherence_wide_sd = 0.6;
  spec.adherence_wide_prob = 0.12;
  spec.round_das = false;
  spec.clamp_das = true;
  return spec;
}

ScenarioSpec anar_scenario(int n_patients, std::uint64_t seed) {
  ScenarioSpec spec = aar_scenario(n_patients, seed);
  spec.mechanism = Mechanism::kAnar;
  spec.flare_rate_per_year = 1.2;
  spec.flare_bump_lo = 2.0;
  spec.flare_bump_hi = 4.0;
  spec.flare_decay_months = 1.0;
  spec.flare_visit_delay_months = 0.25;
  return spec;
}

double truth_auc(const ScenarioSpec& spec) {
  const auto grid = uniform_grid(0.0, spec.horizon_years, 0.007);
  const auto truth = true_mean(spec, grid);
  std::vector<double> values;
  values.reserve(truth.size());
  for (const auto& p : truth) values.push_back(p.mean);
  return trapezoid_integral(values, 0.007);
}

// Three patients covering all five gap categories with observed changes.
std::string three_patient_csv() {
  std::ostringstream out;
  out << "id,date,time_since_dx,DAS,S,censor,R\n";
  const double recs[3][6] = {{3.0, 4.0, 5.0, 3.5, 4.5, 6.0},
                             {4.0, 5.0, 3.0, 6.0, 3.5, 4.5},
                             {5.0, 3.0, 4.0, 4.5, 6.0, 3.5}};
  const int pattern[3][6] = {{0, 1, 2, 3, 4, 2}, {2, 0, 3, 1, 2, 4},
                             {1, 2, 4, 0, 3, 2}};
  const int das[3][7] = {{3, 6, 2, 8, 4, 5, 7}, {5, 2, 7, 3, 6, 4, 8},
                         {4, 7, 3, 6, 2, 8, 5}};
  for (int p = 0; p < 3; ++p) {
    double t = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double rec = recs[p][j];
      double gap = rec;
      switch (pattern[p][j]) {
        case 0: gap = rec - 1.6; break;          // very early
        case 1: gap = rec - 0.7; break;          // early
        case 2: gap = rec; break;                // in window
        case 3: gap = rec * 1.7; break;          // late
        case 4: gap = rec * 2.3; break;          // very late
      }
      out.precision(17);
      out << (p + 1) << ",," << t << ',' << das[p][j] << ',' << gap << ",0,"
          << rec << '\n';
      t += gap / 12.0;
    }
    out << (p + 1) << ",," << t << ',' << das[p][6] << ",,0,\n";
  }
  return out.str();
}

struct WeightDiff {
  double max_rel = 0.0;
  bool same_pattern = true;
};

WeightDiff compare_weight_tables(const WeightTable& a, const WeightTable& b) {
  WeightDiff diff;
  for (std::size_t p = 0; p < a.per_patient.size(); ++p) {
    for (std::size_t j = 0; j < a.per_patient[p].size(); ++j) {
      const auto& x = a.per_patient[p][j].final_weight;
      const auto& y = b.per_patient[p][j].final_weight;
      if (x.has_value() != y.has_value()) {
        diff.same_pattern = false;
        continue;
      }
      if (x)
        diff.max_rel =
            std::max(diff.max_rel, std::abs(*x - *y) / std::abs(*x));
    }
  }
  return diff;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file ", path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CLI_BINARY_PATH) + " " + args +
                          " > /dev/null 2> /dev/null";
  return std::system(cmd.c_str());
}

// Per-file byte comparison of two output directories.
bool dirs_identical(const fs::path& a, const fs::path& b) {
  std::vector<std::string> names_a, names_b;
  for (const auto& entry : fs::recursive_directory_iterator(a))
    if (entry.is_regular_file())
      names_a.push_back(fs::relative(entry.path(), a).string());
  for (const auto& entry : fs::recursive_directory_iterator(b))
    if (entry.is_regular_file())
      names_b.push_back(fs::relative(entry.path(), b).string());
  std::sort(names_a.begin(), names_a.end());
  std::sort(names_b.begin(), names_b.end());
  if (names_a != names_b) return false;
  for (const auto& name : names_a)
    if (read_all(a / name) != read_all(b / name)) return false;
  return true;
}

}  // namespace

TEST_CASE("criterion 1: worked-example decompositions are exact") {
  Criterion crit{1, "worked-example classifications and time at risk"};
  const Dataset data = parse_dataset(worked_example_csv());
  const auto table = build_risk_table(data);
  REQUIRE(table.size() == 5);

  const auto near = [&](std::optional<double> got, double want) {
    return got && std::abs(*got - want) < 1e-9;
  };

  // (0.690, 0.460): in-window, the full gap in the in-window slot.
  crit.expect(*table[0].event_category == VisitCategory::kInWindow);
  crit.expect(near(table[0].exposure[2], 0.690));
  crit.expect(!table[0].exposure[0] && !table[0].exposure[1]);
  // (0.460, 0.460): in-window.
  crit.expect(*table[1].event_category == VisitCategory::kInWindow);
  crit.expect(near(table[1].exposure[2], 0.460));
  // (1.38, 2): early with {VE 1, E 0.38}.
  crit.expect(*table[2].event_category == VisitCategory::kEarly);
  crit.expect(near(table[2].exposure[0], 1.0));
  crit.expect(near(table[2].exposure[1], 0.38));
  crit.expect(!table[2].exposure[2]);
  // (2.30, 2): in-window with {1, 0.5, 0.8}.
  crit.expect(*table[3].event_category == VisitCategory::kInWindow);
  crit.expect(near(table[3].exposure[0], 1.0));
  crit.expect(near(table[3].exposure[1], 0.5));
  crit.expect(near(table[3].exposure[2], 0.8));
  // Gap with a missing recommendation: invalid, omitted from the table.
  const RiskDecomposition invalid = decompose_risk(4.14, std::nullopt, false);
  crit.expect(!invalid.valid);
  for (const auto& slot : invalid.time_at_risk) crit.expect(!slot);
  // (4.60, 2): very late across all five windows {1, 0.5, 1.5, 1, 0.6}.
  crit.expect(*table[4].event_category == VisitCategory::kVeryLate);
  crit.expect(near(table[4].exposure[0], 1.0));
  crit.expect(near(table[4].exposure[1], 0.5));
  crit.expect(near(table[4].exposure[2], 1.5));
  crit.expect(near(table[4].exposure[3], 1.0));
  crit.expect(near(table[4].exposure[4], 0.6));

  crit.expect(elapsed_s(crit.start) < 1.0);
  CHECK(crit.ok);
}

TEST_CASE("criterion 2: tilt identity at alpha zero") {
  Criterion crit{2, "ANAR weights equal AAR weights at alpha = (0,0)"};

  const auto check_dataset = [&](const Dataset& data) {
    const auto models = fit_intensity_models(build_risk_table(data), 3);
    const WeightTable aar = compute_weights(data, models);
    TiltConfig zero;
    const NormalizerModels norm = fit_normalizers(data, zero, models.basis);
    const WeightTable tilted = compute_tilted_weights(data, models, norm, zero);
    const WeightDiff diff = compare_weight_tables(aar, tilted);
    crit.expect(diff.same_pattern);
    crit.expect(diff.max_rel < 1e-12);
  };

  check_dataset(parse_dataset(three_patient_csv()));
  check_dataset(simulate_dataset(aar_scenario(500, 20240508)));
  crit.expect(elapsed_s(crit.start) < 10.0);
  CHECK(crit.ok);
}

TEST_CASE("criterion 3: in-window weights immune across the whole grid") {
  Criterion crit{3, "in-window weights bit-identical over the 15x15 grid"};
  const Dataset data = simulate_dataset(aar_scenario(120, 31415));
  const auto models = fit_intensity_models(build_risk_table(data), 3);
  REQUIRE(models.all_fitted());
  const WeightTable aar = compute_weights(data, models);
  const auto rates = compute_gap_rates(data, models, {});

  const GridSpec axis;  // 0..7 by 0.5
  const auto values = axis.values();
  REQUIRE(values.size() == 15);
  for (double ae : values) {
    for (double al : values) {
      TiltConfig config;
      config.alpha_e = ae;
      config.alpha_l = al;
      const NormalizerModels norm =
          fit_normalizers(data, config, models.basis);
      const WeightTable tilted =
          compute_tilted_weights(data, models, norm, config);
      for (std::size_t p = 0; p < rates.size(); ++p) {
        for (std::size_t j = 0; j + 1 < rates[p].size(); ++j) {
          if (!rates[p][j].category ||
              *rates[p][j].category != VisitCategory::kInWindow)
            continue;
          const auto& a = aar.per_patient[p][j + 1].final_weight;
          const auto& t = tilted.per_patient[p][j + 1].final_weight;
          crit.expect(a.has_value() == t.has_value());
          if (a && t) crit.expect(*a == *t);  // bitwise
        }
      }
    }
  }
  CHECK(crit.ok);
}

TEST_CASE("criterion 4: solver oracles") {
  Criterion crit{4, "closed forms, brute-force searches, matrix oracles"};

  // (a) intercept-only exponential MLE = events / exposure.
  {
    Eigen::VectorXd exposure(5), events(5);
    exposure << 0.7, 1.9, 2.2, 0.4, 0.8;  // total 6.0
    events << 1, 0, 1, 1, 0;
    const LinearFit fit = fit_exponential_survival(
        exposure, events, Eigen::MatrixXd::Ones(5, 1));
    crit.expect(std::abs(std::exp(fit.coef(0)) - 3.0 / 6.0) < 1e-10);
  }

  // (b) covariate exponential MLE vs the zooming grid search.
  {
    std::mt19937 rng(4202);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd exposure(20), events(20);
    Eigen::MatrixXd X(20, 2);
    for (int i = 0; i < 20; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = 2.0 * unif(rng) - 1.0;
      const double rate = std::exp(-0.3 + 0.6 * X(i, 1));
      exposure(i) = std::max(1e-3, -std::log(1.0 - unif(rng)) / rate);
      events(i) = unif(rng) < 0.75 ? 1.0 : 0.0;
    }
    if (events.sum() == 0) events(0) = 1.0;
    const LinearFit fit = fit_exponential_survival(exposure, events, X);
    const Eigen::Vector2d oracle =
        oracles::exp_survival_grid_oracle(exposure, events, X);
    crit.expect((fit.coef - oracle).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  // (c) WLS coefficients and clustered sandwich vs the direct formulas.
  {
    std::mt19937 rng(88);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> wdist(0.3, 2.5);
    const int n = 14;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n), w(n);
    std::vector<int> cluster(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = noise(rng);
      X(i, 2) = noise(rng);
      y(i) = 1.0 + 0.5 * X(i, 1) - X(i, 2) + noise(rng);
      w(i) = wdist(rng);
      cluster[i] = i % 3;
    }
    const LinearFit fit = fit_wls(X, y, w, cluster);
    const Eigen::MatrixXd W = w.asDiagonal();
    const Eigen::VectorXd beta_direct =
        (X.transpose() * W * X).inverse() * (X.transpose() * W * y);
    crit.expect((fit.coef - beta_direct).lpNorm<Eigen::Infinity>() < 1e-10);
    const Eigen::VectorXd r = y - X * beta_direct;
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(3, 3);
    for (int c = 0; c < 3; ++c) {
      Eigen::Vector3d s = Eigen::Vector3d::Zero();
      for (int i = 0; i < n; ++i)
        if (cluster[static_cast<std::size_t>(i)] == c)
          s += X.row(i).transpose() * w(i) * r(i);
      meat += s * s.transpose();
    }
    const Eigen::MatrixXd bread = (X.transpose() * W * X).inverse();
    crit.expect((*fit.cov - bread * meat * bread).lpNorm<Eigen::Infinity>() <
                1e-10);
  }

  // (d) median/quantile regression vs the enumerated LP optimum.
  {
    std::mt19937 rng(31);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (double tau : {0.25, 0.5, 0.9}) {
      const int n = 17;
      Eigen::MatrixXd X(n, 2);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = 3.0 * noise(rng);
        y(i) = 0.7 + 0.9 * X(i, 1) + noise(rng);
      }
      const LinearFit fit = fit_quantile_reg(y, X, tau);
      const double optimum = oracles::quantile_lp_optimum(y, X, tau);
      crit.expect(fit.objective <= optimum + 1e-6);
    }
  }

  // (e) normal CDF vs the high-precision oracle on a 1000-point grid.
  {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double x = -9.0 + 18.0 * i / 999.0;
      worst = std::max(worst, std::abs(normal_cdf(x, 0, 1) -
                                       oracles::normal_cdf_oracle(x, 0, 1)));
    }
    crit.expect(worst < 1e-7);
  }

  CHECK(crit.ok);
}

TEST_CASE("criterion 5: AAR recovery at n = 500") {
  Criterion crit{5, "IIW-GEE AUC within 3% of truth; unweighted farther"};
  const ScenarioSpec spec = aar_scenario(500, 20240508);
  const Dataset data = simulate_dataset(spec, 1);
  crit.expect(data.n_rows() > 15 * 500);  // roughly 20+ visits per patient

  const double truth = truth_auc(spec);
  const auto models = fit_intensity_models(build_risk_table(data), 3);
  REQUIRE(models.all_fitted());
  const WeightTable weights = compute_weights(data, models);
  const auto basis = make_outcome_basis(data, weights, 3);
  const GeeFit unweighted =
      fit_outcome(data, weights, basis, FitWeighting::kUnitWeights, "unw");
  const GeeFit weighted =
      fit_outcome(data, weights, basis, FitWeighting::kWeighted, "aar");
  const double auc_unw = trajectory_auc(unweighted);
  const double auc_iiw = trajectory_auc(weighted);

  std::printf("  truth %.4f | unweighted %.4f | IIW %.4f\n", truth, auc_unw,
              auc_iiw);
  crit.expect(std::abs(auc_iiw - truth) / truth < 0.03);
  crit.expect(std::abs(auc_unw - truth) > std::abs(auc_iiw - truth));
  // Accounting for the oversampling pulls the curve down.
  crit.expect(auc_unw >= auc_iiw);
  crit.expect(elapsed_s(crit.start) < 120.0);
  CHECK(crit.ok);
}

TEST_CASE("criterion 6: ANAR grid direction") {
  Criterion crit{6, "alpha_e axis corrective and dominant over alpha_l"};
  const ScenarioSpec spec = anar_scenario(500, 977001);
  const Dataset data = simulate_dataset(spec, 1);
  const double truth = truth_auc(spec);
  const auto models = fit_intensity_models(build_risk_table(data), 3);
  REQUIRE(models.all_fitted());

  SensitivityOptions opt;
  opt.jobs = 4;
  const SensitivityGrid grid = run_grid(data, models, opt);
  REQUIRE(grid.complete());
  REQUIRE(grid.cells.size() == 225);

  // Non-increasing along alpha_e at alpha_l = 0.
  for (std::size_t e = 1; e < grid.alpha_e.size(); ++e)
    crit.expect(*grid.at(e, 0).auc <= *grid.at(e - 1, 0).auc + 1e-12);

  // Some alpha_e > 0 cell strictly closer to truth than the origin.
  const double err0 = std::abs(*grid.at(0, 0).auc - truth);
  double best = err0;
  for (std::size_t e = 1; e < grid.alpha_e.size(); ++e)
    best = std::min(best, std::abs(*grid.at(e, 0).auc - truth));
  std::printf("  truth %.4f | origin %.4f (err %.4f) | best err %.4f\n",
              truth, *grid.at(0, 0).auc, err0, best);
  crit.expect(best < err0);

  // The alpha_l axis moves at most 20% of the alpha_e axis.
  const double e_change =
      std::abs(*grid.at(0, 0).auc - *grid.at(14, 0).auc);
  const double l_change =
      std::abs(*grid.at(0, 0).auc - *grid.at(0, 14).auc);
  std::printf("  alpha_e change %.4f | alpha_l change %.4f\n", e_change,
              l_change);
  crit.expect(l_change <= 0.2 * e_change);
  crit.expect(elapsed_s(crit.start) < 600.0);
  CHECK(crit.ok);
}

TEST_CASE("criterion 7: MAD-explained correctness") {
  Criterion crit{7, "fractions exactly 1 and 0; brute-force match to 1e-12"};
  const auto make_gaps =
      [](const std::vector<std::pair<double, double>>& sr) {
        std::ostringstream csv;
        csv << "id,date,time_since_dx,DAS,S,censor,R\n";
        for (std::size_t i = 0; i < sr.size(); ++i) {
          csv.precision(17);
          csv << (i + 1) << ",,0,4," << sr[i].first << ",0," << sr[i].second
              << '\n';
          csv << (i + 1) << ",," << (sr[i].first / 12.0) << ",5,,0,\n";
        }
        return parse_dataset(csv.str());
      };

  {
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 15; ++i) {
      const double r = 0.6 + 0.45 * i;
      pairs.emplace_back(r, r);
    }
    const MadResult mad = mad_explained(make_gaps(pairs));
    crit.expect(mad.fraction && *mad.fraction == 1.0);
  }
  {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> unif(0.4, 6.5);
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 13; ++i) pairs.emplace_back(unif(rng), 2.5);
    const MadResult mad = mad_explained(make_gaps(pairs));
    crit.expect(mad.fraction && *mad.fraction == 0.0);
  }
  {
    std::mt19937 rng(271828);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 37; ++i) {
      const double r = 0.5 + 6.0 * unif(rng);
      pairs.emplace_back(std::max(0.05, r * (0.7 + 0.6 * unif(rng))), r);
    }
    const Dataset data = make_gaps(pairs);
    const MadResult mad = mad_explained(data);

    std::vector<double> s_values, r_values;
    for (const auto& [s, r] : pairs) {
      s_values.push_back(s);
      r_values.push_back(r);
    }
    auto median_of = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double med_s = median_of(s_values);
    std::vector<double> dev;
    for (double s : s_values) dev.push_back(std::abs(s - med_s));
    const double unadj = median_of(dev);
    Eigen::MatrixXd X(37, 2);
    Eigen::VectorXd y(37);
    for (int i = 0; i < 37; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = r_values[static_cast<std::size_t>(i)];
      y(i) = s_values[static_cast<std::size_t>(i)];
    }
    const LinearFit qr = fit_quantile_reg(y, X, 0.5);
    std::vector<double> adj_dev;
    for (int i = 0; i < 37; ++i)
      adj_dev.push_back(std::abs(y(i) - qr.coef(0) - qr.coef(1) * X(i, 1)));
    const double adj = median_of(adj_dev);
    crit.expect(std::abs(mad.unadjusted - unadj) < 1e-12);
    crit.expect(std::abs(mad.adjusted - adj) < 1e-12);
    crit.expect(std::abs(*mad.fraction - (1.0 - adj / unadj)) < 1e-12);
  }
  CHECK(crit.ok);
}

TEST_CASE("criterion 8: elicitation closed form and monotone curves") {
  Criterion crit{8, "asymptote inversion vs closed form; curves monotone"};

  SplineBasisSpec basis;
  basis.degree = 3;
  basis.df = 3;
  basis.boundary_lo = 2.0;
  basis.boundary_hi = 12.0;
  IntensityModelSet models;
  models.basis = basis;
  for (int c = 0; c < kNumCategories; ++c) {
    LinearFit fit;
    fit.coef = Eigen::VectorXd::Zero(4);
    fit.coef(0) = std::log(0.3);
    models.fits[c].fit = fit;
  }

  const double delta = 2.0 / UnitConstants::weeks_per_month;
  const double rec_set[1] = {6.0};
  const PlausibleRange range =
      plausible_alpha_range(models, nullptr, rec_set, {0.6, 0.99});
  const double closed = std::log(-std::log(1.0 - 0.6) / (0.3 * delta));
  std::printf("  bisection %.9f vs closed form %.9f\n",
              range.per_rec[0].alpha_at_lo_target, closed);
  crit.expect(std::abs(range.per_rec[0].alpha_at_lo_target - closed) < 1e-6);

  // Monotone-in-D elicitation curves, plain and with fitted normalizers.
  std::vector<double> d_grid;
  for (int k = 0; k <= 48; ++k) d_grid.push_back(0.25 * k);
  for (double alpha : {0.0, 1.0, 4.0, 7.0}) {
    const ElicitationCurve curve =
        elicitation_curve(6.0, alpha, d_grid, models, nullptr, {});
    for (std::size_t k = 0; k + 1 < curve.probability.size(); ++k)
      crit.expect(curve.probability[k + 1] >= curve.probability[k] - 1e-15);
  }
  const Dataset data = simulate_dataset(aar_scenario(120, 5150));
  const auto fitted = fit_intensity_models(build_risk_table(data), 3);
  REQUIRE(fitted.all_fitted());
  for (double alpha : {0.5, 3.0, 7.0}) {
    TiltConfig config;
    config.alpha_e = alpha;
    const NormalizerModels norm =
        fit_normalizers(data, config, fitted.basis);
    for (double rec : {2.0, 6.0}) {
      const ElicitationCurve curve =
          elicitation_curve(rec, alpha, d_grid, fitted, &norm, config);
      for (std::size_t k = 0; k + 1 < curve.probability.size(); ++k)
        crit.expect(curve.probability[k + 1] >= curve.probability[k] - 1e-15);
    }
  }
  CHECK(crit.ok);
}

TEST_CASE("criterion 9: byte-identical outputs across reruns and jobs") {
  Criterion crit{9, "every command deterministic, grid independent of --jobs"};
  const fs::path root = fs::temp_directory_path() / "visits_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const fs::path spec_path = root / "scenario.cfg";
  {
    ScenarioSpec spec = anar_scenario(40, 4242);
    spec.truth_increment = 0.07;
    spec.truth_draws = 20000;
    std::ofstream out(spec_path);
    out << serialize_scenario(spec);
  }

  const auto path_of = [&](const std::string& name) {
    return (root / name).string();
  };

  // simulate: rerun and jobs sweep.
  crit.expect(run_cli("simulate --spec " + spec_path.string() + " --out " +
                      path_of("sim1.csv") + " --truth " +
                      path_of("truth1.csv")) == 0);
  crit.expect(run_cli("simulate --spec " + spec_path.string() + " --out " +
                      path_of("sim2.csv") + " --truth " +
                      path_of("truth2.csv")) == 0);
  crit.expect(run_cli("simulate --spec " + spec_path.string() + " --jobs 3 " +
                      "--out " + path_of("sim3.csv") + " --truth " +
                      path_of("truth3.csv")) == 0);
  crit.expect(read_all(path_of("sim1.csv")) == read_all(path_of("sim2.csv")));
  crit.expect(read_all(path_of("sim1.csv")) == read_all(path_of("sim3.csv")));
  crit.expect(read_all(path_of("truth1.csv")) ==
              read_all(path_of("truth2.csv")));
  crit.expect(read_all(path_of("truth1.csv")) ==
              read_all(path_of("truth3.csv")));

  const std::string input = " -i " + path_of("sim1.csv");
  for (const std::string cmd : {"classify", "diagnose", "fit-aar", "elicit"}) {
    crit.expect(run_cli(cmd + input + " -o " + path_of(cmd + "_a")) == 0);
    crit.expect(run_cli(cmd + input + " -o " + path_of(cmd + "_b")) == 0);
    crit.expect(dirs_identical(root / (cmd + "_a"), root / (cmd + "_b")));
  }

  // The sensitivity grid must not depend on the worker count.
  const std::string grid_args =
      " --set grid.alpha_e_step=1 --set grid.alpha_l_step=1";
  crit.expect(run_cli("sensitivity" + input + grid_args + " -o " +
                      path_of("sens_j1") + " --jobs 1") == 0);
  crit.expect(run_cli("sensitivity" + input + grid_args + " -o " +
                      path_of("sens_j1b") + " --jobs 1") == 0);
  crit.expect(run_cli("sensitivity" + input + grid_args + " -o " +
                      path_of("sens_j4") + " --jobs 4") == 0);
  // config_echo records the jobs setting; all computed outputs must match.
  for (const std::string file : {"heatmap.csv", "trajectories.csv",
                                 "summary.json", "run.log"}) {
    crit.expect(read_all(root / "sens_j1" / file) ==
                read_all(root / "sens_j1b" / file));
    crit.expect(read_all(root / "sens_j1" / file) ==
                read_all(root / "sens_j4" / file));
  }

  // validate is deterministic and exercises its exit codes.
  crit.expect(run_cli("validate" + input) == 0);
  {
    std::ofstream bad(root / "bad.csv");
    bad << "id,date,time_since_dx,DAS,S,censor,R\n1,,0.5,4,1.2,1,2\n1,,0.6,4,"
           ",0,2\n";
  }
  crit.expect(run_cli("validate -i " + path_of("bad.csv")) != 0);

  CHECK(crit.ok);
}
