#include "visits/simulator.hpp"

#include "visits/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace visits {

double PhysicianRule::interval_for(double das) const {
  for (const Step& step : steps)
    if (das >= step.min_das) return step.interval_months;
  return steps.back().interval_months;
}

PhysicianRule default_rule() {
  return PhysicianRule{{{7.0, 1.0}, {4.0, 2.0}, {2.0, 3.0}, {0.0, 6.0}}};
}

double ScenarioSpec::mean_at(double t_years) const {
  return mean_a + mean_b * std::exp(-mean_c * t_years);
}

void ScenarioSpec::validate() const {
  if (n_patients < 1) throw std::invalid_argument("scenario: n_patients < 1");
  if (!(horizon_years > 0)) throw std::invalid_argument("scenario: horizon <= 0");
  if (between_sd < 0 || within_sd < 0 || adherence_sd < 0 ||
      adherence_wide_sd < 0 || rec_jitter_sd < 0)
    throw std::invalid_argument("scenario: negative sd");
  if (adherence_wide_prob < 0 || adherence_wide_prob > 1)
    throw std::invalid_argument("scenario: adherence_wide_prob outside [0,1]");
  if (!(noise_corr_months > 0))
    throw std::invalid_argument("scenario: noise_corr_months <= 0");
  if (!(acar_interval_months > 0))
    throw std::invalid_argument("scenario: acar_interval_months <= 0");
  if (flare_rate_per_year < 0)
    throw std::invalid_argument("scenario: negative flare rate");
  if (flare_rate_per_year > 0) {
    if (!(flare_decay_months > 0) || !(flare_visit_delay_months > 0))
      throw std::invalid_argument("scenario: flare scales must be positive");
    if (flare_bump_hi < flare_bump_lo || flare_bump_lo < 0)
      throw std::invalid_argument("scenario: bad flare bump range");
  }
  if (rule.steps.empty()) throw std::invalid_argument("scenario: empty rule");
  for (std::size_t i = 0; i + 1 < rule.steps.size(); ++i)
    if (!(rule.steps[i].min_das > rule.steps[i + 1].min_das))
      throw std::invalid_argument("scenario: rule thresholds not descending");
  for (const auto& step : rule.steps)
    if (!(step.interval_months > 0))
      throw std::invalid_argument("scenario: rule interval <= 0");
  if (truth_draws < 1) throw std::invalid_argument("scenario: truth_draws < 1");
  if (!(truth_increment > 0))
    throw std::invalid_argument("scenario: truth_increment <= 0");
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint32_t a,
                            std::uint32_t b, std::uint32_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), a, b, c};
  return std::mt19937_64(seq);
}

struct Flare {
  double time;         // years
  double bump;
  double visit_time;   // years: flare time plus the care-seeking delay
};

// Stationary Ornstein-Uhlenbeck sampler evaluated at increasing times.
class OuProcess {
 public:
  OuProcess(double sd, double corr_years, std::mt19937_64& rng)
      : sd_(sd), theta_(corr_years), rng_(rng) {}

  double at(double t) {
    if (sd_ == 0.0) return 0.0;
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    if (!initialized_) {
      state_ = sd_ * stdnorm(rng_);
      initialized_ = true;
    } else {
      const double rho = std::exp(-(t - last_t_) / theta_);
      state_ = rho * state_ +
               sd_ * std::sqrt(std::max(0.0, 1.0 - rho * rho)) * stdnorm(rng_);
    }
    last_t_ = t;
    return state_;
  }

 private:
  double sd_;
  double theta_;
  std::mt19937_64& rng_;
  bool initialized_ = false;
  double state_ = 0.0;
  double last_t_ = 0.0;
};

double record_das(double latent, const ScenarioSpec& spec) {
  double v = latent;
  if (spec.clamp_das) v = std::min(std::max(v, 0.0), 12.0);
  if (spec.round_das) v = std::nearbyint(v);
  return v;
}

std::vector<VisitRow> simulate_patient(const ScenarioSpec& spec, int pid) {
  const auto pid32 = static_cast<std::uint32_t>(pid);
  auto rng_intercept = make_engine(spec.seed, pid32, 0, 0);
  auto rng_noise = make_engine(spec.seed, pid32, 1, 0);
  auto rng_adherence = make_engine(spec.seed, pid32, 2, 0);
  auto rng_jitter = make_engine(spec.seed, pid32, 3, 0);
  auto rng_flare = make_engine(spec.seed, pid32, 4, 0);

  std::normal_distribution<double> stdnorm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double intercept =
      spec.between_sd > 0 ? spec.between_sd * stdnorm(rng_intercept) : 0.0;
  OuProcess noise(spec.within_sd, spec.noise_corr_months / 12.0, rng_noise);

  std::vector<Flare> flares;
  if (spec.mechanism == Mechanism::kAnar && spec.flare_rate_per_year > 0) {
    std::exponential_distribution<double> gap(spec.flare_rate_per_year);
    std::exponential_distribution<double> delay(
        1.0 / spec.flare_visit_delay_months);
    double t = 0.0;
    while (flares.size() < 100000) {
      t += gap(rng_flare);
      if (t >= spec.horizon_years) break;
      Flare f;
      f.time = t;
      f.bump = spec.flare_bump_lo +
               (spec.flare_bump_hi - spec.flare_bump_lo) * unif(rng_flare);
      f.visit_time = t + delay(rng_flare) / 12.0;
      flares.push_back(f);
    }
  }
  const auto flare_bump_at = [&](double t) {
    double total = 0.0;
    for (const Flare& f : flares) {
      if (f.time > t) break;
      total += f.bump * std::exp(-(t - f.time) * 12.0 / spec.flare_decay_months);
    }
    return total;
  };

  const auto draw_adherence = [&]() {
    // Mixture: mostly tight adherence, occasionally a larger deviation.
    double sd = spec.adherence_sd;
    if (spec.adherence_wide_prob > 0 && unif(rng_adherence) < spec.adherence_wide_prob)
      sd = spec.adherence_wide_sd;
    return sd > 0 ? std::exp(sd * stdnorm(rng_adherence)) : 1.0;
  };

  std::vector<VisitRow> rows;
  const std::string id = std::to_string(pid + 1);
  double t = 0.0;
  for (int visit = 0; visit < 100000; ++visit) {
    const double latent = spec.mean_at(t) + intercept + noise.at(t) +
                          flare_bump_at(t);
    VisitRow row;
    row.patient_id = id;
    row.visit_index = visit;
    row.time_since_dx = t;
    row.das = record_das(latent, spec);

    double rec = spec.mechanism == Mechanism::kAcar
                     ? spec.acar_interval_months
                     : spec.rule.interval_for(*row.das);
    if (spec.rec_jitter_sd > 0)
      rec *= std::exp(spec.rec_jitter_sd * stdnorm(rng_jitter));
    row.rec_interval = rec;

    double t_next = t + rec * draw_adherence() / 12.0;
    if (spec.mechanism == Mechanism::kAnar) {
      for (const Flare& f : flares) {
        if (f.time <= t) continue;
        if (f.time >= t_next) break;
        if (f.visit_time > t && f.visit_time < t_next) t_next = f.visit_time;
      }
    }

    if (t_next >= spec.horizon_years) {
      row.censored = true;
      row.gap_forward = (spec.horizon_years - t) * 12.0;
      rows.push_back(std::move(row));
      break;
    }
    row.gap_forward = (t_next - t) * 12.0;
    rows.push_back(std::move(row));
    t = t_next;
  }
  return rows;
}

}  // namespace

Dataset simulate_dataset(const ScenarioSpec& spec, int jobs) {
  spec.validate();
  Dataset data;
  data.study_end_years = spec.horizon_years;
  data.patients.resize(static_cast<std::size_t>(spec.n_patients));

  const int workers = std::max(1, jobs);
  if (workers == 1) {
    for (int pid = 0; pid < spec.n_patients; ++pid)
      data.patients[static_cast<std::size_t>(pid)] =
          simulate_patient(spec, pid);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int pid = w; pid < spec.n_patients; pid += workers)
          data.patients[static_cast<std::size_t>(pid)] =
              simulate_patient(spec, pid);
      });
    }
    for (auto& th : pool) th.join();
  }
  return derive_diffs(std::move(data));
}

std::vector<TruthPoint> true_mean(const ScenarioSpec& spec,
                                  std::span<const double> t_grid,
                                  int mc_draws) {
  spec.validate();
  const bool has_flares =
      spec.mechanism == Mechanism::kAnar && spec.flare_rate_per_year > 0;
  const bool closed_form = !spec.round_das && !spec.clamp_das && !has_flares;

  std::vector<TruthPoint> out(t_grid.size());
  if (closed_form) {
    for (std::size_t i = 0; i < t_grid.size(); ++i)
      out[i] = TruthPoint{t_grid[i], spec.mean_at(t_grid[i]), 0.0};
    return out;
  }

  const int draws = mc_draws > 0 ? mc_draws : spec.truth_draws;
  const double marginal_sd = std::sqrt(spec.between_sd * spec.between_sd +
                                       spec.within_sd * spec.within_sd);
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    auto rng = make_engine(spec.seed, 0xffffffffu, 0xabcd0000u,
                           static_cast<std::uint32_t>(i));
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double sum = 0.0, sumsq = 0.0;
    for (int d = 0; d < draws; ++d) {
      double latent = spec.mean_at(t) + marginal_sd * stdnorm(rng);
      if (has_flares && t > 0) {
        std::poisson_distribution<int> n_flares(spec.flare_rate_per_year * t);
        const int k = n_flares(rng);
        for (int f = 0; f < k; ++f) {
          const double s = t * unif(rng);
          const double bump =
              spec.flare_bump_lo +
              (spec.flare_bump_hi - spec.flare_bump_lo) * unif(rng);
          latent += bump * std::exp(-(t - s) * 12.0 / spec.flare_decay_months);
        }
      }
      const double recorded = record_das(latent, spec);
      sum += recorded;
      sumsq += recorded * recorded;
    }
    const double mean = sum / draws;
    const double var = std::max(0.0, sumsq / draws - mean * mean);
    out[i] = TruthPoint{t, mean, std::sqrt(var / draws)};
  }
  return out;
}

SimOutput simulate(const ScenarioSpec& spec, int jobs) {
  SimOutput out;
  out.dataset = simulate_dataset(spec, jobs);
  const int n = static_cast<int>(
      std::floor(spec.horizon_years / spec.truth_increment + 1e-10));
  std::vector<double> grid(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k)
    grid[static_cast<std::size_t>(k)] = k * spec.truth_increment;
  out.truth = true_mean(spec, grid);
  return out;
}

namespace {

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kAcar: return "acar";
    case Mechanism::kAar: return "aar";
    case Mechanism::kAnar: return "anar";
  }
  return "?";
}

Mechanism mechanism_from(const std::string& s) {
  if (s == "acar") return Mechanism::kAcar;
  if (s == "aar") return Mechanism::kAar;
  if (s == "anar") return Mechanism::kAnar;
  throw std::invalid_argument("scenario: unknown mechanism '" + s + "'");
}

std::string rule_to_string(const PhysicianRule& rule) {
  std::ostringstream out;
  for (std::size_t i = 0; i < rule.steps.size(); ++i) {
    if (i) out << ';';
    out << fmt_double(rule.steps[i].min_das) << ':'
        << fmt_double(rule.steps[i].interval_months);
  }
  return out.str();
}

PhysicianRule rule_from_string(const std::string& text) {
  PhysicianRule rule;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(';', start);
    if (end == std::string::npos) end = text.size();
    const std::string part = text.substr(start, end - start);
    const std::size_t colon = part.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("scenario: bad rule step '" + part + "'");
    PhysicianRule::Step step{};
    step.min_das = std::stod(part.substr(0, colon));
    step.interval_months = std::stod(part.substr(colon + 1));
    rule.steps.push_back(step);
    if (end == text.size()) break;
    start = end + 1;
  }
  return rule;
}

}  // namespace

ScenarioSpec parse_scenario(std::string_view text) {
  ScenarioSpec spec;
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string line(text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos));
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("scenario line " + std::to_string(line_no) +
                                  ": expected key = value");
    kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }

  const auto num = [&](const char* key, double& slot) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    slot = std::stod(it->second);
    kv.erase(it);
  };
  const auto flag = [&](const char* key, bool& slot) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (it->second == "true" || it->second == "1") slot = true;
    else if (it->second == "false" || it->second == "0") slot = false;
    else throw std::invalid_argument(std::string("scenario: bad flag ") + key);
    kv.erase(it);
  };

  if (auto it = kv.find("mechanism"); it != kv.end()) {
    spec.mechanism = mechanism_from(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("n_patients"); it != kv.end()) {
    spec.n_patients = std::stoi(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("seed"); it != kv.end()) {
    spec.seed = std::stoull(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("truth_draws"); it != kv.end()) {
    spec.truth_draws = std::stoi(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("rule"); it != kv.end()) {
    spec.rule = rule_from_string(it->second);
    kv.erase(it);
  }
  num("horizon_years", spec.horizon_years);
  num("mean_a", spec.mean_a);
  num("mean_b", spec.mean_b);
  num("mean_c", spec.mean_c);
  num("between_sd", spec.between_sd);
  num("within_sd", spec.within_sd);
  num("noise_corr_months", spec.noise_corr_months);
  num("rec_jitter_sd", spec.rec_jitter_sd);
  num("adherence_sd", spec.adherence_sd);
  num("adherence_wide_sd", spec.adherence_wide_sd);
  num("adherence_wide_prob", spec.adherence_wide_prob);
  num("acar_interval_months", spec.acar_interval_months);
  num("flare_rate_per_year", spec.flare_rate_per_year);
  num("flare_bump_lo", spec.flare_bump_lo);
  num("flare_bump_hi", spec.flare_bump_hi);
  num("flare_decay_months", spec.flare_decay_months);
  num("flare_visit_delay_months", spec.flare_visit_delay_months);
  num("truth_increment", spec.truth_increment);
  flag("round_das", spec.round_das);
  flag("clamp_das", spec.clamp_das);
  if (!kv.empty())
    throw std::invalid_argument("scenario: unknown key '" + kv.begin()->first +
                                "'");
  spec.validate();
  return spec;
}

std::string serialize_scenario(const ScenarioSpec& spec) {
  std::ostringstream out;
  out << "mechanism = " << mechanism_name(spec.mechanism) << '\n'
      << "n_patients = " << spec.n_patients << '\n'
      << "horizon_years = " << fmt_double(spec.horizon_years) << '\n'
      << "mean_a = " << fmt_double(spec.mean_a) << '\n'
      << "mean_b = " << fmt_double(spec.mean_b) << '\n'
      << "mean_c = " << fmt_double(spec.mean_c) << '\n'
      << "between_sd = " << fmt_double(spec.between_sd) << '\n'
      << "within_sd = " << fmt_double(spec.within_sd) << '\n'
      << "noise_corr_months = " << fmt_double(spec.noise_corr_months) << '\n'
      << "rule = " << rule_to_string(spec.rule) << '\n'
      << "rec_jitter_sd = " << fmt_double(spec.rec_jitter_sd) << '\n'
      << "adherence_sd = " << fmt_double(spec.adherence_sd) << '\n'
      << "adherence_wide_sd = " << fmt_double(spec.adherence_wide_sd) << '\n'
      << "adherence_wide_prob = " << fmt_double(spec.adherence_wide_prob)
      << '\n'
      << "acar_interval_months = " << fmt_double(spec.acar_interval_months)
      << '\n'
      << "flare_rate_per_year = " << fmt_double(spec.flare_rate_per_year)
      << '\n'
      << "flare_bump_lo = " << fmt_double(spec.flare_bump_lo) << '\n'
      << "flare_bump_hi = " << fmt_double(spec.flare_bump_hi) << '\n'
      << "flare_decay_months = " << fmt_double(spec.flare_decay_months) << '\n'
      << "flare_visit_delay_months = "
      << fmt_double(spec.flare_visit_delay_months) << '\n'
      << "round_das = " << (spec.round_das ? "true" : "false") << '\n'
      << "clamp_das = " << (spec.clamp_das ? "true" : "false") << '\n'
      << "seed = " << spec.seed << '\n'
      << "truth_draws = " << spec.truth_draws << '\n'
      << "truth_increment = " << fmt_double(spec.truth_increment) << '\n';
  return out.str();
}

}  // namespace visits
