#include "trialx/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include <nlohmann/json.hpp>

#include "trialx/error.hpp"

namespace trialx {

namespace {

// Distribution code is spelled out instead of using <random> distributions
// so that generated stores are identical across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  double normal(double mean, double sd) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 engine_;
};

struct RaceWeight {
  const char* name;
  double weight;
};
constexpr std::array<RaceWeight, 5> kRaces{{
    {"white", 0.60}, {"black", 0.15}, {"asian", 0.10}, {"hispanic", 0.10}, {"other", 0.05}}};

std::string pick_race(Rng& rng) {
  double u = rng.uniform();
  for (const auto& r : kRaces) {
    if (u < r.weight) return r.name;
    u -= r.weight;
  }
  return kRaces.back().name;
}

double lab_value(Rng& rng, double lower, double upper, bool abnormal) {
  if (abnormal) return upper * rng.uniform(1.1, 2.5);
  return lower + (upper - lower) * rng.uniform(0.05, 0.95);
}

void check(const SyntheticConfig& c) {
  if (c.n_patients <= 0) throw ValidationError("n_patients must be positive");
  if (!(c.treated_fraction > 0.0 && c.treated_fraction < 1.0))
    throw ValidationError("treated_fraction must lie in (0, 1)");
  if (c.horizon_days <= 0) throw ValidationError("horizon_days must be positive");
  if (!(c.baseline_death_rate > 0.0) || !(c.discharge_rate > 0.0))
    throw ValidationError("death and discharge rates must be positive");
  if (!(c.missing_rate >= 0.0 && c.missing_rate < 1.0))
    throw ValidationError("missing_rate must lie in [0, 1)");
  if (!(c.age_sd > 0.0)) throw ValidationError("age_sd must be positive");
  for (double r : {c.scr_abnormal_treated, c.scr_abnormal_control, c.ast_abnormal_treated,
                   c.ast_abnormal_control, c.ventilation_rate, c.prior_cardiac_surgery_rate,
                   c.sepsis_rate, c.aki_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("rates must lie in [0, 1]");
  }
}

}  // namespace

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    get("n_patients", c.n_patients);
    get("treated_fraction", c.treated_fraction);
    get("treatment_code", c.treatment_code);
    get("horizon_days", c.horizon_days);
    get("true_log_hr", c.true_log_hr);
    get("baseline_death_rate", c.baseline_death_rate);
    get("discharge_rate", c.discharge_rate);
    get("age_shift_sd", c.age_shift_sd);
    get("age_log_hr_per_decade", c.age_log_hr_per_decade);
    get("age_mean", c.age_mean);
    get("age_sd", c.age_sd);
    get("scr_abnormal_treated", c.scr_abnormal_treated);
    get("scr_abnormal_control", c.scr_abnormal_control);
    get("ast_abnormal_treated", c.ast_abnormal_treated);
    get("ast_abnormal_control", c.ast_abnormal_control);
    get("missing_rate", c.missing_rate);
    get("ventilation_rate", c.ventilation_rate);
    get("prior_cardiac_surgery_rate", c.prior_cardiac_surgery_rate);
    get("sepsis_rate", c.sepsis_rate);
    get("aki_rate", c.aki_rate);
    get("scr_lower", c.scr_lower);
    get("scr_upper", c.scr_upper);
    get("ast_lower", c.ast_lower);
    get("ast_upper", c.ast_upper);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad synthetic config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const SyntheticConfig& c) {
  return {{"n_patients", c.n_patients},
          {"treated_fraction", c.treated_fraction},
          {"treatment_code", c.treatment_code},
          {"horizon_days", c.horizon_days},
          {"true_log_hr", c.true_log_hr},
          {"baseline_death_rate", c.baseline_death_rate},
          {"discharge_rate", c.discharge_rate},
          {"age_shift_sd", c.age_shift_sd},
          {"age_log_hr_per_decade", c.age_log_hr_per_decade},
          {"age_mean", c.age_mean},
          {"age_sd", c.age_sd},
          {"scr_abnormal_treated", c.scr_abnormal_treated},
          {"scr_abnormal_control", c.scr_abnormal_control},
          {"ast_abnormal_treated", c.ast_abnormal_treated},
          {"ast_abnormal_control", c.ast_abnormal_control},
          {"missing_rate", c.missing_rate},
          {"ventilation_rate", c.ventilation_rate},
          {"prior_cardiac_surgery_rate", c.prior_cardiac_surgery_rate},
          {"sepsis_rate", c.sepsis_rate},
          {"aki_rate", c.aki_rate},
          {"scr_lower", c.scr_lower},
          {"scr_upper", c.scr_upper},
          {"ast_lower", c.ast_lower},
          {"ast_upper", c.ast_upper}};
}

PatientStore generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  check(config);
  Rng rng(seed);
  const Hours horizon = config.horizon_days * kHoursPerDay;
  std::vector<PatientRecord> patients;
  patients.reserve(static_cast<std::size_t>(config.n_patients));

  for (int i = 0; i < config.n_patients; ++i) {
    PatientRecord p;
    char id[16];
    std::snprintf(id, sizeof id, "p%06d", i);
    p.patient_id = id;

    const bool treated = rng.bernoulli(config.treated_fraction);
    const double age_mean = config.age_mean + (treated ? config.age_shift_sd * config.age_sd : 0.0);
    p.age = static_cast<int>(std::clamp(std::lround(rng.normal(age_mean, config.age_sd)), 16L, 99L));
    p.gender = rng.bernoulli(0.5) ? Gender::female : Gender::male;
    p.race = pick_race(rng);

    const double height = rng.normal(p.gender == Gender::male ? 1.76 : 1.63, 0.07);
    const double bmi = std::clamp(rng.normal(27.0, 5.5), 15.0, 55.0);
    if (!rng.bernoulli(config.missing_rate)) p.height_m = height;
    if (!rng.bernoulli(config.missing_rate)) p.weight_kg = bmi * height * height;

    const double log_hazard = config.true_log_hr * (treated ? 1.0 : 0.0) +
                              config.age_log_hr_per_decade * (p.age - 60) / 10.0;
    const double death_rate = config.baseline_death_rate / kHoursPerDay * std::exp(log_hazard);
    const Hours death = rng.exponential(death_rate);
    const Hours discharge = rng.exponential(config.discharge_rate / kHoursPerDay);
    if (death <= discharge) {
      p.death = death;
    } else {
      p.discharge = discharge;
    }
    const Hours term = *p.terminator();
    const Hours early = std::min(term, 48.0);

    p.events.push_back({EventKind::diagnosis, "sepsis", 0.0, std::nullopt});
    if (!rng.bernoulli(config.sepsis_rate)) p.events.back().code = "infection";
    if (rng.bernoulli(0.4)) p.events.push_back({EventKind::diagnosis, "septic_shock", 0.0, std::nullopt});
    const bool aki = rng.bernoulli(config.aki_rate);
    if (aki) p.events.push_back({EventKind::diagnosis, "aki", 0.0, std::nullopt});
    if (rng.bernoulli(config.prior_cardiac_surgery_rate)) {
      const Hours when = -rng.uniform(0.0, 365.0) * kHoursPerDay;
      p.events.push_back({EventKind::procedure, "cardiac_surgery", when, when + 6.0});
    }
    if (rng.bernoulli(config.ventilation_rate)) {
      const Hours start = rng.uniform(0.0, early);
      p.events.push_back({EventKind::device, "mechanical_ventilation", start,
                          std::min(term, start + rng.uniform(24.0, 240.0))});
    }
    if (treated) {
      const Hours start = rng.uniform(0.0, std::min(term, 24.0));
      p.events.push_back({EventKind::medication, config.treatment_code, start, std::nullopt});
    }

    const int sofa_base = static_cast<int>(rng.uniform(0.0, 21.0));
    const int gcs_base = 3 + static_cast<int>(rng.uniform(0.0, 13.0));
    const int aki_stage = aki ? 1 + static_cast<int>(rng.uniform(0.0, 3.0)) : 0;
    const double scr_rate = treated ? config.scr_abnormal_treated : config.scr_abnormal_control;
    const double ast_rate = treated ? config.ast_abnormal_treated : config.ast_abnormal_control;

    LabSeries scr{"SCr", {}}, ast{"AST", {}}, sofa{"SOFA", {}}, gcs{"GCS", {}}, akis{"AKI_stage", {}};
    for (int d = 0; d < config.horizon_days; ++d) {
      const Hours t = d * kHoursPerDay + rng.uniform(4.0, 20.0);
      // Draw every value even when dropped so missingness does not shift the stream.
      const double v_scr = lab_value(rng, config.scr_lower, config.scr_upper, rng.bernoulli(scr_rate));
      const double v_ast = lab_value(rng, config.ast_lower, config.ast_upper, rng.bernoulli(ast_rate));
      const double v_sofa = std::clamp(sofa_base + std::floor(rng.uniform(-1.0, 2.0)), 0.0, 24.0);
      const double v_gcs = std::clamp(gcs_base + std::floor(rng.uniform(-1.0, 2.0)), 3.0, 15.0);
      std::array<bool, 5> keep;
      for (auto& k : keep) k = !rng.bernoulli(config.missing_rate);
      if (t > term || t > horizon) continue;
      if (keep[0]) scr.points.push_back({t, v_scr});
      if (keep[1]) ast.points.push_back({t, v_ast});
      if (keep[2]) sofa.points.push_back({t, v_sofa});
      if (keep[3]) gcs.points.push_back({t, v_gcs});
      if (keep[4]) akis.points.push_back({t, static_cast<double>(aki_stage)});
    }
    for (auto* s : {&scr, &ast, &sofa, &gcs, &akis}) {
      if (!s->points.empty()) p.labs.emplace(s->indicator, std::move(*s));
    }
    patients.push_back(std::move(p));
  }

  std::map<std::string, ReferenceRange> ranges{
      {"SCr", {"SCr", config.scr_lower, config.scr_upper}},
      {"AST", {"AST", config.ast_lower, config.ast_upper}},
  };
  return PatientStore(std::move(patients), std::move(ranges), {"age", "gender_code", "race"});
}

}  // namespace trialx
