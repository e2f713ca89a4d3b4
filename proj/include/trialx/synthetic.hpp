#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "trialx/ehr.hpp"

namespace trialx {

/// Parameters of the synthetic ICU cohort. Defaults give a sepsis-like
/// population where every Case I / Case II criterion has both outcomes.
struct SyntheticConfig {
  int n_patients = 1000;
  double treated_fraction = 0.3;
  std::string treatment_code = "hydrocortisone";

  int horizon_days = 28;
  /// Log hazard ratio of in-hospital death for treated vs control.
  double true_log_hr = 0.0;
  /// Baseline death hazard per day at the reference age of 60.
  double baseline_death_rate = 0.02;
  /// Discharge hazard per day (competing terminator, independent of arm).
  double discharge_rate = 0.05;

  /// Treated patients' age mean is shifted by this many age SDs.
  double age_shift_sd = 0.0;
  /// Log hazard of death per decade of age above 60.
  double age_log_hr_per_decade = 0.0;
  double age_mean = 62.0;
  double age_sd = 16.0;

  /// Probability a daily SCr / AST value lies outside its reference range.
  double scr_abnormal_treated = 0.3;
  double scr_abnormal_control = 0.3;
  double ast_abnormal_treated = 0.3;
  double ast_abnormal_control = 0.3;

  /// Probability that any single lab point, height or weight is dropped.
  double missing_rate = 0.0;

  double ventilation_rate = 0.5;
  double prior_cardiac_surgery_rate = 0.1;
  double sepsis_rate = 0.85;
  double aki_rate = 0.6;

  double scr_lower = 0.6, scr_upper = 1.3;
  double ast_lower = 8.0, ast_upper = 40.0;
};

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticConfig& c);

/// Deterministic in (config, seed). Throws ValidationError on a bad config.
PatientStore generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace trialx
