#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "trialx/cohort.hpp"
#include "trialx/ehr.hpp"

namespace trialx {

// ---- diversity ------------------------------------------------------------

inline constexpr int kAgeBins = 10;  // 0-9, 10-19, ..., 80-89, 90+

int age_bin(int age);

/// -sum p ln p over the nonzero counts.
double shannon_entropy(std::span<const std::size_t> counts);

/// Joint gender x age-decade entropy (natural log). Throws ValidationError
/// on an empty list.
double diversity_entropy(std::span<const PatientRecord* const> patients);
double diversity_entropy(const PatientStore& store, std::span<const PatientIndex> patients);

// ---- lab imputation -------------------------------------------------------

/// Daily values for days 1..H; element d-1 holds day d, which covers hours
/// [24(d-1), 24d). nullopt marks a day with no value (after death).
using DailySeries = std::vector<std::optional<double>>;

struct ImputeOptions {
  /// Series with more than this fraction of days missing before the stay
  /// ended are discarded.
  double max_missing_fraction = 0.5;
  /// Series with a run of more than this many missing days are discarded.
  int max_gap_days = 3;
};

/// Day number (1-based) containing hour `t`.
int day_of(Hours t);

/// Place observations on the daily grid (mean per day), then: days after a
/// discharge take the range midpoint; days after death are absent; gaps
/// between observations are linearly interpolated and leading or trailing
/// gaps take the nearest observation. Returns nullopt when the series is
/// discarded for sparseness or a long gap.
std::optional<DailySeries> impute_series(const LabSeries* series, Status status,
                                         std::optional<Hours> terminator, int horizon_days,
                                         const ReferenceRange& range, const ImputeOptions& options = {});

/// Imputed series of one indicator for every patient of a store.
class ImputedIndicator {
 public:
  ImputedIndicator(const PatientStore& store, const ReferenceRange& range, int horizon_days,
                   const ImputeOptions& options = {});

  const std::optional<DailySeries>& series(PatientIndex i) const { return series_[i]; }
  const ReferenceRange& range() const noexcept { return range_; }
  int horizon_days() const noexcept { return horizon_days_; }

 private:
  std::vector<std::optional<DailySeries>> series_;
  ReferenceRange range_;
  int horizon_days_ = 0;
};

// ---- organ risk -------------------------------------------------------------

enum class Organ { kidney, liver };
std::string_view to_string(Organ o);
/// SCr for the kidney, AST for the liver.
std::string_view indicator_of(Organ o);

/// Usable (alive, not discarded) and abnormal patient counts of one arm on
/// one day.
struct DayCount {
  std::size_t usable = 0;
  std::size_t abnormal = 0;
};

/// Per-day counts for days 1..H over `patients`.
std::vector<DayCount> arm_daily_counts(const ImputedIndicator& imputed, std::span<const PatientIndex> patients);

struct RiskSeries {
  Organ organ = Organ::kidney;
  /// (day, ratio); ratio is absent when either arm has no usable patient.
  std::vector<std::pair<int, std::optional<double>>> daily_ratios;
  std::optional<double> mean_ratio;  // absent when no day has a ratio
};

/// Continuity-corrected ratio of abnormal proportions,
/// ((a_t + 0.5) / (n_t + 1)) / ((a_c + 0.5) / (n_c + 1)).
std::optional<double> corrected_risk_ratio(const DayCount& treated, const DayCount& control);

RiskSeries risk_from_counts(Organ organ, const std::vector<DayCount>& treated,
                            const std::vector<DayCount>& control);

RiskSeries organ_risk_ratio(const ImputedIndicator& imputed, const MatchedCohort& matched, Organ organ);

/// Convenience overload that imputes on the fly.
RiskSeries organ_risk_ratio(const PatientStore& store, const MatchedCohort& matched, Organ organ,
                            int horizon_days, const ImputeOptions& options = {});

nlohmann::json to_json(const RiskSeries& r);

}  // namespace trialx
