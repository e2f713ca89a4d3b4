#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "trialx/cohort.hpp"
#include "trialx/cox.hpp"
#include "trialx/metrics.hpp"

namespace trialx {

struct CurvePoint {
  int day = 0;
  double fraction = 0.0;  // abnormal share of usable patients
};

struct ArmProfile {
  /// (male, female) proportions; absent for an empty arm.
  std::optional<std::array<double, 2>> gender;
  std::optional<std::array<double, kAgeBins>> age;
  /// Only days with at least one usable patient appear.
  std::vector<CurvePoint> kidney;
  std::vector<CurvePoint> liver;
};

struct HazardSummary {
  double hr = 1.0;
  double ci_lo = 1.0;
  double ci_hi = 1.0;
  double p_value = 1.0;
};

struct TemporalProfile {
  CandidateId candidate_id = 0;
  ArmProfile treated;
  ArmProfile control;
  std::optional<HazardSummary> hazard;
};

ArmProfile arm_profile(const PatientStore& store, std::span<const PatientIndex> patients,
                       const ImputedIndicator& kidney, const ImputedIndicator& liver);

TemporalProfile profile_candidate(const PatientStore& store, const MatchedCohort& matched,
                                  const std::optional<CoxFit>& cox, const ImputedIndicator& kidney,
                                  const ImputedIndicator& liver);

/// Convenience overload that imputes SCr and AST on the fly.
TemporalProfile profile_candidate(const PatientStore& store, const MatchedCohort& matched,
                                  const std::optional<CoxFit>& cox, int horizon_days);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;  // members contributing
};

struct CurveStat {
  int day = 0;
  MeanSd stat;
};

struct ArmGroupProfile {
  std::array<MeanSd, 2> gender{};
  std::array<MeanSd, kAgeBins> age{};
  std::vector<CurveStat> kidney;
  std::vector<CurveStat> liver;
};

/// The five outcome metrics of one candidate, any of which may be absent.
struct MetricValues {
  std::optional<double> n_patients;
  std::optional<double> diversity;
  std::optional<double> hr;
  std::optional<double> kidney_rr;
  std::optional<double> liver_rr;
  bool operator==(const MetricValues&) const = default;
};

struct GroupProfile {
  std::vector<CandidateId> members;
  ArmGroupProfile treated;
  ArmGroupProfile control;
  std::optional<MeanSd> hr_ci_lo;
  std::optional<MeanSd> hr_ci_hi;
  /// Keyed n, diversity, hr, kidney_rr, liver_rr.
  std::map<std::string, MeanSd> metrics;
};

/// Mean and population SD of the present values; nullopt when none.
std::optional<MeanSd> mean_sd(const std::vector<double>& values);

/// Pointwise mean/SD across members; absent points are skipped per point.
/// `profiles` and `metrics` are aligned; throws ValidationError when empty
/// or misaligned.
GroupProfile aggregate_group(const std::vector<TemporalProfile>& profiles,
                             const std::vector<MetricValues>& metrics);

nlohmann::json to_json(const TemporalProfile& p);
nlohmann::json to_json(const GroupProfile& g);

}  // namespace trialx
