#include "trialx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "trialx/error.hpp"

namespace trialx {

int age_bin(int age) { return std::clamp(age / 10, 0, kAgeBins - 1); }

double shannon_entropy(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

double diversity_entropy(std::span<const PatientRecord* const> patients) {
  if (patients.empty()) throw ValidationError("diversity of an empty patient list");
  std::array<std::size_t, 2 * kAgeBins> cells{};
  for (const auto* p : patients) {
    const int g = p->gender == Gender::male ? 0 : 1;
    ++cells[static_cast<std::size_t>(g * kAgeBins + age_bin(p->age))];
  }
  return shannon_entropy(cells);
}

double diversity_entropy(const PatientStore& store, std::span<const PatientIndex> patients) {
  std::vector<const PatientRecord*> ptrs;
  ptrs.reserve(patients.size());
  for (auto i : patients) ptrs.push_back(&store.patients()[i]);
  return diversity_entropy(ptrs);
}

int day_of(Hours t) { return static_cast<int>(std::floor(t / kHoursPerDay)) + 1; }

std::optional<DailySeries> impute_series(const LabSeries* series, Status status,
                                         std::optional<Hours> terminator, int horizon_days,
                                         const ReferenceRange& range, const ImputeOptions& options) {
  const int h = horizon_days;
  const Hours horizon = h * kHoursPerDay;
  const bool ended = status != Status::in_hospital && terminator && *terminator < horizon;
  const int last_day = ended ? std::min(h, day_of(*terminator)) : h;

  std::vector<double> sum(static_cast<std::size_t>(last_day), 0.0);
  std::vector<int> count(static_cast<std::size_t>(last_day), 0);
  if (series) {
    for (const auto& pt : series->points) {
      const int d = day_of(pt.time);
      if (d < 1 || d > last_day) continue;
      sum[static_cast<std::size_t>(d - 1)] += pt.value;
      ++count[static_cast<std::size_t>(d - 1)];
    }
  }

  std::vector<int> observed;  // 0-based day indices with data
  for (int d = 0; d < last_day; ++d) {
    if (count[static_cast<std::size_t>(d)] > 0) observed.push_back(d);
  }
  const int missing = last_day - static_cast<int>(observed.size());
  if (observed.empty() || missing > options.max_missing_fraction * last_day) return std::nullopt;
  int prev = -1;
  for (int d : observed) {
    if (d - prev - 1 > options.max_gap_days) return std::nullopt;
    prev = d;
  }
  if (last_day - 1 - prev > options.max_gap_days) return std::nullopt;

  DailySeries out(static_cast<std::size_t>(h));
  auto value = [&](int d) { return sum[static_cast<std::size_t>(d)] / count[static_cast<std::size_t>(d)]; };
  for (int d = 0; d <= observed.front(); ++d) out[static_cast<std::size_t>(d)] = value(observed.front());
  for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
    const int a = observed[k], b = observed[k + 1];
    const double va = value(a), vb = value(b);
    for (int d = a; d < b; ++d) {
      const double f = static_cast<double>(d - a) / (b - a);
      out[static_cast<std::size_t>(d)] = d == a ? va : va + f * (vb - va);
    }
  }
  for (int d = observed.back(); d < last_day; ++d) out[static_cast<std::size_t>(d)] = value(observed.back());

  for (int d = last_day; d < h; ++d) {
    if (status == Status::discharged) out[static_cast<std::size_t>(d)] = range.midpoint();
  }
  return out;
}

ImputedIndicator::ImputedIndicator(const PatientStore& store, const ReferenceRange& range, int horizon_days,
                                   const ImputeOptions& options)
    : range_(range), horizon_days_(horizon_days) {
  series_.reserve(store.size());
  for (const auto& p : store.patients()) {
    series_.push_back(impute_series(p.lab(range.indicator), p.status(), p.terminator(), horizon_days,
                                    range, options));
  }
}

std::string_view to_string(Organ o) { return o == Organ::kidney ? "kidney" : "liver"; }
std::string_view indicator_of(Organ o) { return o == Organ::kidney ? "SCr" : "AST"; }

std::vector<DayCount> arm_daily_counts(const ImputedIndicator& imputed, std::span<const PatientIndex> patients) {
  std::vector<DayCount> days(static_cast<std::size_t>(imputed.horizon_days()));
  for (auto i : patients) {
    const auto& s = imputed.series(i);
    if (!s) continue;
    for (std::size_t d = 0; d < s->size(); ++d) {
      if (!(*s)[d]) continue;
      ++days[d].usable;
      if (imputed.range().abnormal(*(*s)[d])) ++days[d].abnormal;
    }
  }
  return days;
}

std::optional<double> corrected_risk_ratio(const DayCount& t, const DayCount& c) {
  if (t.usable == 0 || c.usable == 0) return std::nullopt;
  const double pt = (static_cast<double>(t.abnormal) + 0.5) / (static_cast<double>(t.usable) + 1.0);
  const double pc = (static_cast<double>(c.abnormal) + 0.5) / (static_cast<double>(c.usable) + 1.0);
  return pt / pc;
}

RiskSeries risk_from_counts(Organ organ, const std::vector<DayCount>& treated,
                            const std::vector<DayCount>& control) {
  if (treated.size() != control.size()) throw ValidationError("arm day counts differ in length");
  RiskSeries r;
  r.organ = organ;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < treated.size(); ++d) {
    auto ratio = corrected_risk_ratio(treated[d], control[d]);
    r.daily_ratios.emplace_back(static_cast<int>(d) + 1, ratio);
    if (ratio) {
      sum += *ratio;
      ++n;
    }
  }
  if (n > 0) r.mean_ratio = sum / static_cast<double>(n);
  return r;
}

RiskSeries organ_risk_ratio(const ImputedIndicator& imputed, const MatchedCohort& matched, Organ organ) {
  if (matched.pairs.empty()) throw EmptyArmError("risk ratio needs matched pairs");
  const auto t = matched.treated();
  const auto c = matched.control();
  return risk_from_counts(organ, arm_daily_counts(imputed, t), arm_daily_counts(imputed, c));
}

RiskSeries organ_risk_ratio(const PatientStore& store, const MatchedCohort& matched, Organ organ,
                            int horizon_days, const ImputeOptions& options) {
  const ImputedIndicator imputed(store, store.range(indicator_of(organ)), horizon_days, options);
  return organ_risk_ratio(imputed, matched, organ);
}

nlohmann::json to_json(const RiskSeries& r) {
  nlohmann::json days = nlohmann::json::array();
  for (const auto& [d, v] : r.daily_ratios)
    days.push_back({{"day", d}, {"ratio", v ? nlohmann::json(*v) : nlohmann::json(nullptr)}});
  return {{"organ", to_string(r.organ)},
          {"mean_ratio", r.mean_ratio ? nlohmann::json(*r.mean_ratio) : nlohmann::json(nullptr)},
          {"daily", days}};
}

}  // namespace trialx
