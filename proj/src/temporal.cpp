#include "trialx/temporal.hpp"

#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "trialx/error.hpp"

namespace trialx {

ArmProfile arm_profile(const PatientStore& store, std::span<const PatientIndex> patients,
                       const ImputedIndicator& kidney, const ImputedIndicator& liver) {
  ArmProfile arm;
  if (patients.empty()) return arm;
  std::array<std::size_t, 2> gender_count{};
  std::array<std::size_t, kAgeBins> age_count{};
  for (auto i : patients) {
    const auto& p = store.patients()[i];
    ++gender_count[p.gender == Gender::male ? 0 : 1];
    ++age_count[static_cast<std::size_t>(age_bin(p.age))];
  }
  const double n = static_cast<double>(patients.size());
  arm.gender.emplace();
  arm.age.emplace();
  for (std::size_t k = 0; k < 2; ++k) (*arm.gender)[k] = static_cast<double>(gender_count[k]) / n;
  for (std::size_t k = 0; k < kAgeBins; ++k) (*arm.age)[k] = static_cast<double>(age_count[k]) / n;
  auto curve = [&](const ImputedIndicator& imp) {
    std::vector<CurvePoint> out;
    const auto counts = arm_daily_counts(imp, patients);
    for (std::size_t d = 0; d < counts.size(); ++d) {
      if (counts[d].usable == 0) continue;
      out.push_back({static_cast<int>(d) + 1,
                     static_cast<double>(counts[d].abnormal) / static_cast<double>(counts[d].usable)});
    }
    return out;
  };
  arm.kidney = curve(kidney);
  arm.liver = curve(liver);
  return arm;
}

TemporalProfile profile_candidate(const PatientStore& store, const MatchedCohort& matched,
                                  const std::optional<CoxFit>& cox, const ImputedIndicator& kidney,
                                  const ImputedIndicator& liver) {
  TemporalProfile p;
  p.candidate_id = matched.candidate_id;
  const auto t = matched.treated();
  const auto c = matched.control();
  p.treated = arm_profile(store, t, kidney, liver);
  p.control = arm_profile(store, c, kidney, liver);
  if (cox) p.hazard = HazardSummary{cox->hr, cox->ci_lo, cox->ci_hi, cox->p_value};
  return p;
}

TemporalProfile profile_candidate(const PatientStore& store, const MatchedCohort& matched,
                                  const std::optional<CoxFit>& cox, int horizon_days) {
  const ImputedIndicator kidney(store, store.range("SCr"), horizon_days);
  const ImputedIndicator liver(store, store.range("AST"), horizon_days);
  return profile_candidate(store, matched, cox, kidney, liver);
}

std::optional<MeanSd> mean_sd(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  MeanSd s;
  s.n = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

namespace {

std::vector<CurveStat> curve_stats(const std::vector<const std::vector<CurvePoint>*>& curves) {
  std::map<int, std::vector<double>> by_day;
  for (const auto* c : curves) {
    for (const auto& pt : *c) by_day[pt.day].push_back(pt.fraction);
  }
  std::vector<CurveStat> out;
  for (const auto& [day, values] : by_day) out.push_back({day, *mean_sd(values)});
  return out;
}

ArmGroupProfile arm_group(const std::vector<const ArmProfile*>& arms) {
  ArmGroupProfile g;
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> v;
    for (const auto* a : arms) {
      if (a->gender) v.push_back((*a->gender)[k]);
    }
    if (auto s = mean_sd(v)) g.gender[k] = *s;
  }
  for (std::size_t k = 0; k < kAgeBins; ++k) {
    std::vector<double> v;
    for (const auto* a : arms) {
      if (a->age) v.push_back((*a->age)[k]);
    }
    if (auto s = mean_sd(v)) g.age[k] = *s;
  }
  std::vector<const std::vector<CurvePoint>*> kidney, liver;
  for (const auto* a : arms) {
    kidney.push_back(&a->kidney);
    liver.push_back(&a->liver);
  }
  g.kidney = curve_stats(kidney);
  g.liver = curve_stats(liver);
  return g;
}

nlohmann::json opt_array(const auto& maybe) {
  if (!maybe) return nullptr;
  return nlohmann::json(*maybe);
}

nlohmann::json curve_json(const std::vector<CurvePoint>& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : c) arr.push_back({{"day", p.day}, {"fraction", p.fraction}});
  return arr;
}

nlohmann::json arm_json(const ArmProfile& a) {
  return {{"gender", opt_array(a.gender)},
          {"age_hist", opt_array(a.age)},
          {"kidney_curve", curve_json(a.kidney)},
          {"liver_curve", curve_json(a.liver)}};
}

nlohmann::json stat_json(const MeanSd& s) { return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}}; }

nlohmann::json curve_stat_json(const std::vector<CurveStat>& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : c) arr.push_back({{"day", p.day}, {"mean", p.stat.mean}, {"sd", p.stat.sd}, {"n", p.stat.n}});
  return arr;
}

nlohmann::json arm_group_json(const ArmGroupProfile& a) {
  nlohmann::json gender = nlohmann::json::array(), age = nlohmann::json::array();
  for (const auto& s : a.gender) gender.push_back(stat_json(s));
  for (const auto& s : a.age) age.push_back(stat_json(s));
  return {{"gender", gender},
          {"age_hist", age},
          {"kidney_curve", curve_stat_json(a.kidney)},
          {"liver_curve", curve_stat_json(a.liver)}};
}

}  // namespace

GroupProfile aggregate_group(const std::vector<TemporalProfile>& profiles,
                             const std::vector<MetricValues>& metrics) {
  if (profiles.empty()) throw ValidationError("empty group");
  if (profiles.size() != metrics.size()) throw ValidationError("profiles and metrics are not aligned");
  GroupProfile g;
  std::vector<const ArmProfile*> treated, control;
  std::vector<double> lo, hi;
  for (const auto& p : profiles) {
    g.members.push_back(p.candidate_id);
    treated.push_back(&p.treated);
    control.push_back(&p.control);
    if (p.hazard) {
      lo.push_back(p.hazard->ci_lo);
      hi.push_back(p.hazard->ci_hi);
    }
  }
  g.treated = arm_group(treated);
  g.control = arm_group(control);
  g.hr_ci_lo = mean_sd(lo);
  g.hr_ci_hi = mean_sd(hi);

  const std::pair<const char*, std::optional<double> MetricValues::*> fields[] = {
      {"n", &MetricValues::n_patients}, {"diversity", &MetricValues::diversity},
      {"hr", &MetricValues::hr},        {"kidney_rr", &MetricValues::kidney_rr},
      {"liver_rr", &MetricValues::liver_rr}};
  for (const auto& [name, field] : fields) {
    std::vector<double> v;
    for (const auto& m : metrics) {
      if (m.*field && std::isfinite(*(m.*field))) v.push_back(*(m.*field));
    }
    if (auto s = mean_sd(v)) g.metrics[name] = *s;
  }
  return g;
}

nlohmann::json to_json(const TemporalProfile& p) {
  nlohmann::json j{{"candidate_id", p.candidate_id},
                   {"treated", arm_json(p.treated)},
                   {"control", arm_json(p.control)}};
  if (p.hazard) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    j["hr_with_ci"] = {{"hr", num(p.hazard->hr)},
                       {"ci_lo", num(p.hazard->ci_lo)},
                       {"ci_hi", num(p.hazard->ci_hi)},
                       {"p", num(p.hazard->p_value)}};
  } else {
    j["hr_with_ci"] = nullptr;
  }
  return j;
}

nlohmann::json to_json(const GroupProfile& g) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, s] : g.metrics) metrics[name] = stat_json(s);
  return {{"members", g.members},
          {"treated", arm_group_json(g.treated)},
          {"control", arm_group_json(g.control)},
          {"hr_ci_lo", g.hr_ci_lo ? stat_json(*g.hr_ci_lo) : nlohmann::json(nullptr)},
          {"hr_ci_hi", g.hr_ci_hi ? stat_json(*g.hr_ci_hi) : nlohmann::json(nullptr)},
          {"metrics", metrics}};
}

}  // namespace trialx
