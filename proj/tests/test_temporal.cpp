#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "trialx/error.hpp"
#include "trialx/temporal.hpp"

using namespace trialx;

namespace {

PatientStore day3_store() {
  using fixtures::patient;
  std::vector<PatientRecord> ps;
  const double day3[6] = {1.5, 1.0, 0.9, 1.0, 1.0, 1.0};
  for (int i = 0; i < 6; ++i) {
    auto p = patient("p" + std::to_string(i), 30 + 20 * (i % 3), i % 2 ? Gender::female : Gender::male);
    for (int d = 1; d <= 3; ++d) fixtures::add_lab(p, "SCr", (d - 1) * 24.0 + 8.0, d == 3 ? day3[i] : 1.0);
    ps.push_back(p);
  }
  return fixtures::store(ps);
}

MatchedCohort pairs_3() {
  MatchedCohort m;
  for (PatientIndex i = 0; i < 3; ++i) m.pairs.push_back({i, i + 3, 0.5, 0.5, 0.0});
  return m;
}

TemporalProfile with_curve(CandidateId id, double fraction, double hr) {
  TemporalProfile p;
  p.candidate_id = id;
  p.treated.kidney = {{1, fraction}};
  p.treated.gender = std::array<double, 2>{fraction, 1 - fraction};
  p.hazard = HazardSummary{hr, hr * 0.8, hr * 1.25, 0.05};
  return p;
}

}  // namespace

TEST_CASE("abnormal fraction counts patients outside the range") {
  const auto store = day3_store();
  const auto p = profile_candidate(store, pairs_3(), std::nullopt, 3);
  REQUIRE(p.treated.kidney.size() == 3);
  CHECK(p.treated.kidney[2].day == 3);
  CHECK(p.treated.kidney[2].fraction == doctest::Approx(1.0 / 3.0));
  CHECK(p.control.kidney[2].fraction == 0.0);
  CHECK(p.treated.liver.empty());  // no AST data
  CHECK_FALSE(p.hazard.has_value());
}

TEST_CASE("proportions sum to one per arm and curves stay in range") {
  const auto store = day3_store();
  const auto p = profile_candidate(store, pairs_3(), std::nullopt, 3);
  for (const auto* arm : {&p.treated, &p.control}) {
    REQUIRE(arm->gender);
    CHECK((*arm->gender)[0] + (*arm->gender)[1] == doctest::Approx(1.0));
    double s = 0;
    for (double v : *arm->age) s += v;
    CHECK(s == doctest::Approx(1.0));
    for (const auto& pt : arm->kidney) {
      CHECK(pt.fraction >= 0.0);
      CHECK(pt.fraction <= 1.0);
      CHECK(pt.day >= 1);
      CHECK(pt.day <= 3);
    }
  }
}

TEST_CASE("identical arms give identical profiles") {
  using fixtures::patient;
  std::vector<PatientRecord> ps;
  for (int i = 0; i < 4; ++i) {
    auto p = patient("p" + std::to_string(i), 40 + (i % 2) * 30);
    fixtures::add_lab(p, "SCr", 5.0, i % 2 ? 2.0 : 1.0);
    ps.push_back(p);
  }
  const auto store = fixtures::store(ps);
  MatchedCohort m;
  m.pairs = {{0, 2, 0.5, 0.5, 0}, {1, 3, 0.5, 0.5, 0}};
  const auto p = profile_candidate(store, m, std::nullopt, 1);
  CHECK(*p.treated.gender == *p.control.gender);
  CHECK(*p.treated.age == *p.control.age);
  REQUIRE(p.treated.kidney.size() == p.control.kidney.size());
  CHECK(p.treated.kidney[0].fraction == p.control.kidney[0].fraction);
}

TEST_CASE("empty arm gives absent distributions") {
  const auto store = day3_store();
  const auto kidney = ImputedIndicator(store, store.range("SCr"), 3);
  const auto arm = arm_profile(store, {}, kidney, kidney);
  CHECK_FALSE(arm.gender.has_value());
  CHECK(arm.kidney.empty());
}

TEST_CASE("single-member group has zero spread") {
  const auto g = aggregate_group({with_curve(0, 0.2, 0.7)}, {MetricValues{100.0, 1.5, 0.7, 0.9, 1.1}});
  CHECK(g.treated.kidney[0].stat.mean == doctest::Approx(0.2));
  CHECK(g.treated.kidney[0].stat.sd == 0.0);
  CHECK(g.metrics.at("hr").mean == doctest::Approx(0.7));
  CHECK(g.metrics.at("hr").sd == 0.0);
  CHECK(g.treated.gender[0].sd == 0.0);
}

TEST_CASE("two-member group mean and population sd") {
  const auto g = aggregate_group({with_curve(0, 0.2, 0.70), with_curve(1, 0.4, 0.72)},
                                 {MetricValues{std::nullopt, std::nullopt, 0.70, std::nullopt, std::nullopt},
                                  MetricValues{std::nullopt, std::nullopt, 0.72, std::nullopt, std::nullopt}});
  CHECK(g.treated.kidney[0].stat.mean == doctest::Approx(0.3));
  CHECK(g.treated.kidney[0].stat.sd == doctest::Approx(0.1));
  CHECK(g.metrics.at("hr").mean == doctest::Approx(0.71));
  CHECK(g.metrics.count("n") == 0);
  CHECK(g.hr_ci_lo->mean == doctest::Approx(0.71 * 0.8));
}

TEST_CASE("aggregation ignores member order") {
  std::vector<TemporalProfile> ps{with_curve(0, 0.1, 0.6), with_curve(1, 0.5, 0.9), with_curve(2, 0.3, 1.2)};
  std::vector<MetricValues> ms{{1.0, 2.0, 0.6, 1.0, 1.0}, {2.0, 1.0, 0.9, 1.0, 1.0}, {3.0, 1.5, 1.2, 1.0, 1.0}};
  const auto a = aggregate_group(ps, ms);
  std::reverse(ps.begin(), ps.end());
  std::reverse(ms.begin(), ms.end());
  const auto b = aggregate_group(ps, ms);
  CHECK(a.treated.kidney[0].stat.mean == doctest::Approx(b.treated.kidney[0].stat.mean).epsilon(1e-15));
  CHECK(a.treated.kidney[0].stat.sd == doctest::Approx(b.treated.kidney[0].stat.sd).epsilon(1e-15));
  CHECK(a.metrics.at("n").mean == doctest::Approx(b.metrics.at("n").mean).epsilon(1e-15));
}

TEST_CASE("points absent in some members are skipped per point") {
  auto a = with_curve(0, 0.2, 1.0);
  auto b = with_curve(1, 0.4, 1.0);
  b.treated.kidney.push_back({2, 0.6});
  const auto g = aggregate_group({a, b}, {MetricValues{}, MetricValues{}});
  REQUIRE(g.treated.kidney.size() == 2);
  CHECK(g.treated.kidney[1].stat.n == 1);
  CHECK(g.treated.kidney[1].stat.mean == doctest::Approx(0.6));
}

TEST_CASE("empty or misaligned groups are rejected") {
  CHECK_THROWS_AS(aggregate_group({}, {}), ValidationError);
  CHECK_THROWS_AS(aggregate_group({with_curve(0, 0.1, 1.0)}, {}), ValidationError);
}
