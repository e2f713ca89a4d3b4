#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "trialx/cohort.hpp"
#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"

using namespace trialx;

TEST_CASE("saturated logistic model reproduces empirical fractions") {
  // two binary covariates, all four cells populated: the model is saturated
  // once the interaction column is included
  const int cells[4][2] = {{3, 10}, {7, 10}, {1, 8}, {5, 6}};  // treated, total
  std::vector<std::array<double, 2>> cov{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  std::vector<int> cell_of;
  for (int c = 0; c < 4; ++c) {
    for (int k = 0; k < cells[c][1]; ++k) {
      rows.push_back({1.0, cov[c][0], cov[c][1], cov[c][0] * cov[c][1]});
      y.push_back(k < cells[c][0] ? 1.0 : 0.0);
      cell_of.push_back(c);
    }
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 4);
  Eigen::VectorXd yy(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < 4; ++j) x(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    yy[static_cast<Eigen::Index>(i)] = y[i];
  }
  const auto fit = fit_logistic(x, yy, {"(intercept)", "a", "b", "a:b"});
  CHECK(fit.converged);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int c = cell_of[i];
    const double expected = static_cast<double>(cells[c][0]) / cells[c][1];
    CHECK(std::fabs(fit.probabilities[static_cast<Eigen::Index>(i)] - expected) < 1e-8);
  }
}

TEST_CASE("collinear columns are reported by name") {
  Eigen::MatrixXd x(6, 3);
  x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10, 1, 6, 12;
  Eigen::VectorXd y(6);
  y << 0, 1, 0, 1, 1, 0;
  try {
    fit_logistic(x, y, {"(intercept)", "dose", "double_dose"});
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dose") != std::string::npos);
    CHECK(msg.find("double_dose") != std::string::npos);
  }
}

TEST_CASE("perfect separation never reports convergence") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  const auto fit = fit_logistic(x, y, {"(intercept)", "v"});
  CHECK_FALSE(fit.converged);
}

TEST_CASE("confounder encoding: one-hot strings, mean-filled numbers") {
  using fixtures::patient;
  auto a = patient("a", 40, Gender::male, "black");
  auto b = patient("b", 60, Gender::female, "white");
  auto c = patient("c", 80, Gender::male, "asian");
  a.height_m = 1.8;
  a.weight_kg = 81.0;  // bmi 25
  b.height_m = 1.6;
  b.weight_kg = 76.8;  // bmi 30
  const auto store = fixtures::store({a, b, c}, {"age", "bmi", "race"});
  const auto d = encode_confounders(store, {0, 1, 2}, {"age", "bmi", "race"});
  REQUIRE(d.columns == std::vector<std::string>{"age", "bmi", "race=black", "race=white"});
  CHECK(d.x(0, 0) == 40);
  CHECK(d.x(2, 1) == doctest::Approx(27.5));  // c has no bmi
  CHECK(d.x(0, 2) == 1);
  CHECK(d.x(2, 2) == 0);
  CHECK(d.x(2, 3) == 0);  // asian is the reference level
  CHECK(d.x(1, 3) == 1);
}

TEST_CASE("propensity needs both arms and drops constant columns") {
  using fixtures::patient;
  std::vector<PatientRecord> ps;
  for (int i = 0; i < 12; ++i) ps.push_back(patient("p" + std::to_string(i), 30 + 3 * i, Gender::male));
  const auto store = fixtures::store(ps);
  EligibleCohort cohort;
  cohort.treated = {0, 2, 5, 7, 9, 11};
  cohort.control = {1, 3, 4, 6, 8, 10};
  const auto fit = fit_propensity(store, cohort, {"age", "gender_code"});
  CHECK(fit.model.dropped == std::vector<std::string>{"gender_code"});
  CHECK(fit.treated_scores.size() == 6);
  for (double s : fit.treated_scores) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  EligibleCohort empty;
  empty.treated = {0, 1};
  CHECK_THROWS_AS(fit_propensity(store, empty, {"age"}), EmptyArmError);
}

TEST_CASE("median and MAD") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(median_absolute_deviation({1, 2, 3, 4, 100}) == 1);
}

TEST_CASE("greedy matching agrees with an exhaustive-scan oracle") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t nt = 5 + rng() % 40, nc = 5 + rng() % 60;
    EligibleCohort cohort;
    std::vector<double> ts, cs, all;
    for (std::size_t i = 0; i < nt; ++i) {
      cohort.treated.push_back(2 * i);
      ts.push_back(std::round(u(rng) * 50) / 50);  // coarse grid forces ties
    }
    for (std::size_t i = 0; i < nc; ++i) {
      cohort.control.push_back(2 * i + 1);
      cs.push_back(std::round(u(rng) * 50) / 50);
    }
    all = ts;
    all.insert(all.end(), cs.begin(), cs.end());
    const auto m = match_cohort(cohort, ts, cs);
    CHECK(m.caliper == doctest::Approx(oracle::mad(all)).epsilon(1e-15));
    const auto expected = oracle::greedy_match(ts, cs, m.caliper);
    std::size_t k = 0;
    for (std::size_t i = 0; i < nt; ++i) {
      if (!expected[i]) continue;
      REQUIRE(k < m.pairs.size());
      CHECK(m.pairs[k].treated == cohort.treated[i]);
      CHECK(m.pairs[k].control == cohort.control[*expected[i]]);
      CHECK(m.pairs[k].distance <= m.caliper);
      ++k;
    }
    CHECK(k == m.pairs.size());
    CHECK(m.discarded_treated == nt - k);
  }
}

TEST_CASE("equal distances go to the lower control id") {
  EligibleCohort cohort;
  cohort.treated = {0};
  cohort.control = {1, 2};
  const auto m = match_cohort(cohort, {0.5}, {0.75, 0.25});
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.caliper == 0.25);
  CHECK(m.pairs[0].control == 1);
}

TEST_CASE("all-equal scores pair everyone possible at zero distance") {
  EligibleCohort cohort;
  cohort.treated = {0, 1, 2};
  cohort.control = {3, 4, 5, 6, 7};
  const auto m = match_cohort(cohort, {0.3, 0.3, 0.3}, {0.3, 0.3, 0.3, 0.3, 0.3});
  CHECK(m.caliper == 0.0);
  CHECK(m.pairs.size() == 3);
  for (const auto& p : m.pairs) CHECK(p.distance == 0.0);
}

TEST_CASE("matching never reuses a control") {
  EligibleCohort cohort;
  cohort.treated = {0, 1, 2, 3};
  cohort.control = {4, 5};
  const auto m = match_cohort(cohort, {0.4, 0.41, 0.42, 0.43}, {0.4, 0.9});
  std::set<PatientIndex> used;
  for (const auto& p : m.pairs) CHECK(used.insert(p.control).second);
}

TEST_CASE("standardized mean difference matches the pooled-variance formula") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 4, 5, 9};
  CHECK(standardized_mean_difference(a, b) == doctest::Approx(oracle::smd(a, b)).epsilon(1e-14));
  CHECK(standardized_mean_difference({1, 1, 1}, {1, 1}) == 0.0);
  CHECK(std::isinf(standardized_mean_difference({1, 1, 1}, {2, 2})));
}

TEST_CASE("select_eligible splits by the intervention") {
  using fixtures::patient;
  auto a = patient("a", 30);
  auto b = patient("b", 50);
  auto c = patient("c", 70);
  auto d = patient("d", 80);
  fixtures::add_event(b, "drug", 2.0, EventKind::medication);
  fixtures::add_event(d, "drug", 2.0, EventKind::medication);
  const auto store = fixtures::store({a, b, c, d});
  const auto spec = dsl::parse_spec("INTERVENTION: has_event(\"drug\")\nINCLUDE age: age >= $min\nADJUST $min IN {40, 60}\n");
  const auto cohort = select_eligible(store, spec, {{"min", 40.0}});
  CHECK(cohort.treated == std::vector<PatientIndex>{1, 3});
  CHECK(cohort.control == std::vector<PatientIndex>{2});
}
