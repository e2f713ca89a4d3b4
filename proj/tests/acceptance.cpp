// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   acceptance [--cli <path to trialx>] [--work <scratch dir>]

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "trialx/cohort.hpp"
#include "trialx/cox.hpp"
#include "trialx/dsl/spec.hpp"
#include "trialx/engine.hpp"
#include "trialx/grid.hpp"
#include "trialx/metrics.hpp"
#include "trialx/session.hpp"
#include "trialx/synthetic.hpp"
#include "trialx/text.hpp"

using namespace trialx;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
    if (!ok) {
      pass = false;
      detail += " [failed]";
    }
  }
};

// ---- Cox analytic oracle ----------------------------------------------------

Outcome cox_analytic() {
  Outcome o;
  auto records = [](bool swap) {
    std::vector<SurvivalRecord> r;
    const std::pair<double, bool> rows[] = {{1, true}, {4, true}, {2, false}, {3, false}};
    PatientIndex i = 0;
    for (auto [t, treated] : rows) r.push_back({i++, t, true, swap ? !treated : treated, {}});
    return r;
  };
  const auto data = records(false);
  const auto swapped = records(true);
  const auto t0 = Clock::now();
  const auto fit = fit_cox(data);
  const double elapsed_ms = seconds_since(t0) * 1e3;
  const auto rev = fit_cox(swapped);

  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  o.require(std::fabs(fit.hr - golden) < 1e-4, "HR " + fmt(fit.hr) + " vs " + fmt(golden));
  o.require(std::fabs(fit.beta_t - -0.4812) < 1e-4, "beta " + fmt(fit.beta_t) + " vs -0.4812");
  o.require(std::fabs(rev.hr - 1.0 / fit.hr) < 1e-4, "swap HR " + fmt(rev.hr) + " vs " + fmt(1.0 / fit.hr));
  o.require(elapsed_ms < 10.0, "fit " + fmt(elapsed_ms) + " ms < 10");
  return o;
}

// ---- Cox simulation ---------------------------------------------------------

Outcome cox_simulation() {
  Outcome o;
  const double true_beta = std::log(0.5);
  const int reps = 100, n = 2000;
  std::vector<double> errors;
  int covered = 0, converged = 0;
  const auto t0 = Clock::now();
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(rep));
    std::exponential_distribution<double> control(0.2), treated(0.1);
    std::uniform_real_distribution<double> censor(10.0, 60.0);
    std::vector<SurvivalRecord> r;
    for (int i = 0; i < n; ++i) {
      const bool t = i % 2 == 0;
      const double death = t ? treated(rng) : control(rng);
      const double end = std::min(28.0, censor(rng));
      r.push_back({static_cast<PatientIndex>(i), std::min(death, end), death <= end, t, {}});
    }
    const auto fit = fit_cox(r);
    converged += fit.converged;
    errors.push_back(std::fabs(fit.beta_t - true_beta));
    const double lo = fit.beta_t - 1.959963984540054 * fit.se;
    const double hi = fit.beta_t + 1.959963984540054 * fit.se;
    covered += lo <= true_beta && true_beta <= hi;
  }
  const double elapsed = seconds_since(t0);
  const double med = oracle::median(errors);
  o.require(med < 0.05, "median |log HR - ln 0.5| " + fmt(med) + " < 0.05");
  o.require(covered >= 88, "coverage " + std::to_string(covered) + "/100 >= 88");
  o.require(converged == reps, "converged " + std::to_string(converged) + "/100");
  o.require(elapsed < 60.0, "runtime " + fmt(elapsed) + " s < 60");
  return o;
}

// ---- Gradient check ---------------------------------------------------------

Outcome gradient_check() {
  Outcome o;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  int datasets = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 5 + rng() % 26;  // 5..30
    const std::size_t p = rng() % 3;
    std::vector<SurvivalRecord> r;
    std::vector<double> times;
    std::vector<bool> events;
    std::vector<std::vector<double>> x;
    for (std::size_t i = 0; i < n; ++i) {
      SurvivalRecord s;
      s.patient = i;
      s.time = std::ceil(u(rng) * 8.0);
      s.event = i == 0 || u(rng) < 0.7;
      s.treated = i % 2 == 0;
      for (std::size_t k = 0; k < p; ++k) s.covariates.push_back(z(rng));
      times.push_back(s.time);
      events.push_back(s.event);
      std::vector<double> row{s.treated ? 1.0 : 0.0};
      row.insert(row.end(), s.covariates.begin(), s.covariates.end());
      x.push_back(row);
      r.push_back(std::move(s));
    }
    std::vector<double> beta;
    Eigen::VectorXd b(static_cast<Eigen::Index>(p + 1));
    for (std::size_t k = 0; k <= p; ++k) {
      beta.push_back(z(rng) * 0.5);
      b[static_cast<Eigen::Index>(k)] = beta.back();
    }
    const auto d = cox_derivatives(r, b);
    const auto g = oracle::numeric_gradient(
        [&](const std::vector<double>& at) { return oracle::breslow_loglik(times, events, x, at); }, beta);
    for (std::size_t k = 0; k <= p; ++k) {
      const double a = d.score[static_cast<Eigen::Index>(k)];
      const double rel = std::fabs(a - g[k]) / std::max(std::fabs(g[k]), 1e-300);
      worst = std::max(worst, rel);
    }
    ++datasets;
  }
  o.require(datasets == 50, std::to_string(datasets) + " datasets, n <= 30");
  o.require(worst < 1e-6, "max relative error " + fmt(worst) + " < 1e-6");
  return o;
}

// ---- Propensity and matching ------------------------------------------------

Outcome propensity_matching() {
  Outcome o;
  SyntheticConfig c;
  c.n_patients = 4000;
  c.treated_fraction = 0.3;
  c.age_shift_sd = 1.0;
  const auto store = generate_synthetic(c, 77);
  const auto spec = dsl::parse_spec("INTERVENTION: has_event(\"hydrocortisone\")\n");
  const auto cohort = select_eligible(store, spec, {});
  const std::vector<std::string> confounders{"age", "gender_code", "race"};
  const auto fit = fit_propensity(store, cohort, confounders);
  const auto matched = match_cohort(cohort, fit.treated_scores, fit.control_scores);

  // independent encoding of the confounders: age, gender 0/1 and one
  // indicator per race level
  std::set<std::string> races;
  for (const auto& p : store.patients()) races.insert(p.race);
  auto columns = [&](PatientIndex i) {
    const auto& p = store.patients()[i];
    std::vector<double> v{static_cast<double>(p.age), p.gender == Gender::female ? 1.0 : 0.0};
    for (const auto& r : races) v.push_back(p.race == r ? 1.0 : 0.0);
    return v;
  };
  const std::size_t ncol = 2 + races.size();
  auto smds = [&](const std::vector<PatientIndex>& t, const std::vector<PatientIndex>& k) {
    std::vector<double> out;
    for (std::size_t j = 0; j < ncol; ++j) {
      std::vector<double> a, b;
      for (auto i : t) a.push_back(columns(i)[j]);
      for (auto i : k) b.push_back(columns(i)[j]);
      out.push_back(oracle::smd(a, b));
    }
    return out;
  };
  const double before = std::fabs(smds(cohort.treated, cohort.control)[0]);
  std::vector<PatientIndex> mt, mc;
  for (const auto& p : matched.pairs) {
    mt.push_back(p.treated);
    mc.push_back(p.control);
  }
  double worst = 0.0;
  for (double s : smds(mt, mc)) worst = std::max(worst, std::fabs(s));

  // caliper: recompute the score distance from the fitted scores
  std::vector<double> all = fit.treated_scores;
  all.insert(all.end(), fit.control_scores.begin(), fit.control_scores.end());
  const double caliper = oracle::mad(all);
  std::map<PatientIndex, double> score;
  for (std::size_t i = 0; i < cohort.treated.size(); ++i) score[cohort.treated[i]] = fit.treated_scores[i];
  for (std::size_t i = 0; i < cohort.control.size(); ++i) score[cohort.control[i]] = fit.control_scores[i];
  std::size_t violations = 0;
  for (const auto& p : matched.pairs) violations += std::fabs(score[p.treated] - score[p.control]) > caliper;

  // saturated logistic model
  const int cells[4][2] = {{3, 10}, {7, 10}, {1, 8}, {5, 6}};
  const double cov[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::array<double, 4>> rows;
  std::vector<double> y, expected;
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < cells[k][1]; ++i) {
      rows.push_back({1.0, cov[k][0], cov[k][1], cov[k][0] * cov[k][1]});
      y.push_back(i < cells[k][0] ? 1.0 : 0.0);
      expected.push_back(static_cast<double>(cells[k][0]) / cells[k][1]);
    }
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 4);
  Eigen::VectorXd yy(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < 4; ++j) x(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    yy[static_cast<Eigen::Index>(i)] = y[i];
  }
  const auto sat = fit_logistic(x, yy, {"(intercept)", "a", "b", "a:b"});
  double sat_err = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    sat_err = std::max(sat_err, std::fabs(sat.probabilities[static_cast<Eigen::Index>(i)] - expected[i]));

  o.require(before > 0.8, "age SMD before matching " + fmt(before));
  o.require(worst < 0.1, "max |SMD| after matching " + fmt(worst) + " < 0.1 over " + std::to_string(ncol) +
                             " columns, " + std::to_string(matched.pairs.size()) + " pairs");
  o.require(violations == 0 && std::fabs(caliper - matched.caliper) <= 1e-15,
            std::to_string(violations) + " pairs beyond caliper " + fmt(caliper));
  o.require(sat_err < 1e-8, "saturated model max error " + fmt(sat_err) + " < 1e-8");
  return o;
}

// ---- Entropy ----------------------------------------------------------------

Outcome entropy() {
  Outcome o;
  auto make = [](std::vector<std::pair<int, Gender>> people) {
    std::vector<PatientRecord> ps;
    for (auto [age, g] : people) {
      PatientRecord p;
      p.age = age;
      p.gender = g;
      ps.push_back(p);
    }
    return ps;
  };
  auto h = [](const std::vector<PatientRecord>& ps) {
    std::vector<const PatientRecord*> ptr;
    for (const auto& p : ps) ptr.push_back(&p);
    return diversity_entropy(ptr);
  };
  const double uniform = h(make({{25, Gender::male}, {25, Gender::female}, {55, Gender::male}, {55, Gender::female}}));
  const double point = h(make({{41, Gender::male}, {45, Gender::male}, {49, Gender::male}}));
  const double uneven = h(make({{30, Gender::male}, {35, Gender::male}, {70, Gender::male}, {30, Gender::female}}));
  o.require(std::fabs(uniform - std::log(4.0)) < 1e-12, "uniform 2x2 " + fmt(uniform));
  o.require(point == 0.0, "point mass " + fmt(point));
  o.require(std::fabs(uneven - 1.0397) < 1e-4 && std::fabs(uneven - oracle::entropy({2, 1, 1})) < 1e-12,
            "{2,1,1}/4 " + fmt(uneven));
  return o;
}

// ---- Risk ratio -------------------------------------------------------------

Outcome risk_ratio() {
  Outcome o;
  const std::vector<DayCount> t{{10, 3}, {8, 0}, {7, 7}, {12, 5}};
  const std::vector<DayCount> c{{9, 1}, {9, 4}, {6, 2}, {11, 11}};
  const auto same = risk_from_counts(Organ::kidney, t, t);
  o.require(std::fabs(*same.mean_ratio - 1.0) < 1e-12, "identical arms " + fmt(*same.mean_ratio));

  const auto hand = risk_from_counts(Organ::kidney, {{4, 2}, {4, 1}}, {{4, 1}, {4, 2}});
  const double expect = (oracle::corrected_ratio(2, 4, 1, 4) + oracle::corrected_ratio(1, 4, 2, 4)) / 2.0;
  o.require(std::fabs(*hand.mean_ratio - 1.1333) < 1e-4 && std::fabs(*hand.mean_ratio - expect) < 1e-12,
            "two-day example " + fmt(*hand.mean_ratio));

  const auto a = risk_from_counts(Organ::liver, t, c);
  const auto b = risk_from_counts(Organ::liver, c, t);
  double worst = 0.0;
  for (std::size_t d = 0; d < t.size(); ++d)
    worst = std::max(worst, std::fabs(*a.daily_ratios[d].second - 1.0 / *b.daily_ratios[d].second));
  o.require(worst < 1e-12, "swap reciprocal max deviation " + fmt(worst));
  return o;
}

// ---- Grid and DSL -----------------------------------------------------------

Outcome grid_dsl(const fs::path& source) {
  Outcome o;
  const auto spec = dsl::parse_spec(slurp(source / "specs/grid24.tcl"));
  const CandidateGrid grid(spec.adjustables);
  o.require(grid.size() == 24, "3x4x2 grid has " + std::to_string(grid.size()) + " candidates");
  bool sums = true;
  for (const auto& a : grid.adjustables()) {
    std::size_t s = 0;
    for (auto n : grid.tick_counts(a.name, {})) s += n;
    sums = sums && s == grid.size();
  }
  o.require(sums, "tick counts sum to grid size");

  std::size_t files = 0, ok = 0;
  bool case1 = false, case2 = false;
  for (const auto& e : fs::recursive_directory_iterator(source / "specs")) {
    if (e.path().extension() != ".tcl") continue;
    ++files;
    const auto s = dsl::parse_spec(slurp(e.path()));
    ok += dsl::parse_spec(dsl::serialize_spec(s)) == s;
    case1 = case1 || (e.path().filename() == "case1.tcl" && s.adjustables.size() == 4);
    case2 = case2 || (e.path().filename() == "case2.tcl" && s.adjustables.size() == 5);
  }
  o.require(files >= 20 && ok == files,
            std::to_string(ok) + "/" + std::to_string(files) + " corpus specs round-trip");
  o.require(case1 && case2, "corpus includes Case I (4 adjustables) and Case II (5 adjustables)");
  return o;
}

// ---- Eligibility monotonicity -----------------------------------------------

Outcome monotonicity() {
  Outcome o;
  SyntheticConfig c;
  c.n_patients = 400;
  c.missing_rate = 0.15;
  const auto store = generate_synthetic(c, 13);
  std::mt19937_64 rng(2718);
  struct Attr {
    const char* text;
    double lo, hi;
  };
  const Attr attrs[] = {{"age", 16, 99},         {"bmi", 15, 55},          {"max(SOFA)", 0, 24},
                        {"min(GCS)", 3, 15},     {"mean(SCr)", 0.2, 4.0},  {"max(AST, first 2 days)", 2, 160},
                        {"count(SCr)", 0, 28},   {"weight", 40, 160}};
  enum Kind { include_lower, include_upper, exclude_above };
  struct Bound {
    const Attr* attr;
    Kind kind;
    double value;
  };
  auto text_of = [](const std::vector<Bound>& bounds) {
    std::string s = "INTERVENTION: has_event(\"hydrocortisone\")\n";
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      const auto& b = bounds[i];
      const std::string v = text::format_double(b.value);
      if (b.kind == include_lower) s += "INCLUDE c" + std::to_string(i) + ": " + b.attr->text + " >= " + v + "\n";
      if (b.kind == include_upper) s += "INCLUDE c" + std::to_string(i) + ": " + b.attr->text + " <= " + v + "\n";
      if (b.kind == exclude_above) s += "EXCLUDE c" + std::to_string(i) + ": " + b.attr->text + " > " + v + "\n";
    }
    return s;
  };
  auto eligible = [&](const std::vector<Bound>& bounds) {
    const auto spec = dsl::parse_spec(text_of(bounds));
    std::size_t n = 0;
    for (const auto& p : store.patients()) n += dsl::eligibility(p, spec, {}) != dsl::Eligibility::ineligible;
    return n;
  };
  std::size_t violations = 0, cases = 0;
  for (; cases < 1000; ++cases) {
    std::vector<Bound> bounds;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
      const Attr& a = attrs[rng() % 8];
      const double v = a.lo + (a.hi - a.lo) * static_cast<double>(rng() % 1001) / 1000.0;
      bounds.push_back({&a, static_cast<Kind>(rng() % 3), v});
    }
    const std::size_t base = eligible(bounds);
    auto relaxed = bounds;
    auto& b = relaxed[rng() % relaxed.size()];
    const double step = (b.attr->hi - b.attr->lo) * static_cast<double>(1 + rng() % 100) / 200.0;
    b.value += b.kind == include_lower ? -step : step;
    if (eligible(relaxed) < base) ++violations;
  }
  o.require(violations == 0, std::to_string(cases) + " generated cases, " + std::to_string(violations) + " violations");
  return o;
}

// ---- End-to-end determinism and performance ---------------------------------

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null").c_str());
  return rc;
}

Outcome end_to_end(const fs::path& source, const std::string& cli, const fs::path& work) {
  Outcome o;
  if (cli.empty()) {
    o.require(false, "needs --cli <trialx executable>");
    return o;
  }
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string data = (work / "data").string();
  const std::string spec = (source / "specs/perf36.tcl").string();
  o.require(run(cli + " simulate --config " + (source / "configs/perf.json").string() + " --seed 1 --out " + data) == 0,
            "simulate 10000 patients");
  const auto n = load_store_dir(data).size();
  const std::size_t candidates = grid_size(dsl::parse_spec(slurp(spec)).adjustables);

  auto evaluate = [&](int threads, const std::string& tag) {
    const auto t0 = Clock::now();
    const int rc = run(cli + " evaluate --data " + data + " --spec " + spec + " --threads " + std::to_string(threads) +
                       " --out " + (work / (tag + ".json")).string() + " --csv " + (work / (tag + ".csv")).string());
    return std::make_pair(rc, seconds_since(t0));
  };
  const auto [rc4, t4] = evaluate(4, "t4");
  const auto [rc1, t1] = evaluate(1, "t1");
  o.require(rc4 == 0 && rc1 == 0, "CLI evaluate exit codes " + std::to_string(rc1) + "/" + std::to_string(rc4));
  o.require(candidates == 36 && n == 10000,
            std::to_string(candidates) + " candidates over " + std::to_string(n) + " patients");
  o.require(t4 < 60.0, "4 threads " + fmt(t4) + " s < 60 (1 thread " + fmt(t1) + " s, " +
                           std::to_string(std::thread::hardware_concurrency()) + " cores)");
  const bool same_json = slurp(work / "t1.json") == slurp(work / "t4.json");
  const bool same_csv = slurp(work / "t1.csv") == slurp(work / "t4.csv");
  o.require(same_json && same_csv && !slurp(work / "t1.json").empty(), "threads 1 vs 4 byte-identical");
  std::size_t ok = 0;
  for (const auto& r : read_results_json(work / "t1.json").rows) ok += r.ok();
  o.require(ok > 0, std::to_string(ok) + " non-degenerate candidates");
  fs::remove_all(work);
  return o;
}

// ---- Session ------------------------------------------------------------------

Outcome session_roundtrip(const fs::path& source, const fs::path& work) {
  Outcome o;
  SyntheticConfig c;
  c.n_patients = 1500;
  c.true_log_hr = -0.3;
  const auto store = generate_synthetic(c, 99);
  const Engine engine(store, dsl::parse_spec(slurp(source / "specs/case1.tcl")));
  const auto table = make_results_table(engine, evaluate_grid(engine));

  Session s;
  s.session_id = "acceptance";
  s.spec_hash = table.spec_hash;
  std::mt19937_64 rng(5);
  const auto& adj = table.adjustables;
  for (int st = 0; st < 3; ++st) {
    const int id = create_stage(s, {1 + st, {"k" + std::to_string(st)}, "stage " + std::to_string(st)});
    for (int k = 0; k < 7; ++k) {
      ExplorationRecord r;
      r.kind = static_cast<RecordKind>(rng() % 3);
      const auto& a = adj[rng() % adj.size()];
      r.constraints[a.name].insert(a.values[rng() % a.values.size()]);
      for (CandidateId cid : engine.grid().filter(r.constraints)) {
        if (rng() % 3) r.selected.push_back(cid);
      }
      if (k % 2) r.viewport = Viewport{0.1 * k, 3.0, 0.0, 1000.0 + k};
      append_record(s, id, r, table);
    }
  }
  const fs::path path = work / "session.json";
  fs::create_directories(work);
  save_session(s, path);
  const auto back = load_session(path);
  o.require(back == s, "3 stages x 7 records reload equal");
  o.require(to_json(back).dump() == to_json(s).dump(), "reloaded document identical");

  // means recomputed straight from the table rows
  double worst = 0.0;
  bool presence = true;
  for (const auto& stage : back.stages) {
    for (const auto& r : stage.records) {
      std::vector<double> hr, n, div, kid, liv;
      for (auto id : r.selected) {
        const auto& row = table.row(id);
        if (!row.ok()) continue;
        if (row.hazard) hr.push_back(row.hazard->hr);
        n.push_back(static_cast<double>(row.n_patients));
        if (row.diversity) div.push_back(*row.diversity);
        if (row.kidney_rr) kid.push_back(*row.kidney_rr);
        if (row.liver_rr) liv.push_back(*row.liver_rr);
      }
      auto check = [&](const std::vector<double>& v, const std::optional<double>& stored) {
        if (v.empty()) {
          presence = presence && !stored;
          return;
        }
        double sum = 0;
        for (double x : v) sum += x;
        if (!stored) {
          presence = false;
          return;
        }
        worst = std::max(worst, std::fabs(sum / static_cast<double>(v.size()) - *stored));
      };
      check(hr, r.metric_means.hr);
      check(n, r.metric_means.n_patients);
      check(div, r.metric_means.diversity);
      check(kid, r.metric_means.kidney_rr);
      check(liv, r.metric_means.liver_rr);
    }
  }
  o.require(presence && worst <= 1e-12, "stored means vs recomputation max deviation " + fmt(worst) + " <= 1e-12");
  fs::remove_all(work);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path source = TRIALX_SOURCE_DIR;
  std::string cli;
  fs::path work = fs::temp_directory_path() / "trialx_acceptance";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") cli = argv[i + 1];
    else if (flag == "--work") work = argv[i + 1];
    else {
      std::cerr << "usage: acceptance [--cli <trialx>] [--work <dir>]\n";
      return 1;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"cox-analytic-oracle", cox_analytic},
      {"cox-simulation", cox_simulation},
      {"cox-gradient-check", gradient_check},
      {"propensity-matching", propensity_matching},
      {"entropy", entropy},
      {"risk-ratio", risk_ratio},
      {"grid-dsl", [&] { return grid_dsl(source); }},
      {"eligibility-monotonicity", monotonicity},
      {"end-to-end-determinism-performance", [&] { return end_to_end(source, cli, work / "e2e"); }},
      {"session-roundtrip", [&] { return session_roundtrip(source, work / "session"); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << "\n" << std::flush;
  }
  std::cout << (checks.size() - static_cast<std::size_t>(failed)) << "/" << checks.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
