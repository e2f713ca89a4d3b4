#include "trialx/engine.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"
#include "trialx/text.hpp"

namespace trialx {

namespace {

using nlohmann::json;

json num(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::optional<double> opt_num(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string_view caliper_name(CaliperMode m) { return m == CaliperMode::mad ? "mad" : "logit_sd"; }
std::string_view ties_name(TieMethod t) { return t == TieMethod::breslow ? "breslow" : "efron"; }

OutcomeVector degenerate(OutcomeVector o, std::string reason) {
  o.status = OutcomeStatus::degenerate;
  if (o.reason.empty()) o.reason = std::move(reason);
  return o;
}

}  // namespace

json to_json(const EngineConfig& c) {
  return {{"horizon_days", c.horizon_days},
          {"caliper", caliper_name(c.caliper)},
          {"ties", ties_name(c.ties)},
          {"cox_covariates", c.cox_covariates},
          {"confounders", c.confounders},
          {"impute", {{"max_missing_fraction", c.impute.max_missing_fraction},
                      {"max_gap_days", c.impute.max_gap_days}}},
          {"max_grid", c.max_grid}};
}

EngineConfig engine_config_from_json(const json& j) {
  EngineConfig c;
  if (!j.is_object()) throw ValidationError("engine config must be a JSON object");
  try {
    c.horizon_days = j.value("horizon_days", c.horizon_days);
    const auto caliper = j.value("caliper", std::string(caliper_name(c.caliper)));
    if (caliper == "mad") c.caliper = CaliperMode::mad;
    else if (caliper == "logit_sd") c.caliper = CaliperMode::logit_sd;
    else throw ValidationError("unknown caliper mode '" + caliper + "'");
    const auto ties = j.value("ties", std::string(ties_name(c.ties)));
    if (ties == "breslow") c.ties = TieMethod::breslow;
    else if (ties == "efron") c.ties = TieMethod::efron;
    else throw ValidationError("unknown tie method '" + ties + "'");
    c.cox_covariates = j.value("cox_covariates", c.cox_covariates);
    c.confounders = j.value("confounders", c.confounders);
    if (j.contains("impute")) {
      const auto& im = j.at("impute");
      c.impute.max_missing_fraction = im.value("max_missing_fraction", c.impute.max_missing_fraction);
      c.impute.max_gap_days = im.value("max_gap_days", c.impute.max_gap_days);
    }
    c.max_grid = j.value("max_grid", c.max_grid);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("engine config: ") + e.what());
  }
  if (c.horizon_days < 1) throw ValidationError("horizon_days must be at least 1");
  c.cox.ties = c.ties;
  return c;
}

MetricValues OutcomeVector::metric_values() const {
  MetricValues m;
  m.n_patients = static_cast<double>(n_patients);
  m.diversity = diversity;
  if (hazard) m.hr = hazard->hr;
  m.kidney_rr = kidney_rr;
  m.liver_rr = liver_rr;
  return m;
}

Engine::Engine(const PatientStore& store, dsl::CriterionSpec spec, EngineConfig config)
    : store_(&store),
      spec_(std::move(spec)),
      config_(std::move(config)),
      grid_(spec_.adjustables, config_.max_grid),
      confounders_(config_.confounders.empty() ? store.confounders() : config_.confounders),
      kidney_(store, store.range("SCr"), config_.horizon_days, config_.impute),
      liver_(store, store.range("AST"), config_.horizon_days, config_.impute) {
  config_.cox.ties = config_.ties;
}

CandidateResult Engine::evaluate(const CandidateAssignment& assignment) const {
  CandidateResult r;
  OutcomeVector& o = r.outcome;
  o.candidate_id = assignment.id;
  o.bindings = assignment.bindings;

  const auto cohort = select_eligible(*store_, spec_, assignment.bindings, assignment.id);
  o.n_patients = cohort.size();
  o.n_treated = cohort.treated.size();
  o.n_control = cohort.control.size();
  if (cohort.size() > 0) {
    std::vector<PatientIndex> all(cohort.treated);
    all.insert(all.end(), cohort.control.begin(), cohort.control.end());
    o.diversity = diversity_entropy(*store_, all);
  }
  if (cohort.treated.empty() || cohort.control.empty()) {
    o = degenerate(std::move(o), "empty_arm");
    return r;
  }

  PropensityFit ps;
  try {
    ps = fit_propensity(*store_, cohort, confounders_, config_.logistic);
  } catch (const SingularMatrixError& e) {
    o = degenerate(std::move(o), std::string("propensity_singular: ") + e.what());
    return r;
  }
  r.propensity = ps.model;
  r.matched = match_cohort(cohort, ps.treated_scores, ps.control_scores, config_.caliper);
  const MatchedCohort& matched = *r.matched;
  o.n_pairs = matched.pairs.size();
  if (matched.pairs.empty()) {
    o = degenerate(std::move(o), "no_pairs");
    return r;
  }
  if (matched.pairs.size() >= 2) r.balance = balance_diagnostics(*store_, matched, confounders_);

  const auto records = build_survival(*store_, matched, config_.horizon_hours(), config_.cox_covariates);
  try {
    o.hazard = fit_cox(records, config_.cox);
    if (!o.hazard->converged) o = degenerate(std::move(o), "cox_nonconvergence");
  } catch (const ValidationError&) {
    o = degenerate(std::move(o), "no_events");
  } catch (const SingularMatrixError&) {
    o = degenerate(std::move(o), "cox_nonconvergence");
  }

  o.kidney_rr = organ_risk_ratio(kidney_, matched, Organ::kidney).mean_ratio;
  o.liver_rr = organ_risk_ratio(liver_, matched, Organ::liver).mean_ratio;
  if (!o.kidney_rr || !o.liver_rr) o = degenerate(std::move(o), "no_risk_days");

  r.profile = profile_candidate(*store_, matched, o.hazard, kidney_, liver_);
  return r;
}

CandidateResult evaluate_candidate(const PatientStore& store, const dsl::CriterionSpec& spec,
                                   const CandidateAssignment& assignment, const EngineConfig& config) {
  return Engine(store, spec, config).evaluate(assignment);
}

std::vector<CandidateResult> evaluate_grid(const Engine& engine, const SweepOptions& options) {
  const std::size_t total = engine.grid().size();
  std::vector<CandidateResult> results(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      if (options.cancel && options.cancel->load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      try {
        results[i] = engine.evaluate(static_cast<CandidateId>(i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
      const std::size_t n = done.fetch_add(1) + 1;
      if (options.progress) options.progress(n, total);
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(total)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  if (options.cancel && options.cancel->load()) throw Error("sweep cancelled");
  return results;
}

// ---- results table ----------------------------------------------------------

const OutcomeVector& ResultsTable::row(CandidateId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= rows.size() || rows[static_cast<std::size_t>(id)].candidate_id != id)
    throw ValidationError("no candidate " + std::to_string(id) + " in results");
  return rows[static_cast<std::size_t>(id)];
}

ResultsTable make_results_table(const Engine& engine, const std::vector<CandidateResult>& results) {
  ResultsTable t;
  t.spec_hash = dsl::spec_hash(engine.spec());
  t.engine_version = kEngineVersion;
  t.config = to_json(engine.config());
  t.adjustables = engine.spec().adjustables;
  t.rows.reserve(results.size());
  for (const auto& r : results) t.rows.push_back(r.outcome);
  return t;
}

json outcome_json(const OutcomeVector& o) {
  json bindings = json::object();
  for (const auto& [k, v] : o.bindings) bindings[k] = dsl::to_json(v);
  json j{{"candidate_id", o.candidate_id},
         {"bindings", bindings},
         {"n", o.n_patients},
         {"diversity", num(o.diversity)},
         {"hr", nullptr},
         {"hr_lo", nullptr},
         {"hr_hi", nullptr},
         {"p", nullptr},
         {"kidney_rr", num(o.kidney_rr)},
         {"liver_rr", num(o.liver_rr)},
         {"status", o.ok() ? "ok" : "degenerate"},
         {"reason", o.reason},
         {"n_treated", o.n_treated},
         {"n_control", o.n_control},
         {"n_pairs", o.n_pairs}};
  if (o.hazard) {
    j["hr"] = num(o.hazard->hr);
    j["hr_lo"] = num(o.hazard->ci_lo);
    j["hr_hi"] = num(o.hazard->ci_hi);
    j["p"] = num(o.hazard->p_value);
    j["beta_t"] = num(o.hazard->beta_t);
    j["se"] = num(o.hazard->se);
    j["cox_converged"] = o.hazard->converged;
  }
  return j;
}

namespace {

json adjustable_json(const dsl::AdjustableParam& a) {
  json values = json::array();
  for (const auto& v : a.values) values.push_back(dsl::to_json(v));
  return {{"name", a.name}, {"values", values}, {"unit", a.unit ? json(*a.unit) : json(nullptr)}, {"role", a.role}};
}

dsl::AdjustableParam adjustable_from_json(const json& j) {
  dsl::AdjustableParam a;
  a.name = j.at("name").get<std::string>();
  for (const auto& v : j.at("values")) a.values.push_back(dsl::literal_from_json(v));
  if (j.contains("unit") && !j.at("unit").is_null()) a.unit = j.at("unit").get<std::string>();
  a.role = j.value("role", a.name);
  return a;
}

OutcomeVector outcome_from_json(const json& j) {
  OutcomeVector o;
  o.candidate_id = j.at("candidate_id").get<CandidateId>();
  for (const auto& [k, v] : j.at("bindings").items()) o.bindings[k] = dsl::literal_from_json(v);
  o.n_patients = j.at("n").get<std::size_t>();
  o.n_treated = j.value("n_treated", std::size_t{0});
  o.n_control = j.value("n_control", std::size_t{0});
  o.n_pairs = j.value("n_pairs", std::size_t{0});
  o.diversity = opt_num(j, "diversity");
  if (auto hr = opt_num(j, "hr")) {
    CoxFit f;
    f.hr = *hr;
    f.ci_lo = opt_num(j, "hr_lo").value_or(NAN);
    f.ci_hi = opt_num(j, "hr_hi").value_or(NAN);
    f.p_value = opt_num(j, "p").value_or(NAN);
    f.beta_t = opt_num(j, "beta_t").value_or(std::log(*hr));
    f.se = opt_num(j, "se").value_or(NAN);
    f.converged = j.value("cox_converged", true);
    o.hazard = f;
  }
  o.kidney_rr = opt_num(j, "kidney_rr");
  o.liver_rr = opt_num(j, "liver_rr");
  const auto status = j.at("status").get<std::string>();
  if (status == "ok") o.status = OutcomeStatus::ok;
  else if (status == "degenerate") o.status = OutcomeStatus::degenerate;
  else throw ValidationError("unknown candidate status '" + status + "'");
  o.reason = j.value("reason", std::string());
  return o;
}

}  // namespace

json to_json(const ResultsTable& t) {
  json adj = json::array();
  for (const auto& a : t.adjustables) adj.push_back(adjustable_json(a));
  json rows = json::array();
  for (const auto& o : t.rows) rows.push_back(outcome_json(o));
  return {{"schema_version", 1},
          {"spec_hash", t.spec_hash},
          {"engine_version", t.engine_version},
          {"config", t.config},
          {"adjustables", adj},
          {"candidates", rows}};
}

ResultsTable results_from_json(const json& j) {
  ResultsTable t;
  try {
    if (j.at("schema_version").get<int>() != 1) throw VersionError("unsupported results schema_version");
    t.spec_hash = j.at("spec_hash").get<std::string>();
    t.engine_version = j.at("engine_version").get<std::string>();
    t.config = j.value("config", json::object());
    for (const auto& a : j.at("adjustables")) t.adjustables.push_back(adjustable_from_json(a));
    for (const auto& r : j.at("candidates")) t.rows.push_back(outcome_from_json(r));
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("malformed results document: ") + e.what());
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].candidate_id != static_cast<CandidateId>(i))
      throw CorruptFileError("results candidates are not ordered by id");
  }
  return t;
}

void write_results_json(const ResultsTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(t).dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

ResultsTable read_results_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptFileError(path.string() + ": " + e.what());
  }
  return results_from_json(j);
}

std::string results_csv(const ResultsTable& t) {
  auto cell = [](const std::optional<double>& v) {
    return v && std::isfinite(*v) ? text::format_double(*v) : std::string();
  };
  std::ostringstream out;
  out << "candidate_id,bindings,n,diversity,hr,hr_lo,hr_hi,p,kidney_rr,liver_rr,status\n";
  for (const auto& o : t.rows) {
    std::string bindings;
    for (const auto& [k, v] : o.bindings) {
      if (!bindings.empty()) bindings += ';';
      bindings += k + "=" + dsl::serialize_literal(v);
    }
    std::optional<double> hr, lo, hi, p;
    if (o.hazard) {
      hr = o.hazard->hr;
      lo = o.hazard->ci_lo;
      hi = o.hazard->ci_hi;
      p = o.hazard->p_value;
    }
    out << o.candidate_id << ',' << text::csv_field(bindings) << ',' << o.n_patients << ','
        << cell(o.diversity) << ',' << cell(hr) << ',' << cell(lo) << ',' << cell(hi) << ',' << cell(p) << ','
        << cell(o.kidney_rr) << ',' << cell(o.liver_rr) << ',' << (o.ok() ? "ok" : "degenerate") << '\n';
  }
  return out.str();
}

bool is_metric_name(std::string_view metric) {
  return metric == "n" || metric == "diversity" || metric == "hr" || metric == "kidney_rr" ||
         metric == "liver_rr";
}

std::optional<double> metric_value(const OutcomeVector& o, std::string_view metric) {
  if (metric == "n") return static_cast<double>(o.n_patients);
  if (metric == "diversity") return o.diversity;
  if (metric == "hr") return o.hazard ? std::optional<double>(o.hazard->hr) : std::nullopt;
  if (metric == "kidney_rr") return o.kidney_rr;
  if (metric == "liver_rr") return o.liver_rr;
  throw ValidationError("unknown metric '" + std::string(metric) + "'");
}

}  // namespace trialx
