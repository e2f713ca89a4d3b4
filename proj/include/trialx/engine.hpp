#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialx/cohort.hpp"
#include "trialx/cox.hpp"
#include "trialx/dsl/ast.hpp"
#include "trialx/grid.hpp"
#include "trialx/metrics.hpp"
#include "trialx/temporal.hpp"

namespace trialx {

/// Bumped whenever a change can alter numeric results; part of cache keys.
inline constexpr const char* kEngineVersion = "1.0.0";

struct EngineConfig {
  int horizon_days = 28;
  CaliperMode caliper = CaliperMode::mad;
  TieMethod ties = TieMethod::breslow;
  /// Extra Cox covariates besides treatment (matched data is already balanced).
  std::vector<std::string> cox_covariates;
  /// Confounders for the propensity model; empty means the store's list.
  std::vector<std::string> confounders;
  ImputeOptions impute;
  LogisticOptions logistic;
  CoxOptions cox;
  std::size_t max_grid = kDefaultMaxGrid;

  Hours horizon_hours() const { return horizon_days * kHoursPerDay; }
};

nlohmann::json to_json(const EngineConfig& c);
EngineConfig engine_config_from_json(const nlohmann::json& j);

enum class OutcomeStatus { ok, degenerate };

/// The five outcome metrics of one candidate plus bookkeeping counts.
struct OutcomeVector {
  CandidateId candidate_id = 0;
  dsl::Bindings bindings;
  std::size_t n_patients = 0;  // eligible patients
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::size_t n_pairs = 0;
  std::optional<double> diversity;
  std::optional<CoxFit> hazard;
  std::optional<double> kidney_rr;
  std::optional<double> liver_rr;
  OutcomeStatus status = OutcomeStatus::ok;
  /// Why the vector is degenerate: empty_arm, no_pairs, no_events,
  /// cox_nonconvergence or no_risk_days.
  std::string reason;

  bool ok() const { return status == OutcomeStatus::ok; }
  MetricValues metric_values() const;
};

struct CandidateResult {
  OutcomeVector outcome;
  std::optional<PropensityModel> propensity;
  std::optional<MatchedCohort> matched;
  std::map<std::string, double> balance;
  std::optional<TemporalProfile> profile;
};

/// Immutable evaluation context: the store, the criteria, the config and
/// the per-store SCr/AST imputations shared by every candidate.
class Engine {
 public:
  Engine(const PatientStore& store, dsl::CriterionSpec spec, EngineConfig config = {});

  const PatientStore& store() const noexcept { return *store_; }
  const dsl::CriterionSpec& spec() const noexcept { return spec_; }
  const EngineConfig& config() const noexcept { return config_; }
  const CandidateGrid& grid() const noexcept { return grid_; }
  const std::vector<std::string>& confounders() const noexcept { return confounders_; }
  const ImputedIndicator& kidney() const noexcept { return kidney_; }
  const ImputedIndicator& liver() const noexcept { return liver_; }

  /// select_eligible -> fit_propensity -> match_cohort -> build_survival ->
  /// fit_cox -> diversity -> kidney/liver risk -> profile. Failures yield a
  /// degenerate outcome, never an exception.
  CandidateResult evaluate(const CandidateAssignment& assignment) const;
  CandidateResult evaluate(CandidateId id) const { return evaluate(grid_.assignment(id)); }

 private:
  const PatientStore* store_;
  dsl::CriterionSpec spec_;
  EngineConfig config_;
  CandidateGrid grid_;
  std::vector<std::string> confounders_;
  ImputedIndicator kidney_;
  ImputedIndicator liver_;
};

/// Free-function form of Engine::evaluate.
CandidateResult evaluate_candidate(const PatientStore& store, const dsl::CriterionSpec& spec,
                                   const CandidateAssignment& assignment, const EngineConfig& config = {});

struct SweepOptions {
  unsigned threads = 1;
  /// Called from worker threads after each candidate with (completed, total).
  std::function<void(std::size_t, std::size_t)> progress;
  /// Checked between candidates; set to abandon the sweep.
  const std::atomic<bool>* cancel = nullptr;
};

/// Evaluate every candidate of the engine's grid. Results are indexed by
/// candidate id and identical for any thread count.
std::vector<CandidateResult> evaluate_grid(const Engine& engine, const SweepOptions& options = {});

// ---- results table ----------------------------------------------------------

struct ResultsTable {
  std::string spec_hash;
  std::string engine_version;
  nlohmann::json config;
  std::vector<dsl::AdjustableParam> adjustables;
  std::vector<OutcomeVector> rows;  // ordered by candidate id

  const OutcomeVector& row(CandidateId id) const;
};

ResultsTable make_results_table(const Engine& engine, const std::vector<CandidateResult>& results);

/// One record per candidate: candidate_id, bindings, n, diversity, hr,
/// hr_lo, hr_hi, p, kidney_rr, liver_rr, status (plus reason and arm counts).
nlohmann::json outcome_json(const OutcomeVector& o);
nlohmann::json to_json(const ResultsTable& t);
ResultsTable results_from_json(const nlohmann::json& j);

void write_results_json(const ResultsTable& t, const std::filesystem::path& path);
ResultsTable read_results_json(const std::filesystem::path& path);
std::string results_csv(const ResultsTable& t);

/// Metric accessor by name: n, diversity, hr, kidney_rr, liver_rr.
std::optional<double> metric_value(const OutcomeVector& o, std::string_view metric);
bool is_metric_name(std::string_view metric);

}  // namespace trialx
