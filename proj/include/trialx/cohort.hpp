#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "trialx/dsl/ast.hpp"
#include "trialx/ehr.hpp"
#include "trialx/grid.hpp"

namespace trialx {

/// Patients are addressed by their position in the id-sorted store, so
/// ascending index is ascending patient id.
using PatientIndex = std::size_t;

struct EligibleCohort {
  CandidateId candidate_id = 0;
  std::vector<PatientIndex> treated;  // ascending
  std::vector<PatientIndex> control;  // ascending

  std::size_t size() const { return treated.size() + control.size(); }
};

EligibleCohort select_eligible(const PatientStore& store, const dsl::CriterionSpec& spec,
                               const dsl::Bindings& bindings, CandidateId candidate_id = 0);

/// Numeric encoding of confounders for a set of patients. Numeric attributes
/// are used as-is (missing values replaced by the column mean); the string
/// attributes `race` and `gender` are one-hot encoded with the first level
/// (alphabetically) as reference.
struct Design {
  std::vector<std::string> columns;
  Eigen::MatrixXd x;  // one row per patient, no intercept column
};

Design encode_confounders(const PatientStore& store, const std::vector<PatientIndex>& patients,
                          const std::vector<std::string>& confounders);

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;  // on max |score component|
  double clip = 1e-6;       // probabilities kept inside [clip, 1 - clip]
};

struct LogisticFit {
  Eigen::VectorXd beta;  // intercept first
  Eigen::VectorXd probabilities;
  bool converged = false;
  int iterations = 0;
  double max_score = 0.0;
};

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares. `x` must already contain the intercept column. Throws
/// SingularMatrixError naming `names` of collinear columns.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const std::vector<std::string>& names, const LogisticOptions& options = {});

struct PropensityModel {
  double intercept = 0.0;
  std::vector<std::pair<std::string, double>> coefficients;
  /// Confounder columns left out because they were constant in the cohort.
  std::vector<std::string> dropped;
  bool converged = false;
  int iterations = 0;
};

struct PropensityFit {
  PropensityModel model;
  std::vector<double> treated_scores;  // aligned with cohort.treated
  std::vector<double> control_scores;  // aligned with cohort.control
};

/// P(treatment | confounders). Requires both arms nonempty (EmptyArmError).
PropensityFit fit_propensity(const PatientStore& store, const EligibleCohort& cohort,
                             const std::vector<std::string>& confounders,
                             const LogisticOptions& options = {});

enum class CaliperMode {
  /// Median absolute deviation of all eligible scores, raw probability scale.
  mad,
  /// 0.2 times the standard deviation of the logit scores, logit scale.
  logit_sd,
};

struct MatchedPair {
  PatientIndex treated = 0;
  PatientIndex control = 0;
  double treated_score = 0.0;
  double control_score = 0.0;
  /// |difference| on the matching scale (raw or logit).
  double distance = 0.0;
};

struct MatchedCohort {
  CandidateId candidate_id = 0;
  std::vector<MatchedPair> pairs;
  double caliper = 0.0;
  CaliperMode mode = CaliperMode::mad;
  std::size_t discarded_treated = 0;

  std::vector<PatientIndex> treated() const;
  std::vector<PatientIndex> control() const;
};

double median(std::vector<double> values);
/// Unscaled median absolute deviation about the median.
double median_absolute_deviation(const std::vector<double>& values);

/// Greedy 1:1 nearest-neighbour matching without replacement. Treated
/// patients are visited in ascending id order; each takes the closest unused
/// control (ties to the smaller id) and keeps it iff the distance is within
/// the caliper, otherwise the treated patient is discarded.
MatchedCohort match_cohort(const EligibleCohort& cohort, const std::vector<double>& treated_scores,
                           const std::vector<double>& control_scores,
                           CaliperMode mode = CaliperMode::mad);

/// Standardized mean difference of every encoded confounder column over the
/// matched samples. Zero pooled SD gives 0 when the means agree, else +inf.
std::map<std::string, double> balance_diagnostics(const PatientStore& store, const MatchedCohort& matched,
                                                  const std::vector<std::string>& confounders);

/// SMD of two samples (pooled SD uses n-1 variances).
double standardized_mean_difference(const std::vector<double>& a, const std::vector<double>& b);

nlohmann::json to_json(const PropensityModel& m);
/// Pair list uses patient ids from `store`.
nlohmann::json to_json(const MatchedCohort& m, const PatientStore& store);

}  // namespace trialx
