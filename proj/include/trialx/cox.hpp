#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "trialx/cohort.hpp"
#include "trialx/ehr.hpp"

namespace trialx {

struct SurvivalRecord {
  PatientIndex patient = 0;
  Hours time = 0.0;
  bool event = false;  // death observed within the horizon
  bool treated = false;
  std::vector<double> covariates;  // additional Cox covariates, in configured order
};

/// One record per matched patient. Death at or before the horizon is an
/// event; otherwise the patient is censored at discharge or at the horizon,
/// whichever comes first. Missing covariate values take the matched mean.
std::vector<SurvivalRecord> build_survival(const PatientStore& store, const MatchedCohort& matched,
                                           Hours horizon, const std::vector<std::string>& covariates);

enum class TieMethod { breslow, efron };

struct CoxOptions {
  TieMethod ties = TieMethod::breslow;
  int max_iterations = 50;
  double tolerance = 1e-10;
  /// |beta_T| beyond this marks a monotone likelihood; the estimate is capped.
  double beta_cap = 20.0;
};

struct CoxFit {
  double beta_t = 0.0;
  double se = 0.0;
  double hr = 1.0;
  double ci_lo = 1.0;
  double ci_hi = 1.0;
  double p_value = 1.0;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  std::vector<double> covariate_betas;
  std::vector<double> covariate_se;
};

/// Log partial likelihood and its first two derivatives. Column 0 of the
/// coefficient vector is the treatment indicator; the rest follow the
/// record covariates.
struct CoxDerivatives {
  double log_likelihood = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;  // negative Hessian
};

CoxDerivatives cox_derivatives(const std::vector<SurvivalRecord>& records, const Eigen::VectorXd& beta,
                               TieMethod ties = TieMethod::breslow);

/// Newton-Raphson with step halving from beta = 0. Standard errors come from
/// the inverse observed information; the p-value is the two-sided Wald test.
/// Throws ValidationError when there are no events or only one arm.
CoxFit fit_cox(const std::vector<SurvivalRecord>& records, const CoxOptions& options = {});

nlohmann::json to_json(const CoxFit& fit);

}  // namespace trialx
