#include "trialx/cox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "trialx/error.hpp"

namespace trialx {

std::vector<SurvivalRecord> build_survival(const PatientStore& store, const MatchedCohort& matched,
                                           Hours horizon, const std::vector<std::string>& covariates) {
  std::vector<SurvivalRecord> out;
  out.reserve(2 * matched.pairs.size());
  const auto& patients = store.patients();
  auto add = [&](PatientIndex i, bool treated) {
    const auto& p = patients[i];
    SurvivalRecord r;
    r.patient = i;
    r.treated = treated;
    if (p.death && *p.death <= horizon) {
      r.time = *p.death;
      r.event = true;
    } else {
      r.time = std::min(p.discharge.value_or(horizon), horizon);
    }
    out.push_back(std::move(r));
  };
  for (const auto& pair : matched.pairs) add(pair.treated, true);
  for (const auto& pair : matched.pairs) add(pair.control, false);

  if (!covariates.empty()) {
    std::vector<PatientIndex> rows;
    for (const auto& r : out) rows.push_back(r.patient);
    const Design d = encode_confounders(store, rows, covariates);
    for (std::size_t k = 0; k < out.size(); ++k) {
      const auto row = d.x.row(static_cast<Eigen::Index>(k));
      for (Eigen::Index j = 0; j < d.x.cols(); ++j) out[k].covariates.push_back(row[j]);
    }
  }
  return out;
}

namespace {

struct CoxData {
  Eigen::MatrixXd x;  // centred columns, rows sorted by descending time
  std::vector<double> time;
  std::vector<bool> event;
};

CoxData prepare(const std::vector<SurvivalRecord>& records) {
  const auto n = static_cast<Eigen::Index>(records.size());
  const std::size_t p = records.empty() ? 1 : 1 + records.front().covariates.size();
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].time > records[b].time; });
  CoxData d;
  d.x.resize(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& rec = records[order[static_cast<std::size_t>(r)]];
    if (rec.covariates.size() + 1 != p) throw ValidationError("records disagree on covariate count");
    d.x(r, 0) = rec.treated ? 1.0 : 0.0;
    for (std::size_t j = 1; j < p; ++j) d.x(r, static_cast<Eigen::Index>(j)) = rec.covariates[j - 1];
    d.time.push_back(rec.time);
    d.event.push_back(rec.event);
  }
  // The partial likelihood is invariant to shifting a covariate; centring
  // keeps the S2/S0 - (S1/S0)^2 differences well conditioned.
  if (n > 0) d.x.rowwise() -= d.x.colwise().mean();
  return d;
}

CoxDerivatives derivatives(const CoxData& d, const Eigen::VectorXd& beta, TieMethod ties) {
  const Eigen::Index n = d.x.rows();
  const Eigen::Index p = d.x.cols();
  CoxDerivatives out;
  out.score = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  if (n == 0) return out;

  const Eigen::VectorXd eta = d.x * beta;
  const double shift = eta.maxCoeff();
  const Eigen::VectorXd w = (eta.array() - shift).exp();

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    double d0 = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
    int deaths = 0;
    while (j < n && d.time[static_cast<std::size_t>(j)] == d.time[static_cast<std::size_t>(i)]) {
      const auto xj = d.x.row(j).transpose();
      s0 += w[j];
      s1 += w[j] * xj;
      s2.noalias() += w[j] * xj * xj.transpose();
      if (d.event[static_cast<std::size_t>(j)]) {
        ++deaths;
        d0 += w[j];
        d1 += w[j] * xj;
        d2.noalias() += w[j] * xj * xj.transpose();
        out.log_likelihood += eta[j] - shift;
        out.score += xj;
      }
      ++j;
    }
    if (deaths > 0) {
      for (int l = 0; l < deaths; ++l) {
        const double f = ties == TieMethod::efron ? static_cast<double>(l) / deaths : 0.0;
        const double a0 = s0 - f * d0;
        const Eigen::VectorXd a1 = s1 - f * d1;
        const Eigen::MatrixXd a2 = s2 - f * d2;
        const Eigen::VectorXd mean = a1 / a0;
        out.log_likelihood -= std::log(a0);
        out.score -= mean;
        out.information += a2 / a0 - mean * mean.transpose();
      }
    }
    i = j;
  }
  return out;
}

}  // namespace

CoxDerivatives cox_derivatives(const std::vector<SurvivalRecord>& records, const Eigen::VectorXd& beta,
                               TieMethod ties) {
  const CoxData d = prepare(records);
  if (beta.size() != d.x.cols()) throw ValidationError("coefficient vector has the wrong length");
  return derivatives(d, beta, ties);
}

CoxFit fit_cox(const std::vector<SurvivalRecord>& records, const CoxOptions& options) {
  bool any_event = false, any_treated = false, any_control = false;
  for (const auto& r : records) {
    any_event = any_event || r.event;
    any_treated = any_treated || r.treated;
    any_control = any_control || !r.treated;
  }
  if (!any_event) throw ValidationError("Cox model needs at least one event");
  if (!any_treated || !any_control) throw ValidationError("Cox model needs both treatment values");

  const CoxData data = prepare(records);
  const Eigen::Index p = data.x.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxDerivatives cur = derivatives(data, beta, options.ties);

  CoxFit fit;
  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    if (cur.score.cwiseAbs().maxCoeff() < options.tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd step = cur.information.ldlt().solve(cur.score);
    if (!step.allFinite()) break;
    CoxDerivatives next = derivatives(data, beta + step, options.ties);
    int halvings = 0;
    while (!(next.log_likelihood >= cur.log_likelihood - 1e-12 * std::fabs(cur.log_likelihood)) &&
           halvings < 40) {
      step *= 0.5;
      next = derivatives(data, beta + step, options.ties);
      ++halvings;
    }
    beta += step;
    cur = std::move(next);
    if (step.cwiseAbs().maxCoeff() < options.tolerance) {
      fit.converged = true;
      break;
    }
  }

  fit.log_likelihood = cur.log_likelihood;
  Eigen::VectorXd se = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cur.information);
  if (lu.isInvertible()) {
    const Eigen::MatrixXd cov = lu.inverse();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (cov(j, j) > 0.0 && std::isfinite(cov(j, j))) se[j] = std::sqrt(cov(j, j));
    }
  }

  fit.beta_t = beta[0];
  if (std::fabs(fit.beta_t) > options.beta_cap || !std::isfinite(fit.beta_t)) {
    fit.converged = false;
    fit.beta_t = std::copysign(options.beta_cap, std::isfinite(fit.beta_t) ? fit.beta_t : 1.0);
  }
  fit.se = se[0];
  fit.hr = std::exp(fit.beta_t);
  fit.ci_lo = std::exp(fit.beta_t - 1.96 * fit.se);
  fit.ci_hi = std::exp(fit.beta_t + 1.96 * fit.se);
  fit.p_value = std::isfinite(fit.se) ? std::erfc(std::fabs(fit.beta_t / fit.se) / std::sqrt(2.0)) : 1.0;
  for (Eigen::Index j = 1; j < p; ++j) {
    fit.covariate_betas.push_back(beta[j]);
    fit.covariate_se.push_back(se[j]);
  }
  return fit;
}

nlohmann::json to_json(const CoxFit& fit) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json cov = nlohmann::json::array();
  for (double b : fit.covariate_betas) cov.push_back(num(b));
  return {{"beta_t", num(fit.beta_t)}, {"se", num(fit.se)},         {"hr", num(fit.hr)},
          {"ci_lo", num(fit.ci_lo)},   {"ci_hi", num(fit.ci_hi)},   {"p", num(fit.p_value)},
          {"converged", fit.converged}, {"iterations", fit.iterations}, {"covariate_betas", cov}};
}

}  // namespace trialx
