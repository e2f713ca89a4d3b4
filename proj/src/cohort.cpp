#include "trialx/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"

namespace trialx {

EligibleCohort select_eligible(const PatientStore& store, const dsl::CriterionSpec& spec,
                               const dsl::Bindings& bindings, CandidateId candidate_id) {
  EligibleCohort cohort;
  cohort.candidate_id = candidate_id;
  const auto& patients = store.patients();
  for (PatientIndex i = 0; i < patients.size(); ++i) {
    switch (dsl::eligibility(patients[i], spec, bindings)) {
      case dsl::Eligibility::treatment: cohort.treated.push_back(i); break;
      case dsl::Eligibility::control: cohort.control.push_back(i); break;
      case dsl::Eligibility::ineligible: break;
    }
  }
  return cohort;
}

Design encode_confounders(const PatientStore& store, const std::vector<PatientIndex>& patients,
                          const std::vector<std::string>& confounders) {
  const auto& all = store.patients();
  const auto n = static_cast<Eigen::Index>(patients.size());
  std::vector<Eigen::VectorXd> cols;
  Design d;
  for (const auto& name : confounders) {
    if (name == "race" || name == "gender") {
      auto level = [&](PatientIndex i) {
        return name == "race" ? all[i].race : std::string(to_string(all[i].gender));
      };
      std::set<std::string> levels;
      for (auto i : patients) levels.insert(level(i));
      if (levels.size() < 2) continue;
      for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
        Eigen::VectorXd c(n);
        for (Eigen::Index r = 0; r < n; ++r) c[r] = level(patients[r]) == *it ? 1.0 : 0.0;
        d.columns.push_back(name + "=" + *it);
        cols.push_back(std::move(c));
      }
      continue;
    }
    if (!is_numeric_attribute(name)) throw ValidationError("unknown confounder: " + name);
    Eigen::VectorXd c(n);
    std::vector<bool> missing(patients.size(), false);
    double sum = 0.0;
    std::size_t present = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      auto v = derived_attribute(all[patients[r]], name);
      if (v) {
        c[r] = *v;
        sum += *v;
        ++present;
      } else {
        missing[r] = true;
      }
    }
    const double mean = present ? sum / static_cast<double>(present) : 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (missing[r]) c[r] = mean;
    }
    d.columns.push_back(name);
    cols.push_back(std::move(c));
  }
  d.x.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) d.x.col(static_cast<Eigen::Index>(j)) = cols[j];
  return d;
}

namespace {

void check_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  Eigen::MatrixXd scaled = x;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double norm = scaled.col(j).norm();
    if (norm > 0) scaled.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  if (rank == scaled.cols()) return;
  std::string cols;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = rank; k < scaled.cols(); ++k) {
    const auto j = static_cast<std::size_t>(perm[k]);
    if (!cols.empty()) cols += ", ";
    cols += j < names.size() ? names[j] : "column " + std::to_string(j);
  }
  throw SingularMatrixError("design matrix is singular; collinear columns: " + cols);
}

Eigen::VectorXd clipped_sigmoid(const Eigen::VectorXd& eta, double clip) {
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double v = 1.0 / (1.0 + std::exp(-eta[i]));
    p[i] = std::clamp(v, clip, 1.0 - clip);
  }
  return p;
}

}  // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const std::vector<std::string>& names, const LogisticOptions& options) {
  check_rank(x, names);
  LogisticFit fit;
  fit.beta = Eigen::VectorXd::Zero(x.cols());
  for (int it = 0;; ++it) {
    fit.probabilities = clipped_sigmoid(x * fit.beta, options.clip);
    const Eigen::VectorXd score = x.transpose() * (y - fit.probabilities);
    fit.max_score = score.cwiseAbs().maxCoeff();
    fit.iterations = it;
    if (fit.max_score < options.tolerance) {
      fit.converged = true;
      break;
    }
    if (it == options.max_iterations) break;
    const Eigen::VectorXd w = fit.probabilities.array() * (1.0 - fit.probabilities.array());
    const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd step = info.ldlt().solve(score);
    if (!step.allFinite()) break;
    fit.beta += step;
  }
  return fit;
}

PropensityFit fit_propensity(const PatientStore& store, const EligibleCohort& cohort,
                             const std::vector<std::string>& confounders,
                             const LogisticOptions& options) {
  if (cohort.treated.empty() || cohort.control.empty())
    throw EmptyArmError("propensity model needs both arms; treated=" +
                        std::to_string(cohort.treated.size()) +
                        " control=" + std::to_string(cohort.control.size()));
  std::vector<PatientIndex> rows = cohort.treated;
  rows.insert(rows.end(), cohort.control.begin(), cohort.control.end());
  const Design design = encode_confounders(store, rows, confounders);

  PropensityFit out;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < design.x.cols(); ++j) {
    const auto col = design.x.col(j);
    if (col.maxCoeff() == col.minCoeff())
      out.model.dropped.push_back(design.columns[static_cast<std::size_t>(j)]);
    else
      kept.push_back(j);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(kept.size()) + 1);
  x.col(0).setOnes();
  std::vector<std::string> names{"(intercept)"};
  for (std::size_t k = 0; k < kept.size(); ++k) {
    x.col(static_cast<Eigen::Index>(k) + 1) = design.x.col(kept[k]);
    names.push_back(design.columns[static_cast<std::size_t>(kept[k])]);
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  y.head(static_cast<Eigen::Index>(cohort.treated.size())).setOnes();

  const LogisticFit fit = fit_logistic(x, y, names, options);
  out.model.intercept = fit.beta[0];
  for (std::size_t k = 1; k < names.size(); ++k)
    out.model.coefficients.emplace_back(names[k], fit.beta[static_cast<Eigen::Index>(k)]);
  out.model.converged = fit.converged;
  out.model.iterations = fit.iterations;
  const auto nt = cohort.treated.size();
  out.treated_scores.assign(fit.probabilities.data(), fit.probabilities.data() + nt);
  out.control_scores.assign(fit.probabilities.data() + nt, fit.probabilities.data() + n);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double median_absolute_deviation(const std::vector<double>& values) {
  const double m = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::fabs(v - m));
  return median(std::move(dev));
}

std::vector<PatientIndex> MatchedCohort::treated() const {
  std::vector<PatientIndex> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.treated);
  return out;
}

std::vector<PatientIndex> MatchedCohort::control() const {
  std::vector<PatientIndex> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.control);
  return out;
}

MatchedCohort match_cohort(const EligibleCohort& cohort, const std::vector<double>& treated_scores,
                           const std::vector<double>& control_scores, CaliperMode mode) {
  if (cohort.treated.empty() || cohort.control.empty())
    throw EmptyArmError("cannot match with an empty arm");
  if (treated_scores.size() != cohort.treated.size() || control_scores.size() != cohort.control.size())
    throw ValidationError("scores do not cover the cohort");

  auto scale = [mode](double s) { return mode == CaliperMode::logit_sd ? std::log(s / (1.0 - s)) : s; };
  std::vector<double> t_scaled, c_scaled;
  for (double s : treated_scores) t_scaled.push_back(scale(s));
  for (double s : control_scores) c_scaled.push_back(scale(s));

  MatchedCohort m;
  m.candidate_id = cohort.candidate_id;
  m.mode = mode;
  std::vector<double> all = t_scaled;
  all.insert(all.end(), c_scaled.begin(), c_scaled.end());
  if (mode == CaliperMode::mad) {
    m.caliper = median_absolute_deviation(all);
  } else {
    double mean = 0.0;
    for (double v : all) mean += v;
    mean /= static_cast<double>(all.size());
    double ss = 0.0;
    for (double v : all) ss += (v - mean) * (v - mean);
    m.caliper = all.size() > 1 ? 0.2 * std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
  }

  // Unused controls ordered by (score, position); position order is id order.
  std::set<std::pair<double, std::size_t>> pool;
  for (std::size_t j = 0; j < c_scaled.size(); ++j) pool.emplace(c_scaled[j], j);

  for (std::size_t i = 0; i < t_scaled.size(); ++i) {
    if (pool.empty()) {
      m.discarded_treated += t_scaled.size() - i;
      break;
    }
    const double s = t_scaled[i];
    auto right = pool.lower_bound({s, 0});
    auto best = pool.end();
    double best_d = std::numeric_limits<double>::infinity();
    if (right != pool.end()) {
      best = right;
      best_d = std::fabs(s - right->first);
    }
    if (right != pool.begin()) {
      // Smallest position among the controls sharing the nearest lower score.
      auto left = pool.lower_bound({std::prev(right)->first, 0});
      const double d = std::fabs(s - left->first);
      if (d < best_d || (d == best_d && left->second < best->second)) {
        best = left;
        best_d = d;
      }
    }
    if (best_d <= m.caliper) {
      const std::size_t j = best->second;
      m.pairs.push_back({cohort.treated[i], cohort.control[j], treated_scores[i], control_scores[j], best_d});
      pool.erase(best);
    } else {
      ++m.discarded_treated;
    }
  }
  return m;
}

double standardized_mean_difference(const std::vector<double>& a, const std::vector<double>& b) {
  auto moments = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
    return std::pair{mean, var};
  };
  if (a.empty() || b.empty()) throw ValidationError("SMD needs two nonempty samples");
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double pooled = std::sqrt(0.5 * (va + vb));
  if (pooled == 0.0) return ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
  return (ma - mb) / pooled;
}

std::map<std::string, double> balance_diagnostics(const PatientStore& store, const MatchedCohort& matched,
                                                  const std::vector<std::string>& confounders) {
  if (matched.pairs.size() < 2) throw ValidationError("balance diagnostics need at least 2 pairs");
  std::vector<PatientIndex> rows = matched.treated();
  const auto control = matched.control();
  rows.insert(rows.end(), control.begin(), control.end());
  const Design d = encode_confounders(store, rows, confounders);
  const auto np = static_cast<Eigen::Index>(matched.pairs.size());
  std::map<std::string, double> out;
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    std::vector<double> t(d.x.col(j).data(), d.x.col(j).data() + np);
    std::vector<double> c(d.x.col(j).data() + np, d.x.col(j).data() + 2 * np);
    out[d.columns[static_cast<std::size_t>(j)]] = standardized_mean_difference(t, c);
  }
  return out;
}

nlohmann::json to_json(const PropensityModel& m) {
  nlohmann::json coef = nlohmann::json::object();
  for (const auto& [name, v] : m.coefficients) coef[name] = v;
  return {{"intercept", m.intercept},
          {"coefficients", coef},
          {"dropped", m.dropped},
          {"converged", m.converged},
          {"iterations", m.iterations}};
}

nlohmann::json to_json(const MatchedCohort& m, const PatientStore& store) {
  nlohmann::json pairs = nlohmann::json::array();
  const auto& patients = store.patients();
  for (const auto& p : m.pairs) {
    pairs.push_back({{"treated", patients[p.treated].patient_id},
                     {"control", patients[p.control].patient_id},
                     {"treated_score", p.treated_score},
                     {"control_score", p.control_score},
                     {"distance", p.distance}});
  }
  return {{"candidate_id", m.candidate_id},
          {"caliper", m.caliper},
          {"caliper_mode", m.mode == CaliperMode::mad ? "mad" : "logit_sd"},
          {"discarded_treated", m.discarded_treated},
          {"pairs", pairs}};
}

}  // namespace trialx
