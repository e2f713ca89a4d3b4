#include "trialx/grid.hpp"

#include <limits>

#include <nlohmann/json.hpp>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"

namespace trialx {

std::size_t grid_size(const std::vector<dsl::AdjustableParam>& adjustables) {
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  std::size_t n = 1;
  for (const auto& a : adjustables) {
    const std::size_t k = a.values.size();
    if (k == 0) return 0;
    n = n > kMax / k ? kMax : n * k;
  }
  return n;
}

CandidateGrid::CandidateGrid(std::vector<dsl::AdjustableParam> adjustables, std::size_t max_size)
    : adjustables_(std::move(adjustables)) {
  size_ = grid_size(adjustables_);
  if (size_ > max_size) throw GridTooLargeError(size_, max_size);
  strides_.assign(adjustables_.size(), 1);
  for (std::size_t i = adjustables_.size(); i-- > 1;)
    strides_[i - 1] = strides_[i] * adjustables_[i].values.size();
}

std::vector<std::size_t> CandidateGrid::digits(CandidateId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size_)
    throw ValidationError("candidate id " + std::to_string(id) + " outside grid of " +
                          std::to_string(size_));
  std::vector<std::size_t> d(adjustables_.size());
  auto rest = static_cast<std::size_t>(id);
  for (std::size_t i = 0; i < adjustables_.size(); ++i) {
    d[i] = rest / strides_[i];
    rest %= strides_[i];
  }
  return d;
}

CandidateId CandidateGrid::encode(const std::vector<std::size_t>& digits) const {
  if (digits.size() != adjustables_.size()) throw ValidationError("wrong number of digits");
  std::size_t id = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (digits[i] >= adjustables_[i].values.size()) throw ValidationError("digit out of range");
    id += digits[i] * strides_[i];
  }
  return static_cast<CandidateId>(id);
}

CandidateAssignment CandidateGrid::assignment(CandidateId id) const {
  CandidateAssignment a{id, {}};
  const auto d = digits(id);
  for (std::size_t i = 0; i < d.size(); ++i)
    a.bindings.emplace(adjustables_[i].name, adjustables_[i].values[d[i]]);
  return a;
}

CandidateId CandidateGrid::id_of(const dsl::Bindings& bindings) const {
  if (bindings.size() != adjustables_.size()) throw ValidationError("bindings do not cover the grid");
  std::vector<std::size_t> d(adjustables_.size());
  for (std::size_t i = 0; i < adjustables_.size(); ++i) {
    const auto& a = adjustables_[i];
    auto it = bindings.find(a.name);
    if (it == bindings.end()) throw ValidationError("missing binding for $" + a.name);
    std::size_t k = 0;
    while (k < a.values.size() && !(a.values[k] == it->second)) ++k;
    if (k == a.values.size())
      throw ValidationError("value " + dsl::serialize_literal(it->second) + " not declared for $" + a.name);
    d[i] = k;
  }
  return encode(d);
}

std::size_t CandidateGrid::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < adjustables_.size(); ++i) {
    if (adjustables_[i].name == name) return i;
  }
  throw ValidationError("unknown adjustable $" + name);
}

namespace {

// Allowed value indices per adjustable; an empty vector means nothing allowed.
std::vector<std::vector<std::size_t>> allowed_digits(const std::vector<dsl::AdjustableParam>& adjustables,
                                                     const std::vector<const std::set<dsl::Literal>*>& sets) {
  std::vector<std::vector<std::size_t>> allowed(adjustables.size());
  for (std::size_t i = 0; i < adjustables.size(); ++i) {
    for (std::size_t k = 0; k < adjustables[i].values.size(); ++k) {
      if (!sets[i] || sets[i]->count(adjustables[i].values[k])) allowed[i].push_back(k);
    }
  }
  return allowed;
}

}  // namespace

std::vector<CandidateId> CandidateGrid::filter(const Constraints& constraints) const {
  std::vector<const std::set<dsl::Literal>*> sets(adjustables_.size(), nullptr);
  for (const auto& [name, values] : constraints) {
    const std::size_t i = index_of(name);
    for (const auto& v : values) {
      bool declared = false;
      for (const auto& d : adjustables_[i].values) declared = declared || d == v;
      if (!declared)
        throw ValidationError("value " + dsl::serialize_literal(v) + " not declared for $" + name);
    }
    sets[i] = &values;
  }
  const auto allowed = allowed_digits(adjustables_, sets);
  std::vector<CandidateId> out;
  for (const auto& a : allowed) {
    if (a.empty()) return out;
  }
  // Odometer over the allowed digits; the last adjustable varies fastest so
  // ids come out ascending.
  std::vector<std::size_t> pos(adjustables_.size(), 0);
  for (;;) {
    std::size_t id = 0;
    for (std::size_t i = 0; i < pos.size(); ++i) id += allowed[i][pos[i]] * strides_[i];
    out.push_back(static_cast<CandidateId>(id));
    std::size_t i = pos.size();
    while (i > 0) {
      --i;
      if (++pos[i] < allowed[i].size()) break;
      pos[i] = 0;
      if (i == 0) return out;
    }
    if (pos.empty()) return out;
  }
}

std::vector<std::size_t> CandidateGrid::tick_counts(const std::string& name,
                                                    const Constraints& constraints) const {
  const std::size_t target = index_of(name);
  std::size_t others = 1;
  for (std::size_t i = 0; i < adjustables_.size(); ++i) {
    if (i == target) continue;
    auto it = constraints.find(adjustables_[i].name);
    std::size_t n = adjustables_[i].values.size();
    if (it != constraints.end()) {
      n = 0;
      for (const auto& v : adjustables_[i].values) n += it->second.count(v);
    }
    others *= n;
  }
  for (const auto& [cname, values] : constraints) index_of(cname);
  return std::vector<std::size_t>(adjustables_[target].values.size(), others);
}

nlohmann::json CandidateGrid::manifest() const {
  nlohmann::json adj = nlohmann::json::array();
  for (const auto& a : adjustables_) {
    nlohmann::json values = nlohmann::json::array();
    for (const auto& v : a.values) values.push_back(dsl::to_json(v));
    adj.push_back({{"name", a.name}, {"role", a.role}, {"values", values}});
  }
  return {{"adjustables", adj}, {"count", size_}};
}

Constraints constraints_from_json(const nlohmann::json& j) {
  Constraints c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ValidationError("constraints must be an object of value arrays");
  for (const auto& [name, values] : j.items()) {
    if (!values.is_array()) throw ValidationError("constraint for " + name + " must be an array");
    auto& set = c[name];
    for (const auto& v : values) set.insert(dsl::literal_from_json(v));
  }
  return c;
}

nlohmann::json to_json(const Constraints& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, values] : c) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : values) arr.push_back(dsl::to_json(v));
    j[name] = arr;
  }
  return j;
}

}  // namespace trialx
