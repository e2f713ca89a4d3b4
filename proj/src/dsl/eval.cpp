#include <algorithm>
#include <limits>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"

namespace trialx::dsl {

namespace {

// Attribute value with its static type: number, bool or string. `present`
// is false when the patient lacks the ingredient.
struct Value {
  enum class Type { number, boolean, string } type = Type::number;
  bool present = false;
  double number = 0.0;
  bool boolean = false;
  std::string_view string;
};

const char* type_name(Value::Type t) {
  switch (t) {
    case Value::Type::number: return "number";
    case Value::Type::boolean: return "boolean";
    case Value::Type::string: return "string";
  }
  return "number";
}

const Literal& resolve(const Operand& o, const Bindings& bindings) {
  if (const auto* lit = std::get_if<Literal>(&o)) return *lit;
  const auto& name = std::get<ParamRef>(o).name;
  auto it = bindings.find(name);
  if (it == bindings.end()) throw EvalError("unbound parameter $" + name);
  return it->second;
}

Hours duration_hours(const Duration& d, const Bindings& bindings) {
  const Literal& amount = resolve(d.amount, bindings);
  if (!amount.is_number()) throw EvalError("duration amount must be a number");
  return to_hours(amount.number(), d.unit);
}

bool event_during_stay(const PatientRecord& p, std::string_view code) {
  return std::any_of(p.events.begin(), p.events.end(),
                     [&](const ClinicalEvent& e) { return e.code == code && e.start >= 0.0; });
}

Value attribute(const AttrExpr& attr, const PatientRecord& p, const Bindings& bindings) {
  Value v;
  if (const auto* agg = std::get_if<Aggregate>(&attr)) {
    std::optional<Hours> first;
    if (agg->first) first = duration_hours(*agg->first, bindings);
    auto x = lab_aggregate(p, agg->fn, agg->indicator, first);
    v.present = x.has_value();
    v.number = x.value_or(0.0);
    return v;
  }
  const auto& name = std::get<AttrRef>(attr).name;
  if (is_numeric_attribute(name)) {
    auto x = derived_attribute(p, name);
    v.present = x.has_value();
    v.number = x.value_or(0.0);
  } else if (name == "gender") {
    v.type = Value::Type::string;
    v.present = true;
    v.string = to_string(p.gender);
  } else if (name == "race") {
    v.type = Value::Type::string;
    v.present = !p.race.empty();
    v.string = p.race;
  } else {
    v.type = Value::Type::boolean;
    v.present = true;
    v.boolean = event_during_stay(p, name);
  }
  return v;
}

template <typename T>
bool apply(CompareOp op, const T& a, const T& b) {
  switch (op) {
    case CompareOp::lt: return a < b;
    case CompareOp::le: return a <= b;
    case CompareOp::gt: return a > b;
    case CompareOp::ge: return a >= b;
    case CompareOp::eq: return a == b;
    case CompareOp::ne: return a != b;
  }
  return false;
}

bool compare(const Compare& c, const PatientRecord& p, const Bindings& bindings) {
  const Value lhs = attribute(c.attr, p, bindings);
  const Literal& rhs = resolve(c.value, bindings);
  const bool ordering = c.op != CompareOp::eq && c.op != CompareOp::ne;
  switch (lhs.type) {
    case Value::Type::number:
      if (!rhs.is_number()) break;
      return lhs.present && apply(c.op, lhs.number, rhs.number());
    case Value::Type::boolean:
      if (!rhs.is_bool()) break;
      if (ordering) throw EvalError("ordering comparison on a boolean attribute");
      return lhs.present && apply(c.op, lhs.boolean, rhs.boolean());
    case Value::Type::string:
      if (!rhs.is_string()) break;
      if (ordering) throw EvalError("ordering comparison on a string attribute");
      return lhs.present && apply(c.op, lhs.string, std::string_view(rhs.string()));
  }
  throw EvalError(std::string("type mismatch: comparing ") + type_name(lhs.type) + " attribute with " +
                  (rhs.is_number() ? "number" : rhs.is_bool() ? "boolean" : "string"));
}

bool has_event(const HasEvent& h, const PatientRecord& p, const Bindings& bindings) {
  Hours earliest = -std::numeric_limits<Hours>::infinity();
  if (h.window == EventWindow::during_stay) earliest = 0.0;
  if (h.window == EventWindow::within_last && h.within) earliest = -duration_hours(*h.within, bindings);
  return std::any_of(p.events.begin(), p.events.end(), [&](const ClinicalEvent& e) {
    return e.code == h.code && e.start >= earliest;
  });
}

}  // namespace

Hours to_hours(double amount, TimeUnit unit) {
  switch (unit) {
    case TimeUnit::hours: return amount;
    case TimeUnit::days: return amount * kHoursPerDay;
    case TimeUnit::months: return amount * kHoursPerMonth;
  }
  return amount;
}

std::optional<double> lab_aggregate(const PatientRecord& patient, AggregateFn fn,
                                    std::string_view indicator, std::optional<Hours> first) {
  const LabSeries* series = patient.lab(indicator);
  std::size_t n = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double sum = 0.0;
  if (series) {
    for (const auto& pt : series->points) {
      if (first && pt.time > *first) break;
      ++n;
      lo = std::min(lo, pt.value);
      hi = std::max(hi, pt.value);
      sum += pt.value;
    }
  }
  if (fn == AggregateFn::count) return static_cast<double>(n);
  if (n == 0) return std::nullopt;
  switch (fn) {
    case AggregateFn::min: return lo;
    case AggregateFn::max: return hi;
    case AggregateFn::mean: return sum / static_cast<double>(n);
    case AggregateFn::count: break;
  }
  return std::nullopt;
}

bool evaluate_predicate(const Predicate& pred, const PatientRecord& patient,
                        const Bindings& bindings) {
  if (const auto* c = std::get_if<Compare>(&pred.node)) return compare(*c, patient, bindings);
  if (const auto* a = std::get_if<And>(&pred.node)) {
    for (const auto& child : a->children) {
      if (!evaluate_predicate(child, patient, bindings)) return false;
    }
    return true;
  }
  if (const auto* o = std::get_if<Or>(&pred.node)) {
    for (const auto& child : o->children) {
      if (evaluate_predicate(child, patient, bindings)) return true;
    }
    return false;
  }
  if (const auto* n = std::get_if<Not>(&pred.node)) return !evaluate_predicate(*n->child, patient, bindings);
  if (const auto* k = std::get_if<AtLeastK>(&pred.node)) {
    int hits = 0;
    for (const auto& child : k->children) {
      if (evaluate_predicate(child, patient, bindings) && ++hits >= k->k) return true;
    }
    return false;
  }
  return has_event(std::get<HasEvent>(pred.node), patient, bindings);
}

Eligibility eligibility(const PatientRecord& patient, const CriterionSpec& spec,
                        const Bindings& bindings) {
  for (const auto& c : spec.inclusions) {
    if (!evaluate_predicate(c.predicate, patient, bindings)) return Eligibility::ineligible;
  }
  for (const auto& c : spec.exclusions) {
    if (evaluate_predicate(c.predicate, patient, bindings)) return Eligibility::ineligible;
  }
  return evaluate_predicate(spec.intervention, patient, bindings) ? Eligibility::treatment
                                                                   : Eligibility::control;
}

}  // namespace trialx::dsl
