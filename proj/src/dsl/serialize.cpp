#include <nlohmann/json.hpp>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"
#include "trialx/text.hpp"

namespace trialx::dsl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string_view op_text(CompareOp op) {
  switch (op) {
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
    case CompareOp::eq: return "=";
    case CompareOp::ne: return "!=";
  }
  return "=";
}

std::string_view unit_text(TimeUnit u) {
  switch (u) {
    case TimeUnit::hours: return "hours";
    case TimeUnit::days: return "days";
    case TimeUnit::months: return "months";
  }
  return "hours";
}

std::string_view fn_text(AggregateFn fn) {
  switch (fn) {
    case AggregateFn::min: return "min";
    case AggregateFn::max: return "max";
    case AggregateFn::count: return "count";
    case AggregateFn::mean: return "mean";
  }
  return "max";
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string operand_text(const Operand& o) {
  return std::visit(overloaded{[](const Literal& l) { return serialize_literal(l); },
                               [](const ParamRef& p) { return "$" + p.name; }},
                    o);
}

std::string duration_text(const Duration& d) {
  return operand_text(d.amount) + " " + std::string(unit_text(d.unit));
}

// Binding strength used to decide where parentheses are needed.
int strength(const Predicate& p) {
  if (std::holds_alternative<Or>(p.node)) return 1;
  if (std::holds_alternative<And>(p.node)) return 2;
  return 3;
}

std::string child_text(const Predicate& child, int parent_strength) {
  std::string s = serialize_predicate(child);
  // Same-strength children keep parentheses so nested And/Or nodes survive a round trip.
  return strength(child) <= parent_strength ? "(" + s + ")" : s;
}

nlohmann::json operand_json(const Operand& o) {
  return std::visit(overloaded{[](const Literal& l) { return nlohmann::json{{"literal", to_json(l)}}; },
                               [](const ParamRef& p) { return nlohmann::json{{"param", p.name}}; }},
                    o);
}

nlohmann::json duration_json(const Duration& d) {
  return {{"amount", operand_json(d.amount)}, {"unit", unit_text(d.unit)}};
}

nlohmann::json criterion_json(const Criterion& c) {
  return {{"label", c.label},
          {"polarity", c.polarity == Polarity::inclusion ? "inclusion" : "exclusion"},
          {"predicate", to_json(c.predicate)},
          {"text", serialize_predicate(c.predicate)}};
}

}  // namespace

std::string serialize_literal(const Literal& lit) {
  return std::visit(overloaded{[](double v) { return text::format_double(v); },
                               [](bool b) { return std::string(b ? "true" : "false"); },
                               [](const std::string& s) { return quote(s); }},
                    lit.value);
}

std::string serialize_predicate(const Predicate& pred) {
  return std::visit(
      overloaded{
          [](const Compare& c) {
            std::string attr = std::visit(
                overloaded{[](const AttrRef& a) { return a.name; },
                           [](const Aggregate& a) {
                             std::string s = std::string(fn_text(a.fn)) + "(" + a.indicator;
                             if (a.first) s += ", first " + duration_text(*a.first);
                             return s + ")";
                           }},
                c.attr);
            return attr + " " + std::string(op_text(c.op)) + " " + operand_text(c.value);
          },
          [](const And& a) {
            std::string s;
            for (std::size_t i = 0; i < a.children.size(); ++i) {
              if (i) s += " AND ";
              s += child_text(a.children[i], 2);
            }
            return s;
          },
          [](const Or& o) {
            std::string s;
            for (std::size_t i = 0; i < o.children.size(); ++i) {
              if (i) s += " OR ";
              s += child_text(o.children[i], 1);
            }
            return s;
          },
          [](const Not& n) { return "NOT " + child_text(*n.child, 2); },
          [](const AtLeastK& k) {
            std::string s = "at_least " + std::to_string(k.k) + " of [";
            for (std::size_t i = 0; i < k.children.size(); ++i) {
              if (i) s += ", ";
              s += serialize_predicate(k.children[i]);
            }
            return s + "]";
          },
          [](const HasEvent& h) {
            std::string s = "has_event(" + quote(h.code) + ")";
            if (h.window == EventWindow::during_stay) s += " during_stay";
            if (h.window == EventWindow::within_last && h.within)
              s += " within_last " + duration_text(*h.within);
            return s;
          }},
      pred.node);
}

std::string serialize_spec(const CriterionSpec& spec) {
  std::string out = "INTERVENTION: " + serialize_predicate(spec.intervention) + "\n";
  for (const auto& c : spec.inclusions)
    out += "INCLUDE " + c.label + ": " + serialize_predicate(c.predicate) + "\n";
  for (const auto& c : spec.exclusions)
    out += "EXCLUDE " + c.label + ": " + serialize_predicate(c.predicate) + "\n";
  for (const auto& a : spec.adjustables) {
    out += "ADJUST $" + a.name + " IN {";
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (i) out += ", ";
      out += serialize_literal(a.values[i]);
    }
    out += "}";
    if (a.unit) out += " " + *a.unit;
    if (a.role != a.name) out += " AS " + quote(a.role);
    out += "\n";
  }
  return out;
}

nlohmann::json to_json(const Literal& lit) {
  return std::visit([](const auto& v) { return nlohmann::json(v); }, lit.value);
}

Literal literal_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return Literal(j.get<bool>());
  if (j.is_number()) return Literal(j.get<double>());
  if (j.is_string()) return Literal(j.get<std::string>());
  throw ValidationError("literal must be a number, boolean or string");
}

nlohmann::json to_json(const Predicate& pred) {
  auto list = [](const std::vector<Predicate>& xs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& x : xs) arr.push_back(to_json(x));
    return arr;
  };
  return std::visit(
      overloaded{
          [](const Compare& c) {
            nlohmann::json attr = std::visit(
                overloaded{[](const AttrRef& a) { return nlohmann::json{{"attribute", a.name}}; },
                           [](const Aggregate& a) {
                             nlohmann::json j{{"aggregate", fn_text(a.fn)}, {"indicator", a.indicator}};
                             if (a.first) j["first"] = duration_json(*a.first);
                             return j;
                           }},
                c.attr);
            return nlohmann::json{
                {"type", "compare"}, {"attr", attr}, {"op", op_text(c.op)}, {"value", operand_json(c.value)}};
          },
          [&](const And& a) { return nlohmann::json{{"type", "and"}, {"children", list(a.children)}}; },
          [&](const Or& o) { return nlohmann::json{{"type", "or"}, {"children", list(o.children)}}; },
          [](const Not& n) { return nlohmann::json{{"type", "not"}, {"child", to_json(*n.child)}}; },
          [&](const AtLeastK& k) {
            return nlohmann::json{{"type", "at_least"}, {"k", k.k}, {"children", list(k.children)}};
          },
          [](const HasEvent& h) {
            nlohmann::json j{{"type", "has_event"}, {"code", h.code}};
            switch (h.window) {
              case EventWindow::any: j["window"] = "any"; break;
              case EventWindow::during_stay: j["window"] = "during_stay"; break;
              case EventWindow::within_last:
                j["window"] = "within_last";
                if (h.within) j["within"] = duration_json(*h.within);
                break;
            }
            return j;
          }},
      pred.node);
}

nlohmann::json to_json(const CriterionSpec& spec) {
  nlohmann::json j;
  j["intervention"] = to_json(spec.intervention);
  j["inclusions"] = nlohmann::json::array();
  for (const auto& c : spec.inclusions) j["inclusions"].push_back(criterion_json(c));
  j["exclusions"] = nlohmann::json::array();
  for (const auto& c : spec.exclusions) j["exclusions"].push_back(criterion_json(c));
  j["adjustables"] = nlohmann::json::array();
  for (const auto& a : spec.adjustables) {
    nlohmann::json values = nlohmann::json::array();
    for (const auto& v : a.values) values.push_back(to_json(v));
    nlohmann::json aj{{"name", a.name}, {"values", values}, {"role", a.role}};
    aj["unit"] = a.unit ? nlohmann::json(*a.unit) : nlohmann::json(nullptr);
    j["adjustables"].push_back(std::move(aj));
  }
  return j;
}

std::string spec_hash(const CriterionSpec& spec) { return text::fnv1a_hex(serialize_spec(spec)); }

}  // namespace trialx::dsl
