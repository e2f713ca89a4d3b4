#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "trialx/dsl/ast.hpp"
#include "trialx/ehr.hpp"

namespace trialx::dsl {

/// Parse criteria text. Grammar, informally:
///
///   spec  := stmt*
///   stmt  := "INTERVENTION" ":" pred
///          | ("INCLUDE" | "EXCLUDE") label ":" pred
///          | "ADJUST" $name "IN" "{" literal ("," literal)* "}" [unit] ["AS" "role"]
///   pred  := and ("OR" and)*          and := not ("AND" not)*
///   not   := "NOT" not | "(" pred ")" | at_least | has_event | compare | flag
///   at_least  := "at_least" int "of" "[" pred ("," pred)* "]"
///   has_event := "has_event" "(" "code" ")" ["within_last" amount unit | "during_stay"]
///   compare   := attr op operand      attr := name | fn "(" indicator ["," "first" amount unit] ")"
///
/// A bare name in predicate position is an event flag and is desugared to
/// `has_event("name") during_stay`. `#` starts a comment.
///
/// Throws SpecError (with 1-based line and column) on a syntax error, an
/// unbound or unused parameter, duplicate labels or an empty value set.
CriterionSpec parse_spec(std::string_view text);

/// Canonical text; parse_spec(serialize_spec(s)) == s.
std::string serialize_spec(const CriterionSpec& spec);
std::string serialize_predicate(const Predicate& pred);
std::string serialize_literal(const Literal& lit);

/// Structural dump consumed by the UI. Field names are documented in
/// docs/formats.md.
nlohmann::json to_json(const Predicate& pred);
nlohmann::json to_json(const CriterionSpec& spec);
nlohmann::json to_json(const Literal& lit);
Literal literal_from_json(const nlohmann::json& j);

/// Identity of the criteria: hash of the canonical text.
std::string spec_hash(const CriterionSpec& spec);

/// True iff the predicate holds. Comparisons over a missing attribute are
/// false. Throws EvalError on an unbound parameter or a type mismatch.
bool evaluate_predicate(const Predicate& pred, const PatientRecord& patient,
                        const Bindings& bindings);

enum class Eligibility { ineligible, treatment, control };

/// Every inclusion holds and no exclusion holds; eligible patients are split
/// by the intervention predicate.
Eligibility eligibility(const PatientRecord& patient, const CriterionSpec& spec,
                        const Bindings& bindings);

/// Lab aggregate used by predicates; nullopt for min/max/mean over no points.
std::optional<double> lab_aggregate(const PatientRecord& patient, AggregateFn fn,
                                    std::string_view indicator, std::optional<Hours> first);

Hours to_hours(double amount, TimeUnit unit);

}  // namespace trialx::dsl
