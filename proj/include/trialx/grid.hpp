#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "trialx/dsl/ast.hpp"

namespace trialx {

using CandidateId = std::int64_t;

inline constexpr std::size_t kDefaultMaxGrid = 100'000;

struct CandidateAssignment {
  CandidateId id = 0;
  dsl::Bindings bindings;
};

/// Per-adjustable value constraints, as set by the slider ticks.
using Constraints = std::map<std::string, std::set<dsl::Literal>>;

/// Cartesian product of the adjustable value sets. Ids are mixed-radix
/// numbers whose most significant digit is the first declared adjustable.
class CandidateGrid {
 public:
  /// Throws GridTooLargeError when the product exceeds `max_size`.
  explicit CandidateGrid(std::vector<dsl::AdjustableParam> adjustables,
                         std::size_t max_size = kDefaultMaxGrid);

  std::size_t size() const noexcept { return size_; }
  const std::vector<dsl::AdjustableParam>& adjustables() const noexcept { return adjustables_; }

  CandidateAssignment assignment(CandidateId id) const;
  /// Value index of every adjustable, in declaration order.
  std::vector<std::size_t> digits(CandidateId id) const;
  CandidateId encode(const std::vector<std::size_t>& digits) const;
  /// Inverse of assignment(); throws ValidationError for foreign bindings.
  CandidateId id_of(const dsl::Bindings& bindings) const;

  /// Ids whose bindings fall inside every constraint set, ascending.
  /// Throws ValidationError on an unknown adjustable or an undeclared value.
  std::vector<CandidateId> filter(const Constraints& constraints) const;

  /// For every value of `name`, how many candidates satisfying `constraints`
  /// take that value (constraints on `name` itself are ignored).
  std::vector<std::size_t> tick_counts(const std::string& name, const Constraints& constraints) const;

  nlohmann::json manifest() const;

 private:
  std::size_t index_of(const std::string& name) const;

  std::vector<dsl::AdjustableParam> adjustables_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

/// Saturating product of the value-set sizes (for size reports).
std::size_t grid_size(const std::vector<dsl::AdjustableParam>& adjustables);

Constraints constraints_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Constraints& c);

}  // namespace trialx
