#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace trialx::dsl {

/// Heap box with value semantics, for the single-child recursive node.
template <typename T>
class Box {
 public:
  Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}  // NOLINT(implicit)
  Box(const Box& o) : ptr_(std::make_unique<T>(*o.ptr_)) {}
  Box(Box&&) noexcept = default;
  Box& operator=(const Box& o) {
    if (this != &o) ptr_ = std::make_unique<T>(*o.ptr_);
    return *this;
  }
  Box& operator=(Box&&) noexcept = default;

  const T& operator*() const { return *ptr_; }
  const T* operator->() const { return ptr_.get(); }
  bool operator==(const Box& o) const { return *ptr_ == *o.ptr_; }

 private:
  std::unique_ptr<T> ptr_;
};

/// Number, boolean or string constant.
struct Literal {
  std::variant<double, bool, std::string> value;

  Literal() : value(0.0) {}
  Literal(double v) : value(v) {}               // NOLINT(implicit)
  Literal(int v) : value(static_cast<double>(v)) {}  // NOLINT(implicit)
  Literal(bool v) : value(v) {}                 // NOLINT(implicit)
  Literal(std::string v) : value(std::move(v)) {}    // NOLINT(implicit)
  Literal(const char* v) : value(std::string(v)) {}  // NOLINT(implicit)

  bool is_number() const { return std::holds_alternative<double>(value); }
  bool is_bool() const { return std::holds_alternative<bool>(value); }
  bool is_string() const { return std::holds_alternative<std::string>(value); }
  double number() const { return std::get<double>(value); }
  bool boolean() const { return std::get<bool>(value); }
  const std::string& string() const { return std::get<std::string>(value); }

  bool operator==(const Literal&) const = default;
  bool operator<(const Literal& o) const { return value < o.value; }
};

/// `$name`, resolved against an adjustable at evaluation time.
struct ParamRef {
  std::string name;
  bool operator==(const ParamRef&) const = default;
};

using Operand = std::variant<Literal, ParamRef>;

enum class TimeUnit { hours, days, months };

struct Duration {
  Operand amount;
  TimeUnit unit = TimeUnit::hours;
  bool operator==(const Duration&) const = default;
};

enum class AggregateFn { min, max, count, mean };

/// min|max|count|mean over one lab indicator, optionally restricted to the
/// first `first` hours after admission.
struct Aggregate {
  AggregateFn fn = AggregateFn::max;
  std::string indicator;
  std::optional<Duration> first;
  bool operator==(const Aggregate&) const = default;
};

/// Named attribute: a numeric demographic (age, bmi, ...), a string
/// demographic (gender, race), or else an event code read as a boolean flag
/// that is true when the event occurred during the stay.
struct AttrRef {
  std::string name;
  bool operator==(const AttrRef&) const = default;
};

using AttrExpr = std::variant<AttrRef, Aggregate>;

enum class CompareOp { lt, le, gt, ge, eq, ne };

struct Predicate;

struct Compare {
  AttrExpr attr;
  CompareOp op = CompareOp::eq;
  Operand value;
  bool operator==(const Compare&) const = default;
};

struct And {
  std::vector<Predicate> children;
  bool operator==(const And&) const;
};

struct Or {
  std::vector<Predicate> children;
  bool operator==(const Or&) const;
};

struct Not {
  Box<Predicate> child;
  bool operator==(const Not&) const = default;
};

struct AtLeastK {
  int k = 1;
  std::vector<Predicate> children;
  bool operator==(const AtLeastK&) const;
};

enum class EventWindow { any, within_last, during_stay };

struct HasEvent {
  std::string code;
  EventWindow window = EventWindow::any;
  std::optional<Duration> within;  // set iff window == within_last
  bool operator==(const HasEvent&) const = default;
};

struct Predicate {
  std::variant<Compare, And, Or, Not, AtLeastK, HasEvent> node;

  /// Empty conjunction, which holds for everyone.
  Predicate() : node(And{}) {}

  template <typename T>
    requires(!std::is_same_v<std::decay_t<T>, Predicate>)
  Predicate(T n) : node(std::move(n)) {}  // NOLINT(implicit)

  bool operator==(const Predicate&) const = default;
};

inline bool And::operator==(const And& o) const { return children == o.children; }
inline bool Or::operator==(const Or& o) const { return children == o.children; }
inline bool AtLeastK::operator==(const AtLeastK& o) const {
  return k == o.k && children == o.children;
}

enum class Polarity { inclusion, exclusion };

struct Criterion {
  std::string label;
  Predicate predicate;
  Polarity polarity = Polarity::inclusion;
  bool operator==(const Criterion&) const = default;
};

/// One slider: an ordered set of distinct values, in declaration order.
struct AdjustableParam {
  std::string name;
  std::vector<Literal> values;
  std::optional<std::string> unit;
  /// Display role such as "age.min"; defaults to the name.
  std::string role;
  bool operator==(const AdjustableParam&) const = default;
};

struct CriterionSpec {
  Predicate intervention;
  std::vector<Criterion> inclusions;
  std::vector<Criterion> exclusions;
  std::vector<AdjustableParam> adjustables;

  const AdjustableParam* adjustable(const std::string& name) const;

  bool operator==(const CriterionSpec&) const = default;
};

using Bindings = std::map<std::string, Literal>;

}  // namespace trialx::dsl
