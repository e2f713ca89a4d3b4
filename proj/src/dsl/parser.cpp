#include <cctype>
#include <set>
#include <unordered_map>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"
#include "trialx/text.hpp"

namespace trialx::dsl {

namespace {

enum class Tok {
  ident,
  param,
  number,
  string,
  lparen,
  rparen,
  lbracket,
  rbracket,
  lbrace,
  rbrace,
  comma,
  colon,
  op,
  end,
};

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0.0;
  CompareOp cmp = CompareOp::eq;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = column_;
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Tok::ident;
        t.text = take_word();
      } else if (c == '$') {
        advance();
        t.kind = Tok::param;
        t.text = take_word();
        if (t.text.empty()) fail("expected parameter name after '$'", t);
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                 (c == '-' && pos_ + 1 < src_.size() &&
                  (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '.'))) {
        t.kind = Tok::number;
        t.text = take_number();
        auto v = text::parse_double(t.text);
        if (!v) fail("malformed number '" + t.text + "'", t);
        t.number = *v;
      } else if (c == '"') {
        t.kind = Tok::string;
        t.text = take_string(t);
      } else if (!lex_symbol(t)) {
        fail(std::string("unexpected character '") + c + "'", t);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  [[noreturn]] static void fail(const std::string& what, const Token& at) {
    throw SpecError(what, at.line, at.column);
  }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i) {
      if (src_[pos_] == '\n') {
        ++line_;
        column_ = 1;
      } else if ((static_cast<unsigned char>(src_[pos_]) & 0xC0) != 0x80) {
        ++column_;
      }
      ++pos_;
    }
  }

  bool starts_with(std::string_view s) const { return src_.substr(pos_, s.size()) == s; }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string take_word() {
    const std::size_t begin = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      advance();
    return std::string(src_.substr(begin, pos_ - begin));
  }

  std::string take_number() {
    const std::size_t begin = pos_;
    if (src_[pos_] == '-') advance();
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        advance();
      } else if ((c == 'e' || c == 'E') && pos_ + 1 < src_.size()) {
        advance();
        if (src_[pos_] == '+' || src_[pos_] == '-') advance();
      } else {
        break;
      }
    }
    return std::string(src_.substr(begin, pos_ - begin));
  }

  std::string take_string(const Token& at) {
    advance();  // opening quote
    std::string out;
    while (pos_ < src_.size() && src_[pos_] != '"') {
      if (src_[pos_] == '\n') fail("unterminated string", at);
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) {
        advance();
        const char e = src_[pos_];
        if (e == 'n') out.push_back('\n');
        else out.push_back(e);
      } else {
        out.push_back(src_[pos_]);
      }
      advance();
    }
    if (pos_ >= src_.size()) fail("unterminated string", at);
    advance();
    return out;
  }

  bool lex_symbol(Token& t) {
    struct Sym {
      std::string_view text;
      Tok kind;
      CompareOp cmp;
    };
    static constexpr Sym kSyms[] = {
        {"<=", Tok::op, CompareOp::le},    {">=", Tok::op, CompareOp::ge},
        {"!=", Tok::op, CompareOp::ne},    {"==", Tok::op, CompareOp::eq},
        {"≤", Tok::op, CompareOp::le}, {"≥", Tok::op, CompareOp::ge},
        {"≠", Tok::op, CompareOp::ne}, {"<", Tok::op, CompareOp::lt},
        {">", Tok::op, CompareOp::gt},     {"=", Tok::op, CompareOp::eq},
        {"(", Tok::lparen, {}},            {")", Tok::rparen, {}},
        {"[", Tok::lbracket, {}},          {"]", Tok::rbracket, {}},
        {"{", Tok::lbrace, {}},            {"}", Tok::rbrace, {}},
        {",", Tok::comma, {}},             {":", Tok::colon, {}},
    };
    for (const auto& s : kSyms) {
      if (starts_with(s.text)) {
        t.kind = s.kind;
        t.cmp = s.cmp;
        t.text = std::string(s.text);
        advance(s.text.size());
        return true;
      }
    }
    return false;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

bool is_statement_keyword(const Token& t) {
  return t.kind == Tok::ident &&
         (t.text == "INTERVENTION" || t.text == "INCLUDE" || t.text == "EXCLUDE" ||
          t.text == "ADJUST");
}

bool is_reserved(std::string_view w) {
  static const std::set<std::string_view> kReserved = {
      "INTERVENTION", "INCLUDE", "EXCLUDE", "ADJUST", "IN", "AS", "AND", "OR", "NOT",
      "at_least", "of", "has_event", "within_last", "during_stay", "first", "true", "false"};
  return kReserved.count(w) > 0;
}

std::optional<AggregateFn> aggregate_fn(std::string_view w) {
  if (w == "min") return AggregateFn::min;
  if (w == "max") return AggregateFn::max;
  if (w == "count") return AggregateFn::count;
  if (w == "mean") return AggregateFn::mean;
  return std::nullopt;
}

std::optional<TimeUnit> time_unit(std::string_view w) {
  if (w == "hours" || w == "hour") return TimeUnit::hours;
  if (w == "days" || w == "day") return TimeUnit::days;
  if (w == "months" || w == "month") return TimeUnit::months;
  return std::nullopt;
}

struct Use {
  std::string name;
  std::size_t line;
  std::size_t column;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  CriterionSpec run() {
    CriterionSpec spec;
    bool have_intervention = false;
    std::unordered_map<std::string, std::size_t> adjust_index;
    std::set<std::string> labels;

    while (peek().kind != Tok::end) {
      const Token& head = peek();
      if (!is_statement_keyword(head))
        fail("expected INTERVENTION, INCLUDE, EXCLUDE or ADJUST, found " + describe(head), head);
      next();
      if (head.text == "INTERVENTION") {
        if (have_intervention) fail("duplicate INTERVENTION statement", head);
        expect(Tok::colon, "':'");
        spec.intervention = parse_or();
        have_intervention = true;
      } else if (head.text == "INCLUDE" || head.text == "EXCLUDE") {
        const Token& label = expect(Tok::ident, "criterion label");
        if (is_reserved(label.text)) fail("reserved word used as label: " + label.text, label);
        if (!labels.insert(label.text).second) fail("duplicate label '" + label.text + "'", label);
        expect(Tok::colon, "':'");
        Criterion c{label.text, parse_or(),
                    head.text == "INCLUDE" ? Polarity::inclusion : Polarity::exclusion};
        (c.polarity == Polarity::inclusion ? spec.inclusions : spec.exclusions).push_back(std::move(c));
      } else {
        AdjustableParam a = parse_adjust();
        if (adjust_index.count(a.name)) fail("duplicate ADJUST for $" + a.name, head);
        adjust_index.emplace(a.name, spec.adjustables.size());
        adjust_pos_.push_back(head);
        spec.adjustables.push_back(std::move(a));
      }
    }
    if (!have_intervention) fail("missing INTERVENTION statement", peek());

    std::set<std::string> used;
    for (const auto& u : uses_) {
      if (!adjust_index.count(u.name))
        throw SpecError("unbound parameter $" + u.name, u.line, u.column);
      used.insert(u.name);
    }
    for (std::size_t i = 0; i < spec.adjustables.size(); ++i) {
      if (!used.count(spec.adjustables[i].name))
        fail("parameter $" + spec.adjustables[i].name + " is never referenced", adjust_pos_[i]);
    }
    for (const auto& u : numeric_uses_) {
      const auto& a = spec.adjustables[adjust_index.at(u.name)];
      for (const auto& v : a.values) {
        if (!v.is_number())
          throw SpecError("parameter $" + u.name + " is used as a number but has non-numeric values",
                          u.line, u.column);
      }
    }
    return spec;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool at_word(std::string_view w) const { return peek().kind == Tok::ident && peek().text == w; }

  [[noreturn]] static void fail(const std::string& what, const Token& at) {
    throw SpecError(what, at.line, at.column);
  }

  static std::string describe(const Token& t) {
    if (t.kind == Tok::end) return "end of input";
    if (t.kind == Tok::string) return "\"" + t.text + "\"";
    if (t.kind == Tok::param) return "$" + t.text;
    return "'" + t.text + "'";
  }

  const Token& expect(Tok kind, std::string_view what) {
    if (peek().kind != kind) fail("expected " + std::string(what) + ", found " + describe(peek()), peek());
    return next();
  }

  void expect_word(std::string_view w) {
    if (!at_word(w)) fail("expected '" + std::string(w) + "', found " + describe(peek()), peek());
    next();
  }

  AdjustableParam parse_adjust() {
    AdjustableParam a;
    a.name = expect(Tok::param, "$parameter").text;
    expect_word("IN");
    const Token& brace = expect(Tok::lbrace, "'{'");
    if (peek().kind == Tok::rbrace) fail("empty value set for $" + a.name, brace);
    for (;;) {
      const Token& at = peek();
      Literal v = parse_literal();
      if (v.is_string()) fail("adjustable values must be numbers or booleans", at);
      if (!a.values.empty() && a.values.front().is_number() != v.is_number())
        fail("mixed value types for $" + a.name, at);
      for (const auto& existing : a.values) {
        if (existing == v) fail("duplicate value " + serialize_literal(v) + " for $" + a.name, at);
      }
      a.values.push_back(std::move(v));
      if (peek().kind == Tok::comma) {
        next();
        continue;
      }
      expect(Tok::rbrace, "',' or '}'");
      break;
    }
    if (peek().kind == Tok::ident && !is_statement_keyword(peek()) && peek().text != "AS")
      a.unit = next().text;
    if (at_word("AS")) {
      next();
      a.role = expect(Tok::string, "role string").text;
    } else {
      a.role = a.name;
    }
    return a;
  }

  Literal parse_literal() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::number: next(); return Literal(t.number);
      case Tok::string: next(); return Literal(t.text);
      case Tok::ident:
        if (t.text == "true" || t.text == "false") {
          next();
          return Literal(t.text == "true");
        }
        break;
      default: break;
    }
    fail("expected a literal, found " + describe(t), t);
  }

  Operand parse_operand(bool numeric) {
    if (peek().kind == Tok::param) {
      const Token& t = next();
      uses_.push_back({t.text, t.line, t.column});
      if (numeric) numeric_uses_.push_back({t.text, t.line, t.column});
      return ParamRef{t.text};
    }
    const Token& at = peek();
    Literal lit = parse_literal();
    if (numeric && !lit.is_number()) fail("expected a number", at);
    return lit;
  }

  Duration parse_duration() {
    const Token& at = peek();
    Operand amount = parse_operand(true);
    if (const auto* lit = std::get_if<Literal>(&amount); lit && lit->number() < 0)
      fail("duration must not be negative", at);
    const Token& unit = expect(Tok::ident, "time unit (hours, days or months)");
    auto u = time_unit(unit.text);
    if (!u) fail("unknown time unit '" + unit.text + "'", unit);
    return Duration{std::move(amount), *u};
  }

  Predicate parse_or() {
    std::vector<Predicate> items;
    items.push_back(parse_and());
    while (at_word("OR")) {
      next();
      items.push_back(parse_and());
    }
    if (items.size() == 1) return std::move(items.front());
    return Or{std::move(items)};
  }

  Predicate parse_and() {
    std::vector<Predicate> items;
    items.push_back(parse_not());
    while (at_word("AND")) {
      next();
      items.push_back(parse_not());
    }
    if (items.size() == 1) return std::move(items.front());
    return And{std::move(items)};
  }

  Predicate parse_not() {
    if (at_word("NOT")) {
      next();
      return Not{parse_not()};
    }
    return parse_primary();
  }

  Predicate parse_primary() {
    const Token& t = peek();
    if (t.kind == Tok::lparen) {
      next();
      Predicate inner = parse_or();
      expect(Tok::rparen, "')'");
      return inner;
    }
    if (t.kind != Tok::ident || is_statement_keyword(t))
      fail("expected a predicate, found " + describe(t), t);
    if (t.text == "at_least") return parse_at_least();
    if (t.text == "has_event") return parse_has_event();
    if (is_reserved(t.text)) fail("unexpected " + describe(t), t);

    next();
    AttrExpr attr = AttrRef{t.text};
    if (auto fn = aggregate_fn(t.text); fn && peek().kind == Tok::lparen) {
      next();
      const Token& ind = expect(Tok::ident, "lab indicator");
      if (is_numeric_attribute(ind.text) || ind.text == "gender" || ind.text == "race")
        fail("aggregates apply only to lab indicators, not '" + ind.text + "'", ind);
      Aggregate agg{*fn, ind.text, std::nullopt};
      if (peek().kind == Tok::comma) {
        next();
        expect_word("first");
        agg.first = parse_duration();
      }
      expect(Tok::rparen, "')'");
      attr = std::move(agg);
    }

    if (peek().kind != Tok::op) {
      if (const auto* ref = std::get_if<AttrRef>(&attr)) {
        if (is_numeric_attribute(ref->name) || ref->name == "gender" || ref->name == "race")
          fail("attribute '" + ref->name + "' needs a comparison", peek());
        return HasEvent{ref->name, EventWindow::during_stay, std::nullopt};
      }
      fail("expected a comparison operator after aggregate", peek());
    }
    const CompareOp op = next().cmp;
    return Compare{std::move(attr), op, parse_operand(false)};
  }

  Predicate parse_at_least() {
    next();
    const Token& kt = expect(Tok::number, "integer k");
    if (kt.number != static_cast<double>(static_cast<int>(kt.number)))
      fail("at_least needs an integer", kt);
    const int k = static_cast<int>(kt.number);
    expect_word("of");
    expect(Tok::lbracket, "'['");
    std::vector<Predicate> items;
    items.push_back(parse_or());
    while (peek().kind == Tok::comma) {
      next();
      items.push_back(parse_or());
    }
    expect(Tok::rbracket, "']'");
    if (k < 1 || k > static_cast<int>(items.size()))
      fail("at_least " + std::to_string(k) + " of " + std::to_string(items.size()) +
               " is out of range",
           kt);
    return AtLeastK{k, std::move(items)};
  }

  Predicate parse_has_event() {
    next();
    expect(Tok::lparen, "'('");
    const Token& code = peek();
    if (code.kind != Tok::string && code.kind != Tok::ident)
      fail("expected event code, found " + describe(code), code);
    next();
    expect(Tok::rparen, "')'");
    HasEvent h{code.text, EventWindow::any, std::nullopt};
    if (at_word("within_last")) {
      next();
      h.window = EventWindow::within_last;
      h.within = parse_duration();
    } else if (at_word("during_stay")) {
      next();
      h.window = EventWindow::during_stay;
    }
    return h;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<Use> uses_;
  std::vector<Use> numeric_uses_;
  std::vector<Token> adjust_pos_;
};

}  // namespace

const AdjustableParam* CriterionSpec::adjustable(const std::string& name) const {
  for (const auto& a : adjustables) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

CriterionSpec parse_spec(std::string_view text) {
  return Parser(Lexer(text).run()).run();
}

}  // namespace trialx::dsl
