#include "study/expression.hpp"

#include <cctype>

namespace study {

namespace mp = boost::multiprecision;

std::string render(const Rational& r) {
  const auto num = mp::numerator(r);
  const auto den = mp::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

std::string render(const Value& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return render(std::get<Rational>(v));
}

Rational parse_decimal(std::string_view text) {
  bool neg = false;
  std::size_t i = 0;
  if (i < text.size() && (text[i] == '-' || text[i] == '+')) {
    neg = text[i] == '-';
    ++i;
  }
  mp::cpp_int num = 0;
  mp::cpp_int den = 1;
  bool digits = false;
  bool frac = false;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' && !frac) {
      frac = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      num = num * 10 + (c - '0');
      if (frac) den *= 10;
      digits = true;
    } else {
      digits = false;
      break;
    }
  }
  if (!digits || i != text.size()) {
    throw ExprError(ExprError::Kind::syntax, "'" + std::string(text) + "' is not a decimal number");
  }
  Rational r(num, den);
  return neg ? Rational(-r) : r;
}

enum class Op {
  number, boolean, name, neg, logical_not,
  add, sub, mul, div, pow,
  eq, ne, lt, le, gt, ge,
  logical_and, logical_or,
  call,
};

struct ExprNode {
  Op op = Op::number;
  std::string text;  // literal spelling, name, or function name
  Rational value;
  bool flag = false;
  std::vector<std::shared_ptr<const ExprNode>> args;
  std::size_t line = 0;
  std::size_t column = 0;
};

namespace {

using NodePtr = std::shared_ptr<const ExprNode>;
using Kind = ExprError::Kind;

struct Tok {
  enum Type { num, ident, op, end } type = end;
  std::string text;
  std::size_t line = 0;
  std::size_t column = 0;
};

class Lexer {
public:
  Lexer(std::string_view src, std::size_t line, std::size_t column) : src_(src), line_(line), col_(column) {}

  std::vector<Tok> run() {
    std::vector<Tok> out;
    while (true) {
      skip_space();
      Tok t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.type = Tok::end;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        t.type = Tok::num;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
          t.text += src_[pos_];
          advance(1);
        }
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.type = Tok::ident;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          t.text += src_[pos_];
          advance(1);
        }
        if (t.text == "and") t = op_tok(t, "&&");
        else if (t.text == "or") t = op_tok(t, "||");
        else if (t.text == "not") t = op_tok(t, "!");
      } else {
        t.type = Tok::op;
        t.text = read_op();
      }
      out.push_back(std::move(t));
    }
  }

private:
  static Tok op_tok(Tok t, const char* s) {
    t.type = Tok::op;
    t.text = s;
    return t;
  }

  void advance(std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) {
      const unsigned char c = static_cast<unsigned char>(src_[pos_++]);
      if (c == '\n') {
        ++line_;
        col_ = 1;
      } else if ((c & 0xC0) != 0x80) {
        ++col_;
      }
    }
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance(1);
  }

  bool starts(std::string_view s) const { return src_.substr(pos_, s.size()) == s; }

  std::string read_op() {
    static const std::pair<std::string_view, std::string_view> table[] = {
        {"\xC3\x97", "*"},      {"\xC3\xB7", "/"},      {"\xE2\x88\x92", "-"}, {"\xE2\x89\xA0", "!="},
        {"\xE2\x89\xA4", "<="}, {"\xE2\x89\xA5", ">="}, {"==", "=="},          {"!=", "!="},
        {"<=", "<="},           {">=", ">="},           {"&&", "&&"},          {"||", "||"},
        {"+", "+"},             {"-", "-"},             {"*", "*"},            {"/", "/"},
        {"^", "^"},             {"(", "("},             {")", ")"},            {",", ","},
        {"<", "<"},             {">", ">"},             {"!", "!"},            {"=", "=="},
    };
    for (const auto& [spelling, canon] : table) {
      if (starts(spelling)) {
        advance(spelling.size());
        return std::string(canon);
      }
    }
    throw ExprError(Kind::syntax,
                    "unexpected character '" + std::string(1, src_[pos_]) + "' at " + std::to_string(line_) + ":" +
                        std::to_string(col_),
                    line_, col_);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_;
  std::size_t col_;
};

class Parser {
public:
  explicit Parser(std::vector<Tok> toks) : toks_(std::move(toks)) {}

  NodePtr parse_all() {
    auto n = parse_or();
    if (cur().type != Tok::end) fail("unexpected '" + cur().text + "'");
    return n;
  }

private:
  const Tok& cur() const { return toks_[pos_]; }

  bool is_op(std::string_view s) const { return cur().type == Tok::op && cur().text == s; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ExprError(Kind::syntax,
                    msg + " at " + std::to_string(cur().line) + ":" + std::to_string(cur().column), cur().line,
                    cur().column);
  }

  static std::shared_ptr<ExprNode> make(Op op, const Tok& at, std::vector<NodePtr> args = {}) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->line = at.line;
    n->column = at.column;
    n->args = std::move(args);
    return n;
  }

  NodePtr parse_or() {
    auto lhs = parse_and();
    while (is_op("||")) {
      Tok at = toks_[pos_++];
      lhs = make(Op::logical_or, at, {lhs, parse_and()});
    }
    return lhs;
  }

  NodePtr parse_and() {
    auto lhs = parse_not();
    while (is_op("&&")) {
      Tok at = toks_[pos_++];
      lhs = make(Op::logical_and, at, {lhs, parse_not()});
    }
    return lhs;
  }

  NodePtr parse_not() {
    if (is_op("!")) {
      Tok at = toks_[pos_++];
      return make(Op::logical_not, at, {parse_not()});
    }
    return parse_cmp();
  }

  NodePtr parse_cmp() {
    auto lhs = parse_sum();
    static const std::pair<std::string_view, Op> cmps[] = {
        {"==", Op::eq}, {"!=", Op::ne}, {"<", Op::lt}, {"<=", Op::le}, {">", Op::gt}, {">=", Op::ge}};
    for (const auto& [s, op] : cmps) {
      if (is_op(s)) {
        Tok at = toks_[pos_++];
        return make(op, at, {lhs, parse_sum()});
      }
    }
    return lhs;
  }

  NodePtr parse_sum() {
    auto lhs = parse_term();
    while (is_op("+") || is_op("-")) {
      Tok at = toks_[pos_++];
      lhs = make(at.text == "+" ? Op::add : Op::sub, at, {lhs, parse_term()});
    }
    return lhs;
  }

  NodePtr parse_term() {
    auto lhs = parse_unary();
    while (is_op("*") || is_op("/")) {
      Tok at = toks_[pos_++];
      lhs = make(at.text == "*" ? Op::mul : Op::div, at, {lhs, parse_unary()});
    }
    return lhs;
  }

  NodePtr parse_unary() {
    if (is_op("-")) {
      Tok at = toks_[pos_++];
      return make(Op::neg, at, {parse_unary()});
    }
    return parse_power();
  }

  NodePtr parse_power() {
    auto base = parse_primary();
    if (is_op("^")) {
      Tok at = toks_[pos_++];
      return make(Op::pow, at, {base, parse_unary()});
    }
    return base;
  }

  NodePtr parse_primary() {
    const Tok t = cur();
    if (t.type == Tok::num) {
      ++pos_;
      auto n = make(Op::number, t);
      try {
        n->value = parse_decimal(t.text);
      } catch (const ExprError&) {
        throw ExprError(Kind::syntax,
                        "malformed number '" + t.text + "' at " + std::to_string(t.line) + ":" +
                            std::to_string(t.column),
                        t.line, t.column);
      }
      n->text = t.text;
      return n;
    }
    if (t.type == Tok::ident) {
      ++pos_;
      if (t.text == "true" || t.text == "false") {
        auto n = make(Op::boolean, t);
        n->flag = t.text == "true";
        n->text = t.text;
        return n;
      }
      if (is_op("(")) {
        if (t.text != "abs" && t.text != "min" && t.text != "max") {
          throw ExprError(Kind::syntax,
                          "unknown function '" + t.text + "' at " + std::to_string(t.line) + ":" +
                              std::to_string(t.column),
                          t.line, t.column);
        }
        ++pos_;
        std::vector<NodePtr> args;
        if (!is_op(")")) {
          args.push_back(parse_or());
          while (is_op(",")) {
            ++pos_;
            args.push_back(parse_or());
          }
        }
        if (!is_op(")")) fail("expected ')'");
        ++pos_;
        if ((t.text == "abs" && args.size() != 1) || args.empty()) {
          throw ExprError(Kind::syntax, "wrong number of arguments to '" + t.text + "'", t.line, t.column);
        }
        auto n = make(Op::call, t, std::move(args));
        n->text = t.text;
        return n;
      }
      auto n = make(Op::name, t);
      n->text = t.text;
      return n;
    }
    if (is_op("(")) {
      ++pos_;
      auto inner = parse_or();
      if (!is_op(")")) fail("expected ')'");
      ++pos_;
      return inner;
    }
    if (t.type == Tok::end) fail("unexpected end of expression");
    fail("unexpected '" + t.text + "'");
  }

  std::vector<Tok> toks_;
  std::size_t pos_ = 0;
};

std::string where(const ExprNode& n) {
  return n.line ? " at " + std::to_string(n.line) + ":" + std::to_string(n.column) : "";
}

Value eval_node(const ExprNode& n, const Bindings& b);

Rational as_number(const ExprNode& n, const Bindings& b) {
  Value v = eval_node(n, b);
  if (auto* r = std::get_if<Rational>(&v)) return *r;
  throw ExprError(Kind::type_mismatch, "expected a number, got a boolean" + where(n), n.line, n.column);
}

bool as_bool(const ExprNode& n, const Bindings& b) {
  Value v = eval_node(n, b);
  if (auto* x = std::get_if<bool>(&v)) return *x;
  throw ExprError(Kind::type_mismatch, "expected a boolean, got a number" + where(n), n.line, n.column);
}

Rational power(const ExprNode& n, const Rational& base, const Rational& exp) {
  if (mp::denominator(exp) != 1) {
    throw ExprError(Kind::non_integer_exponent, "exponent " + render(exp) + " is not an integer" + where(n), n.line,
                    n.column);
  }
  const mp::cpp_int e = mp::numerator(exp);
  if (e > 1024 || e < -1024) {
    throw ExprError(Kind::domain, "exponent " + e.str() + " is too large" + where(n), n.line, n.column);
  }
  const unsigned mag = static_cast<unsigned>(e < 0 ? -e : e);
  if (e < 0 && base == 0) {
    throw ExprError(Kind::division_by_zero, "zero raised to a negative power" + where(n), n.line, n.column);
  }
  Rational r(mp::pow(mp::numerator(base), mag), mp::pow(mp::denominator(base), mag));
  return e < 0 ? Rational(1 / r) : r;
}

Value eval_node(const ExprNode& n, const Bindings& b) {
  const auto& a = n.args;
  switch (n.op) {
    case Op::number: return n.value;
    case Op::boolean: return n.flag;
    case Op::name: {
      auto it = b.find(n.text);
      if (it == b.end()) {
        throw ExprError(Kind::unbound_name, "unbound name '" + n.text + "'" + where(n), n.line, n.column);
      }
      return it->second;
    }
    case Op::neg: return Rational(-as_number(*a[0], b));
    case Op::logical_not: return !as_bool(*a[0], b);
    case Op::add: return Rational(as_number(*a[0], b) + as_number(*a[1], b));
    case Op::sub: return Rational(as_number(*a[0], b) - as_number(*a[1], b));
    case Op::mul: return Rational(as_number(*a[0], b) * as_number(*a[1], b));
    case Op::div: {
      Rational num = as_number(*a[0], b);
      Rational den = as_number(*a[1], b);
      if (den == 0) throw ExprError(Kind::division_by_zero, "division by zero" + where(n), n.line, n.column);
      return Rational(num / den);
    }
    case Op::pow: return power(n, as_number(*a[0], b), as_number(*a[1], b));
    case Op::eq:
    case Op::ne: {
      Value l = eval_node(*a[0], b);
      Value r = eval_node(*a[1], b);
      if (l.index() != r.index()) {
        throw ExprError(Kind::type_mismatch, "comparing a number with a boolean" + where(n), n.line, n.column);
      }
      return (l == r) == (n.op == Op::eq);
    }
    case Op::lt: return as_number(*a[0], b) < as_number(*a[1], b);
    case Op::le: return as_number(*a[0], b) <= as_number(*a[1], b);
    case Op::gt: return as_number(*a[0], b) > as_number(*a[1], b);
    case Op::ge: return as_number(*a[0], b) >= as_number(*a[1], b);
    case Op::logical_and: return as_bool(*a[0], b) && as_bool(*a[1], b);
    case Op::logical_or: return as_bool(*a[0], b) || as_bool(*a[1], b);
    case Op::call: {
      Rational acc = as_number(*a[0], b);
      if (n.text == "abs") return Rational(acc < 0 ? Rational(-acc) : acc);
      for (std::size_t i = 1; i < a.size(); ++i) {
        Rational x = as_number(*a[i], b);
        if (n.text == "min" ? x < acc : x > acc) acc = x;
      }
      return acc;
    }
  }
  throw ExprError(Kind::syntax, "corrupt expression");
}

std::string_view op_text(Op op) {
  switch (op) {
    case Op::add: return "+";
    case Op::sub: return "-";
    case Op::mul: return "*";
    case Op::div: return "/";
    case Op::pow: return "^";
    case Op::eq: return "==";
    case Op::ne: return "!=";
    case Op::lt: return "<";
    case Op::le: return "<=";
    case Op::gt: return ">";
    case Op::ge: return ">=";
    case Op::logical_and: return "&&";
    case Op::logical_or: return "||";
    default: return "?";
  }
}

std::string print(const ExprNode& n);

std::string wrapped(const ExprNode& n) {
  const bool atomic = n.op == Op::number || n.op == Op::boolean || n.op == Op::name || n.op == Op::call;
  return atomic ? print(n) : "(" + print(n) + ")";
}

std::string print(const ExprNode& n) {
  switch (n.op) {
    case Op::number:
    case Op::boolean:
    case Op::name: return n.text;
    case Op::neg: return "-" + wrapped(*n.args[0]);
    case Op::logical_not: return "!" + wrapped(*n.args[0]);
    case Op::call: {
      std::string s = n.text + "(";
      for (std::size_t i = 0; i < n.args.size(); ++i) s += (i ? ", " : "") + print(*n.args[i]);
      return s + ")";
    }
    default: return wrapped(*n.args[0]) + " " + std::string(op_text(n.op)) + " " + wrapped(*n.args[1]);
  }
}

void collect_positions(const ExprNode& n, std::map<std::string, std::pair<std::size_t, std::size_t>>& out) {
  if (n.op == Op::name) out.emplace(n.text, std::make_pair(n.line, n.column));
  for (const auto& a : n.args) collect_positions(*a, out);
}

void collect(const ExprNode& n, std::set<std::string>& out) {
  if (n.op == Op::name) out.insert(n.text);
  for (const auto& a : n.args) collect(*a, out);
}

}  // namespace

Expression Expression::parse(std::string_view text, std::size_t line, std::size_t column) {
  Lexer lex(text, line, column);
  Parser p(lex.run());
  return Expression(p.parse_all());
}

Value Expression::eval(const Bindings& bindings) const {
  if (!root_) throw ExprError(Kind::syntax, "empty expression");
  return eval_node(*root_, bindings);
}

Rational Expression::eval_number(const Bindings& bindings) const {
  if (!root_) throw ExprError(Kind::syntax, "empty expression");
  return as_number(*root_, bindings);
}

bool Expression::eval_bool(const Bindings& bindings) const {
  if (!root_) throw ExprError(Kind::syntax, "empty expression");
  return as_bool(*root_, bindings);
}

std::set<std::string> Expression::names() const {
  std::set<std::string> out;
  if (root_) collect(*root_, out);
  return out;
}

std::map<std::string, std::pair<std::size_t, std::size_t>> Expression::name_positions() const {
  std::map<std::string, std::pair<std::size_t, std::size_t>> out;
  if (root_) collect_positions(*root_, out);
  return out;
}

std::string Expression::to_string() const { return root_ ? print(*root_) : std::string(); }

}  // namespace study
