#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace study {

using Rational = boost::multiprecision::cpp_rational;
using Value = std::variant<Rational, bool>;
using Bindings = std::map<std::string, Rational>;

/// Integers as "7", everything else as a reduced "p/q" ("-3/2").
std::string render(const Rational& r);
std::string render(const Value& v);

/// Exact value of a decimal literal such as "12", "0.25" or "-1.5".
Rational parse_decimal(std::string_view text);

class ExprError : public std::runtime_error {
public:
  enum class Kind { syntax, unbound_name, division_by_zero, non_integer_exponent, type_mismatch, domain };

  ExprError(Kind kind, const std::string& message, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(message), kind_(kind), line_(line), column_(column) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

private:
  Kind kind_;
  std::size_t line_;
  std::size_t column_;
};

struct ExprNode;

/// Arithmetic over exact rationals: literals, names, + - * / ^ (integer
/// exponent), unary minus, abs/min/max, comparisons and boolean connectives.
/// Immutable; copies share the tree.
class Expression {
public:
  Expression() = default;

  /// `line`/`column` locate the first character of `text` in its document
  /// so syntax errors can point into the original file.
  static Expression parse(std::string_view text, std::size_t line = 1, std::size_t column = 1);

  Value eval(const Bindings& bindings) const;
  Rational eval_number(const Bindings& bindings) const;
  bool eval_bool(const Bindings& bindings) const;

  std::set<std::string> names() const;

  /// Line and column of the first occurrence of each name.
  std::map<std::string, std::pair<std::size_t, std::size_t>> name_positions() const;

  /// Canonical text; parsing it yields a structurally equal expression.
  std::string to_string() const;

  bool empty() const { return root_ == nullptr; }

  bool operator==(const Expression& other) const { return to_string() == other.to_string(); }

private:
  explicit Expression(std::shared_ptr<const ExprNode> root) : root_(std::move(root)) {}

  std::shared_ptr<const ExprNode> root_;
};

}  // namespace study
