#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "study/evidence.hpp"
#include "study/expression.hpp"

namespace study {

inline constexpr std::size_t kRejectionBudget = 10000;

/// Literal text interleaved with {{ expression }} slots.
class TextTemplate {
public:
  using Segment = std::variant<std::string, Expression>;

  TextTemplate() = default;
  static TextTemplate parse(std::string_view text, std::size_t line = 1, std::size_t column = 1);

  std::string render(const Bindings& bindings) const;
  std::set<std::string> names() const;
  std::string source() const;
  const std::vector<Segment>& segments() const { return segments_; }

  // True when the whole text is a single {{ expression }} slot.
  const Expression* sole_expression() const;

  bool operator==(const TextTemplate& other) const { return segments_ == other.segments_; }

private:
  std::vector<Segment> segments_;
};

struct ParamSpec {
  enum class Kind { range, set, derived };

  std::string name;
  Kind kind = Kind::range;
  Rational lo, hi, step = 1;         // range
  std::vector<Expression> values;    // set: constant expressions
  Expression formula;                // derived

  bool operator==(const ParamSpec&) const = default;

  // Number of values a range or set can take.
  std::size_t cardinality() const;
};

struct QuestionTemplate {
  std::string id;
  QuestionKind kind = QuestionKind::multiple_choice;
  std::vector<ParamSpec> params;
  std::vector<Expression> constraints;
  TextTemplate stem;
  // Multiple choice: first entry is the correct answer.
  std::vector<TextTemplate> choices;
  // True/false: the statement's truth value.
  Expression truth;
  TextTemplate solution;
  QuestionMeta meta;

  bool operator==(const QuestionTemplate&) const = default;
};

class TemplateError : public std::runtime_error {
public:
  enum class Kind { grammar, undeclared_parameter, too_few_distractors, invalid_meta, structure };

  TemplateError(Kind kind, const std::string& message, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(message), kind_(kind), line_(line), column_(column) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

private:
  Kind kind_;
  std::size_t line_;
  std::size_t column_;
};

/// Template document:
///
///   %template <id>
///   %kind multiple-choice | true-false
///   %params
///   a in 2..9            integer range, optional "step s"
///   b in {1, 3, 1/2}     explicit set
///   let c = a*b          derived value
///   where a != b         constraint
///   %stem
///   text with {{ expressions }}
///   %choices             one per line, first is correct (multiple choice)
///   %truth               one boolean expression (true/false)
///   %solution
///   text
///   SIACUAstart ... SIACUAend
QuestionTemplate parse_template(std::string_view text);
QuestionTemplate load_template(const std::string& path);
std::string serialize_template(const QuestionTemplate& tpl);

/// Reads every *.tmpl file in a directory, sorted by file name.
std::vector<QuestionTemplate> load_templates(const std::string& dir);

struct QuestionInstance {
  std::uint64_t number = 0;  // assigned by the bank, 0 until then
  std::string template_id;
  std::uint64_t seed = 0;
  QuestionKind kind = QuestionKind::multiple_choice;
  std::map<std::string, std::string> params;
  std::string stem;
  std::vector<std::string> choices;
  std::size_t correct_index = 0;
  std::string solution;
  QuestionMeta meta;

  bool operator==(const QuestionInstance&) const = default;
};

class InstantiationError : public std::runtime_error {
public:
  enum class Kind { unsatisfiable, duplicate_choice, evaluation };

  InstantiationError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

/// Draws parameters from their domains with a stream seeded by
/// (template id, seed), rejection-sampling until every constraint holds, and
/// renders the item. Choices are shuffled from the same stream.
QuestionInstance instantiate(const QuestionTemplate& tpl, std::uint64_t seed);

/// Question id used as the network node for a numbered instance.
std::string question_node_id(std::uint64_t number);

struct BankError {
  std::string template_id;
  std::uint64_t seed = 0;
  std::string message;
};

struct BankResult {
  std::vector<QuestionInstance> instances;
  std::vector<BankError> errors;
  std::size_t duplicates = 0;
};

/// Seeds 1..per_template for each template in order; identical items
/// (same stem and same multiset of choices) are kept once, and survivors are
/// numbered from 1.
BankResult generate_bank(const std::vector<QuestionTemplate>& templates, std::size_t per_template);

nlohmann::json to_json(const QuestionInstance& q);
QuestionInstance instance_from_json(const nlohmann::json& j);

/// Public view of an instance: no correct index and no solution.
nlohmann::json public_json(const QuestionInstance& q);

std::string to_jsonl(const std::vector<QuestionInstance>& bank);
std::vector<QuestionInstance> load_bank(const std::string& path);

}  // namespace study
