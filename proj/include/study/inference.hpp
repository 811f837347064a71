#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "study/concept_map.hpp"
#include "study/evidence.hpp"

namespace study {

enum class VariableKind { concept_node, accumulator, question };

std::string_view to_string(VariableKind kind);

/// A binary variable with its conditional table P(var = 1 | parents). The
/// table uses the same layout as ConceptCpt: parent order given, last parent
/// least significant. Root variables carry a single-entry table (their prior).
struct Variable {
  std::string id;
  VariableKind kind = VariableKind::concept_node;
  std::vector<std::size_t> parents;
  std::vector<double> table;
};

class InferenceError : public std::runtime_error {
public:
  enum class Kind {
    unknown_variable,
    duplicate_variable,
    invalid_table,
    conflicting_question,
    resource,
    too_many_variables,
    impossible_evidence,
  };

  InferenceError(Kind kind, const std::string& message, std::size_t clique_size = 0)
      : std::runtime_error(message), kind_(kind), clique_size_(clique_size) {}

  Kind kind() const { return kind_; }
  // Number of variables in the offending factor for resource errors.
  std::size_t clique_size() const { return clique_size_; }

private:
  Kind kind_;
  std::size_t clique_size_;
};

struct NetworkOptions {
  Strategy strategy = Strategy::linear;
  std::size_t fan_in_max = kDefaultFanInMax;
};

/// A student's Bayesian network: concept variables (plus accumulator chains
/// for wide aggregates), one variable per answered question, and the
/// observed outcome of each question. A value type; copying is cheap enough
/// for the sizes involved.
class Network {
public:
  Network() = default;
  explicit Network(NetworkOptions options) : options_(options) {}

  const NetworkOptions& options() const { return options_; }
  const std::vector<Variable>& variables() const { return vars_; }
  std::size_t size() const { return vars_.size(); }
  std::optional<std::size_t> index_of(std::string_view id) const;
  const Variable& variable(std::string_view id) const;

  // Ids of concept variables, in insertion order.
  std::vector<std::string> concept_ids() const;
  std::size_t question_count() const { return metas_.size(); }
  bool has_question(std::string_view id) const { return metas_.contains(std::string(id)); }
  const std::map<std::string, bool>& evidence() const { return evidence_; }

  /// Low-level construction; parents must already exist.
  std::size_t add_variable(std::string id, VariableKind kind, const std::vector<std::string>& parents,
                           std::vector<double> table);

  /// Adds the question node if absent. Re-adding with an identical meta is a
  /// no-op; a different meta under the same id is an error.
  void add_question(const QuestionMeta& meta);

  /// Replaces any earlier outcome for the question.
  void set_evidence(std::string_view question_id, bool outcome);
  void clear_evidence(std::string_view question_id);

  /// add_question + set_evidence.
  void observe(const QuestionMeta& meta, bool outcome);

private:
  NetworkOptions options_;
  std::vector<Variable> vars_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, QuestionMeta> metas_;
  std::map<std::string, bool> evidence_;
};

/// Concept layer of `map` plus one node per distinct answered question. A
/// question answered several times keeps only its last outcome.
Network build_network(const ConceptMap& map, const std::vector<std::pair<QuestionMeta, bool>>& answered,
                      NetworkOptions options = {});

/// Value-returning form of Network::set_evidence.
Network set_evidence(Network net, std::string_view question_id, bool outcome);

using PosteriorMap = std::map<std::string, double>;

inline constexpr std::size_t kDefaultFactorBudget = std::size_t{1} << 20;

struct EliminationOptions {
  std::size_t max_factor_entries = kDefaultFactorBudget;
  // Fixed elimination order by variable id; variables it omits are
  // eliminated afterwards in id order. Empty means min-degree.
  std::vector<std::string> order;
};

/// Exact P(concept = 1 | evidence) for every concept variable, by variable
/// elimination over the part of the network relevant to each query.
PosteriorMap posteriors(const Network& net, const EliminationOptions& options = {});

/// Brute-force marginals over the full joint. Test oracle.
PosteriorMap enumerate_oracle(const Network& net, std::size_t max_variables = 22);

/// Greedy min-degree order over the moralized graph of the whole network,
/// ties broken by variable id.
std::vector<std::string> elimination_order(const Network& net);

/// Debug dump: variables with parents and tables, plus evidence.
nlohmann::json to_json(const Network& net);

}  // namespace study
