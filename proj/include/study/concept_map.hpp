#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace study {

inline constexpr double kWeightSumTolerance = 1e-9;
inline constexpr std::size_t kDefaultFanInMax = 12;

struct ChildEdge {
  std::string id;
  double weight = 0.0;

  bool operator==(const ChildEdge&) const = default;
};

struct ConceptNode {
  std::string id;
  std::string title;
  std::vector<ChildEdge> children;
  // Only meaningful for leaves; falls back to the map-wide prior when unset.
  std::optional<double> prior;

  bool is_leaf() const { return children.empty(); }
};

/// A course concept tree. The root is the course; leaves are fine-grained
/// concepts. Construction only indexes the nodes; use validate() (or
/// parse_concept_map(), which validates) before relying on tree invariants.
class ConceptMap {
public:
  ConceptMap() = default;
  ConceptMap(std::string root, std::vector<ConceptNode> nodes, double prior_leaf = 0.5);

  const std::string& root() const { return root_; }
  double prior_leaf() const { return prior_leaf_; }
  const std::vector<ConceptNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  bool contains(std::string_view id) const;
  const ConceptNode& node(std::string_view id) const;
  const ConceptNode* find(std::string_view id) const;
  // Empty for the root or for unknown ids.
  std::optional<std::string> parent_of(std::string_view id) const;

  double prior_for(std::string_view leaf_id) const;

  // Ids in depth-first preorder starting at the root.
  std::vector<std::string> preorder() const;
  std::vector<std::string> leaves() const;
  std::vector<std::string> aggregates() const;
  // The node itself plus everything below it.
  std::vector<std::string> subtree(std::string_view id) const;

private:
  std::string root_;
  std::vector<ConceptNode> nodes_;
  double prior_leaf_ = 0.5;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::string> parent_;
};

enum class MapRule {
  missing_root,
  duplicate_id,
  dangling_child,
  duplicate_child,
  nonpositive_weight,
  weight_sum,
  multiple_parents,
  cycle,
  unreachable,
  prior_range,
};

std::string_view to_string(MapRule rule);

struct Violation {
  std::string node_id;
  MapRule rule;
  std::string message;
};

/// Checks every tree and weight invariant. Never throws.
std::vector<Violation> validate(const ConceptMap& map);

class ConceptMapError : public std::runtime_error {
public:
  enum class Kind { syntax, schema, invalid };

  ConceptMapError(Kind kind, std::string message, std::size_t position = 0,
                  std::vector<Violation> violations = {});

  Kind kind() const { return kind_; }
  // Byte offset for syntax errors.
  std::size_t position() const { return position_; }
  const std::vector<Violation>& violations() const { return violations_; }

private:
  Kind kind_;
  std::size_t position_;
  std::vector<Violation> violations_;
};

/// Parses the JSON authoring format:
///   {"root": id, "prior_leaf": number?, "nodes": [{"id", "title",
///    "children": [{"id", "weight"}], "prior"?}]}
/// and validates the result.
ConceptMap parse_concept_map(std::string_view text);
ConceptMap load_concept_map(const std::string& path);

/// P(node = 1 | children) for an aggregate node. Entry i corresponds to the
/// assignment whose binary expansion lists the children in order, the last
/// child being the least significant bit: table[0] is all-unknown and
/// table[2^k - 1] is all-known. Listing from all-known down to all-unknown
/// means reading the table backwards.
struct ConceptCpt {
  std::string node_id;
  std::vector<std::string> parent_ids;
  std::vector<double> table;

  bool parent_known(std::size_t assignment, std::size_t parent) const {
    return (assignment >> (parent_ids.size() - 1 - parent)) & 1u;
  }
};

class CptError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Sum of the weights of the children marked known in `assignment`
/// (same bit layout as ConceptCpt::table).
double additive_entry(const std::vector<ChildEdge>& children, std::size_t assignment);

ConceptCpt build_concept_cpt(const ConceptNode& node, std::size_t fan_in_max = kDefaultFanInMax);

/// One link in the accumulator chain that replaces a wide additive node.
/// Parents may be original children or the previous accumulator. The final
/// element carries the original node id.
struct AccumulatorNode {
  std::string id;
  std::vector<ChildEdge> parents;
};

/// Splits an additive node with more than fan_in_max children into a chain of
/// additive nodes with at most fan_in_max parents each. Each accumulator
/// holds the renormalized weight mass of the children folded so far, so the
/// chain's end-to-end conditional equals the original additive rule exactly.
/// Nodes already within the bound come back as a single element.
std::vector<AccumulatorNode> factorize_weighted_cpt(const ConceptNode& node, std::size_t fan_in_max);

std::string accumulator_id(std::string_view node_id, std::size_t index);

}  // namespace study
