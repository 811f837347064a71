#include "study/concept_map.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace study {

ConceptMap::ConceptMap(std::string root, std::vector<ConceptNode> nodes, double prior_leaf)
    : root_(std::move(root)), nodes_(std::move(nodes)), prior_leaf_(prior_leaf) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    index_.emplace(nodes_[i].id, i);
  }
  for (const auto& n : nodes_) {
    for (const auto& c : n.children) {
      parent_.emplace(c.id, n.id);
    }
  }
}

bool ConceptMap::contains(std::string_view id) const {
  return index_.contains(std::string(id));
}

const ConceptNode* ConceptMap::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const ConceptNode& ConceptMap::node(std::string_view id) const {
  if (const auto* n = find(id)) {
    return *n;
  }
  throw std::out_of_range("unknown concept '" + std::string(id) + "'");
}

std::optional<std::string> ConceptMap::parent_of(std::string_view id) const {
  auto it = parent_.find(std::string(id));
  if (it == parent_.end()) {
    return std::nullopt;
  }
  return it->second;
}

double ConceptMap::prior_for(std::string_view leaf_id) const {
  const auto& n = node(leaf_id);
  return n.prior.value_or(prior_leaf_);
}

std::vector<std::string> ConceptMap::subtree(std::string_view id) const {
  std::vector<std::string> out;
  if (!contains(id)) {
    return out;
  }
  std::unordered_set<std::string> seen;
  std::vector<std::string> stack{std::string(id)};
  while (!stack.empty()) {
    auto cur = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(cur).second) {
      continue;
    }
    out.push_back(cur);
    const auto* n = find(cur);
    if (n == nullptr) {
      continue;
    }
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) {
      stack.push_back(it->id);
    }
  }
  return out;
}

std::vector<std::string> ConceptMap::preorder() const { return subtree(root_); }

std::vector<std::string> ConceptMap::leaves() const {
  std::vector<std::string> out;
  for (const auto& id : preorder()) {
    if (node(id).is_leaf()) {
      out.push_back(id);
    }
  }
  return out;
}

std::vector<std::string> ConceptMap::aggregates() const {
  std::vector<std::string> out;
  for (const auto& id : preorder()) {
    if (!node(id).is_leaf()) {
      out.push_back(id);
    }
  }
  return out;
}

std::string_view to_string(MapRule rule) {
  switch (rule) {
    case MapRule::missing_root: return "missing root";
    case MapRule::duplicate_id: return "duplicate id";
    case MapRule::dangling_child: return "dangling child reference";
    case MapRule::duplicate_child: return "duplicate child";
    case MapRule::nonpositive_weight: return "nonpositive weight";
    case MapRule::weight_sum: return "weight sum";
    case MapRule::multiple_parents: return "multiple parents";
    case MapRule::cycle: return "cycle";
    case MapRule::unreachable: return "unreachable";
    case MapRule::prior_range: return "prior out of range";
  }
  return "unknown";
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

bool open_unit(double p) { return std::isfinite(p) && p > 0.0 && p < 1.0; }

}  // namespace

std::vector<Violation> validate(const ConceptMap& map) {
  std::vector<Violation> out;
  auto add = [&out](const std::string& id, MapRule rule, std::string msg) {
    out.push_back(Violation{id, rule, std::move(msg)});
  };

  if (!open_unit(map.prior_leaf())) {
    add(map.root(), MapRule::prior_range, "prior_leaf " + fmt_double(map.prior_leaf()) + " not in (0,1)");
  }
  if (!map.contains(map.root())) {
    add(map.root(), MapRule::missing_root, "root '" + map.root() + "' is not a node");
  }

  std::unordered_set<std::string> ids;
  std::unordered_map<std::string, std::vector<std::string>> parents;
  for (const auto& n : map.nodes()) {
    if (!ids.insert(n.id).second) {
      add(n.id, MapRule::duplicate_id, "id '" + n.id + "' defined more than once");
    }
    if (n.prior && !open_unit(*n.prior)) {
      add(n.id, MapRule::prior_range, "prior " + fmt_double(*n.prior) + " not in (0,1)");
    }
    std::unordered_set<std::string> kids;
    double sum = 0.0;
    for (const auto& c : n.children) {
      if (!kids.insert(c.id).second) {
        add(n.id, MapRule::duplicate_child, "child '" + c.id + "' listed twice");
      }
      if (!map.contains(c.id)) {
        add(n.id, MapRule::dangling_child, "child '" + c.id + "' does not exist");
      }
      if (!(std::isfinite(c.weight) && c.weight > 0.0)) {
        add(n.id, MapRule::nonpositive_weight,
            "weight of child '" + c.id + "' is " + fmt_double(c.weight));
      }
      sum += c.weight;
      parents[c.id].push_back(n.id);
    }
    if (!n.children.empty() && !(std::abs(sum - 1.0) <= kWeightSumTolerance)) {
      add(n.id, MapRule::weight_sum, "child weights sum to " + fmt_double(sum) + ", expected 1");
    }
  }

  for (const auto& [child, ps] : parents) {
    std::set<std::string> distinct(ps.begin(), ps.end());
    if (distinct.size() > 1) {
      std::string list;
      for (const auto& p : distinct) {
        list += (list.empty() ? "" : ", ") + p;
      }
      add(child, MapRule::multiple_parents, "has parents " + list);
    }
  }

  // Cycle detection over the child relation (white/grey/black DFS).
  std::unordered_map<std::string, int> colour;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    colour[id] = 1;
    if (const auto* n = map.find(id)) {
      for (const auto& c : n->children) {
        if (!map.contains(c.id)) {
          continue;
        }
        int col = colour[c.id];
        if (col == 1) {
          add(c.id, MapRule::cycle, "cycle through '" + id + "' -> '" + c.id + "'");
        } else if (col == 0) {
          visit(c.id);
        }
      }
    }
    colour[id] = 2;
  };
  for (const auto& n : map.nodes()) {
    if (colour[n.id] == 0) {
      visit(n.id);
    }
  }
  if (map.contains(map.root()) && parents.contains(map.root())) {
    add(map.root(), MapRule::cycle, "root appears as a child");
  }

  if (map.contains(map.root())) {
    auto reach = map.subtree(map.root());
    std::unordered_set<std::string> reachable(reach.begin(), reach.end());
    for (const auto& n : map.nodes()) {
      if (!reachable.contains(n.id)) {
        add(n.id, MapRule::unreachable, "not reachable from root '" + map.root() + "'");
      }
    }
  }
  return out;
}

ConceptMapError::ConceptMapError(Kind kind, std::string message, std::size_t position,
                                 std::vector<Violation> violations)
    : std::runtime_error(std::move(message)),
      kind_(kind),
      position_(position),
      violations_(std::move(violations)) {}

ConceptMap parse_concept_map(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConceptMapError(ConceptMapError::Kind::syntax,
                          "concept map syntax error at byte " + std::to_string(e.byte) + ": " + e.what(),
                          e.byte);
  }

  auto schema = [](const std::string& msg) {
    return ConceptMapError(ConceptMapError::Kind::schema, "concept map: " + msg);
  };

  if (!doc.is_object()) throw schema("document must be an object");
  if (!doc.contains("root") || !doc["root"].is_string()) throw schema("\"root\" must be a string");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) throw schema("\"nodes\" must be an array");

  double prior_leaf = 0.5;
  if (doc.contains("prior_leaf")) {
    if (!doc["prior_leaf"].is_number()) throw schema("\"prior_leaf\" must be a number");
    prior_leaf = doc["prior_leaf"].get<double>();
  }

  std::vector<ConceptNode> nodes;
  for (const auto& jn : doc["nodes"]) {
    if (!jn.is_object()) throw schema("every node must be an object");
    if (!jn.contains("id") || !jn["id"].is_string()) throw schema("node without string \"id\"");
    ConceptNode n;
    n.id = jn["id"].get<std::string>();
    n.title = jn.value("title", n.id);
    if (jn.contains("prior")) {
      if (!jn["prior"].is_number()) throw schema("node '" + n.id + "': \"prior\" must be a number");
      n.prior = jn["prior"].get<double>();
    }
    if (jn.contains("children")) {
      if (!jn["children"].is_array()) throw schema("node '" + n.id + "': \"children\" must be an array");
      for (const auto& jc : jn["children"]) {
        if (!jc.is_object() || !jc.contains("id") || !jc["id"].is_string() || !jc.contains("weight") ||
            !jc["weight"].is_number()) {
          throw schema("node '" + n.id + "': child entries need string \"id\" and numeric \"weight\"");
        }
        n.children.push_back(ChildEdge{jc["id"].get<std::string>(), jc["weight"].get<double>()});
      }
    }
    nodes.push_back(std::move(n));
  }

  ConceptMap map(doc["root"].get<std::string>(), std::move(nodes), prior_leaf);
  auto violations = validate(map);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw ConceptMapError(ConceptMapError::Kind::invalid,
                          "concept map: " + std::string(to_string(v.rule)) + " at '" + v.node_id + "': " + v.message,
                          0, std::move(violations));
  }
  return map;
}

ConceptMap load_concept_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read concept map '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_concept_map(ss.str());
}

double additive_entry(const std::vector<ChildEdge>& children, std::size_t assignment) {
  const std::size_t k = children.size();
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if ((assignment >> (k - 1 - j)) & 1u) {
      sum += children[j].weight;
    }
  }
  return sum;
}

ConceptCpt build_concept_cpt(const ConceptNode& node, std::size_t fan_in_max) {
  if (node.is_leaf()) {
    throw CptError("concept '" + node.id + "' is a leaf and has no conditional table");
  }
  const std::size_t k = node.children.size();
  if (k > fan_in_max) {
    throw CptError("concept '" + node.id + "' has " + std::to_string(k) + " children, above fan-in limit " +
                   std::to_string(fan_in_max) + "; factorize first");
  }
  double sum = 0.0;
  for (const auto& c : node.children) {
    if (!(c.weight > 0.0)) {
      throw CptError("concept '" + node.id + "': nonpositive weight on '" + c.id + "'");
    }
    sum += c.weight;
  }
  if (!(std::abs(sum - 1.0) <= kWeightSumTolerance)) {
    throw CptError("concept '" + node.id + "': child weights sum to " + fmt_double(sum));
  }

  ConceptCpt cpt;
  cpt.node_id = node.id;
  for (const auto& c : node.children) {
    cpt.parent_ids.push_back(c.id);
  }
  const std::size_t rows = std::size_t{1} << k;
  cpt.table.resize(rows);
  for (std::size_t a = 0; a < rows; ++a) {
    cpt.table[a] = std::min(1.0, additive_entry(node.children, a));
  }
  cpt.table[0] = 0.0;
  cpt.table[rows - 1] = 1.0;
  return cpt;
}

std::string accumulator_id(std::string_view node_id, std::size_t index) {
  return std::string(node_id) + "~acc" + std::to_string(index);
}

std::vector<AccumulatorNode> factorize_weighted_cpt(const ConceptNode& node, std::size_t fan_in_max) {
  if (fan_in_max < 2) {
    throw CptError("fan_in_max must be at least 2, got " + std::to_string(fan_in_max));
  }
  const auto& kids = node.children;
  if (kids.size() <= fan_in_max) {
    return {AccumulatorNode{node.id, kids}};
  }

  std::vector<AccumulatorNode> chain;
  std::size_t next = 0;
  double folded = 0.0;  // raw weight mass absorbed by the previous accumulator
  while (next < kids.size()) {
    const bool first = chain.empty();
    const std::size_t room = first ? fan_in_max : fan_in_max - 1;
    const std::size_t take = std::min(room, kids.size() - next);
    const bool last = next + take == kids.size();

    double mass = folded;
    for (std::size_t j = next; j < next + take; ++j) {
      mass += kids[j].weight;
    }
    // The final link keeps raw weights so it reproduces the additive sum
    // itself rather than a renormalized copy of it.
    const double scale = last ? 1.0 : mass;

    AccumulatorNode acc;
    acc.id = last ? node.id : accumulator_id(node.id, chain.size() + 1);
    if (!first) {
      acc.parents.push_back(ChildEdge{chain.back().id, folded / scale});
    }
    for (std::size_t j = next; j < next + take; ++j) {
      acc.parents.push_back(ChildEdge{kids[j].id, kids[j].weight / scale});
    }
    chain.push_back(std::move(acc));
    folded = mass;
    next += take;
  }
  return chain;
}

}  // namespace study
