#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "study/concept_map.hpp"
#include "support.hpp"

using namespace study;
using testing::calculus_map;
using testing::data_path;

namespace {

bool has_rule(const std::vector<Violation>& vs, MapRule rule, const std::string& node) {
  return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.rule == rule && v.node_id == node; });
}

MapRule parse_error_rule(const std::string& text) {
  try {
    parse_concept_map(text);
  } catch (const ConceptMapError& e) {
    REQUIRE(e.kind() == ConceptMapError::Kind::invalid);
    REQUIRE(!e.violations().empty());
    return e.violations().front().rule;
  }
  FAIL("expected a ConceptMapError");
  return MapRule::missing_root;
}

// P(node = 1 | assignment) straight from the weights, bit i of `a` being the
// state of child k-1-i.
double direct_sum(const std::vector<ChildEdge>& children, std::size_t a) {
  double s = 0.0;
  const std::size_t k = children.size();
  for (std::size_t j = 0; j < k; ++j) {
    if ((a >> (k - 1 - j)) & 1u) s += children[j].weight;
  }
  return s;
}

// Marginal of the chain's final node for a fixed child assignment, computed
// by summing over the intermediate accumulators.
double chain_value(const std::vector<AccumulatorNode>& chain, const std::map<std::string, bool>& children) {
  // Distribution of the running accumulator: P(acc = 1).
  double prev = 0.0;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto& link = chain[i];
    double p1 = 0.0;
    for (int acc_state = 0; acc_state < 2; ++acc_state) {
      const double p_acc = i == 0 ? (acc_state == 0 ? 1.0 : 0.0) : (acc_state ? prev : 1.0 - prev);
      if (p_acc == 0.0) continue;
      double sum = 0.0;
      for (const auto& parent : link.parents) {
        const bool on = children.contains(parent.id) ? children.at(parent.id) : acc_state == 1;
        if (on) sum += parent.weight;
      }
      p1 += p_acc * std::min(1.0, sum);
    }
    prev = p1;
  }
  return prev;
}

}  // namespace

TEST_CASE("parse a three-child course map") {
  const auto map = parse_concept_map(R"({"root": "C", "nodes": [
      {"id": "C", "title": "Calculus", "children": [{"id": "D", "weight": 0.5}, {"id": "I", "weight": 0.3}, {"id": "E", "weight": 0.2}]},
      {"id": "D", "title": "Derivatives", "children": []},
      {"id": "I", "title": "Integrals"},
      {"id": "E", "title": "PDEs", "children": []}]})");
  CHECK(map.size() == 4);
  CHECK(map.root() == "C");
  CHECK(map.prior_leaf() == 0.5);
  CHECK(map.node("C").children.size() == 3);
  CHECK(map.node("D").is_leaf());
  CHECK(map.parent_of("I") == std::optional<std::string>("C"));
  CHECK_FALSE(map.parent_of("C").has_value());
  CHECK(map.leaves() == std::vector<std::string>{"D", "I", "E"});
  CHECK(map.aggregates() == std::vector<std::string>{"C"});
}

TEST_CASE("single-node map is a leaf root") {
  const auto map = parse_concept_map(R"({"root": "only", "nodes": [{"id": "only", "title": "Only"}]})");
  CHECK(map.size() == 1);
  CHECK(map.node("only").is_leaf());
  CHECK(validate(map).empty());
}

TEST_CASE("weights over one are rejected") {
  const std::string doc = R"({"root": "C", "nodes": [
      {"id": "C", "title": "C", "children": [{"id": "D", "weight": 1.0}]},
      {"id": "D", "title": "D", "children": [{"id": "x", "weight": 0.6}, {"id": "y", "weight": 0.6}]},
      {"id": "x", "title": "x"}, {"id": "y", "title": "y"}]})";
  try {
    parse_concept_map(doc);
    FAIL("expected weight-sum error");
  } catch (const ConceptMapError& e) {
    CHECK(e.kind() == ConceptMapError::Kind::invalid);
    CHECK(has_rule(e.violations(), MapRule::weight_sum, "D"));
  }
}

TEST_CASE("parse errors") {
  SUBCASE("syntax error carries a position") {
    try {
      parse_concept_map(R"({"root": "C", "nodes": [})");
      FAIL("expected syntax error");
    } catch (const ConceptMapError& e) {
      CHECK(e.kind() == ConceptMapError::Kind::syntax);
      CHECK(e.position() > 0);
    }
  }
  SUBCASE("schema") {
    CHECK_THROWS_AS(parse_concept_map(R"({"nodes": []})"), ConceptMapError);
    CHECK_THROWS_AS(parse_concept_map(R"([1, 2])"), ConceptMapError);
  }
  SUBCASE("duplicate id") {
    CHECK(parse_error_rule(R"({"root": "a", "nodes": [{"id": "a", "title": "a"}, {"id": "a", "title": "b"}]})") ==
          MapRule::duplicate_id);
  }
  SUBCASE("dangling child") {
    CHECK(parse_error_rule(
              R"({"root": "a", "nodes": [{"id": "a", "title": "a", "children": [{"id": "zz", "weight": 1}]}]})") ==
          MapRule::dangling_child);
  }
  SUBCASE("cycle") {
    const std::string doc = R"({"root": "r", "nodes": [
        {"id": "r", "title": "r", "children": [{"id": "a", "weight": 1}]},
        {"id": "a", "title": "a", "children": [{"id": "b", "weight": 1}]},
        {"id": "b", "title": "b", "children": [{"id": "a", "weight": 1}]}]})";
    try {
      parse_concept_map(doc);
      FAIL("expected cycle");
    } catch (const ConceptMapError& e) {
      const auto& vs = e.violations();
      CHECK(std::any_of(vs.begin(), vs.end(), [](const Violation& v) {
        return v.rule == MapRule::cycle || v.rule == MapRule::multiple_parents;
      }));
    }
  }
  SUBCASE("missing file") { CHECK_THROWS(load_concept_map("/nonexistent/map.json")); }
}

TEST_CASE("validate") {
  SUBCASE("the three-child map is clean") { CHECK(validate(calculus_map()).empty()); }

  SUBCASE("zero weight") {
    const ConceptMap map("C", {ConceptNode{"C", "C", {{"D", 1.0}, {"I", 0.0}}, {}}, ConceptNode{"D", "D", {}, {}},
                               ConceptNode{"I", "I", {}, {}}});
    const auto vs = validate(map);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].rule == MapRule::nonpositive_weight);
    CHECK(vs[0].node_id == "C");
  }

  SUBCASE("shipped demo map") {
    const auto map = load_concept_map(data_path("demo_map.json"));
    CHECK(validate(map).empty());
    CHECK(map.size() == 57);
    CHECK(map.leaves().size() == 50);
  }

  SUBCASE("unreachable node and bad prior") {
    const ConceptMap map("r", {ConceptNode{"r", "r", {{"a", 1.0}}, {}}, ConceptNode{"a", "a", {}, 1.5},
                               ConceptNode{"stray", "s", {}, {}}});
    const auto vs = validate(map);
    CHECK(has_rule(vs, MapRule::unreachable, "stray"));
    CHECK(has_rule(vs, MapRule::prior_range, "a"));
  }

  SUBCASE("missing root and duplicate child") {
    CHECK(has_rule(validate(ConceptMap("nope", {ConceptNode{"a", "a", {}, {}}})), MapRule::missing_root, "nope"));
    const ConceptMap dup("r", {ConceptNode{"r", "r", {{"a", 0.5}, {"a", 0.5}}, {}}, ConceptNode{"a", "a", {}, {}}});
    CHECK(has_rule(validate(dup), MapRule::duplicate_child, "r"));
  }

  SUBCASE("two parents") {
    const ConceptMap map("r", {ConceptNode{"r", "r", {{"a", 0.5}, {"b", 0.5}}, {}},
                               ConceptNode{"a", "a", {{"x", 1.0}}, {}}, ConceptNode{"b", "b", {{"x", 1.0}}, {}},
                               ConceptNode{"x", "x", {}, {}}});
    CHECK(has_rule(validate(map), MapRule::multiple_parents, "x"));
  }

  SUBCASE("prior_leaf out of range") {
    const ConceptMap map("r", {ConceptNode{"r", "r", {}, {}}}, 1.0);
    CHECK_FALSE(validate(map).empty());
  }
}

TEST_CASE("additive CPT for weights 0.5/0.3/0.2") {
  const auto cpt = build_concept_cpt(calculus_map().node("C"));
  CHECK(cpt.parent_ids == std::vector<std::string>{"D", "I", "E"});
  REQUIRE(cpt.table.size() == 8);
  // From all-known down to all-unknown.
  const std::vector<double> expected{1.0, 0.8, 0.7, 0.5, 0.5, 0.3, 0.2, 0.0};
  for (std::size_t i = 0; i < 8; ++i) CHECK(cpt.table[7 - i] == doctest::Approx(expected[i]).epsilon(1e-12));
  CHECK(cpt.table[0] == 0.0);
  CHECK(cpt.table[7] == 1.0);
  // (D, I, E) = (1, 1, 0) is index 0b110.
  CHECK(cpt.table[0b110] == doctest::Approx(0.8));
}

TEST_CASE("small CPT shapes") {
  SUBCASE("single child") {
    const auto cpt = build_concept_cpt(ConceptNode{"p", "p", {{"c", 1.0}}, {}});
    CHECK(cpt.table == std::vector<double>{0.0, 1.0});
  }
  SUBCASE("four equal children, two known") {
    const auto cpt =
        build_concept_cpt(ConceptNode{"p", "p", {{"a", 0.25}, {"b", 0.25}, {"c", 0.25}, {"d", 0.25}}, {}});
    CHECK(cpt.table[0b0101] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cpt.table[0b1100] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_concept_cpt(ConceptNode{"leaf", "l", {}, {}}), CptError);
    ConceptNode wide{"w", "w", {}, {}};
    for (int i = 0; i < 13; ++i) wide.children.push_back({"c" + std::to_string(i), 1.0 / 13});
    CHECK_THROWS_AS(build_concept_cpt(wide, 12), CptError);
    CHECK_THROWS_AS(build_concept_cpt(ConceptNode{"p", "p", {{"a", 0.5}, {"b", 0.6}}, {}}), CptError);
  }
}

TEST_CASE("CPT monotone and additive on random nodes") {
  Rng rng("cpt-props", 7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.below(10);
    const auto w = testing::random_weights(rng, k);
    ConceptNode node{"p", "p", {}, {}};
    for (std::size_t i = 0; i < k; ++i) node.children.push_back({"c" + std::to_string(i), w[i]});
    const auto cpt = build_concept_cpt(node);
    for (std::size_t a = 0; a < cpt.table.size(); ++a) {
      CHECK(cpt.table[a] == doctest::Approx(std::min(1.0, direct_sum(node.children, a))).epsilon(1e-12));
      for (std::size_t j = 0; j < k; ++j) {
        if (!((a >> j) & 1u)) CHECK(cpt.table[a | (std::size_t{1} << j)] >= cpt.table[a]);
      }
    }
    CHECK(cpt.table.front() == 0.0);
    CHECK(cpt.table.back() == 1.0);

    // Linearity: marginalizing over independent children equals the
    // weighted sum of their marginals.
    std::vector<double> q(k);
    for (auto& x : q) x = rng.uniform();
    double marginal = 0.0;
    for (std::size_t a = 0; a < cpt.table.size(); ++a) {
      double p = 1.0;
      for (std::size_t j = 0; j < k; ++j) p *= ((a >> (k - 1 - j)) & 1u) ? q[j] : 1.0 - q[j];
      marginal += p * cpt.table[a];
    }
    double linear = 0.0;
    for (std::size_t j = 0; j < k; ++j) linear += w[j] * q[j];
    CHECK(marginal == doctest::Approx(linear).epsilon(1e-9));
  }
}

TEST_CASE("factorization into accumulator chains") {
  SUBCASE("three children, fan-in two") {
    const auto node = calculus_map().node("C");
    const auto chain = factorize_weighted_cpt(node, 2);
    REQUIRE(chain.size() == 2);
    CHECK(chain.back().id == "C");
    CHECK(chain.front().id == accumulator_id("C", 1));
    for (const auto& link : chain) CHECK(link.parents.size() <= 2);
    for (std::size_t a = 0; a < 8; ++a) {
      const std::map<std::string, bool> s{{"D", (a >> 2) & 1u}, {"I", (a >> 1) & 1u}, {"E", a & 1u}};
      CHECK(chain_value(chain, s) == doctest::Approx(direct_sum(node.children, a)).epsilon(1e-12));
    }
  }
  SUBCASE("already within bound") {
    const ConceptNode node{"p", "p", {{"a", 0.4}, {"b", 0.6}}, {}};
    const auto chain = factorize_weighted_cpt(node, 2);
    REQUIRE(chain.size() == 1);
    CHECK(chain[0].id == "p");
    CHECK(chain[0].parents == node.children);
  }
  SUBCASE("ten equal children, fan-in three") {
    ConceptNode node{"p", "p", {}, {}};
    for (int i = 0; i < 10; ++i) node.children.push_back({"c" + std::to_string(i), 0.1});
    const auto chain = factorize_weighted_cpt(node, 3);
    for (const auto& link : chain) CHECK(link.parents.size() <= 3);
    for (int known = 0; known < 10; ++known) {
      std::map<std::string, bool> s;
      for (int i = 0; i < 10; ++i) s["c" + std::to_string(i)] = i == known;
      CHECK(chain_value(chain, s) == doctest::Approx(0.1).epsilon(1e-12));
    }
  }
  SUBCASE("exact on every assignment for random weights") {
    Rng rng("chain", 3);
    for (std::size_t k : {5u, 8u, 12u}) {
      const auto w = testing::random_weights(rng, k);
      ConceptNode node{"p", "p", {}, {}};
      for (std::size_t i = 0; i < k; ++i) node.children.push_back({"c" + std::to_string(i), w[i]});
      const auto chain = factorize_weighted_cpt(node, 2 + rng.below(3));
      for (std::size_t a = 0; a < (std::size_t{1} << k); ++a) {
        std::map<std::string, bool> s;
        for (std::size_t j = 0; j < k; ++j) s[node.children[j].id] = (a >> (k - 1 - j)) & 1u;
        CHECK(chain_value(chain, s) == doctest::Approx(direct_sum(node.children, a)).epsilon(1e-9));
      }
    }
  }
  SUBCASE("fan-in below two is an error") {
    CHECK_THROWS_AS(factorize_weighted_cpt(calculus_map().node("C"), 1), CptError);
  }
}
