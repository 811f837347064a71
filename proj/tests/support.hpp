#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "study/concept_map.hpp"
#include "study/evidence.hpp"
#include "study/inference.hpp"
#include "study/rng.hpp"

#ifndef STUDY_DATA_DIR
#define STUDY_DATA_DIR "data"
#endif

namespace testing {

using namespace study;

inline std::string data_path(const std::string& rel) { return std::string(STUDY_DATA_DIR) + "/" + rel; }

inline ConceptMap calculus_map() {
  return ConceptMap("C",
                    {ConceptNode{"C", "Calculus", {{"D", 0.5}, {"I", 0.3}, {"E", 0.2}}, std::nullopt},
                     ConceptNode{"D", "Derivatives", {}, std::nullopt},
                     ConceptNode{"I", "Integrals", {}, std::nullopt},
                     ConceptNode{"E", "Partial Differential Equations", {}, std::nullopt}});
}

inline QuestionMeta sample_meta(std::string id = "Q") {
  QuestionMeta m;
  m.question_id = std::move(id);
  m.level = 1;
  m.slip = 0.2;
  m.guess = 0.25;
  m.discr = 0.3;
  m.concepts = {{"D", 0.6}, {"I", 0.4}};
  return m;
}

// Random positive weights summing to 1.
inline std::vector<double> random_weights(Rng& rng, std::size_t k) {
  std::vector<double> w(k);
  double sum = 0.0;
  for (auto& x : w) {
    x = 0.05 + rng.uniform();
    sum += x;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    w[i] /= sum;
    acc += w[i];
  }
  w[k - 1] = 1.0 - acc;
  return w;
}

/// Random tree with `n` nodes: node i > 0 hangs below a random earlier node.
inline ConceptMap random_tree(Rng& rng, std::size_t n, double prior_leaf = 0.5) {
  std::vector<std::vector<std::size_t>> kids(n);
  for (std::size_t i = 1; i < n; ++i) kids[rng.below(i)].push_back(i);
  std::vector<ConceptNode> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    ConceptNode node;
    node.id = "n" + std::to_string(i);
    node.title = node.id;
    if (!kids[i].empty()) {
      const auto w = random_weights(rng, kids[i].size());
      for (std::size_t j = 0; j < kids[i].size(); ++j) node.children.push_back({"n" + std::to_string(kids[i][j]), w[j]});
    } else if (rng.bernoulli(0.3)) {
      node.prior = 0.1 + 0.8 * rng.uniform();
    }
    nodes.push_back(std::move(node));
  }
  return ConceptMap("n0", std::move(nodes), prior_leaf);
}

inline QuestionMeta random_meta(Rng& rng, const ConceptMap& map, const std::string& id, bool leaves_only = false) {
  const auto pool = leaves_only ? map.leaves() : map.preorder();
  const std::size_t k = 1 + rng.below(std::min<std::size_t>(3, pool.size()));
  std::vector<std::string> chosen;
  while (chosen.size() < k) {
    const auto& c = pool[rng.below(pool.size())];
    if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
  }
  QuestionMeta m;
  m.question_id = id;
  m.kind = rng.bernoulli(0.5) ? QuestionKind::multiple_choice : QuestionKind::true_false;
  m.guess = 0.5 * rng.uniform();
  m.slip = 0.4 * rng.uniform();
  m.level = 1 + static_cast<int>(rng.below(5));
  m.discr = 0.05 + 0.95 * rng.uniform();
  const auto w = random_weights(rng, k);
  for (std::size_t i = 0; i < k; ++i) m.concepts.push_back({chosen[i], w[i]});
  return m;
}

/// Independent reference: sums the joint over every concept and question
/// straight from map weights and the linear guess/slip formula, with last
/// answers winning. Does not touch Network or the library's tables.
inline std::map<std::string, double> reference_posteriors(const ConceptMap& map,
                                                          const std::vector<std::pair<QuestionMeta, bool>>& answers) {
  std::map<std::string, std::pair<QuestionMeta, bool>> last;
  for (const auto& a : answers) last[a.first.question_id] = a;

  const auto ids = map.preorder();
  const std::size_t n = ids.size();
  std::map<std::string, std::size_t> bit;
  for (std::size_t i = 0; i < n; ++i) bit[ids[i]] = i;

  std::vector<double> mass(n, 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < (std::size_t{1} << n); ++s) {
    auto on = [&](const std::string& id) { return ((s >> bit.at(id)) & 1u) != 0; };
    double p = 1.0;
    for (const auto& id : ids) {
      const auto& node = map.node(id);
      double p1;
      if (node.is_leaf()) {
        p1 = map.prior_for(id);
      } else {
        p1 = 0.0;
        for (const auto& c : node.children) {
          if (on(c.id)) p1 += c.weight;
        }
        p1 = std::min(1.0, p1);
      }
      p *= on(id) ? p1 : 1.0 - p1;
      if (p == 0.0) break;
    }
    if (p == 0.0) continue;
    for (const auto& [qid, a] : last) {
      const auto& m = a.first;
      double w = 0.0;
      std::size_t known = 0;
      for (const auto& c : m.concepts) {
        if (on(c.id)) {
          w += c.weight;
          ++known;
        }
      }
      double pq;
      if (known == 0) {
        pq = m.guess;
      } else if (known == m.concepts.size()) {
        pq = 1.0 - m.slip;
      } else {
        pq = m.guess + (1.0 - m.guess - m.slip) * w;
      }
      p *= a.second ? pq : 1.0 - pq;
    }
    total += p;
    for (std::size_t i = 0; i < n; ++i) {
      if ((s >> i) & 1u) mass[i] += p;
    }
  }
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < n; ++i) out[ids[i]] = mass[i] / total;
  return out;
}

}  // namespace testing
