#include "study/simulator.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "study/study_service.hpp"

namespace study {

std::map<std::string, bool> sample_mastery(const ConceptMap& map, Rng& rng, double leaf_p) {
  std::map<std::string, bool> out;
  auto order = map.preorder();
  // Children before parents.
  std::reverse(order.begin(), order.end());
  for (const auto& id : order) {
    const auto& node = map.node(id);
    if (node.is_leaf()) {
      out[id] = rng.bernoulli(leaf_p);
      continue;
    }
    double p = 0.0;
    for (const auto& c : node.children) {
      if (out.at(c.id)) p += c.weight;
    }
    out[id] = rng.bernoulli(std::min(1.0, p));
  }
  return out;
}

double response_probability(const QuestionMeta& meta, Strategy strategy,
                            const std::map<std::string, bool>& mastery) {
  const auto cpt = build_evidence_cpt(meta, strategy);
  std::size_t index = 0;
  for (const auto& parent : cpt.parent_ids) index = (index << 1) | (mastery.at(parent) ? 1u : 0u);
  return cpt.table.at(index);
}

bool sample_response(const QuestionMeta& meta, Strategy strategy, const std::map<std::string, bool>& mastery,
                     Rng& rng) {
  return rng.bernoulli(response_probability(meta, strategy, mastery));
}

SimulationReport simulate(std::shared_ptr<const ConceptMap> map, const std::vector<QuestionInstance>& bank,
                          const SimulationOptions& options) {
  if (bank.empty()) throw std::invalid_argument("cannot simulate with an empty bank");

  std::int64_t tick = 0;
  ServiceConfig config;
  config.network.strategy = options.strategy;
  config.selection_seed = options.seed;
  config.clock = [&tick] { return tick++; };
  StudyService service(map, bank, config);
  if (options.log) service.attach_log(options.log);

  // Leaves that have at least one related instance.
  std::vector<std::string> coverable;
  for (const auto& leaf : map->leaves()) {
    for (const auto& q : bank) {
      const bool hit = std::any_of(q.meta.concepts.begin(), q.meta.concepts.end(),
                                   [&](const ConceptWeight& c) { return c.id == leaf; });
      if (hit) {
        coverable.push_back(leaf);
        break;
      }
    }
  }
  if (coverable.empty()) throw std::invalid_argument("no bank instance is tagged with a leaf concept");

  SimulationReport report;
  report.students = options.students;
  double sum_mastered = 0.0;
  double sum_unmastered = 0.0;
  std::size_t matches = 0;
  std::map<std::string, std::array<double, 4>> leaf_acc;  // sum+, n+, sum-, n-

  for (std::size_t s = 0; s < options.students; ++s) {
    const std::string student = "sim" + std::to_string(s + 1);
    Rng rng("student:" + std::to_string(s), options.seed);
    const auto mastery = sample_mastery(*map, rng, options.leaf_p);

    std::vector<std::string> cycle;
    for (std::size_t a = 0; a < options.answers_each; ++a) {
      if (cycle.empty()) {
        cycle = coverable;
        for (std::size_t i = cycle.size(); i > 1; --i) std::swap(cycle[i - 1], cycle[rng.below(i)]);
      }
      const std::string leaf = cycle.back();
      cycle.pop_back();

      std::vector<const QuestionInstance*> related;
      for (const auto& q : bank) {
        for (const auto& c : q.meta.concepts) {
          if (c.id == leaf) {
            related.push_back(&q);
            break;
          }
        }
      }
      const auto& q = *related[rng.below(related.size())];
      const bool correct = sample_response(q.meta, options.strategy, mastery, rng);

      Choice chosen;
      if (q.kind == QuestionKind::true_false) {
        const bool truth = q.correct_index == 0;
        chosen = correct ? truth : !truth;
      } else if (correct) {
        chosen = q.correct_index;
      } else {
        std::size_t wrong = rng.below(q.choices.size() - 1);
        if (wrong >= q.correct_index) ++wrong;
        chosen = wrong;
      }
      service.record_answer(student, q.number, chosen);
      ++report.answers;
    }

    const auto post = service.has_student(student) ? service.posteriors_of(student) : PosteriorMap{};
    for (const auto& leaf : map->leaves()) {
      const double p = post.empty() ? map->prior_for(leaf) : post.at(leaf);
      auto& acc = leaf_acc[leaf];
      if (mastery.at(leaf)) {
        sum_mastered += p;
        ++report.mastered_leaves;
        acc[0] += p;
        acc[1] += 1;
      } else {
        sum_unmastered += p;
        ++report.unmastered_leaves;
        acc[2] += p;
        acc[3] += 1;
      }
      if ((p >= 0.5) == mastery.at(leaf)) ++matches;
    }
  }

  const std::size_t pairs = report.mastered_leaves + report.unmastered_leaves;
  report.degenerate = report.answers == 0;
  if (report.degenerate) {
    report.separation = 0.0;
  } else if (report.mastered_leaves > 0 && report.unmastered_leaves > 0) {
    report.separation = sum_mastered / static_cast<double>(report.mastered_leaves) -
                        sum_unmastered / static_cast<double>(report.unmastered_leaves);
  }
  report.match_rate = pairs ? static_cast<double>(matches) / static_cast<double>(pairs) : 0.0;
  for (const auto& [leaf, acc] : leaf_acc) {
    report.per_leaf[leaf] = {acc[1] > 0 ? acc[0] / acc[1] : 0.0, acc[3] > 0 ? acc[2] / acc[3] : 0.0};
  }
  return report;
}

nlohmann::json to_json(const SimulationReport& r) {
  nlohmann::json j;
  j["students"] = r.students;
  j["answers"] = r.answers;
  j["mastered_leaves"] = r.mastered_leaves;
  j["unmastered_leaves"] = r.unmastered_leaves;
  j["separation"] = r.separation;
  j["match_rate"] = r.match_rate;
  j["degenerate"] = r.degenerate;
  auto& leaves = j["per_leaf"] = nlohmann::json::object();
  for (const auto& [leaf, m] : r.per_leaf) leaves[leaf] = {{"mastered", m.first}, {"unmastered", m.second}};
  return j;
}

}  // namespace study
