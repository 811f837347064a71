#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "study/concept_map.hpp"
#include "study/event_log.hpp"
#include "study/evidence.hpp"
#include "study/question_bank.hpp"
#include "study/rng.hpp"

namespace study {

/// Samples a full mastery assignment: each leaf is known with probability
/// `leaf_p`; aggregates follow the additive CPT given their children.
std::map<std::string, bool> sample_mastery(const ConceptMap& map, Rng& rng, double leaf_p = 0.5);

/// P(correct | mastery) read off the question's evidence CPT.
double response_probability(const QuestionMeta& meta, Strategy strategy, const std::map<std::string, bool>& mastery);

bool sample_response(const QuestionMeta& meta, Strategy strategy, const std::map<std::string, bool>& mastery,
                     Rng& rng);

struct SimulationOptions {
  std::size_t students = 100;
  std::size_t answers_each = 20;
  std::uint64_t seed = 1;
  Strategy strategy = Strategy::linear;
  double leaf_p = 0.5;
  // When set, every simulated answer is appended here.
  std::shared_ptr<EventLog> log;
};

struct SimulationReport {
  std::size_t students = 0;
  std::size_t answers = 0;
  std::size_t mastered_leaves = 0;
  std::size_t unmastered_leaves = 0;
  // Mean posterior over mastered leaves minus mean over unmastered leaves.
  double separation = 0.0;
  // Fraction of (student, leaf) pairs where (posterior >= 0.5) == mastery.
  double match_rate = 0.0;
  // No evidence was collected, so every posterior is still the prior.
  bool degenerate = false;
  // Per leaf: mean posterior among students who master / do not master it.
  std::map<std::string, std::pair<double, double>> per_leaf;
};

/// Each student gets an independent stream. Answers walk the leaves in a
/// shuffled cycle; for each leaf a related instance is drawn uniformly, the
/// outcome is sampled from its evidence CPT and the matching choice is
/// submitted to a live StudyService.
SimulationReport simulate(std::shared_ptr<const ConceptMap> map, const std::vector<QuestionInstance>& bank,
                          const SimulationOptions& options);

nlohmann::json to_json(const SimulationReport& r);

}  // namespace study
