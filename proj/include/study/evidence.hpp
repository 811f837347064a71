#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "study/concept_map.hpp"

namespace study {

enum class QuestionKind { multiple_choice, true_false };

std::string_view to_string(QuestionKind kind);
std::optional<QuestionKind> parse_question_kind(std::string_view text);

// 4-choice items get 0.25, binary items 0.5.
double default_guess(QuestionKind kind);

enum class Strategy { linear, logistic };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view text);

struct ConceptWeight {
  std::string id;
  double weight = 0.0;

  bool operator==(const ConceptWeight&) const = default;
};

/// The teacher-authored parameters attached to a question.
struct QuestionMeta {
  std::string question_id;
  QuestionKind kind = QuestionKind::multiple_choice;
  double guess = 0.25;
  double slip = 0.0;
  int level = 1;
  double discr = 0.5;
  std::vector<ConceptWeight> concepts;

  bool operator==(const QuestionMeta&) const = default;
};

class MetaError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Range and sum checks on the evidence parameters (guess + slip < 1,
/// level 1..5, discr in (0,1], concept weights positive and summing to 1).
/// Throws MetaError naming the offending field.
void check_meta(const QuestionMeta& meta);

/// Additionally requires every concept id to exist in `map`.
void check_meta(const QuestionMeta& meta, const ConceptMap& map);

// ---------------------------------------------------------------------------
// SIACUA parameter block
//
//   SIACUAstart
//    level=1; slip= 0.2; guess=0.25; discr = 0.3
//    concepts = [(D, 0.6), (I, 0.4)]
//   SIACUAend
//
// Assignments are separated by ';', newlines, or plain whitespace.

class SiacuaError : public std::invalid_argument {
public:
  enum class Code {
    missing_start_marker,
    missing_end_marker,
    missing_key,
    duplicate_key,
    unknown_key,
    non_numeric,
    out_of_range,
    malformed,
    empty_concepts,
    weight_sum,
  };

  SiacuaError(Code code, std::string key, const std::string& message);

  Code code() const { return code_; }
  // The key the error is about; empty when not tied to one.
  const std::string& key() const { return key_; }

private:
  Code code_;
  std::string key_;
};

std::string_view to_string(SiacuaError::Code code);

/// Parses a block. question_id is left empty. When `kind` is given, a
/// missing guess falls back to default_guess(kind); otherwise guess is
/// required like every other key.
QuestionMeta parse_siacua_block(std::string_view text, std::optional<QuestionKind> kind = std::nullopt);

/// Locates the first SIACUAstart ... SIACUAend span inside a larger text.
/// Returns [begin, end) offsets covering both markers.
std::optional<std::pair<std::size_t, std::size_t>> find_siacua_block(std::string_view text);

std::string serialize_siacua_block(const QuestionMeta& meta);

// ---------------------------------------------------------------------------
// Evidence CPT

/// P(correct | known weight mass w). Linear: guess + (1 - guess - slip) w.
/// Logistic: the same span scaled by a logistic in w normalized to hit 0 at
/// w = 0 and 1 at w = 1, centred at level/6 with steepness 2 + 10 discr.
/// w = 0 and w = 1 return guess and 1 - slip exactly.
double interpolate(double w, const QuestionMeta& meta, Strategy strategy);

/// Normalized logistic used by the logistic strategy; 0 at 0, 1 at 1.
double normalized_logistic(double w, int level, double discr);

struct EvidenceCpt {
  std::string question_id;
  std::vector<std::string> parent_ids;
  // Same bit layout as ConceptCpt: last parent is least significant.
  std::vector<double> table;
  Strategy strategy = Strategy::linear;
};

EvidenceCpt build_evidence_cpt(const QuestionMeta& meta, Strategy strategy,
                               std::size_t fan_in_max = kDefaultFanInMax);

}  // namespace study
