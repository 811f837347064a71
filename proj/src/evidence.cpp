#include "study/evidence.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

namespace study {

std::string_view to_string(QuestionKind kind) {
  return kind == QuestionKind::true_false ? "true-false" : "multiple-choice";
}

std::optional<QuestionKind> parse_question_kind(std::string_view text) {
  if (text == "multiple-choice" || text == "mc") return QuestionKind::multiple_choice;
  if (text == "true-false" || text == "tf") return QuestionKind::true_false;
  return std::nullopt;
}

double default_guess(QuestionKind kind) { return kind == QuestionKind::true_false ? 0.5 : 0.25; }

std::string_view to_string(Strategy s) { return s == Strategy::logistic ? "logistic" : "linear"; }

std::optional<Strategy> parse_strategy(std::string_view text) {
  if (text == "linear") return Strategy::linear;
  if (text == "logistic") return Strategy::logistic;
  return std::nullopt;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void check_meta(const QuestionMeta& meta) {
  const std::string who = meta.question_id.empty() ? "question" : "question '" + meta.question_id + "'";
  if (!(meta.guess >= 0.0 && meta.guess < 1.0)) {
    throw MetaError(who + ": guess " + shortest(meta.guess) + " not in [0,1)");
  }
  if (!(meta.slip >= 0.0 && meta.slip < 1.0)) {
    throw MetaError(who + ": slip " + shortest(meta.slip) + " not in [0,1)");
  }
  if (!(meta.guess + meta.slip < 1.0)) {
    throw MetaError(who + ": guess + slip must be below 1");
  }
  if (meta.level < 1 || meta.level > 5) {
    throw MetaError(who + ": level " + std::to_string(meta.level) + " not in 1..5");
  }
  if (!(meta.discr > 0.0 && meta.discr <= 1.0)) {
    throw MetaError(who + ": discr " + shortest(meta.discr) + " not in (0,1]");
  }
  if (meta.concepts.empty()) {
    throw MetaError(who + ": no concepts");
  }
  std::set<std::string> seen;
  double sum = 0.0;
  for (const auto& c : meta.concepts) {
    if (!seen.insert(c.id).second) {
      throw MetaError(who + ": concept '" + c.id + "' listed twice");
    }
    if (!(c.weight > 0.0 && c.weight <= 1.0)) {
      throw MetaError(who + ": weight of '" + c.id + "' not in (0,1]");
    }
    sum += c.weight;
  }
  if (!(std::abs(sum - 1.0) <= kWeightSumTolerance)) {
    throw MetaError(who + ": concept weights sum to " + shortest(sum));
  }
}

void check_meta(const QuestionMeta& meta, const ConceptMap& map) {
  check_meta(meta);
  for (const auto& c : meta.concepts) {
    if (!map.contains(c.id)) {
      throw MetaError("question '" + meta.question_id + "' references unknown concept '" + c.id + "'");
    }
  }
}

// ---------------------------------------------------------------------------

SiacuaError::SiacuaError(Code code, std::string key, const std::string& message)
    : std::invalid_argument(message), code_(code), key_(std::move(key)) {}

std::string_view to_string(SiacuaError::Code code) {
  using C = SiacuaError::Code;
  switch (code) {
    case C::missing_start_marker: return "missing start marker";
    case C::missing_end_marker: return "missing end marker";
    case C::missing_key: return "missing key";
    case C::duplicate_key: return "duplicate key";
    case C::unknown_key: return "unknown key";
    case C::non_numeric: return "non-numeric value";
    case C::out_of_range: return "value out of range";
    case C::malformed: return "malformed block";
    case C::empty_concepts: return "empty concept list";
    case C::weight_sum: return "weights do not sum to 1";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kStart = "SIACUAstart";
constexpr std::string_view kEnd = "SIACUAend";

// Marker matching ignores case: the canonical rendering of the block has
// been seen as both "SIACUAstart" and "SIACUastart".
std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size() && ok; ++j) {
      ok = std::tolower(static_cast<unsigned char>(hay[i + j])) ==
           std::tolower(static_cast<unsigned char>(needle[j]));
    }
    if (ok) return i;
  }
  return std::string_view::npos;
}

struct Token {
  enum Kind { atom, punct } kind;
  std::string text;
};

bool is_punct(char c) { return c == '=' || c == ';' || c == ',' || c == '(' || c == ')' || c == '[' || c == ']'; }

std::vector<Token> tokenize(std::string_view body) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < body.size()) {
    char c = body[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_punct(c)) {
      out.push_back({Token::punct, std::string(1, c)});
      ++i;
    } else {
      std::size_t j = i;
      while (j < body.size() && !is_punct(body[j]) && !std::isspace(static_cast<unsigned char>(body[j]))) {
        ++j;
      }
      out.push_back({Token::atom, std::string(body.substr(i, j - i))});
      i = j;
    }
  }
  return out;
}

using Code = SiacuaError::Code;

double to_number(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* b = text.data();
  const char* e = b + text.size();
  if (!text.empty() && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e || !std::isfinite(v)) {
    throw SiacuaError(Code::non_numeric, key, "'" + key + "': '" + text + "' is not a number");
  }
  return v;
}

int to_level(const std::string& text) {
  int v = 0;
  const char* b = text.data();
  const char* e = b + text.size();
  if (!text.empty() && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw SiacuaError(Code::non_numeric, "level", "'level': '" + text + "' is not an integer");
  }
  return v;
}

class BlockParser {
public:
  explicit BlockParser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  bool done() const { return pos_ >= toks_.size(); }

  const Token& peek() const { return toks_[pos_]; }

  bool accept(char p) {
    if (!done() && peek().kind == Token::punct && peek().text[0] == p) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char p, const std::string& key) {
    if (!accept(p)) {
      throw SiacuaError(Code::malformed, key,
                        "expected '" + std::string(1, p) + "' " + where(key) + " but found " + found());
    }
  }

  std::string atom(const std::string& key, const char* what) {
    if (done() || peek().kind != Token::atom) {
      throw SiacuaError(Code::malformed, key, std::string("expected ") + what + " " + where(key) + " but found " + found());
    }
    return toks_[pos_++].text;
  }

  std::string found() const { return done() ? "end of block" : "'" + peek().text + "'"; }

private:
  static std::string where(const std::string& key) { return key.empty() ? "" : "in '" + key + "'"; }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

std::optional<std::pair<std::size_t, std::size_t>> find_siacua_block(std::string_view text) {
  auto b = find_ci(text, kStart);
  if (b == std::string_view::npos) return std::nullopt;
  auto e = find_ci(text, kEnd, b + kStart.size());
  if (e == std::string_view::npos) return std::nullopt;
  return std::make_pair(b, e + kEnd.size());
}

QuestionMeta parse_siacua_block(std::string_view text, std::optional<QuestionKind> kind) {
  auto b = find_ci(text, kStart);
  if (b == std::string_view::npos) {
    throw SiacuaError(Code::missing_start_marker, "", "block does not contain SIACUAstart");
  }
  auto e = find_ci(text, kEnd, b + kStart.size());
  if (e == std::string_view::npos) {
    throw SiacuaError(Code::missing_end_marker, "", "block is not closed by SIACUAend");
  }
  auto body = text.substr(b + kStart.size(), e - b - kStart.size());

  BlockParser p(tokenize(body));
  std::map<std::string, std::string> scalars;
  std::optional<std::vector<ConceptWeight>> concepts;

  while (!p.done()) {
    if (p.accept(';')) continue;
    const std::string key = p.atom("", "a key");
    p.expect('=', key);
    const bool known = key == "level" || key == "slip" || key == "guess" || key == "discr" || key == "concepts";
    if (!known) {
      throw SiacuaError(Code::unknown_key, key, "unknown key '" + key + "'");
    }
    if (scalars.contains(key) || (key == "concepts" && concepts)) {
      throw SiacuaError(Code::duplicate_key, key, "key '" + key + "' given twice");
    }
    if (key == "concepts") {
      std::vector<ConceptWeight> list;
      p.expect('[', key);
      if (!p.accept(']')) {
        do {
          p.expect('(', key);
          ConceptWeight cw;
          cw.id = p.atom(key, "a concept id");
          p.expect(',', key);
          cw.weight = to_number(key, p.atom(key, "a weight"));
          p.expect(')', key);
          list.push_back(std::move(cw));
        } while (p.accept(','));
        p.expect(']', key);
      }
      concepts = std::move(list);
    } else {
      scalars[key] = p.atom(key, "a value");
    }
  }

  QuestionMeta meta;
  if (kind) meta.kind = *kind;
  auto require = [&](const std::string& key) -> const std::string& {
    auto it = scalars.find(key);
    if (it == scalars.end()) {
      throw SiacuaError(Code::missing_key, key, "missing key '" + key + "'");
    }
    return it->second;
  };

  meta.level = to_level(require("level"));
  meta.slip = to_number("slip", require("slip"));
  if (kind && !scalars.contains("guess")) {
    meta.guess = default_guess(*kind);
  } else {
    meta.guess = to_number("guess", require("guess"));
  }
  meta.discr = to_number("discr", require("discr"));
  if (!concepts) {
    throw SiacuaError(Code::missing_key, "concepts", "missing key 'concepts'");
  }
  meta.concepts = std::move(*concepts);

  if (meta.level < 1 || meta.level > 5) {
    throw SiacuaError(Code::out_of_range, "level", "'level' must be in 1..5");
  }
  if (!(meta.guess >= 0.0 && meta.guess < 1.0)) {
    throw SiacuaError(Code::out_of_range, "guess", "'guess' must be in [0,1)");
  }
  if (!(meta.slip >= 0.0 && meta.slip < 1.0)) {
    throw SiacuaError(Code::out_of_range, "slip", "'slip' must be in [0,1)");
  }
  if (!(meta.guess + meta.slip < 1.0)) {
    throw SiacuaError(Code::out_of_range, "guess", "'guess' + 'slip' must be below 1");
  }
  if (!(meta.discr > 0.0 && meta.discr <= 1.0)) {
    throw SiacuaError(Code::out_of_range, "discr", "'discr' must be in (0,1]");
  }
  if (meta.concepts.empty()) {
    throw SiacuaError(Code::empty_concepts, "concepts", "'concepts' is empty");
  }
  std::set<std::string> seen;
  double sum = 0.0;
  for (const auto& c : meta.concepts) {
    if (!seen.insert(c.id).second) {
      throw SiacuaError(Code::malformed, "concepts", "concept '" + c.id + "' listed twice");
    }
    if (!(c.weight > 0.0 && c.weight <= 1.0)) {
      throw SiacuaError(Code::out_of_range, "concepts", "weight of '" + c.id + "' must be in (0,1]");
    }
    sum += c.weight;
  }
  if (!(std::abs(sum - 1.0) <= kWeightSumTolerance)) {
    throw SiacuaError(Code::weight_sum, "concepts", "'concepts' weights sum to " + shortest(sum) + ", not 1");
  }
  return meta;
}

std::string serialize_siacua_block(const QuestionMeta& meta) {
  std::string out = "SIACUAstart\n";
  out += " level=" + std::to_string(meta.level) + "; slip= " + shortest(meta.slip) +
         "; guess=" + shortest(meta.guess) + "; discr = " + shortest(meta.discr) + "\n";
  out += " concepts = [";
  for (std::size_t i = 0; i < meta.concepts.size(); ++i) {
    if (i) out += ", ";
    out += "(" + meta.concepts[i].id + ", " + shortest(meta.concepts[i].weight) + ")";
  }
  out += "]\n SIACUAend";
  return out;
}

// ---------------------------------------------------------------------------

double normalized_logistic(double w, int level, double discr) {
  const double mid = static_cast<double>(level) / 6.0;
  const double k = 2.0 + 10.0 * discr;
  auto L = [&](double x) { return 1.0 / (1.0 + std::exp(-k * (x - mid))); };
  const double lo = L(0.0);
  const double hi = L(1.0);
  return (L(w) - lo) / (hi - lo);
}

double interpolate(double w, const QuestionMeta& meta, Strategy strategy) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw std::domain_error("known weight mass " + shortest(w) + " outside [0,1]");
  }
  if (w == 0.0) return meta.guess;
  if (w == 1.0) return 1.0 - meta.slip;
  const double span = 1.0 - meta.guess - meta.slip;
  const double shape = strategy == Strategy::linear ? w : normalized_logistic(w, meta.level, meta.discr);
  return std::clamp(meta.guess + span * shape, meta.guess, 1.0 - meta.slip);
}

EvidenceCpt build_evidence_cpt(const QuestionMeta& meta, Strategy strategy, std::size_t fan_in_max) {
  check_meta(meta);
  const std::size_t k = meta.concepts.size();
  if (k > fan_in_max) {
    throw MetaError("question '" + meta.question_id + "' has " + std::to_string(k) +
                    " concepts, above fan-in limit " + std::to_string(fan_in_max));
  }
  EvidenceCpt cpt;
  cpt.question_id = meta.question_id;
  cpt.strategy = strategy;
  for (const auto& c : meta.concepts) {
    cpt.parent_ids.push_back(c.id);
  }
  const std::size_t rows = std::size_t{1} << k;
  const std::size_t all = rows - 1;
  cpt.table.resize(rows);
  for (std::size_t a = 0; a < rows; ++a) {
    if (a == 0) {
      cpt.table[a] = meta.guess;
    } else if (a == all) {
      cpt.table[a] = 1.0 - meta.slip;
    } else {
      double w = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if ((a >> (k - 1 - j)) & 1u) w += meta.concepts[j].weight;
      }
      cpt.table[a] = interpolate(std::clamp(w, 0.0, 1.0), meta, strategy);
    }
  }
  return cpt;
}

}  // namespace study
