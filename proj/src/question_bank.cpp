#include "study/question_bank.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "study/rng.hpp"

namespace study {

namespace {

using TK = TemplateError::Kind;

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::size_t leading_spaces(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

// Wraps expression errors so they carry template coordinates.
template <typename F>
auto grammar(F&& f) {
  try {
    return f();
  } catch (const ExprError& e) {
    throw TemplateError(TK::grammar, e.what(), e.line(), e.column());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// TextTemplate

TextTemplate TextTemplate::parse(std::string_view text, std::size_t line, std::size_t column) {
  TextTemplate t;
  std::string literal;
  std::size_t i = 0;
  auto step = [&](char c) {
    if (c == '\n') {
      ++line;
      column = 1;
    } else if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
      ++column;
    }
  };
  while (i < text.size()) {
    if (text.compare(i, 2, "{{") == 0) {
      const std::size_t open_line = line, open_col = column;
      const auto close = text.find("}}", i + 2);
      if (close == std::string_view::npos) {
        throw TemplateError(TK::grammar,
                            "unclosed '{{' at " + std::to_string(open_line) + ":" + std::to_string(open_col),
                            open_line, open_col);
      }
      step(text[i]);
      step(text[i + 1]);
      const auto inner = text.substr(i + 2, close - i - 2);
      if (!literal.empty()) {
        t.segments_.emplace_back(std::move(literal));
        literal.clear();
      }
      if (trim(inner).empty()) {
        throw TemplateError(TK::grammar,
                            "empty '{{ }}' at " + std::to_string(open_line) + ":" + std::to_string(open_col),
                            open_line, open_col);
      }
      t.segments_.emplace_back(grammar([&] { return Expression::parse(inner, line, column); }));
      for (char c : inner) step(c);
      step('}');
      step('}');
      i = close + 2;
    } else {
      literal += text[i];
      step(text[i]);
      ++i;
    }
  }
  if (!literal.empty()) t.segments_.emplace_back(std::move(literal));
  return t;
}

std::string TextTemplate::render(const Bindings& bindings) const {
  std::string out;
  for (const auto& seg : segments_) {
    if (const auto* s = std::get_if<std::string>(&seg)) {
      out += *s;
    } else {
      out += study::render(std::get<Expression>(seg).eval(bindings));
    }
  }
  return out;
}

std::set<std::string> TextTemplate::names() const {
  std::set<std::string> out;
  for (const auto& seg : segments_) {
    if (const auto* e = std::get_if<Expression>(&seg)) out.merge(e->names());
  }
  return out;
}

std::string TextTemplate::source() const {
  std::string out;
  for (const auto& seg : segments_) {
    if (const auto* s = std::get_if<std::string>(&seg)) {
      out += *s;
    } else {
      out += "{{ " + std::get<Expression>(seg).to_string() + " }}";
    }
  }
  return out;
}

const Expression* TextTemplate::sole_expression() const {
  if (segments_.size() != 1) return nullptr;
  return std::get_if<Expression>(&segments_.front());
}

std::size_t ParamSpec::cardinality() const {
  if (kind == Kind::set) return values.size();
  if (kind == Kind::range) {
    Rational n = (hi - lo) / step;
    return static_cast<std::size_t>(boost::multiprecision::numerator(n) / boost::multiprecision::denominator(n)) + 1;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Template documents

namespace {

struct Line {
  std::size_t number;
  std::string text;
};

struct Sections {
  std::optional<std::pair<std::size_t, std::string>> id;
  std::optional<std::pair<std::size_t, std::string>> kind;
  std::map<std::string, std::vector<Line>> body;
  std::map<std::string, std::size_t> header_line;
};

std::string join_block(const std::vector<Line>& lines, std::size_t& first_line) {
  std::size_t b = 0, e = lines.size();
  while (b < e && trim(lines[b].text).empty()) ++b;
  while (e > b && trim(lines[e - 1].text).empty()) --e;
  first_line = b < e ? lines[b].number : 0;
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) out += '\n';
    out += lines[i].text;
  }
  return out;
}

Rational constant(std::string_view text, std::size_t line, std::size_t column) {
  return grammar([&] {
    auto e = Expression::parse(text, line, column);
    if (!e.names().empty()) {
      throw TemplateError(TK::grammar,
                          "domain bound '" + trim(text) + "' must be constant at line " + std::to_string(line), line,
                          column);
    }
    return e.eval_number({});
  });
}

ParamSpec parse_param_line(const Line& ln, std::set<std::string>& declared, std::vector<Expression>& constraints) {
  const std::string& raw = ln.text;
  const std::size_t indent = leading_spaces(raw);
  std::string s = trim(raw);
  auto col_of = [&](std::size_t offset_in_trimmed) { return indent + offset_in_trimmed + 1; };
  auto fail = [&](const std::string& msg, std::size_t off = 0) -> TemplateError {
    return TemplateError(TK::grammar, msg + " at line " + std::to_string(ln.number), ln.number, col_of(off));
  };

  ParamSpec p;
  if (s.rfind("where ", 0) == 0 || s.rfind("where\t", 0) == 0) {
    constraints.push_back(grammar([&] { return Expression::parse(s.substr(6), ln.number, col_of(6)); }));
    p.name.clear();
    return p;
  }
  if (s.rfind("let ", 0) == 0) {
    const auto eq = s.find('=', 4);
    if (eq == std::string::npos) throw fail("expected 'let name = expression'");
    p.name = trim(s.substr(4, eq - 4));
    if (!is_identifier(p.name)) throw fail("bad parameter name '" + p.name + "'", 4);
    p.kind = ParamSpec::Kind::derived;
    p.formula = grammar([&] { return Expression::parse(s.substr(eq + 1), ln.number, col_of(eq + 1)); });
  } else {
    const auto in = s.find(" in ");
    if (in == std::string::npos) throw fail("expected 'name in domain', 'let' or 'where'");
    p.name = trim(s.substr(0, in));
    if (!is_identifier(p.name)) throw fail("bad parameter name '" + p.name + "'");
    std::string dom = s.substr(in + 4);
    const std::size_t dom_off = in + 4 + leading_spaces(dom);
    dom = trim(dom);
    if (!dom.empty() && dom.front() == '{') {
      if (dom.back() != '}') throw fail("unterminated '{' in domain", dom_off);
      p.kind = ParamSpec::Kind::set;
      std::size_t start = 1;
      int depth = 0;
      for (std::size_t i = 1; i < dom.size(); ++i) {
        const char c = dom[i];
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if ((c == ',' && depth == 0) || i + 1 == dom.size()) {
          const std::string item = dom.substr(start, i - start);
          if (trim(item).empty()) throw fail("empty entry in set domain", dom_off + start);
          const std::size_t item_col = col_of(dom_off + start);
          auto e = grammar([&] { return Expression::parse(item, ln.number, item_col); });
          if (!e.names().empty()) throw fail("set entries must be constant", dom_off + start);
          grammar([&] { return e.eval_number({}); });
          p.values.push_back(std::move(e));
          start = i + 1;
        }
      }
      if (p.values.empty()) throw fail("empty set domain", dom_off);
    } else {
      p.kind = ParamSpec::Kind::range;
      const auto dots = dom.find("..");
      if (dots == std::string::npos) throw fail("expected 'lo..hi' or '{...}'", dom_off);
      std::string hi_part = dom.substr(dots + 2);
      std::string step_part;
      const auto st = hi_part.find("step");
      if (st != std::string::npos) {
        step_part = hi_part.substr(st + 4);
        hi_part = hi_part.substr(0, st);
      }
      p.lo = constant(dom.substr(0, dots), ln.number, col_of(dom_off));
      p.hi = constant(hi_part, ln.number, col_of(dom_off + dots + 2));
      if (!step_part.empty()) p.step = constant(step_part, ln.number, col_of(dom_off + dots + 2 + st + 4));
      if (!(p.step > 0)) throw fail("step must be positive", dom_off);
      if (p.hi < p.lo) throw fail("empty range", dom_off);
    }
  }
  if (!declared.insert(p.name).second) throw fail("parameter '" + p.name + "' declared twice");
  return p;
}

void check_names(const std::map<std::string, std::pair<std::size_t, std::size_t>>& used,
                 const std::set<std::string>& declared, std::size_t fallback_line) {
  for (const auto& [name, pos] : used) {
    if (!declared.contains(name)) {
      const std::size_t line = pos.first ? pos.first : fallback_line;
      throw TemplateError(TK::undeclared_parameter,
                          "undeclared parameter '" + name + "' at " + std::to_string(line) + ":" +
                              std::to_string(pos.second),
                          line, pos.second);
    }
  }
}

void check_text(const TextTemplate& t, const std::set<std::string>& declared, std::size_t line) {
  for (const auto& seg : t.segments()) {
    if (const auto* e = std::get_if<Expression>(&seg)) check_names(e->name_positions(), declared, line);
  }
}

std::string line_col(std::size_t line) { return "line " + std::to_string(line); }

}  // namespace

QuestionTemplate parse_template(std::string_view input) {
  std::string text(input);
  text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());

  // Lift out the parameter block; blank it in place so line numbers hold.
  auto span = find_siacua_block(text);
  if (!span) {
    throw TemplateError(TK::invalid_meta, "template has no SIACUAstart ... SIACUAend block");
  }
  const std::string block = text.substr(span->first, span->second - span->first);
  const std::size_t block_line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + span->first, '\n'));
  for (std::size_t i = span->first; i < span->second; ++i) {
    if (text[i] != '\n') text[i] = ' ';
  }

  Sections sec;
  std::string current;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  static const std::set<std::string> kSections = {"params", "stem", "choices", "truth", "solution"};
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw[0] == '%') {
      const std::string directive = trim(raw.substr(1));
      const auto sp = directive.find_first_of(" \t");
      const std::string word = directive.substr(0, sp);
      const std::string arg = sp == std::string::npos ? "" : trim(directive.substr(sp));
      if (word == "template" || word == "kind") {
        if (arg.empty()) throw TemplateError(TK::grammar, "%" + word + " needs a value at " + line_col(lineno), lineno, 1);
        auto& slot = word == "template" ? sec.id : sec.kind;
        if (slot) throw TemplateError(TK::structure, "%" + word + " given twice at " + line_col(lineno), lineno, 1);
        slot = std::make_pair(lineno, arg);
        current.clear();
      } else if (kSections.contains(word)) {
        if (!arg.empty()) {
          throw TemplateError(TK::grammar, "unexpected text after %" + word + " at " + line_col(lineno), lineno,
                              1 + 1 + word.size());
        }
        if (sec.header_line.contains(word)) {
          throw TemplateError(TK::structure, "section %" + word + " repeated at " + line_col(lineno), lineno, 1);
        }
        sec.header_line[word] = lineno;
        sec.body[word];
        current = word;
      } else {
        throw TemplateError(TK::grammar, "unknown directive '%" + word + "' at " + line_col(lineno), lineno, 1);
      }
      continue;
    }
    if (current.empty()) {
      if (!trim(raw).empty() && trim(raw)[0] != '#') {
        throw TemplateError(TK::grammar, "text outside any section at " + line_col(lineno), lineno,
                            leading_spaces(raw) + 1);
      }
      continue;
    }
    sec.body[current].push_back(Line{lineno, raw});
  }

  QuestionTemplate tpl;
  if (!sec.id) throw TemplateError(TK::structure, "missing %template line");
  if (!is_identifier(sec.id->second)) {
    throw TemplateError(TK::grammar, "template id '" + sec.id->second + "' is not an identifier", sec.id->first, 11);
  }
  tpl.id = sec.id->second;
  if (!sec.kind) throw TemplateError(TK::structure, "missing %kind line");
  auto kind = parse_question_kind(sec.kind->second);
  if (!kind) {
    throw TemplateError(TK::grammar, "unknown kind '" + sec.kind->second + "'", sec.kind->first, 7);
  }
  tpl.kind = *kind;

  try {
    tpl.meta = parse_siacua_block(block, tpl.kind);
  } catch (const SiacuaError& e) {
    throw TemplateError(TK::invalid_meta, std::string("parameter block at line ") + std::to_string(block_line) + ": " +
                                              e.what(),
                        block_line, 1);
  }

  std::set<std::string> declared;
  for (const auto& ln : sec.body["params"]) {
    const std::string t = trim(ln.text);
    if (t.empty() || t[0] == '#') continue;
    auto p = parse_param_line(ln, declared, tpl.constraints);
    if (p.name.empty()) continue;
    if (p.kind == ParamSpec::Kind::derived) {
      // Derived values may only look backwards.
      std::set<std::string> before = declared;
      before.erase(p.name);
      check_names(p.formula.name_positions(), before, ln.number);
    }
    tpl.params.push_back(std::move(p));
  }
  for (const auto& c : tpl.constraints) check_names(c.name_positions(), declared, 0);

  for (const char* required : {"stem", "solution"}) {
    if (!sec.header_line.contains(required)) {
      throw TemplateError(TK::structure, std::string("missing %") + required + " section");
    }
  }
  std::size_t first = 0;
  std::string stem = join_block(sec.body["stem"], first);
  if (stem.empty()) throw TemplateError(TK::structure, "empty %stem section", sec.header_line["stem"], 1);
  tpl.stem = TextTemplate::parse(stem, first, 1);
  check_text(tpl.stem, declared, first);

  std::string solution = join_block(sec.body["solution"], first);
  tpl.solution = TextTemplate::parse(solution, first ? first : sec.header_line["solution"], 1);
  check_text(tpl.solution, declared, first);

  if (tpl.kind == QuestionKind::multiple_choice) {
    if (sec.header_line.contains("truth")) {
      throw TemplateError(TK::structure, "%truth only applies to true-false templates", sec.header_line["truth"], 1);
    }
    if (!sec.header_line.contains("choices")) throw TemplateError(TK::structure, "missing %choices section");
    for (const auto& ln : sec.body["choices"]) {
      if (trim(ln.text).empty()) continue;
      const std::size_t ind = leading_spaces(ln.text);
      auto choice = TextTemplate::parse(trim(ln.text), ln.number, ind + 1);
      check_text(choice, declared, ln.number);
      tpl.choices.push_back(std::move(choice));
    }
    if (tpl.choices.size() < 4) {
      throw TemplateError(TK::too_few_distractors,
                          "multiple-choice template needs a correct answer and at least 3 distractors, got " +
                              std::to_string(tpl.choices.size()) + " choices",
                          sec.header_line["choices"], 1);
    }
  } else {
    if (sec.header_line.contains("choices")) {
      throw TemplateError(TK::structure, "true-false templates use %truth, not %choices", sec.header_line["choices"],
                          1);
    }
    if (!sec.header_line.contains("truth")) throw TemplateError(TK::structure, "missing %truth section");
    std::string truth = join_block(sec.body["truth"], first);
    std::string body = trim(truth);
    std::size_t col = 1 + leading_spaces(truth);
    if (body.rfind("{{", 0) == 0 && body.size() >= 4 && body.compare(body.size() - 2, 2, "}}") == 0) {
      body = body.substr(2, body.size() - 4);
      col += 2;
    }
    if (trim(body).empty()) throw TemplateError(TK::structure, "empty %truth section", sec.header_line["truth"], 1);
    tpl.truth = grammar([&] { return Expression::parse(body, first, col); });
    check_names(tpl.truth.name_positions(), declared, first);
  }
  return tpl;
}

QuestionTemplate load_template(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read template '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_template(ss.str());
  } catch (const TemplateError& e) {
    throw TemplateError(e.kind(), path + ": " + e.what(), e.line(), e.column());
  }
}

std::vector<QuestionTemplate> load_templates(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tmpl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<QuestionTemplate> out;
  for (const auto& f : files) out.push_back(load_template(f.string()));
  return out;
}

std::string serialize_template(const QuestionTemplate& tpl) {
  std::string out;
  out += "%template " + tpl.id + "\n";
  out += "%kind " + std::string(to_string(tpl.kind)) + "\n";
  out += "%params\n";
  for (const auto& p : tpl.params) {
    switch (p.kind) {
      case ParamSpec::Kind::range:
        out += p.name + " in " + render(p.lo) + ".." + render(p.hi);
        if (p.step != 1) out += " step " + render(p.step);
        out += "\n";
        break;
      case ParamSpec::Kind::set: {
        out += p.name + " in {";
        for (std::size_t i = 0; i < p.values.size(); ++i) out += (i ? ", " : "") + p.values[i].to_string();
        out += "}\n";
        break;
      }
      case ParamSpec::Kind::derived: out += "let " + p.name + " = " + p.formula.to_string() + "\n"; break;
    }
  }
  for (const auto& c : tpl.constraints) out += "where " + c.to_string() + "\n";
  out += "%stem\n" + tpl.stem.source() + "\n";
  if (tpl.kind == QuestionKind::multiple_choice) {
    out += "%choices\n";
    for (const auto& c : tpl.choices) out += c.source() + "\n";
  } else {
    out += "%truth\n" + tpl.truth.to_string() + "\n";
  }
  out += "%solution\n" + tpl.solution.source() + "\n";
  QuestionMeta meta = tpl.meta;
  out += serialize_siacua_block(meta) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Instantiation

namespace {

using IK = InstantiationError::Kind;

Rational draw(const ParamSpec& p, const std::vector<Rational>& set_values, Rng& rng) {
  if (p.kind == ParamSpec::Kind::set) return set_values[rng.below(set_values.size())];
  const auto idx = rng.below(p.cardinality());
  return p.lo + p.step * Rational(idx);
}

}  // namespace

std::string question_node_id(std::uint64_t number) { return "q" + std::to_string(number); }

QuestionInstance instantiate(const QuestionTemplate& tpl, std::uint64_t seed) {
  Rng rng(tpl.id, seed);

  std::vector<std::vector<Rational>> set_values(tpl.params.size());
  for (std::size_t i = 0; i < tpl.params.size(); ++i) {
    for (const auto& v : tpl.params[i].values) set_values[i].push_back(v.eval_number({}));
  }

  Bindings b;
  bool satisfied = false;
  std::string rejected_by;
  for (std::size_t attempt = 0; attempt < kRejectionBudget && !satisfied; ++attempt) {
    b.clear();
    satisfied = true;
    try {
      for (std::size_t i = 0; i < tpl.params.size() && satisfied; ++i) {
        const auto& p = tpl.params[i];
        if (p.kind == ParamSpec::Kind::derived) {
          try {
            b[p.name] = p.formula.eval_number(b);
          } catch (const ExprError& e) {
            if (e.kind() != ExprError::Kind::division_by_zero) throw;
            satisfied = false;
            rejected_by = "let " + p.name + " = " + p.formula.to_string();
          }
        } else {
          b[p.name] = draw(p, set_values[i], rng);
        }
      }
      for (std::size_t i = 0; i < tpl.constraints.size() && satisfied; ++i) {
        bool ok = false;
        try {
          ok = tpl.constraints[i].eval_bool(b);
        } catch (const ExprError& e) {
          if (e.kind() != ExprError::Kind::division_by_zero) throw;
        }
        if (!ok) {
          satisfied = false;
          rejected_by = tpl.constraints[i].to_string();
        }
      }
    } catch (const ExprError& e) {
      throw InstantiationError(IK::evaluation, "template '" + tpl.id + "': " + e.what());
    }
  }
  if (!satisfied) {
    throw InstantiationError(IK::unsatisfiable, "template '" + tpl.id + "': constraint '" + rejected_by +
                                                    "' unsatisfiable within " + std::to_string(kRejectionBudget) +
                                                    " attempts");
  }

  QuestionInstance q;
  q.template_id = tpl.id;
  q.seed = seed;
  q.kind = tpl.kind;
  q.meta = tpl.meta;
  q.meta.kind = tpl.kind;
  for (const auto& [name, value] : b) q.params[name] = render(value);

  try {
    q.stem = tpl.stem.render(b);
    q.solution = tpl.solution.render(b);
    if (tpl.kind == QuestionKind::true_false) {
      q.choices = {"true", "false"};
      q.correct_index = tpl.truth.eval_bool(b) ? 0 : 1;
      return q;
    }
    std::vector<std::string> rendered;
    for (const auto& c : tpl.choices) rendered.push_back(c.render(b));
    for (std::size_t i = 1; i < rendered.size(); ++i) {
      if (rendered[i] == rendered[0]) {
        throw InstantiationError(IK::duplicate_choice, "template '" + tpl.id + "' seed " + std::to_string(seed) +
                                                           ": distractor " + std::to_string(i) +
                                                           " renders identically to the correct answer ('" +
                                                           rendered[0] + "')");
      }
      for (std::size_t j = 1; j < i; ++j) {
        if (rendered[i] == rendered[j]) {
          throw InstantiationError(IK::duplicate_choice, "template '" + tpl.id + "' seed " + std::to_string(seed) +
                                                             ": distractors " + std::to_string(j) + " and " +
                                                             std::to_string(i) + " coincide ('" + rendered[i] +
                                                             "')");
        }
      }
    }
    std::vector<std::size_t> perm(rendered.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    for (std::size_t pos = 0; pos < perm.size(); ++pos) {
      q.choices.push_back(rendered[perm[pos]]);
      if (perm[pos] == 0) q.correct_index = pos;
    }
  } catch (const ExprError& e) {
    throw InstantiationError(IK::evaluation, "template '" + tpl.id + "' seed " + std::to_string(seed) + ": " + e.what());
  }
  return q;
}

BankResult generate_bank(const std::vector<QuestionTemplate>& templates, std::size_t per_template) {
  if (per_template < 1) throw std::invalid_argument("per_template must be at least 1");
  BankResult result;
  std::unordered_set<std::string> seen;
  for (const auto& tpl : templates) {
    for (std::uint64_t seed = 1; seed <= per_template; ++seed) {
      QuestionInstance q;
      try {
        q = instantiate(tpl, seed);
      } catch (const std::exception& e) {
        result.errors.push_back(BankError{tpl.id, seed, e.what()});
        continue;
      }
      auto sorted = q.choices;
      std::sort(sorted.begin(), sorted.end());
      std::string key = q.stem;
      for (const auto& c : sorted) key += '\x1f' + c;
      if (!seen.insert(std::move(key)).second) {
        ++result.duplicates;
        continue;
      }
      q.number = result.instances.size() + 1;
      q.meta.question_id = question_node_id(q.number);
      result.instances.push_back(std::move(q));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json meta_json(const QuestionMeta& m) {
  nlohmann::json j;
  j["level"] = m.level;
  j["slip"] = m.slip;
  j["guess"] = m.guess;
  j["discr"] = m.discr;
  auto& cs = j["concepts"] = nlohmann::json::array();
  for (const auto& c : m.concepts) cs.push_back(nlohmann::json::array({c.id, c.weight}));
  return j;
}

}  // namespace

nlohmann::json to_json(const QuestionInstance& q) {
  nlohmann::json j = public_json(q);
  j["seed"] = q.seed;
  j["params"] = q.params;
  j["correct"] = q.correct_index;
  j["solution"] = q.solution;
  j["meta"] = meta_json(q.meta);
  return j;
}

nlohmann::json public_json(const QuestionInstance& q) {
  nlohmann::json j;
  j["number"] = q.number;
  j["template"] = q.template_id;
  j["kind"] = std::string(to_string(q.kind));
  j["stem"] = q.stem;
  j["choices"] = q.choices;
  auto& cs = j["concepts"] = nlohmann::json::array();
  for (const auto& c : q.meta.concepts) cs.push_back(c.id);
  return j;
}

QuestionInstance instance_from_json(const nlohmann::json& j) {
  QuestionInstance q;
  q.number = j.at("number").get<std::uint64_t>();
  q.template_id = j.at("template").get<std::string>();
  q.seed = j.at("seed").get<std::uint64_t>();
  auto kind = parse_question_kind(j.at("kind").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown question kind");
  q.kind = *kind;
  q.params = j.at("params").get<std::map<std::string, std::string>>();
  q.stem = j.at("stem").get<std::string>();
  q.choices = j.at("choices").get<std::vector<std::string>>();
  q.correct_index = j.at("correct").get<std::size_t>();
  if (q.correct_index >= q.choices.size()) throw std::invalid_argument("correct index out of range");
  q.solution = j.at("solution").get<std::string>();
  const auto& m = j.at("meta");
  q.meta.question_id = question_node_id(q.number);
  q.meta.kind = q.kind;
  q.meta.level = m.at("level").get<int>();
  q.meta.slip = m.at("slip").get<double>();
  q.meta.guess = m.at("guess").get<double>();
  q.meta.discr = m.at("discr").get<double>();
  for (const auto& c : m.at("concepts")) {
    q.meta.concepts.push_back(ConceptWeight{c.at(0).get<std::string>(), c.at(1).get<double>()});
  }
  check_meta(q.meta);
  return q;
}

std::string to_jsonl(const std::vector<QuestionInstance>& bank) {
  std::string out;
  for (const auto& q : bank) out += to_json(q).dump() + "\n";
  return out;
}

std::vector<QuestionInstance> load_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read bank '" + path + "'");
  std::vector<QuestionInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace study
