#include "study/inference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

namespace study {

std::string_view to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::concept_node: return "concept";
    case VariableKind::accumulator: return "accumulator";
    case VariableKind::question: return "question";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Network

std::optional<std::size_t> Network::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Variable& Network::variable(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) {
    throw InferenceError(InferenceError::Kind::unknown_variable, "unknown variable '" + std::string(id) + "'");
  }
  return vars_[*idx];
}

std::vector<std::string> Network::concept_ids() const {
  std::vector<std::string> out;
  for (const auto& v : vars_) {
    if (v.kind == VariableKind::concept_node) out.push_back(v.id);
  }
  return out;
}

std::size_t Network::add_variable(std::string id, VariableKind kind, const std::vector<std::string>& parents,
                                  std::vector<double> table) {
  using K = InferenceError::Kind;
  if (index_.contains(id)) {
    throw InferenceError(K::duplicate_variable, "variable '" + id + "' already exists");
  }
  if (parents.size() > 30) {
    throw InferenceError(K::invalid_table, "variable '" + id + "' has too many parents");
  }
  Variable v;
  v.id = id;
  v.kind = kind;
  std::set<std::size_t> distinct;
  for (const auto& p : parents) {
    auto idx = index_of(p);
    if (!idx) {
      throw InferenceError(K::unknown_variable, "variable '" + id + "' references unknown parent '" + p + "'");
    }
    if (!distinct.insert(*idx).second) {
      throw InferenceError(K::invalid_table, "variable '" + id + "' lists parent '" + p + "' twice");
    }
    v.parents.push_back(*idx);
  }
  if (table.size() != (std::size_t{1} << parents.size())) {
    throw InferenceError(K::invalid_table, "variable '" + id + "': table has " + std::to_string(table.size()) +
                                               " entries, expected " +
                                               std::to_string(std::size_t{1} << parents.size()));
  }
  for (double t : table) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw InferenceError(K::invalid_table, "variable '" + id + "': table entry outside [0,1]");
    }
  }
  v.table = std::move(table);
  const std::size_t at = vars_.size();
  index_.emplace(id, at);
  vars_.push_back(std::move(v));
  return at;
}

void Network::add_question(const QuestionMeta& meta) {
  auto existing = metas_.find(meta.question_id);
  if (existing != metas_.end()) {
    if (existing->second == meta) return;
    throw InferenceError(InferenceError::Kind::conflicting_question,
                         "question '" + meta.question_id + "' already present with different parameters");
  }
  for (const auto& c : meta.concepts) {
    auto idx = index_of(c.id);
    if (!idx || vars_[*idx].kind != VariableKind::concept_node) {
      throw InferenceError(InferenceError::Kind::unknown_variable,
                           "question '" + meta.question_id + "' references unknown concept '" + c.id + "'");
    }
  }
  auto cpt = build_evidence_cpt(meta, options_.strategy, options_.fan_in_max);
  add_variable(meta.question_id, VariableKind::question, cpt.parent_ids, std::move(cpt.table));
  metas_.emplace(meta.question_id, meta);
}

void Network::set_evidence(std::string_view question_id, bool outcome) {
  auto idx = index_of(question_id);
  if (!idx || vars_[*idx].kind != VariableKind::question) {
    throw InferenceError(InferenceError::Kind::unknown_variable,
                         "no question '" + std::string(question_id) + "' in network");
  }
  evidence_[std::string(question_id)] = outcome;
}

void Network::clear_evidence(std::string_view question_id) { evidence_.erase(std::string(question_id)); }

void Network::observe(const QuestionMeta& meta, bool outcome) {
  add_question(meta);
  set_evidence(meta.question_id, outcome);
}

Network set_evidence(Network net, std::string_view question_id, bool outcome) {
  net.set_evidence(question_id, outcome);
  return net;
}

Network build_network(const ConceptMap& map, const std::vector<std::pair<QuestionMeta, bool>>& answered,
                      NetworkOptions options) {
  Network net(options);

  // Children before parents: post-order over the concept tree.
  std::function<void(const std::string&)> add = [&](const std::string& id) {
    const auto& node = map.node(id);
    if (node.is_leaf()) {
      net.add_variable(id, VariableKind::concept_node, {}, {map.prior_for(id)});
      return;
    }
    for (const auto& c : node.children) add(c.id);
    auto chain = factorize_weighted_cpt(node, options.fan_in_max);
    for (std::size_t i = 0; i < chain.size(); ++i) {
      ConceptNode link{chain[i].id, "", chain[i].parents, std::nullopt};
      auto cpt = build_concept_cpt(link, options.fan_in_max);
      const bool last = i + 1 == chain.size();
      net.add_variable(chain[i].id, last ? VariableKind::concept_node : VariableKind::accumulator, cpt.parent_ids,
                       std::move(cpt.table));
    }
  };
  add(map.root());

  for (const auto& [meta, outcome] : answered) {
    net.observe(meta, outcome);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Factors

namespace {

using Index = std::size_t;

struct Factor {
  std::vector<Index> vars;  // ascending; vars[j] is bit j of the entry index
  std::vector<double> vals;
};

void check_budget(std::size_t scope, std::size_t budget) {
  if (scope >= 63 || (std::size_t{1} << scope) > budget) {
    throw InferenceError(InferenceError::Kind::resource,
                         "elimination needs a factor over " + std::to_string(scope) +
                             " variables, above the budget of " + std::to_string(budget) + " entries",
                         scope);
  }
}

Factor cpt_factor(const std::vector<Variable>& vars, Index v) {
  const auto& var = vars[v];
  Factor f;
  f.vars = var.parents;
  f.vars.push_back(v);
  std::sort(f.vars.begin(), f.vars.end());
  const std::size_t n = f.vars.size();
  const std::size_t k = var.parents.size();

  std::vector<std::size_t> parent_bit(k);
  std::size_t self_bit = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (f.vars[j] == v) self_bit = j;
    for (std::size_t p = 0; p < k; ++p) {
      if (var.parents[p] == f.vars[j]) parent_bit[p] = j;
    }
  }
  f.vals.resize(std::size_t{1} << n);
  for (std::size_t a = 0; a < f.vals.size(); ++a) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < k; ++p) {
      row = (row << 1) | ((a >> parent_bit[p]) & 1u);
    }
    const double t = var.table[row];
    f.vals[a] = ((a >> self_bit) & 1u) ? t : 1.0 - t;
  }
  return f;
}

Factor reduce(const Factor& f, Index var, bool value) {
  auto it = std::find(f.vars.begin(), f.vars.end(), var);
  if (it == f.vars.end()) return f;
  const std::size_t pos = static_cast<std::size_t>(it - f.vars.begin());
  Factor out;
  out.vars = f.vars;
  out.vars.erase(out.vars.begin() + static_cast<std::ptrdiff_t>(pos));
  out.vals.resize(f.vals.size() / 2);
  const std::size_t low = (std::size_t{1} << pos) - 1;
  for (std::size_t a = 0; a < out.vals.size(); ++a) {
    const std::size_t src = ((a & ~low) << 1) | (value ? (std::size_t{1} << pos) : 0) | (a & low);
    out.vals[a] = f.vals[src];
  }
  return out;
}

Factor multiply(const Factor& a, const Factor& b, std::size_t budget) {
  Factor out;
  std::set_union(a.vars.begin(), a.vars.end(), b.vars.begin(), b.vars.end(), std::back_inserter(out.vars));
  const std::size_t n = out.vars.size();
  check_budget(n, budget);

  // Map each bit of the product index onto bits of the operand indices.
  std::vector<std::size_t> a_mask(n, 0), b_mask(n, 0);
  for (std::size_t j = 0, ja = 0, jb = 0; j < n; ++j) {
    if (ja < a.vars.size() && a.vars[ja] == out.vars[j]) a_mask[j] = std::size_t{1} << ja++;
    if (jb < b.vars.size() && b.vars[jb] == out.vars[j]) b_mask[j] = std::size_t{1} << jb++;
  }
  out.vals.resize(std::size_t{1} << n);
  for (std::size_t idx = 0; idx < out.vals.size(); ++idx) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if ((idx >> j) & 1u) {
        ia |= a_mask[j];
        ib |= b_mask[j];
      }
    }
    out.vals[idx] = a.vals[ia] * b.vals[ib];
  }
  return out;
}

Factor sum_out(const Factor& f, Index var) {
  auto it = std::find(f.vars.begin(), f.vars.end(), var);
  const std::size_t pos = static_cast<std::size_t>(it - f.vars.begin());
  Factor out;
  out.vars = f.vars;
  out.vars.erase(out.vars.begin() + static_cast<std::ptrdiff_t>(pos));
  out.vals.resize(f.vals.size() / 2);
  const std::size_t low = (std::size_t{1} << pos) - 1;
  for (std::size_t a = 0; a < out.vals.size(); ++a) {
    const std::size_t base = ((a & ~low) << 1) | (a & low);
    out.vals[a] = f.vals[base] + f.vals[base | (std::size_t{1} << pos)];
  }
  return out;
}

void normalize(Factor& f) {
  const double total = std::accumulate(f.vals.begin(), f.vals.end(), 0.0);
  if (!(total > 0.0)) {
    throw InferenceError(InferenceError::Kind::impossible_evidence, "evidence has probability zero");
  }
  for (double& v : f.vals) v /= total;
}

/// Greedy min-degree over an undirected graph; ties go to the smaller rank.
/// Only `candidates` are eliminated; other vertices stay as neighbours.
std::vector<Index> min_degree(std::map<Index, std::set<Index>> adj, const std::set<Index>& candidates,
                              const std::vector<std::size_t>& rank) {
  std::vector<Index> order;
  std::set<Index> left = candidates;
  while (!left.empty()) {
    Index best = *left.begin();
    std::size_t best_deg = std::numeric_limits<std::size_t>::max();
    for (Index v : left) {
      const std::size_t d = adj[v].size();
      if (d < best_deg || (d == best_deg && rank[v] < rank[best])) {
        best = v;
        best_deg = d;
      }
    }
    const auto nbrs = adj[best];
    for (Index u : nbrs) {
      adj[u].erase(best);
      for (Index w : nbrs) {
        if (u != w) adj[u].insert(w);
      }
    }
    adj.erase(best);
    left.erase(best);
    order.push_back(best);
  }
  return order;
}

std::vector<std::size_t> id_ranks(const std::vector<Variable>& vars) {
  std::vector<Index> sorted(vars.size());
  std::iota(sorted.begin(), sorted.end(), 0);
  std::sort(sorted.begin(), sorted.end(), [&](Index a, Index b) { return vars[a].id < vars[b].id; });
  std::vector<std::size_t> rank(vars.size());
  for (std::size_t r = 0; r < sorted.size(); ++r) rank[sorted[r]] = r;
  return rank;
}

}  // namespace

std::vector<std::string> elimination_order(const Network& net) {
  const auto& vars = net.variables();
  std::map<Index, std::set<Index>> adj;
  std::set<Index> all;
  for (Index v = 0; v < vars.size(); ++v) {
    adj[v];
    all.insert(v);
    const auto& ps = vars[v].parents;
    for (Index p : ps) {
      adj[v].insert(p);
      adj[p].insert(v);
      for (Index q : ps) {
        if (p != q) adj[p].insert(q);
      }
    }
  }
  std::vector<std::string> out;
  for (Index v : min_degree(std::move(adj), all, id_ranks(vars))) out.push_back(vars[v].id);
  return out;
}

PosteriorMap posteriors(const Network& net, const EliminationOptions& options) {
  const auto& vars = net.variables();
  const std::size_t n = vars.size();
  const std::size_t budget = options.max_factor_entries;

  std::vector<int> observed(n, -1);
  for (const auto& [id, outcome] : net.evidence()) {
    observed[*net.index_of(id)] = outcome ? 1 : 0;
  }

  std::vector<Factor> base(n);
  for (Index v = 0; v < n; ++v) {
    Factor f = cpt_factor(vars, v);
    for (Index u : std::vector<Index>(f.vars)) {
      if (observed[u] >= 0) f = reduce(f, u, observed[u] == 1);
    }
    base[v] = std::move(f);
  }

  const auto rank = id_ranks(vars);
  std::vector<std::size_t> fixed_pos(n, std::numeric_limits<std::size_t>::max());
  if (!options.order.empty()) {
    for (std::size_t i = 0; i < options.order.size(); ++i) {
      if (auto idx = net.index_of(options.order[i])) fixed_pos[*idx] = std::min(fixed_pos[*idx], i);
    }
  }

  PosteriorMap out;
  for (Index q = 0; q < n; ++q) {
    if (vars[q].kind != VariableKind::concept_node) continue;

    // Ancestral closure of the query and the evidence; everything else is barren.
    std::vector<char> relevant(n, 0);
    std::vector<Index> stack{q};
    for (Index v = 0; v < n; ++v) {
      if (observed[v] >= 0) stack.push_back(v);
    }
    while (!stack.empty()) {
      Index v = stack.back();
      stack.pop_back();
      if (relevant[v]) continue;
      relevant[v] = 1;
      for (Index p : vars[v].parents) stack.push_back(p);
    }

    // Keep only factors connected to the query; the rest normalize away.
    std::vector<char> in_component(n, 0);
    std::vector<Index> factor_ids;
    {
      std::map<Index, std::vector<Index>> touching;
      for (Index v = 0; v < n; ++v) {
        if (!relevant[v]) continue;
        for (Index u : base[v].vars) touching[u].push_back(v);
      }
      std::vector<char> used(n, 0);
      std::vector<Index> frontier{q};
      in_component[q] = 1;
      while (!frontier.empty()) {
        Index u = frontier.back();
        frontier.pop_back();
        for (Index fid : touching[u]) {
          if (used[fid]) continue;
          used[fid] = 1;
          factor_ids.push_back(fid);
          for (Index w : base[fid].vars) {
            if (!in_component[w]) {
              in_component[w] = 1;
              frontier.push_back(w);
            }
          }
        }
      }
      std::sort(factor_ids.begin(), factor_ids.end());
    }

    std::vector<Factor> pool;
    std::set<Index> to_eliminate;
    std::map<Index, std::set<Index>> adj;
    for (Index fid : factor_ids) {
      const auto& f = base[fid];
      for (Index u : f.vars) {
        adj[u];
        if (u != q) to_eliminate.insert(u);
        for (Index w : f.vars) {
          if (u != w) adj[u].insert(w);
        }
      }
      pool.push_back(f);
    }

    std::vector<Index> order;
    if (options.order.empty()) {
      order = min_degree(std::move(adj), to_eliminate, rank);
    } else {
      order.assign(to_eliminate.begin(), to_eliminate.end());
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (fixed_pos[a] != fixed_pos[b]) return fixed_pos[a] < fixed_pos[b];
        return rank[a] < rank[b];
      });
    }

    for (Index x : order) {
      std::vector<Factor> keep;
      std::optional<Factor> prod;
      for (auto& f : pool) {
        if (std::binary_search(f.vars.begin(), f.vars.end(), x)) {
          prod = prod ? multiply(*prod, f, budget) : std::move(f);
        } else {
          keep.push_back(std::move(f));
        }
      }
      if (prod) {
        Factor m = sum_out(*prod, x);
        normalize(m);
        if (!m.vars.empty()) keep.push_back(std::move(m));
      }
      pool = std::move(keep);
    }

    Factor result{{q}, {1.0, 1.0}};
    for (const auto& f : pool) result = multiply(result, f, budget);
    normalize(result);
    out[vars[q].id] = result.vals[1];
  }
  return out;
}

PosteriorMap enumerate_oracle(const Network& net, std::size_t max_variables) {
  const auto& vars = net.variables();
  const std::size_t n = vars.size();
  if (n > max_variables) {
    throw InferenceError(InferenceError::Kind::too_many_variables,
                         "enumeration over " + std::to_string(n) + " variables exceeds the limit of " +
                             std::to_string(max_variables));
  }

  std::vector<int> observed(n, -1);
  for (const auto& [id, outcome] : net.evidence()) {
    observed[*net.index_of(id)] = outcome ? 1 : 0;
  }

  std::vector<double> mass(n, 0.0);
  double total = 0.0;
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t x = 0; x < count; ++x) {
    bool consistent = true;
    for (std::size_t v = 0; v < n && consistent; ++v) {
      if (observed[v] >= 0 && static_cast<int>((x >> v) & 1u) != observed[v]) consistent = false;
    }
    if (!consistent) continue;

    double p = 1.0;
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t row = 0;
      for (std::size_t par : vars[v].parents) row = (row << 1) | ((x >> par) & 1u);
      const double t = vars[v].table[row];
      p *= ((x >> v) & 1u) ? t : 1.0 - t;
    }
    total += p;
    for (std::size_t v = 0; v < n; ++v) {
      if ((x >> v) & 1u) mass[v] += p;
    }
  }
  if (!(total > 0.0)) {
    throw InferenceError(InferenceError::Kind::impossible_evidence, "evidence has probability zero");
  }

  PosteriorMap out;
  for (std::size_t v = 0; v < n; ++v) {
    if (vars[v].kind == VariableKind::concept_node) out[vars[v].id] = mass[v] / total;
  }
  return out;
}

nlohmann::json to_json(const Network& net) {
  nlohmann::json doc;
  doc["strategy"] = std::string(to_string(net.options().strategy));
  doc["fan_in_max"] = net.options().fan_in_max;
  auto& vs = doc["variables"] = nlohmann::json::array();
  for (const auto& v : net.variables()) {
    nlohmann::json jv;
    jv["id"] = v.id;
    jv["kind"] = std::string(to_string(v.kind));
    auto& ps = jv["parents"] = nlohmann::json::array();
    for (auto p : v.parents) ps.push_back(net.variables()[p].id);
    jv["table"] = v.table;
    vs.push_back(std::move(jv));
  }
  doc["evidence"] = net.evidence();
  return doc;
}

}  // namespace study
