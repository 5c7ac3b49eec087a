#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "tempid/graph.hpp"

namespace tempid {

/// Embedded Markov chain X_0 .. X_l of a diagram: per-variable value domains
/// that can only shrink, and one transition matrix per link.
///
/// Link i (1 <= i <= link_count()) joins X_{i-1} -> X_i.
class Emc {
 public:
  using Matrix = std::vector<std::vector<double>>;

  Emc() = default;

  /// `transitions[i-1][h][k]` = p(X_i = k | X_{i-1} = h).
  Emc(std::vector<std::string> names, std::vector<std::vector<std::string>> labels,
      std::vector<Matrix> transitions, std::vector<VariableId> ids = {})
      : names_(std::move(names)),
        labels_(std::move(labels)),
        links_(std::move(transitions)),
        ids_(std::move(ids)) {
    if (labels_.size() != names_.size())
      throw std::invalid_argument("Emc: one label list per variable required");
    if (names_.empty() ? !links_.empty() : links_.size() + 1 != names_.size())
      throw std::invalid_argument("Emc: need exactly one transition matrix per adjacent pair");
    for (std::size_t i = 0; i < links_.size(); ++i) {
      if (links_[i].size() != labels_[i].size())
        throw std::invalid_argument(fmt::format("Emc: link {} has wrong row count", i + 1));
      for (const auto& row : links_[i])
        if (row.size() != labels_[i + 1].size())
          throw std::invalid_argument(fmt::format("Emc: link {} has wrong column count", i + 1));
    }
    if (ids_.empty())
      for (std::size_t i = 0; i < names_.size(); ++i) ids_.push_back(VariableId{i});
    alive_.resize(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) alive_[i].assign(labels_[i].size(), 1);
  }

  std::size_t variable_count() const noexcept { return names_.size(); }
  std::size_t link_count() const noexcept { return links_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& labels(std::size_t i) const { return labels_.at(i); }
  VariableId variable(std::size_t i) const { return ids_.at(i); }
  std::size_t full_size(std::size_t i) const { return labels_.at(i).size(); }

  bool in_domain(std::size_t i, std::size_t state) const {
    return state < alive_.at(i).size() && alive_[i][state] != 0;
  }
  std::vector<std::size_t> domain(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < alive_.at(i).size(); ++s)
      if (alive_[i][s]) out.push_back(s);
    return out;
  }
  std::size_t domain_size(std::size_t i) const {
    return static_cast<std::size_t>(std::count(alive_.at(i).begin(), alive_[i].end(), 1));
  }
  std::size_t total_domain_size() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < variable_count(); ++i) n += domain_size(i);
    return n;
  }

  double transition(std::size_t link, std::size_t h, std::size_t k) const {
    return links_.at(link - 1).at(h).at(k);
  }

  /// True once any domain is empty.
  bool infeasible() const {
    for (std::size_t i = 0; i < variable_count(); ++i)
      if (domain_size(i) == 0) return true;
    return false;
  }

  /// Deletes one value; returns whether it was present. Domains never grow.
  bool remove(std::size_t i, std::size_t state) {
    if (!in_domain(i, state)) return false;
    alive_[i][state] = 0;
    return true;
  }

  /// Keeps only `states` (intersected with the current domain).
  void restrict_to(std::size_t i, const std::vector<std::size_t>& states) {
    for (std::size_t s = 0; s < full_size(i); ++s)
      if (std::find(states.begin(), states.end(), s) == states.end()) remove(i, s);
  }

  std::optional<std::size_t> position(VariableId v) const {
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (ids_[i] == v) return i;
    return std::nullopt;
  }

  friend bool same_domains(const Emc& a, const Emc& b) { return a.alive_ == b.alive_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> labels_;
  std::vector<Matrix> links_;
  std::vector<VariableId> ids_;
  std::vector<std::vector<std::uint8_t>> alive_;
};

/// Builds the chain over `chain` (causal order). Each variable after the
/// first must be a cpt node whose only parent is its predecessor.
inline Emc extract_emc(const ValidatedDiagram& d, const std::vector<VariableId>& chain) {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> labels;
  std::vector<Emc::Matrix> links;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto v = chain[i];
    if (v.index >= d.size()) throw ModelError("chain references an unknown variable");
    if (!d.is_discrete(v)) throw ModelError("chain variable '" + d.name(v) + "' is not discrete");
    names.push_back(d.name(v));
    labels.push_back(d.discrete_domain(v).labels);
    if (i == 0) continue;
    const auto& node = d.node(v);
    const auto* cpt = std::get_if<Cpt>(&node.dist);
    if (!cpt || node.parents.size() != 1 || node.parents[0] != chain[i - 1])
      throw ModelError("'" + d.name(v) + "' does not have '" + d.name(chain[i - 1]) +
                       "' as its only parent; not a chain in causal order");
    links.push_back(cpt->rows);
  }
  for (std::size_t i = 0; i < chain.size(); ++i)
    for (std::size_t j = i + 1; j < chain.size(); ++j)
      if (chain[i] == chain[j]) throw ModelError("chain lists '" + d.name(chain[i]) + "' twice");
  return Emc(std::move(names), std::move(labels), std::move(links), chain);
}

/// Longest chain starting at the first discrete orphan cpt node, following
/// the unique discrete single-parent cpt child at every step.
inline std::vector<VariableId> infer_chain(const ValidatedDiagram& d) {
  auto is_chain_child = [&](VariableId c, VariableId parent) {
    const auto& n = d.node(c);
    return d.is_discrete(c) && std::holds_alternative<Cpt>(n.dist) && n.parents.size() == 1 &&
           n.parents[0] == parent;
  };
  for (auto v : d.topological_order()) {
    if (!d.is_discrete(v) || !d.parents(v).empty()) continue;
    std::vector<VariableId> chain{v};
    for (;;) {
      std::vector<VariableId> next;
      for (auto c : d.children(chain.back()))
        if (is_chain_child(c, chain.back())) next.push_back(c);
      if (next.size() != 1) break;
      chain.push_back(next[0]);
    }
    if (chain.size() > 1) return chain;
  }
  return {};
}

/// True iff p(X_i = k | X_{i-1} = h) > 0 for in-domain h, k.
inline bool compatible(const Emc& e, std::size_t link, std::size_t h, std::size_t k) {
  if (link == 0 || link > e.link_count())
    throw std::out_of_range(fmt::format("link {} does not exist", link));
  if (!e.in_domain(link - 1, h))
    throw DomainError(fmt::format("value #{} is not in the domain of {}", h, e.name(link - 1)));
  if (!e.in_domain(link, k))
    throw DomainError(fmt::format("value #{} is not in the domain of {}", k, e.name(link)));
  return e.transition(link, h, k) > 0.0;
}

/// Deletes values of X_{link-1} with no compatible value left in X_link.
/// Returns the deleted states.
inline std::vector<std::size_t> revise_l(Emc& e, std::size_t link) {
  if (link == 0 || link > e.link_count())
    throw std::out_of_range(fmt::format("link {} does not exist", link));
  std::vector<std::size_t> deleted;
  const auto succ = e.domain(link);
  for (auto h : e.domain(link - 1)) {
    bool supported = false;
    for (auto k : succ)
      if (e.transition(link, h, k) > 0.0) {
        supported = true;
        break;
      }
    if (!supported) {
      e.remove(link - 1, h);
      deleted.push_back(h);
    }
  }
  return deleted;
}

/// Mirror image of revise_l: deletes values of X_link that no remaining value
/// of X_{link-1} can reach.
inline std::vector<std::size_t> revise_forward(Emc& e, std::size_t link) {
  if (link == 0 || link > e.link_count())
    throw std::out_of_range(fmt::format("link {} does not exist", link));
  std::vector<std::size_t> deleted;
  const auto pred = e.domain(link - 1);
  for (auto k : e.domain(link)) {
    bool supported = false;
    for (auto h : pred)
      if (e.transition(link, h, k) > 0.0) {
        supported = true;
        break;
      }
    if (!supported) {
      e.remove(link, k);
      deleted.push_back(k);
    }
  }
  return deleted;
}

struct RevisionOptions {
  /// Also prune successors with no compatible predecessor (full arc
  /// consistency in both directions). Off: only predecessor domains shrink.
  bool bidirectional = false;
  /// Links visited in each pass; empty means 1..link_count().
  std::vector<std::size_t> link_order;
};

struct RevisionResult {
  /// Deleted states per chain variable, in deletion order.
  std::vector<std::vector<std::size_t>> deleted;
  std::size_t passes = 0;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& d : deleted) n += d.size();
    return n;
  }
};

/// Runs link revisions until a pass changes nothing.
inline RevisionResult revise_g(Emc& e, const RevisionOptions& opts = {}) {
  RevisionResult result;
  result.deleted.resize(e.variable_count());
  std::vector<std::size_t> order = opts.link_order;
  if (order.empty()) {
    order.resize(e.link_count());
    std::iota(order.begin(), order.end(), std::size_t{1});
  }
  // Every productive pass deletes at least one value.
  const std::size_t cap = 1 + e.total_domain_size();
  bool changed = true;
  while (changed) {
    if (++result.passes > cap) throw std::logic_error("revise_g exceeded its pass bound");
    changed = false;
    for (auto link : order) {
      for (auto h : revise_l(e, link)) {
        result.deleted[link - 1].push_back(h);
        changed = true;
      }
      if (opts.bidirectional)
        for (auto k : revise_forward(e, link)) {
          result.deleted[link].push_back(k);
          changed = true;
        }
    }
  }
  return result;
}

/// Per chain position, the states excluded a priori.
using Exclusions = std::map<std::size_t, std::set<std::size_t>>;

/// Deletes the excluded values and revises; returns the revised copy.
inline Emc global_revise(Emc e, const Exclusions& exclusions, const RevisionOptions& opts = {}) {
  for (const auto& [var, states] : exclusions) {
    if (var >= e.variable_count())
      throw std::out_of_range(fmt::format("exclusion for chain position {} out of range", var));
    for (auto s : states) {
      if (s >= e.full_size(var))
        throw DomainError(fmt::format("excluded value #{} is not in the domain of {}", s, e.name(var)));
      e.remove(var, s);
    }
  }
  revise_g(e, opts);
  return e;
}

struct CompatibilityGraph {
  std::vector<std::size_t> left;   // current domain of X_{i-1}
  std::vector<std::size_t> right;  // current domain of X_i
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

inline CompatibilityGraph compatibility_graph(const Emc& e, std::size_t link) {
  CompatibilityGraph g;
  g.left = e.domain(link - 1);
  g.right = e.domain(link);
  for (auto h : g.left)
    for (auto k : g.right)
      if (e.transition(link, h, k) > 0.0) g.edges.emplace_back(h, k);
  return g;
}

/// True iff every surviving pair across the link is compatible.
inline bool is_completely_connected(const Emc& e, std::size_t link) {
  if (link == 0 || link > e.link_count())
    throw std::out_of_range(fmt::format("link {} does not exist", link));
  for (auto h : e.domain(link - 1))
    for (auto k : e.domain(link))
      if (!(e.transition(link, h, k) > 0.0)) return false;
  return true;
}

/// Sufficient and necessary for Gibbs reachability on a bare chain.
inline bool gibbs_reachability_ok(const Emc& e) {
  for (std::size_t link = 1; link <= e.link_count(); ++link)
    if (!is_completely_connected(e, link)) return false;
  return true;
}

/// Graphviz description of every link's compatibility graph.
inline std::string to_dot(const Emc& e) {
  std::string out = "graph emc {\n  rankdir=LR;\n";
  auto node_id = [&](std::size_t i, std::size_t s) { return fmt::format("\"{}={}\"", e.name(i), e.labels(i)[s]); };
  for (std::size_t i = 0; i < e.variable_count(); ++i) {
    out += fmt::format("  subgraph cluster_{} {{\n    label=\"{}\";\n", i, e.name(i));
    for (auto s : e.domain(i)) out += fmt::format("    {};\n", node_id(i, s));
    out += "  }\n";
  }
  for (std::size_t link = 1; link <= e.link_count(); ++link)
    for (auto [h, k] : compatibility_graph(e, link).edges)
      out += fmt::format("  {} -- {};\n", node_id(link - 1, h), node_id(link, k));
  out += "}\n";
  return out;
}

}  // namespace tempid
