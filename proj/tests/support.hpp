#pragma once

// Random model generators and brute-force oracles shared by the test
// executables. Nothing here calls into the revision or sampling code it
// is used to check.

#include <deque>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempid/tempid.hpp"

namespace tempid::testing {

inline std::string data_path(const std::string& file) { return std::string(TEMPID_DATA_DIR) + "/" + file; }

/// Row-stochastic matrix with roughly `zero_rate` of entries zeroed. Rows may
/// end up all zero when `allow_dead_rows` is set.
inline std::vector<std::vector<double>> random_rows(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                                    double zero_rate, bool allow_dead_rows) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::bernoulli_distribution zero(zero_rate);
  std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
  for (auto& row : m) {
    double sum = 0.0;
    for (auto& x : row) {
      x = zero(rng) ? 0.0 : u(rng);
      sum += x;
    }
    if (sum == 0.0 && !allow_dead_rows) {
      row[std::uniform_int_distribution<std::size_t>(0, cols - 1)(rng)] = 1.0;
      sum = 1.0;
    }
    if (sum > 0.0)
      for (auto& x : row) x /= sum;
  }
  return m;
}

/// Chain with 2..max_vars variables of 1..max_vals values each, sparse
/// transitions and a few values removed up front.
inline Emc random_chain(std::mt19937_64& rng, std::size_t max_vars = 6, std::size_t max_vals = 6) {
  const auto n = std::uniform_int_distribution<std::size_t>(2, max_vars)(rng);
  std::uniform_int_distribution<std::size_t> card(1, max_vals);
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> labels;
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back("V" + std::to_string(i));
    std::vector<std::string> l;
    const auto k = card(rng);
    for (std::size_t s = 0; s < k; ++s) l.push_back(std::to_string(s));
    labels.push_back(std::move(l));
  }
  const double zero_rate = std::uniform_real_distribution<double>(0.3, 0.8)(rng);
  std::vector<Emc::Matrix> links;
  for (std::size_t i = 1; i < n; ++i)
    links.push_back(random_rows(rng, labels[i - 1].size(), labels[i].size(), zero_rate, true));
  Emc e(names, labels, links);
  std::bernoulli_distribution drop(0.1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < e.full_size(i); ++s)
      if (drop(rng)) e.remove(i, s);
  return e;
}

inline std::vector<std::vector<std::uint8_t>> domains_of(const Emc& e) {
  std::vector<std::vector<std::uint8_t>> out(e.variable_count());
  for (std::size_t i = 0; i < e.variable_count(); ++i)
    for (std::size_t s = 0; s < e.full_size(i); ++s) out[i].push_back(e.in_domain(i, s) ? 1 : 0);
  return out;
}

/// Values lying on at least one positive path through the current domains.
/// With `whole_chain` false a path only needs to run from the value to the
/// end of the chain (what backward-only revision guarantees); with it true
/// the path must span every variable.
inline std::vector<std::vector<std::uint8_t>> path_supported(const Emc& e, bool whole_chain) {
  const auto n = e.variable_count();
  std::vector<std::vector<std::uint8_t>> ok(n);
  for (std::size_t i = 0; i < n; ++i) ok[i].assign(e.full_size(i), 0);
  std::vector<std::size_t> path(n);
  // Depth-first enumeration of every positive path that starts at `first`.
  std::function<void(std::size_t, std::size_t)> extend = [&](std::size_t first, std::size_t i) {
    if (i == n) {
      for (std::size_t j = first; j < n; ++j) ok[j][path[j]] = 1;
      return;
    }
    for (std::size_t s = 0; s < e.full_size(i); ++s) {
      if (!e.in_domain(i, s)) continue;
      if (i > first && !(e.transition(i, path[i - 1], s) > 0.0)) continue;
      path[i] = s;
      extend(first, i + 1);
    }
  };
  if (whole_chain) {
    extend(0, 0);
  } else {
    for (std::size_t first = 0; first < n; ++first) extend(first, first);
  }
  return ok;
}

/// Textbook AC-3 over the chain's arcs. `both_ways` also prunes successors
/// without a compatible predecessor.
inline std::vector<std::vector<std::uint8_t>> ac3(const Emc& e, bool both_ways) {
  auto dom = domains_of(e);
  const auto n = e.variable_count();
  struct Arc {
    std::size_t x, y;
  };
  std::deque<Arc> queue;
  for (std::size_t i = 1; i < n; ++i) {
    queue.push_back({i - 1, i});
    if (both_ways) queue.push_back({i, i - 1});
  }
  auto allowed = [&](std::size_t x, std::size_t a, std::size_t y, std::size_t b) {
    return x < y ? e.transition(y, a, b) > 0.0 : e.transition(x, b, a) > 0.0;
  };
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    bool removed = false;
    for (std::size_t a = 0; a < dom[x].size(); ++a) {
      if (!dom[x][a]) continue;
      bool support = false;
      for (std::size_t b = 0; b < dom[y].size() && !support; ++b) support = dom[y][b] && allowed(x, a, y, b);
      if (!support) {
        dom[x][a] = 0;
        removed = true;
      }
    }
    if (removed) {
      if (x > 0 && x - 1 != y) queue.push_back({x - 1, x});
      if (both_ways && x + 1 < n && x + 1 != y) queue.push_back({x + 1, x});
    }
  }
  return dom;
}

/// Random DAG over 2..max_nodes discrete nodes with up to two earlier
/// parents each and sparse CPT rows (every row keeps some mass).
inline InfluenceDiagram random_discrete_diagram(std::mt19937_64& rng, std::size_t max_nodes = 5,
                                                std::size_t max_vals = 4) {
  const auto n = std::uniform_int_distribution<std::size_t>(2, max_nodes)(rng);
  std::uniform_int_distribution<std::size_t> card(2, max_vals);
  InfluenceDiagram d;
  std::vector<std::size_t> cards;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<VariableId> parents;
    for (std::size_t j = 0; j < i; ++j)
      if (parents.size() < 2 && std::bernoulli_distribution(0.5)(rng)) parents.push_back(VariableId{j});
    std::size_t rows = 1;
    for (auto p : parents) rows *= cards[p.index];
    const auto k = card(rng);
    cards.push_back(k);
    std::vector<std::string> labels;
    for (std::size_t s = 0; s < k; ++s) labels.push_back("v" + std::to_string(s));
    d.add({"N" + std::to_string(i), DiscreteDomain{labels}, parents, Cpt{random_rows(rng, rows, k, 0.25, false)}});
  }
  return d;
}

/// One or two observed nodes with a feasible joint value.
// With `parented_only`, evidence goes on nodes that have parents; the caller
// must supply a diagram that has at least one.
inline Evidence random_evidence(std::mt19937_64& rng, const ValidatedDiagram& d, double min_probability = 1e-3,
                                bool parented_only = false) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!parented_only || !d.parents(VariableId{i}).empty()) pool.push_back(i);
  if (pool.empty()) throw std::invalid_argument("no eligible evidence nodes");
  const std::size_t most = std::min<std::size_t>(2, parented_only ? pool.size() : d.size() - 1);
  for (;;) {
    Evidence ev;
    const auto count = std::uniform_int_distribution<std::size_t>(1, most)(rng);
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t j = 0; j < count; ++j) {
      const VariableId v{pool[j]};
      ev.set_state(v, std::uniform_int_distribution<std::size_t>(0, d.cardinality(v) - 1)(rng));
    }
    try {
      if (enumeration_oracle(d, ev).evidence_probability >= min_probability) return ev;
    } catch (const InfeasibleError&) {
    }
  }
}

}  // namespace tempid::testing
