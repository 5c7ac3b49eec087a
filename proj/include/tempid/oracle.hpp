#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tempid/graph.hpp"

namespace tempid {

inline constexpr std::size_t kEnumerationCap = 1'000'000;

struct EnumerationResult {
  /// Mass (or density, when continuous nodes are observed) of the evidence.
  double evidence_probability = 0.0;
  /// marginals[v][s] = p(v = s | evidence); empty for continuous variables.
  std::vector<std::vector<double>> marginals;
};

/// Exact posteriors by summing the joint over every assignment of the free
/// variables. Free variables must be discrete; observed ones may be continuous.
inline EnumerationResult enumeration_oracle(const ValidatedDiagram& d, const Evidence& ev) {
  std::vector<VariableId> free;
  std::size_t count = 1;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const VariableId v{i};
    if (ev.contains(v)) continue;
    if (!d.is_discrete(v))
      throw DomainError("enumeration needs '" + d.name(v) + "' observed or discrete");
    free.push_back(v);
    count *= d.cardinality(v);
    if (count > kEnumerationCap)
      throw std::length_error("enumeration exceeds " + std::to_string(kEnumerationCap) + " configurations");
  }

  EnumerationResult out;
  out.marginals.resize(d.size());
  for (auto v : free) out.marginals[v.index].assign(d.cardinality(v), 0.0);

  Configuration cfg(d.size());
  ev.apply(cfg);
  for (auto v : free) cfg.set_state(v, 0);
  for (std::size_t n = 0; n < count; ++n) {
    const double p = joint_density(d, cfg);
    if (p > 0.0) {
      out.evidence_probability += p;
      for (auto v : free) out.marginals[v.index][cfg.state(v)] += p;
    }
    // Odometer increment, last free variable fastest.
    for (std::size_t j = free.size(); j-- > 0;) {
      const auto next = cfg.state(free[j]) + 1;
      if (next < d.cardinality(free[j])) {
        cfg.set_state(free[j], next);
        break;
      }
      cfg.set_state(free[j], 0);
    }
  }
  if (!(out.evidence_probability > 0.0)) throw InfeasibleError("evidence has zero probability");
  for (auto v : free)
    for (auto& x : out.marginals[v.index]) x /= out.evidence_probability;
  return out;
}

}  // namespace tempid
