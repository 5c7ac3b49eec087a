#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "tempid/diagram.hpp"

namespace tempid {

struct Issue {
  std::string node;
  std::string message;

  friend bool operator==(const Issue&, const Issue&) = default;
};

/// Violations make a diagram unusable; warnings do not.
struct ValidationReport {
  std::vector<Issue> violations;
  std::vector<Issue> warnings;

  bool ok() const noexcept { return violations.empty(); }
};

class ValidationError : public ModelError {
 public:
  explicit ValidationError(ValidationReport report)
      : ModelError(summary(report)), report_(std::move(report)) {}
  const ValidationReport& report() const noexcept { return report_; }

 private:
  static std::string summary(const ValidationReport& r) {
    std::string s = "diagram failed validation";
    for (const auto& v : r.violations) s += fmt::format("\n  {}: {}", v.node, v.message);
    return s;
  }
  ValidationReport report_;
};

inline constexpr double kProbabilityTolerance = 1e-9;

namespace detail {

inline bool is_discrete(const DomainSpec& d) {
  return std::holds_alternative<DiscreteDomain>(d);
}
inline std::size_t cardinality(const DomainSpec& d) {
  if (const auto* dd = std::get_if<DiscreteDomain>(&d)) return dd->size();
  return 0;
}

inline const char* kind_name(const DistributionSpec& dist) {
  return std::visit(Overloaded{
                        [](const Cpt&) { return "cpt"; },
                        [](const ShiftedExponential&) { return "shifted_exponential"; },
                        [](const TwoPhase&) { return "two_phase"; },
                        [](const GaussianLinear&) { return "gaussian_linear"; },
                        [](const SurvivalTransition&) { return "survival_transition"; },
                    },
                    dist);
}

class Checker {
 public:
  explicit Checker(const InfluenceDiagram& d) : d_(d) {}

  ValidationReport run() {
    check_names();
    for (std::size_t i = 0; i < d_.size(); ++i) check_domain(d_.nodes[i]);
    bool refs_ok = true;
    for (std::size_t i = 0; i < d_.size(); ++i) refs_ok &= check_parents(i);
    if (refs_ok) check_acyclic();
    if (refs_ok)
      for (std::size_t i = 0; i < d_.size(); ++i) check_dist(i);
    return std::move(report_);
  }

 private:
  void violation(const std::string& node, std::string msg) {
    report_.violations.push_back({node, std::move(msg)});
  }
  void warning(const std::string& node, std::string msg) {
    report_.warnings.push_back({node, std::move(msg)});
  }

  void check_names() {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < d_.size(); ++i) {
      const auto& name = d_.nodes[i].name;
      if (name.empty()) violation(fmt::format("#{}", i), "empty variable name");
      else if (!seen.insert(name).second) violation(name, "duplicate variable name");
    }
  }

  void check_domain(const Node& n) {
    if (const auto* dd = std::get_if<DiscreteDomain>(&n.domain)) {
      if (dd->labels.empty()) {
        violation(n.name, "discrete domain is empty");
        return;
      }
      std::set<std::string> seen;
      for (const auto& l : dd->labels)
        if (!seen.insert(l).second) violation(n.name, fmt::format("duplicate state label '{}'", l));
      auto pad = dd->find(kPadLabel);
      if (pad && *pad + 1 != dd->size())
        violation(n.name, "pad state '*' must be the last label");
    } else {
      const auto& cd = std::get<ContinuousDomain>(n.domain);
      if (cd.lower && (!std::isfinite(*cd.lower) || *cd.lower < 0.0))
        violation(n.name, "continuous lower bound must be finite and >= 0");
    }
  }

  bool check_parents(std::size_t i) {
    const auto& n = d_.nodes[i];
    bool ok = true;
    std::set<std::size_t> seen;
    for (auto p : n.parents) {
      if (p.index >= d_.size()) {
        violation(n.name, fmt::format("dangling parent reference #{}", p.index));
        ok = false;
      } else if (p.index == i) {
        violation(n.name, "node lists itself as a parent");
        ok = false;
      } else if (!seen.insert(p.index).second) {
        violation(n.name, fmt::format("parent '{}' listed twice", d_.nodes[p.index].name));
      }
    }
    return ok;
  }

  void check_acyclic() {
    const std::size_t n = d_.size();
    std::vector<std::size_t> indeg(n, 0);
    std::vector<std::vector<std::size_t>> children(n);
    for (std::size_t i = 0; i < n; ++i)
      for (auto p : d_.nodes[i].parents) {
        ++indeg[i];
        children[p.index].push_back(i);
      }
    std::queue<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] == 0) ready.push(i);
    std::size_t visited = 0;
    while (!ready.empty()) {
      auto v = ready.front();
      ready.pop();
      ++visited;
      for (auto c : children[v])
        if (--indeg[c] == 0) ready.push(c);
    }
    if (visited == n) return;
    std::string members;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] > 0) members += (members.empty() ? "" : ", ") + d_.nodes[i].name;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] > 0) {
        violation(d_.nodes[i].name, fmt::format("directed cycle among {{{}}}", members));
        break;
      }
  }

  // Number of rows implied by discrete parents; nullopt if a parent is continuous.
  std::optional<std::size_t> row_count(const Node& n) const {
    std::size_t rows = 1;
    for (auto p : n.parents) {
      const auto& dom = d_.nodes[p.index].domain;
      if (!is_discrete(dom)) return std::nullopt;
      rows *= cardinality(dom);
      if (rows > 10'000'000) return std::nullopt;
    }
    return rows;
  }

  bool has_children(std::size_t i) const {
    for (const auto& n : d_.nodes)
      for (auto p : n.parents)
        if (p.index == i) return true;
    return false;
  }

  template <class Vec>
  void check_length(const Node& n, const char* field, const Vec& v, std::size_t rows) {
    if (v.size() != rows)
      violation(n.name, fmt::format("{} has {} entries, expected one per parent row ({})",
                                    field, v.size(), rows));
  }

  void check_positive(const Node& n, const char* field, const std::vector<double>& v) {
    for (std::size_t r = 0; r < v.size(); ++r)
      if (!(v[r] > 0.0) || !std::isfinite(v[r]))
        violation(n.name, fmt::format("{}[{}] = {} must be strictly positive", field, r, v[r]));
  }

  void check_nonneg(const Node& n, const char* field, const std::vector<double>& v) {
    for (std::size_t r = 0; r < v.size(); ++r)
      if (!(v[r] >= 0.0) || !std::isfinite(v[r]))
        violation(n.name, fmt::format("{}[{}] = {} must be >= 0", field, r, v[r]));
  }

  void require_continuous_node_with_discrete_parents(const Node& n, std::size_t& rows, bool& ok) {
    ok = true;
    if (is_discrete(n.domain)) {
      violation(n.name, fmt::format("{} requires a continuous domain", kind_name(n.dist)));
      ok = false;
    }
    auto rc = row_count(n);
    if (!rc) {
      violation(n.name, fmt::format("{} requires discrete parents", kind_name(n.dist)));
      ok = false;
      return;
    }
    rows = *rc;
  }

  void check_dist(std::size_t i) {
    const Node& n = d_.nodes[i];
    std::visit(Overloaded{
                   [&](const Cpt& cpt) { check_cpt(i, n, cpt); },
                   [&](const ShiftedExponential& se) {
                     std::size_t rows = 0;
                     bool ok = false;
                     require_continuous_node_with_discrete_parents(n, rows, ok);
                     if (!ok) return;
                     check_length(n, "rate", se.rate, rows);
                     check_length(n, "shift", se.shift, rows);
                     check_positive(n, "rate", se.rate);
                     check_nonneg(n, "shift", se.shift);
                   },
                   [&](const TwoPhase& tp) {
                     std::size_t rows = 0;
                     bool ok = false;
                     require_continuous_node_with_discrete_parents(n, rows, ok);
                     if (!ok) return;
                     check_length(n, "rate0", tp.rate0, rows);
                     check_length(n, "rate1", tp.rate1, rows);
                     check_length(n, "shift", tp.shift, rows);
                     check_length(n, "gate", tp.gate, rows);
                     check_positive(n, "rate0", tp.rate0);
                     check_positive(n, "rate1", tp.rate1);
                     check_nonneg(n, "shift", tp.shift);
                   },
                   [&](const GaussianLinear& gl) {
                     if (is_discrete(n.domain))
                       violation(n.name, "gaussian_linear requires a continuous domain");
                     if (!(gl.sigma > 0.0) || !std::isfinite(gl.sigma))
                       violation(n.name, fmt::format("sigma = {} must be strictly positive", gl.sigma));
                     for (std::size_t t = 0; t < gl.terms.size(); ++t) {
                       if (!std::isfinite(gl.terms[t].coef))
                         violation(n.name, fmt::format("term {} has a non-finite coefficient", t));
                       for (auto f : gl.terms[t].factors)
                         if (f >= n.parents.size())
                           violation(n.name, fmt::format("term {} references parent position {} "
                                                         "but the node has {} parents",
                                                         t, f, n.parents.size()));
                     }
                   },
                   [&](const SurvivalTransition& st) { check_survival(n, st); },
               },
               n.dist);
  }

  void check_cpt(std::size_t i, const Node& n, const Cpt& cpt) {
    if (!is_discrete(n.domain)) {
      violation(n.name, "cpt requires a discrete domain");
      return;
    }
    auto rows = row_count(n);
    if (!rows) {
      violation(n.name, "cpt requires discrete parents");
      return;
    }
    if (cpt.rows.size() != *rows) {
      violation(n.name, fmt::format("cpt has {} rows, expected {} (one per parent configuration)",
                                    cpt.rows.size(), *rows));
      return;
    }
    const std::size_t card = cardinality(n.domain);
    bool point_mass = false;
    for (std::size_t r = 0; r < cpt.rows.size(); ++r) {
      const auto& row = cpt.rows[r];
      if (row.size() != card) {
        violation(n.name, fmt::format("row {} has {} entries, expected {}", r, row.size(), card));
        continue;
      }
      double sum = 0.0;
      bool in_range = true;
      for (double p : row) {
        if (!(p >= 0.0 && p <= 1.0)) in_range = false;
        sum += p;
      }
      if (!in_range) violation(n.name, fmt::format("row {} has an entry outside [0, 1]", r));
      if (std::abs(sum - 1.0) > kProbabilityTolerance)
        violation(n.name, fmt::format("row {} sums to {} instead of 1", r, sum));
      for (double p : row)
        if (p == 1.0) point_mass = true;
    }
    if (point_mass && has_children(i))
      warning(n.name,
              "a cpt row is a point mass on a node with children; Gibbs moves "
              "constrained by such functional dependencies may not mix");
  }

  void check_survival(const Node& n, const SurvivalTransition& st) {
    if (cardinality(n.domain) != 2)
      violation(n.name, "survival_transition requires a two-state (dead, alive) domain");
    if (n.parents.size() != 2) {
      violation(n.name, "survival_transition requires parents (previous state, dysfunction)");
    } else {
      if (cardinality(d_.nodes[n.parents[0].index].domain) != 2)
        violation(n.name, "first survival_transition parent must be a two-state variable");
      if (is_discrete(d_.nodes[n.parents[1].index].domain))
        violation(n.name, "second survival_transition parent must be continuous");
    }
    if (!(st.infection_rate > 0.0)) violation(n.name, "infection_rate must be strictly positive");
    if (!(st.step > 0.0)) violation(n.name, "step must be strictly positive");
    if (st.knots.size() < 2) violation(n.name, "survival curve needs at least two knots");
    for (std::size_t k = 0; k < st.knots.size(); ++k) {
      const auto [r, s] = st.knots[k];
      if (!(s > 0.0 && s <= 1.0))
        violation(n.name, fmt::format("knot {} survival {} outside (0, 1]", k, s));
      if (k > 0 && !(r > st.knots[k - 1].first))
        violation(n.name, fmt::format("knot {} dysfunction not strictly increasing", k));
      if (k > 0 && s > st.knots[k - 1].second)
        violation(n.name, fmt::format("knot {} survival increases with dysfunction", k));
    }
  }

  const InfluenceDiagram& d_;
  ValidationReport report_;
};

}  // namespace detail

/// Lists every violation (and advisory warning) of a raw diagram.
inline ValidationReport validate_diagram(const InfluenceDiagram& d) {
  return detail::Checker(d).run();
}

/// FNV-1a over every structural and numeric field.
inline std::uint64_t structural_hash(const InfluenceDiagram& d) {
  std::uint64_t h = 1469598103934665603ull;
  auto bytes = [&h](const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  };
  auto num = [&](double x) { bytes(&x, sizeof x); };
  auto count = [&](std::size_t x) { bytes(&x, sizeof x); };
  auto str = [&](const std::string& s) {
    count(s.size());
    bytes(s.data(), s.size());
  };
  auto vec = [&](const std::vector<double>& v) {
    count(v.size());
    for (double x : v) num(x);
  };
  for (const auto& n : d.nodes) {
    str(n.name);
    count(n.domain.index());
    std::visit(Overloaded{[&](const DiscreteDomain& dd) {
                            count(dd.size());
                            for (const auto& l : dd.labels) str(l);
                          },
                          [&](const ContinuousDomain& cd) {
                            count(cd.lower.has_value());
                            if (cd.lower) num(*cd.lower);
                          }},
               n.domain);
    count(n.parents.size());
    for (auto p : n.parents) count(p.index);
    count(n.dist.index());
    std::visit(Overloaded{
                   [&](const Cpt& c) {
                     count(c.rows.size());
                     for (const auto& r : c.rows) vec(r);
                   },
                   [&](const ShiftedExponential& s) {
                     vec(s.rate);
                     vec(s.shift);
                   },
                   [&](const TwoPhase& t) {
                     vec(t.rate0);
                     vec(t.rate1);
                     vec(t.shift);
                     count(t.gate.size());
                     bytes(t.gate.data(), t.gate.size());
                   },
                   [&](const GaussianLinear& g) {
                     num(g.sigma);
                     count(g.terms.size());
                     for (const auto& m : g.terms) {
                       num(m.coef);
                       count(m.factors.size());
                       for (auto f : m.factors) count(f);
                     }
                   },
                   [&](const SurvivalTransition& s) {
                     num(s.infection_rate);
                     num(s.step);
                     count(s.knots.size());
                     for (auto [r, v] : s.knots) {
                       num(r);
                       num(v);
                     }
                   },
               },
               n.dist);
  }
  return h;
}

}  // namespace tempid
