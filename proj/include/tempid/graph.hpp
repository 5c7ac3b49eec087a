#pragma once

#include <memory>
#include <queue>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "tempid/diagram.hpp"
#include "tempid/families.hpp"
#include "tempid/validate.hpp"

namespace tempid {

/// An influence diagram that passed validation, with its structure resolved.
///
/// Immutable and cheap to copy (shared state); every sampler and oracle takes
/// one of these instead of a raw InfluenceDiagram.
class ValidatedDiagram {
 public:
  /// Throws ValidationError carrying the full report when the diagram has
  /// violations. Warnings are kept and available through report().
  explicit ValidatedDiagram(InfluenceDiagram d) {
    auto report = validate_diagram(d);
    if (!report.ok()) throw ValidationError(std::move(report));
    auto data = std::make_shared<Data>();
    data->spec = std::move(d);
    data->report = std::move(report);
    resolve(*data);
    data_ = std::move(data);
  }

  const InfluenceDiagram& spec() const noexcept { return data_->spec; }
  const ValidationReport& report() const noexcept { return data_->report; }
  std::size_t size() const noexcept { return data_->spec.size(); }

  const Node& node(VariableId v) const { return data_->spec.nodes.at(v.index); }
  const std::string& name(VariableId v) const { return node(v).name; }
  bool is_discrete(VariableId v) const { return data_->cardinality[v.index] > 0; }
  /// Number of states, 0 for continuous variables.
  std::size_t cardinality(VariableId v) const { return data_->cardinality[v.index]; }
  const DiscreteDomain& discrete_domain(VariableId v) const {
    const auto* dd = std::get_if<DiscreteDomain>(&node(v).domain);
    if (!dd) throw DomainError("variable '" + name(v) + "' is not discrete");
    return *dd;
  }

  std::span<const VariableId> parents(VariableId v) const { return node(v).parents; }
  std::span<const VariableId> children(VariableId v) const { return data_->children[v.index]; }
  std::span<const VariableId> topological_order() const noexcept { return data_->topo; }

  std::optional<VariableId> find(std::string_view name) const { return data_->spec.find(name); }
  VariableId id(std::string_view name) const {
    if (auto v = find(name)) return *v;
    throw ModelError("unknown variable '" + std::string(name) + "'");
  }

  /// Row of the node's parameter table selected by its discrete parents.
  std::size_t row(VariableId v, const Configuration& cfg) const {
    const auto& strides = data_->strides[v.index];
    const auto& ps = node(v).parents;
    std::size_t r = 0;
    for (std::size_t j = 0; j < ps.size(); ++j)
      if (strides[j] != 0) r += cfg.state(ps[j]) * strides[j];
    return r;
  }

  /// p(node value | parent values): mass for discrete nodes, density otherwise.
  double density(VariableId v, const Configuration& cfg) const {
    const Node& n = node(v);
    if (!cfg.assigned(v))
      throw MissingAssignment("variable '" + n.name + "' is unassigned");
    for (auto p : n.parents)
      if (!cfg.assigned(p))
        throw MissingAssignment("parent '" + name(p) + "' of '" + n.name + "' is unassigned");
    return std::visit(
        Overloaded{
            [&](const Cpt& c) { return c.rows[row(v, cfg)][cfg.state(v)]; },
            [&](const ShiftedExponential& se) {
              const auto r = row(v, cfg);
              return families::shifted_exponential_pdf(cfg.real(v), se.rate[r], se.shift[r]);
            },
            [&](const TwoPhase& tp) {
              const auto r = row(v, cfg);
              if (tp.gate[r])
                return families::hypoexponential_pdf(cfg.real(v), tp.rate0[r], tp.rate1[r],
                                                     tp.shift[r]);
              return families::shifted_exponential_pdf(cfg.real(v), tp.rate0[r], tp.shift[r]);
            },
            [&](const GaussianLinear& gl) {
              return families::gaussian_pdf(cfg.real(v), gaussian_mean(v, gl, cfg), gl.sigma);
            },
            [&](const SurvivalTransition& st) {
              const bool was_alive = cfg.state(n.parents[0]) == 1;
              const bool alive = cfg.state(v) == 1;
              if (!was_alive) return alive ? 0.0 : 1.0;
              const double s = families::interpolate_knots(st.knots, cfg.real(n.parents[1]));
              const double stay = families::survival_probability(st.infection_rate, st.step, s);
              return alive ? stay : 1.0 - stay;
            },
        },
        n.dist);
  }

  double gaussian_mean(VariableId v, const GaussianLinear& gl, const Configuration& cfg) const {
    const auto& ps = node(v).parents;
    double mean = 0.0;
    for (const auto& term : gl.terms) {
      double x = term.coef;
      for (auto f : term.factors) x *= cfg.raw(ps[f]);
      mean += x;
    }
    return mean;
  }

 private:
  struct Data {
    InfluenceDiagram spec;
    ValidationReport report;
    std::vector<std::size_t> cardinality;
    std::vector<std::vector<VariableId>> children;
    std::vector<std::vector<std::size_t>> strides;
    std::vector<VariableId> topo;
  };

  static void resolve(Data& d) {
    const auto n = d.spec.size();
    d.cardinality.resize(n);
    d.children.resize(n);
    d.strides.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      d.cardinality[i] = detail::cardinality(d.spec.nodes[i].domain);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ps = d.spec.nodes[i].parents;
      for (auto p : ps) d.children[p.index].push_back(VariableId{i});
      // Continuous parents get stride 0 and never contribute to the row.
      auto& st = d.strides[i];
      st.assign(ps.size(), 0);
      std::size_t s = 1;
      for (std::size_t j = ps.size(); j-- > 0;) {
        const auto c = d.cardinality[ps[j].index];
        if (c == 0) continue;
        st[j] = s;
        s *= c;
      }
    }
    // Kahn's algorithm, smallest ready index first.
    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = d.spec.nodes[i].parents.size();
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] == 0) ready.push(i);
    while (!ready.empty()) {
      const auto v = ready.top();
      ready.pop();
      d.topo.push_back(VariableId{v});
      for (auto c : d.children[v])
        if (--indeg[c.index] == 0) ready.push(c.index);
    }
  }

  std::shared_ptr<const Data> data_;
};

inline double conditional_density(const ValidatedDiagram& d, VariableId v, const Configuration& cfg) {
  return d.density(v, cfg);
}

/// Product of every node's conditional density.
inline double joint_density(const ValidatedDiagram& d, const Configuration& cfg) {
  double p = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    p *= d.density(VariableId{i}, cfg);
    if (p == 0.0) break;
  }
  return p;
}

struct MarkovBlanket {
  std::vector<VariableId> parents;
  std::vector<VariableId> children;
  /// Other parents of the children; may overlap `parents`, never contains the node.
  std::vector<VariableId> coparents;
};

inline MarkovBlanket markov_blanket(const ValidatedDiagram& d, VariableId v) {
  if (v.index >= d.size())
    throw ModelError("unknown variable index " + std::to_string(v.index));
  MarkovBlanket b;
  std::set<VariableId> ps(d.parents(v).begin(), d.parents(v).end());
  b.parents.assign(ps.begin(), ps.end());
  b.children.assign(d.children(v).begin(), d.children(v).end());
  std::sort(b.children.begin(), b.children.end());
  std::set<VariableId> co;
  for (auto c : b.children)
    for (auto p : d.parents(c))
      if (p != v) co.insert(p);
  b.coparents.assign(co.begin(), co.end());
  return b;
}

/// Every node after all of its parents; ties broken by index.
inline std::vector<VariableId> topological_order(const ValidatedDiagram& d) {
  auto t = d.topological_order();
  return {t.begin(), t.end()};
}

}  // namespace tempid
