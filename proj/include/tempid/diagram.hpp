#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "tempid/errors.hpp"

namespace tempid {

/// Dense index of a variable inside one diagram.
struct VariableId {
  std::size_t index = 0;

  friend constexpr auto operator<=>(VariableId, VariableId) = default;
};

/// Label of the absorbing pad state that follows absorption in a padded chain.
inline constexpr std::string_view kPadLabel = "*";

struct DiscreteDomain {
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return labels.size(); }

  std::optional<std::size_t> find(std::string_view label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels.begin());
  }

  friend bool operator==(const DiscreteDomain&, const DiscreteDomain&) = default;
};

/// Real-valued domain [lower, inf); no lower bound means the whole real line.
struct ContinuousDomain {
  std::optional<double> lower;

  bool contains(double x) const { return std::isfinite(x) && (!lower || x >= *lower); }

  friend bool operator==(const ContinuousDomain&, const ContinuousDomain&) = default;
};

using DomainSpec = std::variant<DiscreteDomain, ContinuousDomain>;

// Distribution families. Everything indexed "per row" is indexed by the
// mixed-radix code of the node's discrete parents, first parent most
// significant. A node without parents has exactly one row.

/// Conditional probability table; rows[r][k] = p(node = k | parent row r).
struct Cpt {
  std::vector<std::vector<double>> rows;

  friend bool operator==(const Cpt&, const Cpt&) = default;
};

/// lambda * exp(-lambda (t - a0)) for t > a0.
struct ShiftedExponential {
  std::vector<double> rate;
  std::vector<double> shift;

  friend bool operator==(const ShiftedExponential&, const ShiftedExponential&) = default;
};

/// Sum of a shifted Exp(rate0) sojourn and, when the row's gate is set, a
/// second unshifted Exp(rate1) sojourn. Gated rows have the hypoexponential
/// density; ungated rows reduce to ShiftedExponential with rate0.
struct TwoPhase {
  std::vector<double> rate0;
  std::vector<double> rate1;
  std::vector<double> shift;
  std::vector<std::uint8_t> gate;

  friend bool operator==(const TwoPhase&, const TwoPhase&) = default;
};

/// coef * product of the listed parents' values. Parent positions index the
/// node's parent list; a discrete parent contributes its state index.
struct Monomial {
  double coef = 0.0;
  std::vector<std::size_t> factors;

  friend bool operator==(const Monomial&, const Monomial&) = default;
};

/// Normal(sum of monomials, sigma^2).
struct GaussianLinear {
  std::vector<Monomial> terms;
  double sigma = 1.0;

  friend bool operator==(const GaussianLinear&, const GaussianLinear&) = default;
};

/// Two-state dead(0)/alive(1) transition whose alive->alive probability is
/// exp(-rate * step * (1 - s(r))). Parents are (previous state, dysfunction
/// level r); s is piecewise linear through `knots` and clamped at the ends.
/// Dead is absorbing.
struct SurvivalTransition {
  double infection_rate = 1.0;
  double step = 1.0;
  std::vector<std::pair<double, double>> knots;

  friend bool operator==(const SurvivalTransition&, const SurvivalTransition&) = default;
};

using DistributionSpec =
    std::variant<Cpt, ShiftedExponential, TwoPhase, GaussianLinear, SurvivalTransition>;

struct Node {
  std::string name;
  DomainSpec domain;
  std::vector<VariableId> parents;
  DistributionSpec dist;

  friend bool operator==(const Node&, const Node&) = default;
};

/// Raw, unvalidated diagram. Node i has VariableId{i}.
struct InfluenceDiagram {
  std::vector<Node> nodes;

  std::size_t size() const noexcept { return nodes.size(); }

  std::optional<VariableId> find(std::string_view name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return VariableId{i};
    return std::nullopt;
  }

  VariableId add(Node node) {
    nodes.push_back(std::move(node));
    return VariableId{nodes.size() - 1};
  }

  friend bool operator==(const InfluenceDiagram&, const InfluenceDiagram&) = default;
};

/// Assignment of values to diagram variables. Discrete values are stored as
/// their state index; unassigned slots hold NaN.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::size_t n)
      : values_(n, std::numeric_limits<double>::quiet_NaN()) {}

  std::size_t size() const noexcept { return values_.size(); }

  bool assigned(VariableId v) const { return !std::isnan(values_[v.index]); }
  bool complete() const {
    return std::none_of(values_.begin(), values_.end(),
                        [](double x) { return std::isnan(x); });
  }

  std::size_t state(VariableId v) const {
    return static_cast<std::size_t>(values_[v.index]);
  }
  double real(VariableId v) const { return values_[v.index]; }
  double raw(VariableId v) const { return values_[v.index]; }

  void set_state(VariableId v, std::size_t s) {
    values_[v.index] = static_cast<double>(s);
  }
  void set_real(VariableId v, double x) { values_[v.index] = x; }
  void set_raw(VariableId v, double x) { values_[v.index] = x; }
  void clear(VariableId v) {
    values_[v.index] = std::numeric_limits<double>::quiet_NaN();
  }

  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    if (a.values_.size() != b.values_.size()) return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i) {
      const double x = a.values_[i], y = b.values_[i];
      if (std::isnan(x) != std::isnan(y)) return false;
      if (!std::isnan(x) && x != y) return false;
    }
    return true;
  }

 private:
  std::vector<double> values_;
};

/// Partial instantiation of diagram variables, kept sorted by variable.
class Evidence {
 public:
  struct Entry {
    VariableId var;
    double value;  // state index for discrete variables
  };

  void set_state(VariableId v, std::size_t s) { insert(v, static_cast<double>(s)); }
  void set_real(VariableId v, double x) { insert(v, x); }

  /// Replaces an existing entry instead of rejecting it.
  void assign_raw(VariableId v, double x) {
    if (auto* e = lookup(v)) {
      e->value = x;
      return;
    }
    insert(v, x);
  }

  bool contains(VariableId v) const { return find(v) != nullptr; }
  std::optional<double> value(VariableId v) const {
    if (const auto* e = find(v)) return e->value;
    return std::nullopt;
  }

  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void apply(Configuration& cfg) const {
    for (const auto& e : entries_) cfg.set_raw(e.var, e.value);
  }

  friend bool operator==(const Evidence& a, const Evidence& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
      if (a.entries_[i].var != b.entries_[i].var ||
          a.entries_[i].value != b.entries_[i].value)
        return false;
    return true;
  }

 private:
  void insert(VariableId v, double x) {
    if (std::isnan(x)) throw DomainError("evidence value is NaN");
    auto it = std::lower_bound(entries_.begin(), entries_.end(), v,
                               [](const Entry& e, VariableId id) { return e.var < id; });
    if (it != entries_.end() && it->var == v)
      throw DomainError("variable " + std::to_string(v.index) +
                        " already carries evidence");
    entries_.insert(it, Entry{v, x});
  }

  const Entry* find(VariableId v) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), v,
                               [](const Entry& e, VariableId id) { return e.var < id; });
    return (it != entries_.end() && it->var == v) ? &*it : nullptr;
  }
  Entry* lookup(VariableId v) { return const_cast<Entry*>(std::as_const(*this).find(v)); }

  std::vector<Entry> entries_;
};

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace tempid
