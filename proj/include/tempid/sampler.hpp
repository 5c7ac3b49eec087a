#pragma once

// Forward, Gibbs and composite Monte Carlo over a validated diagram, plus the
// counting ("kernel") and Rao-Blackwellized ("mixture") posterior estimators.

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "tempid/emc.hpp"
#include "tempid/graph.hpp"
#include "tempid/rng.hpp"

namespace tempid {

enum class ScanOrder { fixed, random };
enum class Retain { last, all };
enum class ReachabilityPolicy { warn, fail };
/// How a forward pass treats evidence: `exact` keeps it with probability
/// p(evidence | parents) (logic sampling), `support` keeps it whenever that
/// is positive and leaves the reweighting to the Gibbs sweeps.
enum class EvidenceAcceptance { exact, support };

struct SamplerConfig {
  std::size_t m = 1000;           ///< consistent histories (chains)
  std::size_t h = 0;              ///< Gibbs sweeps per chain
  std::uint64_t seed = 0;
  std::size_t max_rejections = 100000;  ///< per accepted forward sample
  ScanOrder scan = ScanOrder::fixed;
  Retain retain = Retain::last;
  ReachabilityPolicy reachability = ReachabilityPolicy::warn;
  EvidenceAcceptance acceptance = EvidenceAcceptance::exact;
  unsigned threads = 1;
};

class ReachabilityFailure : public Error {
 public:
  using Error::Error;
};

/// Optional per-variable restriction of discrete domains (e.g. from a revised
/// Emc). Acts as extra evidence "X in D".
class DomainMask {
 public:
  DomainMask() = default;
  explicit DomainMask(std::size_t n) : allowed_(n) {}

  void restrict(VariableId v, std::vector<std::uint8_t> allowed) {
    if (v.index >= allowed_.size()) allowed_.resize(v.index + 1);
    allowed_[v.index] = std::move(allowed);
  }
  bool restricted(VariableId v) const {
    return v.index < allowed_.size() && !allowed_[v.index].empty();
  }
  bool allows(VariableId v, std::size_t state) const {
    if (!restricted(v)) return true;
    return state < allowed_[v.index].size() && allowed_[v.index][state] != 0;
  }

 private:
  std::vector<std::vector<std::uint8_t>> allowed_;
};

/// Mask carrying the Emc's current domains.
inline DomainMask domain_mask(const ValidatedDiagram& d, const Emc& e) {
  DomainMask mask(d.size());
  for (std::size_t i = 0; i < e.variable_count(); ++i) {
    std::vector<std::uint8_t> allowed(e.full_size(i), 0);
    for (auto s : e.domain(i)) allowed[s] = 1;
    mask.restrict(e.variable(i), std::move(allowed));
  }
  return mask;
}

struct Diagnostics {
  std::uint64_t forward_attempts = 0;
  std::uint64_t rejections = 0;
  /// Per variable: Gibbs draws, and draws that changed the value.
  std::vector<std::uint64_t> gibbs_updates;
  std::vector<std::uint64_t> gibbs_moves;
  /// nullopt when the chain check does not apply to the diagram.
  std::optional<bool> reachability_ok;
  std::vector<std::string> warnings;

  double rejection_rate() const {
    return forward_attempts == 0 ? 0.0
                                 : static_cast<double>(rejections) /
                                       static_cast<double>(forward_attempts);
  }
  bool reachability_warning() const { return reachability_ok.has_value() && !*reachability_ok; }

  void merge(const Diagnostics& o) {
    forward_attempts += o.forward_attempts;
    rejections += o.rejections;
    if (gibbs_updates.size() < o.gibbs_updates.size()) {
      gibbs_updates.resize(o.gibbs_updates.size());
      gibbs_moves.resize(o.gibbs_moves.size());
    }
    for (std::size_t i = 0; i < o.gibbs_updates.size(); ++i) {
      gibbs_updates[i] += o.gibbs_updates[i];
      gibbs_moves[i] += o.gibbs_moves[i];
    }
  }
};

struct SampleSet {
  std::vector<Configuration> histories;
  Diagnostics diagnostics;
};

namespace detail {

/// Unnormalized local conditional of discrete `v` written into `w`:
/// p(y | parents) * prod over children c of p(c | parents(c)) with v = y.
inline double local_weights(const ValidatedDiagram& d, VariableId v, Configuration& cfg,
                            const DomainMask* mask, std::vector<double>& w) {
  const auto card = d.cardinality(v);
  w.assign(card, 0.0);
  const double saved = cfg.raw(v);
  const auto children = d.children(v);
  double total = 0.0;
  for (std::size_t s = 0; s < card; ++s) {
    if (mask && !mask->allows(v, s)) continue;
    cfg.set_state(v, s);
    double p = d.density(v, cfg);
    for (std::size_t c = 0; c < children.size() && p > 0.0; ++c) p *= d.density(children[c], cfg);
    w[s] = p;
    total += p;
  }
  cfg.set_raw(v, saved);
  return total;
}

enum class ContinuousUpdate { redraw, conjugate, hold };

/// Position of `parent` in `child`'s parent list.
inline std::size_t parent_position(const ValidatedDiagram& d, VariableId child, VariableId parent) {
  const auto ps = d.parents(child);
  return static_cast<std::size_t>(std::find(ps.begin(), ps.end(), parent) - ps.begin());
}

/// A Gaussian-linear node whose children are all Gaussian-linear and affine in
/// it has a Gaussian full conditional.
inline bool has_gaussian_conditional(const ValidatedDiagram& d, VariableId v) {
  if (!std::holds_alternative<GaussianLinear>(d.node(v).dist)) return false;
  for (auto c : d.children(v)) {
    const auto* gl = std::get_if<GaussianLinear>(&d.node(c).dist);
    if (!gl) return false;
    const auto pos = parent_position(d, c, v);
    for (const auto& term : gl->terms)
      if (std::count(term.factors.begin(), term.factors.end(), pos) > 1) return false;
  }
  return true;
}

/// Draws a value for `v` from p(v | parents). Returns NaN when the mask
/// leaves no admissible discrete value.
inline double draw_conditional(const ValidatedDiagram& d, VariableId v, const Configuration& cfg,
                               Rng& rng, const DomainMask* mask, std::vector<double>& scratch) {
  const Node& n = d.node(v);
  auto categorical = [&](auto&& prob) {
    const auto card = d.cardinality(v);
    scratch.assign(card, 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < card; ++s) {
      if (mask && !mask->allows(v, s)) continue;
      scratch[s] = prob(s);
      total += scratch[s];
    }
    if (!(total > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(sample_categorical(scratch, total, rng));
  };
  return std::visit(
      Overloaded{
          [&](const Cpt& c) {
            const auto& row = c.rows[d.row(v, cfg)];
            return categorical([&](std::size_t s) { return row[s]; });
          },
          [&](const ShiftedExponential& se) {
            const auto r = d.row(v, cfg);
            return se.shift[r] + std::exponential_distribution<double>(se.rate[r])(rng);
          },
          [&](const TwoPhase& tp) {
            const auto r = d.row(v, cfg);
            double t = tp.shift[r] + std::exponential_distribution<double>(tp.rate0[r])(rng);
            if (tp.gate[r]) t += std::exponential_distribution<double>(tp.rate1[r])(rng);
            return t;
          },
          [&](const GaussianLinear& gl) {
            return std::normal_distribution<double>(d.gaussian_mean(v, gl, cfg), gl.sigma)(rng);
          },
          [&](const SurvivalTransition& st) {
            const bool was_alive = cfg.state(n.parents[0]) == 1;
            const double stay =
                was_alive ? families::survival_probability(
                                st.infection_rate, st.step,
                                families::interpolate_knots(st.knots, cfg.real(n.parents[1])))
                          : 0.0;
            return categorical([&](std::size_t s) { return s == 1 ? stay : 1.0 - stay; });
          },
      },
      n.dist);
}

/// Exact Gaussian full conditional of a Gaussian-linear node.
inline double draw_gaussian_conditional(const ValidatedDiagram& d, VariableId v, Configuration& cfg,
                                        Rng& rng) {
  const auto& gl = std::get<GaussianLinear>(d.node(v).dist);
  const double prior_var = gl.sigma * gl.sigma;
  double precision = 1.0 / prior_var;
  double linear = d.gaussian_mean(v, gl, cfg) / prior_var;
  const double saved = cfg.raw(v);
  for (auto c : d.children(v)) {
    const auto& cgl = std::get<GaussianLinear>(d.node(c).dist);
    cfg.set_real(v, 0.0);
    const double intercept = d.gaussian_mean(c, cgl, cfg);
    cfg.set_real(v, 1.0);
    const double slope = d.gaussian_mean(c, cgl, cfg) - intercept;
    const double var = cgl.sigma * cgl.sigma;
    precision += slope * slope / var;
    linear += slope * (cfg.real(c) - intercept) / var;
  }
  cfg.set_raw(v, saved);
  return std::normal_distribution<double>(linear / precision, 1.0 / std::sqrt(precision))(rng);
}

/// Precomputed per-(diagram, evidence) sweep structure.
struct SweepPlan {
  std::vector<VariableId> free;  // topological order
  std::vector<ContinuousUpdate> update;  // per variable index
  std::vector<std::uint8_t> observed;
  std::vector<std::string> held;

  SweepPlan(const ValidatedDiagram& d, const Evidence& ev)
      : update(d.size(), ContinuousUpdate::hold), observed(d.size(), 0) {
    for (const auto& e : ev) observed[e.var.index] = 1;
    for (auto v : d.topological_order()) {
      if (observed[v.index]) continue;
      free.push_back(v);
      if (d.is_discrete(v)) continue;
      if (d.children(v).empty()) update[v.index] = ContinuousUpdate::redraw;
      else if (has_gaussian_conditional(d, v)) update[v.index] = ContinuousUpdate::conjugate;
      else held.push_back(d.name(v));
    }
  }
};

struct Scratch {
  std::vector<double> weights;
  std::vector<VariableId> order;
};

inline void sweep(const ValidatedDiagram& d, const SweepPlan& plan, Configuration& cfg, Rng& rng,
                  ScanOrder scan, const DomainMask* mask, Scratch& scratch, Diagnostics& diag) {
  const std::vector<VariableId>* order = &plan.free;
  if (scan == ScanOrder::random) {
    scratch.order = plan.free;
    std::shuffle(scratch.order.begin(), scratch.order.end(), rng);
    order = &scratch.order;
  }
  for (auto v : *order) {
    if (d.is_discrete(v)) {
      const double total = local_weights(d, v, cfg, mask, scratch.weights);
      if (!(total > 0.0)) throw BlanketInconsistency(d.name(v));
      const auto old = cfg.state(v);
      const auto s = sample_categorical(scratch.weights, total, rng);
      cfg.set_state(v, s);
      ++diag.gibbs_updates[v.index];
      if (s != old) ++diag.gibbs_moves[v.index];
      continue;
    }
    switch (plan.update[v.index]) {
      case ContinuousUpdate::redraw:
        cfg.set_real(v, draw_conditional(d, v, cfg, rng, mask, scratch.weights));
        break;
      case ContinuousUpdate::conjugate:
        cfg.set_real(v, draw_gaussian_conditional(d, v, cfg, rng));
        break;
      case ContinuousUpdate::hold:
        continue;
    }
    ++diag.gibbs_updates[v.index];
    ++diag.gibbs_moves[v.index];
  }
}

inline Diagnostics empty_diagnostics(std::size_t n) {
  Diagnostics diag;
  diag.gibbs_updates.assign(n, 0);
  diag.gibbs_moves.assign(n, 0);
  return diag;
}

}  // namespace detail

/// Rejects evidence that no sampler could honor: values outside the mask or
/// zero prior mass on an observed orphan.
inline void check_evidence(const ValidatedDiagram& d, const Evidence& ev, const DomainMask* mask = nullptr) {
  Configuration cfg(d.size());
  ev.apply(cfg);
  for (const auto& e : ev) {
    if (e.var.index >= d.size()) throw ModelError("evidence on unknown variable");
    if (d.is_discrete(e.var)) {
      if (e.value < 0 || e.value >= static_cast<double>(d.cardinality(e.var)) ||
          e.value != std::floor(e.value))
        throw DomainError("evidence on '" + d.name(e.var) + "' is not a state index");
      if (mask && !mask->allows(e.var, static_cast<std::size_t>(e.value)))
        throw InfeasibleError("evidence on '" + d.name(e.var) + "' lies outside its revised domain");
    }
    if (d.parents(e.var).empty() && !(d.density(e.var, cfg) > 0.0))
      throw InfeasibleError("evidence on '" + d.name(e.var) + "' has zero prior probability");
  }
}

/// Normalized p(y | Markov blanket) over the node's (possibly masked) domain.
inline std::vector<double> gibbs_local_conditional(const ValidatedDiagram& d, VariableId v,
                                                   const Configuration& cfg,
                                                   const DomainMask* mask = nullptr) {
  if (!d.is_discrete(v)) throw DomainError("'" + d.name(v) + "' is not discrete");
  Configuration work = cfg;
  if (!work.assigned(v)) work.set_state(v, 0);
  std::vector<double> w;
  const double total = detail::local_weights(d, v, work, mask, w);
  if (!(total > 0.0)) throw BlanketInconsistency(d.name(v));
  for (auto& x : w) x /= total;
  return w;
}

namespace detail {

/// Per evidence node, an upper bound on its mass or density at the observed
/// value over all parent values. Discrete nodes use 1, so a pass survives
/// with exactly p(evidence | sampled parents).
struct EvidenceBounds {
  std::vector<double> bound;

  EvidenceBounds(const ValidatedDiagram& d, const Evidence& ev) : bound(d.size(), 1.0) {
    for (const auto& e : ev) {
      if (d.is_discrete(e.var)) continue;
      const double t = e.value;
      auto max_over = [](std::size_t n, auto&& f) {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r) m = std::max(m, f(r));
        return m;
      };
      bound[e.var.index] = std::visit(
          Overloaded{
              [&](const ShiftedExponential& se) {
                return max_over(se.rate.size(), [&](std::size_t r) {
                  return families::shifted_exponential_pdf(t, se.rate[r], se.shift[r]);
                });
              },
              [&](const TwoPhase& tp) {
                return max_over(tp.rate0.size(), [&](std::size_t r) {
                  return tp.gate[r] ? families::hypoexponential_pdf(t, tp.rate0[r], tp.rate1[r], tp.shift[r])
                                    : families::shifted_exponential_pdf(t, tp.rate0[r], tp.shift[r]);
                });
              },
              [&](const GaussianLinear& gl) { return families::gaussian_pdf(0.0, 0.0, gl.sigma); },
              [](const auto&) { return 1.0; },
          },
          d.node(e.var).dist);
    }
  }
};

inline std::optional<Configuration> forward_pass(const ValidatedDiagram& d, const Evidence& ev, Rng& rng,
                                                 const DomainMask* mask, EvidenceAcceptance acceptance,
                                                 const EvidenceBounds& bounds, std::vector<double>& scratch) {
  Configuration cfg(d.size());
  ev.apply(cfg);
  for (auto v : d.topological_order()) {
    if (ev.contains(v)) {
      const double p = d.density(v, cfg);
      if (!(p > 0.0)) return std::nullopt;
      // Orphan evidence is a constant factor; it is clamped, never tested.
      if (acceptance == EvidenceAcceptance::exact && !d.parents(v).empty() &&
          !(uniform01(rng) * bounds.bound[v.index] < p))
        return std::nullopt;
      continue;
    }
    const double x = draw_conditional(d, v, cfg, rng, nullptr, scratch);
    if (mask && d.is_discrete(v) && !mask->allows(v, static_cast<std::size_t>(x))) return std::nullopt;
    cfg.set_raw(v, x);
  }
  return cfg;
}

}  // namespace detail

/// One forward (ancestral) pass. Free variables are drawn from p(. | parents)
/// in topological order, evidence nodes are clamped.
///
/// The pass is rejected (nullopt) when an evidence node has zero mass or
/// density given its sampled parents, or a masked variable draws an excluded
/// value. Under exact acceptance an evidence node with parents and mass p
/// additionally survives only with probability p (density over its bound when
/// continuous), which makes accepted passes exact posterior draws. Parentless
/// evidence contributes a constant factor and is only clamped.
inline std::optional<Configuration> forward_attempt(const ValidatedDiagram& d, const Evidence& ev, Rng& rng,
                                                    const DomainMask* mask = nullptr,
                                                    EvidenceAcceptance acceptance = EvidenceAcceptance::exact) {
  std::vector<double> scratch;
  return detail::forward_pass(d, ev, rng, mask, acceptance, detail::EvidenceBounds(d, ev), scratch);
}

/// Repeats forward_attempt until one is accepted; throws
/// RejectionBudgetExceeded after `config.max_rejections` rejections.
inline Configuration forward_sample(const ValidatedDiagram& d, const Evidence& ev, const SamplerConfig& config,
                                    Rng& rng, const DomainMask* mask = nullptr, Diagnostics* diag = nullptr) {
  const detail::EvidenceBounds bounds(d, ev);
  std::vector<double> scratch;
  std::uint64_t attempts = 0, rejected = 0;
  auto record = [&] {
    if (diag) {
      diag->forward_attempts += attempts;
      diag->rejections += rejected;
    }
  };
  for (;;) {
    ++attempts;
    auto cfg = detail::forward_pass(d, ev, rng, mask, config.acceptance, bounds, scratch);
    if (cfg) {
      record();
      return std::move(*cfg);
    }
    if (++rejected >= config.max_rejections) {
      record();
      throw RejectionBudgetExceeded(attempts, rejected);
    }
  }
}

/// One sweep over the free variables. Discrete variables are redrawn from
/// their local conditional; continuous ones per the family rules above.
inline Configuration gibbs_sweep(const ValidatedDiagram& d, const Evidence& ev, Configuration cfg, Rng& rng,
                                 ScanOrder scan = ScanOrder::fixed, const DomainMask* mask = nullptr) {
  detail::SweepPlan plan(d, ev);
  detail::Scratch scratch;
  auto diag = detail::empty_diagnostics(d.size());
  detail::sweep(d, plan, cfg, rng, scan, mask, scratch, diag);
  return cfg;
}

/// `sweeps` Gibbs sweeps from `start` with no forward seeding. Returns the
/// state after every sweep.
inline std::vector<Configuration> gibbs_trace(const ValidatedDiagram& d, const Evidence& ev, Configuration start,
                                              std::size_t sweeps, Rng& rng, ScanOrder scan = ScanOrder::fixed,
                                              const DomainMask* mask = nullptr) {
  ev.apply(start);
  if (!(joint_density(d, start) > 0.0))
    throw InfeasibleError("Gibbs start configuration has zero density");
  detail::SweepPlan plan(d, ev);
  detail::Scratch scratch;
  auto diag = detail::empty_diagnostics(d.size());
  std::vector<Configuration> out;
  out.reserve(sweeps);
  for (std::size_t t = 0; t < sweeps; ++t) {
    detail::sweep(d, plan, start, rng, scan, mask, scratch, diag);
    out.push_back(start);
  }
  return out;
}

/// Reachability of Gibbs on the diagram's embedded chain, after restricting
/// domains to evidence and mask and pruning unsupported values. nullopt when
/// the diagram has no extractable chain.
inline std::optional<bool> chain_reachability(const ValidatedDiagram& d, const Evidence& ev,
                                              const DomainMask* mask = nullptr) {
  const auto chain = infer_chain(d);
  if (chain.size() < 2) return std::nullopt;
  Emc e = extract_emc(d, chain);
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (auto x = ev.value(chain[i])) e.restrict_to(i, {static_cast<std::size_t>(*x)});
    if (mask && mask->restricted(chain[i]))
      for (std::size_t s = 0; s < e.full_size(i); ++s)
        if (!mask->allows(chain[i], s)) e.remove(i, s);
  }
  revise_g(e, RevisionOptions{.bidirectional = true, .link_order = {}});
  if (e.infeasible()) return std::nullopt;
  return gibbs_reachability_ok(e);
}

/// Forward-samples m consistent seeds, then refines each with h Gibbs sweeps.
/// Chain i uses stream i of the root seed, so output does not depend on the
/// thread count.
inline SampleSet composite_sample(const ValidatedDiagram& d, const Evidence& ev, const SamplerConfig& config,
                                  const DomainMask* mask = nullptr) {
  if (config.m < 1) throw std::invalid_argument("m must be at least 1");
  if (config.max_rejections < 1) throw std::invalid_argument("max_rejections must be at least 1");
  check_evidence(d, ev, mask);

  SampleSet out;
  out.diagnostics = detail::empty_diagnostics(d.size());
  detail::SweepPlan plan(d, ev);
  if (config.h > 0) {
    out.diagnostics.reachability_ok = chain_reachability(d, ev, mask);
    if (out.diagnostics.reachability_warning()) {
      if (config.reachability == ReachabilityPolicy::fail)
        throw ReachabilityFailure(
            "embedded chain is not completely connected; Gibbs moves cannot reach every history");
      out.diagnostics.warnings.push_back(
          "embedded chain is not completely connected: Gibbs moves alone cannot reach every "
          "history, mixing across components relies on the forward seeds");
    }
    for (const auto& name : plan.held)
      out.diagnostics.warnings.push_back(fmt::format(
          "continuous variable '{}' has observed or non-conjugate children and keeps its forward-sampled value",
          name));
  }

  const std::size_t per_chain = config.retain == Retain::all ? std::max<std::size_t>(config.h, 1) : 1;
  std::vector<std::vector<Configuration>> chains(config.m);
  std::vector<Diagnostics> chain_diag(config.m);
  std::vector<std::exception_ptr> errors(config.m);

  auto run_chain = [&](std::size_t c) {
    try {
      Rng rng = stream_rng(config.seed, c);
      auto diag = detail::empty_diagnostics(d.size());
      detail::Scratch scratch;
      Configuration cfg = forward_sample(d, ev, config, rng, mask, &diag);
      auto& hist = chains[c];
      hist.reserve(per_chain);
      if (config.h == 0) hist.push_back(cfg);
      for (std::size_t t = 0; t < config.h; ++t) {
        detail::sweep(d, plan, cfg, rng, config.scan, mask, scratch, diag);
        if (config.retain == Retain::all || t + 1 == config.h) hist.push_back(cfg);
      }
      chain_diag[c] = std::move(diag);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(config.m)));
  if (threads == 1) {
    for (std::size_t c = 0; c < config.m; ++c) {
      run_chain(c);
      if (errors[c]) std::rethrow_exception(errors[c]);
    }
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < config.m; c += threads) run_chain(c);
      });
    pool.clear();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  out.histories.reserve(config.m * per_chain);
  for (std::size_t c = 0; c < config.m; ++c) {
    for (auto& cfg : chains[c]) out.histories.push_back(std::move(cfg));
    out.diagnostics.merge(chain_diag[c]);
  }
  return out;
}

struct Estimate {
  double probability = 0.0;
  double standard_error = 0.0;
};

/// Fraction of histories with target == state.
inline Estimate kernel_estimate(const SampleSet& s, VariableId target, std::size_t state) {
  if (s.histories.empty()) throw std::invalid_argument("empty sample set");
  std::size_t hits = 0;
  for (const auto& h : s.histories)
    if (h.state(target) == state) ++hits;
  const double n = static_cast<double>(s.histories.size());
  const double p = static_cast<double>(hits) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

/// Average over histories of the exact local conditional mass of `state`.
inline Estimate mixture_estimate(const ValidatedDiagram& d, const SampleSet& s, const Evidence& ev,
                                 VariableId target, std::size_t state, const DomainMask* mask = nullptr) {
  if (s.histories.empty()) throw std::invalid_argument("empty sample set");
  if (ev.contains(target)) throw std::invalid_argument("'" + d.name(target) + "' is observed");
  if (state >= d.cardinality(target)) return {0.0, 0.0};
  Configuration work;
  std::vector<double> w, x;
  x.reserve(s.histories.size());
  for (const auto& h : s.histories) {
    work = h;
    const double total = detail::local_weights(d, target, work, mask, w);
    if (!(total > 0.0)) throw BlanketInconsistency(d.name(target));
    x.push_back(w[state] / total);
  }
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (auto v : x) mean += v;
  mean /= n;
  double ss = 0.0;
  for (auto v : x) ss += (v - mean) * (v - mean);
  const double var = n > 1 ? ss / (n - 1) : 0.0;
  return {mean, std::sqrt(var / n)};
}

enum class Estimator { kernel, mixture };

struct TargetPosterior {
  VariableId target;
  std::string name;
  bool continuous = false;
  std::vector<std::string> labels;  // discrete targets
  std::vector<Estimate> table;
  double mean = 0.0;  // continuous targets
  double sd = 0.0;
  double mean_se = 0.0;
};

struct QueryResult {
  std::vector<TargetPosterior> targets;
  Diagnostics diagnostics;
  std::size_t m = 0;
  std::size_t h = 0;
  std::size_t histories = 0;
};

inline TargetPosterior summarize_target(const ValidatedDiagram& d, const SampleSet& s, const Evidence& ev,
                                        VariableId target, Estimator estimator, const DomainMask* mask = nullptr) {
  TargetPosterior tp;
  tp.target = target;
  tp.name = d.name(target);
  if (!d.is_discrete(target)) {
    tp.continuous = true;
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& h : s.histories) {
      sum += h.real(target);
      sum_sq += h.real(target) * h.real(target);
    }
    const double n = static_cast<double>(s.histories.size());
    tp.mean = sum / n;
    tp.sd = n > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * tp.mean * tp.mean) / (n - 1))) : 0.0;
    tp.mean_se = tp.sd / std::sqrt(n);
    return tp;
  }
  tp.labels = d.discrete_domain(target).labels;
  for (std::size_t st = 0; st < d.cardinality(target); ++st)
    tp.table.push_back(estimator == Estimator::kernel ? kernel_estimate(s, target, st)
                                                      : mixture_estimate(d, s, ev, target, st, mask));
  return tp;
}

/// Runs composite sampling once and tabulates every target's posterior.
inline QueryResult query(const ValidatedDiagram& d, const Evidence& ev, const SamplerConfig& config,
                         const std::vector<VariableId>& targets, Estimator estimator,
                         const DomainMask* mask = nullptr, SampleSet* keep = nullptr) {
  for (auto t : targets)
    if (ev.contains(t)) throw std::invalid_argument("query target '" + d.name(t) + "' is observed");
  auto samples = composite_sample(d, ev, config, mask);
  QueryResult r;
  r.m = config.m;
  r.h = config.h;
  r.histories = samples.histories.size();
  for (auto t : targets) r.targets.push_back(summarize_target(d, samples, ev, t, estimator, mask));
  r.diagnostics = samples.diagnostics;
  if (keep) *keep = std::move(samples);
  return r;
}

}  // namespace tempid
