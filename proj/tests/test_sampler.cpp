#include <gtest/gtest.h>

#include <map>

#include "support.hpp"
#include "tempid/tempid.hpp"

using namespace tempid;
namespace tt = tempid::testing;

namespace {

ValidatedDiagram load(const std::string& file) { return ValidatedDiagram(load_model_file(tt::data_path(file)).diagram); }

/// A -> B -> C with identity tables.
ValidatedDiagram identity_chain() {
  InfluenceDiagram d;
  const DiscreteDomain bin{{"0", "1"}};
  const Cpt id{{{1, 0}, {0, 1}}};
  const auto a = d.add({"A", bin, {}, Cpt{{{0.5, 0.5}}}});
  const auto b = d.add({"B", bin, {a}, id});
  d.add({"C", bin, {b}, id});
  return ValidatedDiagram(d);
}

SamplerConfig config(std::size_t m, std::size_t h, std::uint64_t seed) {
  SamplerConfig c;
  c.m = m;
  c.h = h;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(LocalConditional, LeafEqualsCptRow) {
  const auto d = load("chain3.json");
  Configuration cfg(3);
  cfg.set_state(d.id("X0"), 0);
  cfg.set_state(d.id("X1"), 1);
  const auto w = gibbs_local_conditional(d, d.id("X2"), cfg);
  EXPECT_EQ(w, std::get<Cpt>(d.node(d.id("X2")).dist).rows[1]);
}

TEST(LocalConditional, InfectionX0GivenBlanket) {
  const infection::Params p;
  const ValidatedDiagram d(infection::build_model(p));
  for (std::size_t x1 : {3u, 4u}) {
    Configuration cfg(d.size());
    cfg.set_state(d.id("X0"), 1);
    cfg.set_state(d.id("X1"), x1);
    cfg.set_state(d.id("X2"), x1 == 3 ? 4 : 5);
    cfg.set_real(d.id("T_obs"), 3.0);
    const auto w = gibbs_local_conditional(d, d.id("X0"), cfg);
    std::vector<double> expected(infection::kStates, 0.0);
    double total = 0.0;
    for (std::size_t x0 = 0; x0 < infection::kStates; ++x0) {
      const double jump = p.prior[x0] * p.transition[x0][x1];
      if (jump > 0.0) expected[x0] = jump * infection::tobs_density(p, 3.0, x0, x1);
      total += expected[x0];
    }
    for (std::size_t x0 = 0; x0 < infection::kStates; ++x0) EXPECT_NEAR(w[x0], expected[x0] / total, 1e-14);
  }
}

TEST(LocalConditional, MiddleNodeMatchesEnumeration) {
  const auto d = load("chain3.json");
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t c = 0; c < 3; ++c) {
      Evidence ev;
      ev.set_state(d.id("X0"), a);
      ev.set_state(d.id("X2"), c);
      std::vector<double> oracle;
      try {
        oracle = enumeration_oracle(d, ev).marginals[1];
      } catch (const InfeasibleError&) {
        continue;
      }
      Configuration cfg(3);
      ev.apply(cfg);
      const auto w = gibbs_local_conditional(d, d.id("X1"), cfg);
      for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(w[s], oracle[s], 1e-12);
    }
}

TEST(LocalConditional, AllZeroBlanketNamesNode) {
  const auto d = identity_chain();
  Configuration cfg(3);
  cfg.set_state(d.id("A"), 0);
  cfg.set_state(d.id("B"), 0);
  cfg.set_state(d.id("C"), 1);
  try {
    gibbs_local_conditional(d, d.id("B"), cfg);
    FAIL() << "expected BlanketInconsistency";
  } catch (const BlanketInconsistency& e) {
    EXPECT_EQ(e.node(), "B");
  }
}

TEST(Gibbs, NoFreeVariablesIsIdentity) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X0"), 0);
  ev.set_state(d.id("X1"), 1);
  ev.set_state(d.id("X2"), 2);
  Configuration start(3);
  Rng rng(1);
  const auto trace = gibbs_trace(d, ev, start, 5, rng);
  for (const auto& c : trace) {
    EXPECT_EQ(c.state(d.id("X0")), 0u);
    EXPECT_EQ(c.state(d.id("X1")), 1u);
    EXPECT_EQ(c.state(d.id("X2")), 2u);
  }
}

TEST(Gibbs, SingleFreeVariableDrawsItsConditional) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X0"), 0);
  ev.set_state(d.id("X2"), 1);
  const auto exact = enumeration_oracle(d, ev).marginals[1];
  Configuration start(3);
  start.set_state(d.id("X1"), 0);
  Rng rng(11);
  const std::size_t n = 200000;
  const auto trace = gibbs_trace(d, ev, start, n, rng);
  std::vector<double> freq(3, 0.0);
  for (const auto& c : trace) freq[c.state(d.id("X1"))] += 1.0 / n;
  for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(freq[s], exact[s], 4.0 * std::sqrt(exact[s] * (1 - exact[s]) / n) + 1e-12);
}

TEST(Gibbs, TwoNodeChainConvergesToJoint) {
  const auto d = load("connected.json");
  const auto x1 = d.id("X1"), x2 = d.id("X2");
  std::map<std::pair<std::size_t, std::size_t>, double> freq;
  const std::size_t chains = 20000;
  for (std::size_t c = 0; c < chains; ++c) {
    Rng rng = stream_rng(5, c);
    Configuration start(2);
    start.set_state(x1, 2);
    start.set_state(x2, 2);
    const auto trace = gibbs_trace(d, {}, start, 500, rng);
    freq[{trace.back().state(x1), trace.back().state(x2)}] += 1.0 / chains;
  }
  double tv = 0.0;
  Configuration cfg(2);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      cfg.set_state(x1, a);
      cfg.set_state(x2, b);
      tv += 0.5 * std::abs(freq[{a, b}] - joint_density(d, cfg));
    }
  EXPECT_LT(tv, 0.02);
}

TEST(Gibbs, StartMustHavePositiveDensity) {
  const auto d = identity_chain();
  Configuration start(3);
  start.set_state(VariableId{0}, 0);
  start.set_state(VariableId{1}, 1);
  start.set_state(VariableId{2}, 1);
  Rng rng(1);
  EXPECT_THROW(gibbs_trace(d, {}, start, 1, rng), InfeasibleError);
}

TEST(Forward, NoEvidenceNeverRejects) {
  const auto d = load("chain3.json");
  const auto s = composite_sample(d, {}, config(500, 0, 3));
  EXPECT_EQ(s.diagnostics.forward_attempts, 500u);
  EXPECT_EQ(s.diagnostics.rejections, 0u);
}

TEST(Forward, OrphanEvidenceIsClampedNotRejected) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X0"), 2);
  const auto s = composite_sample(d, ev, config(500, 0, 3));
  EXPECT_EQ(s.diagnostics.rejections, 0u);
  for (const auto& h : s.histories) EXPECT_EQ(h.state(d.id("X0")), 2u);
}

TEST(Forward, ShiftedSupportDecidesRejection) {
  infection::Params p;
  Rng rng(4);
  for (double shift : {0.0, 3.5}) {
    p.shift[0][4] = shift;
    const ValidatedDiagram d(infection::build_model(p));
    Evidence ev;
    ev.set_real(d.id("T_obs"), 3.0);
    std::size_t path_15 = 0, rejected = 0;
    for (int i = 0; i < 5000; ++i) {
      const auto with_ev = forward_attempt(d, ev, rng, nullptr, EvidenceAcceptance::support);
      if (!with_ev) {
        ++rejected;
        continue;
      }
      if (with_ev->state(d.id("X0")) == 0) ++path_15;
    }
    if (shift < 3.0) {
      EXPECT_GT(path_15, 0u);
    } else {
      EXPECT_EQ(path_15, 0u);
      EXPECT_GT(rejected, 0u);
    }
  }
}

TEST(Forward, ZeroMassEvidenceExhaustsBudget) {
  const auto d = load("locked.json");
  Evidence ev;
  ev.set_state(d.id("X2"), 1);  // X2 = 2 forces X1 = 3
  ev.set_state(d.id("X1"), 0);
  auto c = config(1, 0, 1);
  c.max_rejections = 50;
  EXPECT_THROW(composite_sample(d, ev, c), RejectionBudgetExceeded);
}

TEST(Forward, ZeroPriorOrphanEvidenceIsInfeasible) {
  const ValidatedDiagram d(infection::build_model({}));
  Evidence ev;
  ev.set_state(d.id("X0"), 3);
  EXPECT_THROW(composite_sample(d, ev, config(1, 0, 1)), InfeasibleError);
}

TEST(Composite, HZeroMatchesForwardSampling) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X0"), 1);
  const auto c = config(50, 0, 99);
  const auto s = composite_sample(d, ev, c);
  for (std::size_t i = 0; i < c.m; ++i) {
    Rng rng = stream_rng(c.seed, i);
    EXPECT_EQ(s.histories[i], forward_sample(d, ev, c, rng));
  }
}

TEST(Composite, DeterministicDiagramGivesUniqueConfiguration) {
  InfluenceDiagram raw;
  const DiscreteDomain bin{{"0", "1"}};
  const auto a = raw.add({"A", bin, {}, Cpt{{{0, 1}}}});
  raw.add({"B", bin, {a}, Cpt{{{1, 0}, {1, 0}}}});
  const ValidatedDiagram d(raw);
  const auto s = composite_sample(d, {}, config(1, 0, 5));
  ASSERT_EQ(s.histories.size(), 1u);
  EXPECT_EQ(s.histories[0].state(VariableId{0}), 1u);
  EXPECT_EQ(s.histories[0].state(VariableId{1}), 0u);
}

TEST(Composite, ThreadCountDoesNotChangeOutput) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X2"), 2);
  auto c = config(300, 4, 17);
  c.retain = Retain::all;
  const auto one = composite_sample(d, ev, c);
  c.threads = 3;
  const auto three = composite_sample(d, ev, c);
  EXPECT_EQ(one.histories, three.histories);
  EXPECT_EQ(one.histories.size(), 300u * 4u);
  EXPECT_EQ(one.diagnostics.forward_attempts, three.diagnostics.forward_attempts);
}

TEST(Composite, UnreachableChainWarnsOrFails) {
  const auto d = load("locked.json");
  auto c = config(20, 3, 2);
  const auto s = composite_sample(d, {}, c);
  EXPECT_TRUE(s.diagnostics.reachability_warning());
  EXPECT_FALSE(s.diagnostics.warnings.empty());
  c.reachability = ReachabilityPolicy::fail;
  EXPECT_THROW(composite_sample(d, {}, c), ReachabilityFailure);
  const auto ok = composite_sample(load("connected.json"), {}, c);
  EXPECT_FALSE(ok.diagnostics.reachability_warning());
}

TEST(Composite, MaskedEvidenceIsInfeasible) {
  const auto d = load("chain3.json");
  DomainMask mask(d.size());
  mask.restrict(d.id("X2"), {1, 1, 0});
  Evidence ev;
  ev.set_state(d.id("X2"), 2);
  EXPECT_THROW(composite_sample(d, ev, config(5, 0, 1), &mask), InfeasibleError);
}

TEST(Estimators, KernelBasics) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X0"), 1);
  const auto s = composite_sample(d, ev, config(400, 0, 8));
  EXPECT_DOUBLE_EQ(kernel_estimate(s, d.id("X0"), 1).probability, 1.0);
  double total = 0.0;
  for (std::size_t v = 0; v < 3; ++v) total += kernel_estimate(s, d.id("X1"), v).probability;
  EXPECT_NEAR(total, 1.0, 1e-12);
  // X0 = b cannot jump to X1 = a.
  EXPECT_EQ(kernel_estimate(s, d.id("X1"), 0).probability, 0.0);
}

TEST(Estimators, MixtureOnSingleNodeIsPrior) {
  InfluenceDiagram raw;
  raw.add({"A", DiscreteDomain{{"a", "b", "c"}}, {}, Cpt{{{0.2, 0.3, 0.5}}}});
  const ValidatedDiagram d(raw);
  const auto s = composite_sample(d, {}, config(10, 0, 1));
  EXPECT_DOUBLE_EQ(mixture_estimate(d, s, {}, VariableId{0}, 1).probability, 0.3);
  EXPECT_NEAR(mixture_estimate(d, s, {}, VariableId{0}, 1).standard_error, 0.0, 1e-15);
  const auto oracle = enumeration_oracle(d, {});
  EXPECT_EQ(oracle.marginals[0], (std::vector<double>{0.2, 0.3, 0.5}));
}

TEST(Estimators, MixtureMatchesEnumerationOnChain) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X2"), 2);
  const auto oracle = enumeration_oracle(d, ev);
  const auto s = composite_sample(d, ev, config(5000, 3, 21));
  for (auto target : {d.id("X0"), d.id("X1")}) {
    double total = 0.0;
    for (std::size_t v = 0; v < 3; ++v) {
      const auto e = mixture_estimate(d, s, ev, target, v);
      total += e.probability;
      EXPECT_NEAR(e.probability, oracle.marginals[target.index][v], std::max(3 * e.standard_error, 1e-12));
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Estimators, MaskedValueEstimatesZero) {
  const auto d = load("chain3.json");
  DomainMask mask(d.size());
  mask.restrict(d.id("X1"), {1, 1, 0});
  const auto s = composite_sample(d, {}, config(300, 2, 4), &mask);
  EXPECT_EQ(kernel_estimate(s, d.id("X1"), 2).probability, 0.0);
  EXPECT_EQ(mixture_estimate(d, s, {}, d.id("X1"), 2, &mask).probability, 0.0);
}

TEST(Query, ReconstructionMatchesEnumeration) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X0"), 0);
  ev.set_state(d.id("X2"), 1);
  const auto oracle = enumeration_oracle(d, ev);
  const auto q = query(d, ev, config(4000, 2, 6), {d.id("X1")}, Estimator::mixture);
  ASSERT_EQ(q.targets.size(), 1u);
  for (std::size_t v = 0; v < 3; ++v)
    EXPECT_NEAR(q.targets[0].table[v].probability, oracle.marginals[1][v],
                std::max(3 * q.targets[0].table[v].standard_error, 1e-12));
}

TEST(Query, PredictionWithAncestorEvidenceIsForwardMonteCarlo) {
  const auto d = load("chain3.json");
  Evidence ev;
  ev.set_state(d.id("X0"), 2);
  const auto q = query(d, ev, config(4000, 0, 6), {d.id("X2")}, Estimator::kernel);
  EXPECT_EQ(q.diagnostics.rejections, 0u);
  const auto oracle = enumeration_oracle(d, ev);
  for (std::size_t v = 0; v < 3; ++v)
    EXPECT_NEAR(q.targets[0].table[v].probability, oracle.marginals[2][v],
                std::max(4 * q.targets[0].table[v].standard_error, 1e-12));
  EXPECT_THROW(query(d, ev, config(10, 0, 6), {d.id("X0")}, Estimator::kernel), std::invalid_argument);
}

TEST(Oracle, PointMassAndRandomDiagram) {
  const auto det = identity_chain();
  Evidence ev;
  ev.set_state(det.id("A"), 1);
  const auto r = enumeration_oracle(det, ev);
  EXPECT_EQ(r.marginals[2], (std::vector<double>{0.0, 1.0}));
  EXPECT_DOUBLE_EQ(r.evidence_probability, 0.5);

  std::mt19937_64 gen(3);
  InfluenceDiagram raw;
  do raw = tt::random_discrete_diagram(gen, 4, 3);
  while (raw.size() != 4);
  const ValidatedDiagram d(raw);
  const auto oracle = enumeration_oracle(d, {});
  for (std::size_t i = 0; i < d.size(); ++i) {
    double total = 0.0;
    for (auto x : oracle.marginals[i]) total += x;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  const auto s = composite_sample(d, {}, config(20000, 1, 12));
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t v = 0; v < d.cardinality(VariableId{i}); ++v) {
      const auto e = mixture_estimate(d, s, {}, VariableId{i}, v);
      EXPECT_NEAR(e.probability, oracle.marginals[i][v], std::max(4 * e.standard_error, 1e-12));
    }
}
