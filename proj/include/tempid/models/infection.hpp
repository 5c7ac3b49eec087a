#pragma once

// Viral infection model: X0 -> X1 -> X2 over states
//   1 no virus, 2 virus A, 3 virus B, 4 viral replication, 5 final, * pad
// and the observed onset time T_obs with parents (X0, X1).
// T_obs = T0 + u * T1 where T0 is the sojourn in X0 before the jump to X1,
// T1 the sojourn in X1, and u = 1 iff X1 < 5.

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempid/graph.hpp"

namespace tempid::infection {

inline constexpr std::size_t kStates = 6;
inline const std::vector<std::string> kLabels{"1", "2", "3", "4", "5", "*"};

using Square = std::array<std::array<double, kStates>, kStates>;

struct Params {
  std::array<double, kStates> prior{0.5, 0.25, 0.25, 0.0, 0.0, 0.0};
  /// transition[i][j] = p(X_{k+1} = j | X_k = i).
  Square transition{{
      {0, 0, 0, 0, 1.0, 0},
      {0, 0, 0, 0.9, 0.1, 0},
      {0, 0, 0, 0.8, 0.2, 0},
      {0, 0, 0, 0, 1.0, 0},
      {0, 0, 0, 0, 0, 1.0},
      {0, 0, 0, 0, 0, 1.0},
  }};
  /// Sojourn in X0 given the jump (x0, x1): rate and incubation shift (months).
  Square rate0{{
      {1, 1, 1, 1, 0.2, 1},
      {1, 1, 1, 1.2, 0.8, 1},
      {1, 1, 1, 0.9, 0.5, 1},
      {1, 1, 1, 1, 1, 1},
      {1, 1, 1, 1, 1, 1},
      {1, 1, 1, 1, 1, 1},
  }};
  Square shift{{
      {0, 0, 0, 0, 0.0, 0},
      {0, 0, 0, 0.5, 0.5, 0},
      {0, 0, 0, 3.2, 1.0, 0},
      {0, 0, 0, 0, 0, 0},
      {0, 0, 0, 0, 0, 0},
      {0, 0, 0, 0, 0, 0},
  }};
  /// Sojourn rate in X1 (used when X1 < 5).
  std::array<double, kStates> rate1{1, 1, 1, 1.5, 1, 1};
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Params, prior, transition, rate0, shift, rate1)

inline Params load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open parameter file '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<Params>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("parameter file '" + path + "': " + e.what());
  }
}

inline bool gated(std::size_t x1) { return x1 < 4; }

inline InfluenceDiagram build_model(const Params& p) {
  InfluenceDiagram d;
  const DiscreteDomain dom{kLabels};
  std::vector<std::vector<double>> rows;
  for (const auto& r : p.transition) rows.emplace_back(r.begin(), r.end());

  const auto x0 = d.add({"X0", dom, {}, Cpt{{{p.prior.begin(), p.prior.end()}}}});
  const auto x1 = d.add({"X1", dom, {x0}, Cpt{rows}});
  d.add({"X2", dom, {x1}, Cpt{rows}});

  TwoPhase tp;
  for (std::size_t i = 0; i < kStates; ++i)
    for (std::size_t j = 0; j < kStates; ++j) {
      tp.rate0.push_back(p.rate0[i][j]);
      tp.rate1.push_back(p.rate1[j]);
      tp.shift.push_back(p.shift[i][j]);
      tp.gate.push_back(gated(j) ? 1 : 0);
    }
  d.add({"T_obs", ContinuousDomain{0.0}, {x0, x1}, tp});
  return d;
}

/// p(T_obs = t | X0 = x0, X1 = x1) for an allowed jump.
inline double tobs_density(const Params& p, double t, std::size_t x0, std::size_t x1) {
  if (x0 >= kStates || x1 >= kStates) throw DomainError("state index out of range");
  if (!(p.transition[x0][x1] > 0.0))
    throw DomainError("jump " + kLabels[x0] + " -> " + kLabels[x1] + " is structurally forbidden");
  if (gated(x1)) return families::hypoexponential_pdf(t, p.rate0[x0][x1], p.rate1[x1], p.shift[x0][x1]);
  return families::shifted_exponential_pdf(t, p.rate0[x0][x1], p.shift[x0][x1]);
}

/// Exact p(X0 | T_obs = t) by summing over every (x0, x1, x2) path.
inline std::array<double, kStates> posterior_oracle(const Params& p, double t_obs) {
  std::array<double, kStates> post{};
  double total = 0.0;
  for (std::size_t a = 0; a < kStates; ++a)
    for (std::size_t b = 0; b < kStates; ++b) {
      const double jump = p.prior[a] * p.transition[a][b];
      if (!(jump > 0.0)) continue;
      const double like = tobs_density(p, t_obs, a, b);
      for (std::size_t c = 0; c < kStates; ++c) {
        const double w = jump * p.transition[b][c] * like;
        post[a] += w;
        total += w;
      }
    }
  if (!(total > 0.0)) throw InfeasibleError("T_obs has zero density under every path");
  for (auto& x : post) x /= total;
  return post;
}

}  // namespace tempid::infection
