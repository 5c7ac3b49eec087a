#pragma once

// Therapy-monitoring model. Bone-marrow dysfunction follows
//   r_i = a0 + r_{i-1} (a1 + a2 d_i) + e_i,   e_i ~ N(0, sigma^2)
// under drug doses d_i in {0, 1}, and the patient survives step i with
// probability exp(-k T (1 - s(r_{i-1}))). The coefficient vector a has a
// Gaussian prior; given R and D its posterior is a linear-regression one.

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tempid/graph.hpp"
#include "tempid/rng.hpp"
#include "tempid/sampler.hpp"

namespace tempid::toxicity {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Params {
  std::array<double, 3> alpha_mean{1.0, 0.6, 0.2};
  std::array<std::array<double, 3>, 3> alpha_cov{{{0.25, 0.0, 0.0}, {0.0, 0.04, 0.0}, {0.0, 0.0, 0.04}}};
  double sigma = 0.3;
  double infection_rate = 0.5;  ///< k, bouts per month
  double step = 1.0;            ///< T, months per step
  double w = 10.0;
  /// (r, s(r)) knots, r increasing, s non-increasing in (0, 1].
  std::vector<std::array<double, 2>> knots{{0.0, 1.0}, {5.0, 0.7}, {10.0, 0.1}};
  double r0 = 1.0;
  double clamp_epsilon = 1e-6;

  Vec3 mean() const { return Vec3(alpha_mean.data()); }
  Mat3 cov() const {
    Mat3 c;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c(i, j) = alpha_cov[i][j];
    return c;
  }
};

inline void to_json(nlohmann::json& j, const Params& p) {
  j = {{"alpha_mean", p.alpha_mean}, {"alpha_cov", p.alpha_cov}, {"sigma", p.sigma},
       {"infection_rate", p.infection_rate}, {"step", p.step}, {"w", p.w},
       {"knots", p.knots}, {"r0", p.r0}, {"clamp_epsilon", p.clamp_epsilon}};
}

/// Missing keys keep their defaults; unknown keys are errors.
inline void from_json(const nlohmann::json& j, Params& p) {
  for (const auto& [key, value] : j.items()) {
    if (key == "alpha_mean") value.get_to(p.alpha_mean);
    else if (key == "alpha_cov") value.get_to(p.alpha_cov);
    else if (key == "sigma") value.get_to(p.sigma);
    else if (key == "infection_rate") value.get_to(p.infection_rate);
    else if (key == "step") value.get_to(p.step);
    else if (key == "w") value.get_to(p.w);
    else if (key == "knots") value.get_to(p.knots);
    else if (key == "r0") value.get_to(p.r0);
    else if (key == "clamp_epsilon") value.get_to(p.clamp_epsilon);
    else throw ModelError("unknown toxicity parameter '" + key + "'");
  }
}

inline void check_params(const Params& p) {
  if (!(p.sigma > 0 && p.infection_rate > 0 && p.step > 0 && p.w > 0))
    throw ModelError("sigma, infection_rate, step and w must be positive");
  const Mat3 c = p.cov();
  if (!c.isApprox(c.transpose(), 1e-12)) throw ModelError("alpha covariance is not symmetric");
  if (Eigen::LLT<Mat3>(c).info() != Eigen::Success) throw ModelError("alpha covariance is not positive definite");
  if (p.knots.size() < 2) throw ModelError("survival curve needs at least two knots");
  for (std::size_t i = 0; i < p.knots.size(); ++i) {
    const auto [r, s] = p.knots[i];
    if (!(s > 0.0 && s <= 1.0)) throw ModelError("survival knot value outside (0, 1]");
    if (i > 0 && (r <= p.knots[i - 1][0] || s > p.knots[i - 1][1]))
      throw ModelError("survival knots must increase in r and not increase in s(r)");
  }
  if (!(p.r0 > 0.0 && p.r0 < p.w)) throw ModelError("r0 outside (0, w)");
}

inline Params load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open parameter file '" + path + "'");
  Params p;
  try {
    p = nlohmann::json::parse(in).get<Params>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("parameter file '" + path + "': " + e.what());
  }
  check_params(p);
  return p;
}

inline std::vector<std::pair<double, double>> knot_pairs(const Params& p) {
  std::vector<std::pair<double, double>> out;
  for (const auto& k : p.knots) out.emplace_back(k[0], k[1]);
  return out;
}

/// s(r) interpolated from the knots.
inline double survival_curve(const Params& p, double r) { return families::interpolate_knots(knot_pairs(p), r); }

/// p(alive at i | alive at i-1, r_{i-1} = r).
inline double survival_prob(double r, const Params& p) {
  if (!(r > 0.0 && r < p.w)) throw DomainError("dysfunction level outside (0, w)");
  return families::survival_probability(p.infection_rate, p.step, survival_curve(p, r));
}

/// Node ids of a built model with horizon n.
struct Layout {
  std::array<VariableId, 3> alpha;
  std::vector<VariableId> r;  // R_0..R_n
  std::vector<VariableId> d;  // d[i-1] = D_i
  std::vector<VariableId> x;  // X_0..X_n
};

inline Layout layout(std::size_t n) {
  Layout l;
  std::size_t next = 0;
  for (auto& a : l.alpha) a = VariableId{next++};
  l.r.push_back(VariableId{next++});
  l.x.push_back(VariableId{next++});
  for (std::size_t i = 1; i <= n; ++i) {
    l.d.push_back(VariableId{next++});
    l.r.push_back(VariableId{next++});
    l.x.push_back(VariableId{next++});
  }
  return l;
}

/// The multivariate prior on alpha written as a0, a1 | a0, a2 | a0, a1.
inline InfluenceDiagram build_model(const Params& p, std::size_t n) {
  check_params(p);
  const Vec3 mu = p.mean();
  const Mat3 s = p.cov();
  InfluenceDiagram d;
  std::array<VariableId, 3> alpha;
  const ContinuousDomain real_line{};
  for (int j = 0; j < 3; ++j) {
    GaussianLinear gl;
    std::vector<VariableId> parents;
    double var = s(j, j);
    double intercept = mu(j);
    if (j > 0) {
      const Eigen::MatrixXd prev = s.topLeftCorner(j, j);
      const Eigen::VectorXd cross = s.block(0, j, j, 1);
      const Eigen::VectorXd b = prev.llt().solve(cross);
      var -= cross.dot(b);
      for (int q = 0; q < j; ++q) {
        intercept -= b(q) * mu(q);
        gl.terms.push_back({b(q), {static_cast<std::size_t>(q)}});
        parents.push_back(alpha[q]);
      }
    }
    gl.terms.insert(gl.terms.begin(), Monomial{intercept, {}});
    gl.sigma = std::sqrt(var);
    alpha[j] = d.add({"alpha" + std::to_string(j), real_line, parents, gl});
  }

  const DiscreteDomain status{{"dead", "alive"}};
  const DiscreteDomain dose{{"0", "1"}};
  const SurvivalTransition surv{p.infection_rate, p.step, knot_pairs(p)};
  auto r_prev = d.add({"R0", real_line, {}, GaussianLinear{{{p.r0, {}}}, p.sigma}});
  auto x_prev = d.add({"X0", status, {}, Cpt{{{0.0, 1.0}}}});
  for (std::size_t i = 1; i <= n; ++i) {
    const auto idx = std::to_string(i);
    const auto di = d.add({"D" + idx, dose, {}, Cpt{{{0.5, 0.5}}}});
    // Parents: alpha0, alpha1, alpha2, R_{i-1}, D_i.
    GaussianLinear gl{{{1.0, {0}}, {1.0, {1, 3}}, {1.0, {2, 3, 4}}}, p.sigma};
    const auto ri = d.add({"R" + idx, real_line, {alpha[0], alpha[1], alpha[2], r_prev, di}, gl});
    const auto xi = d.add({"X" + idx, status, {x_prev, r_prev}, surv});
    r_prev = ri;
    x_prev = xi;
  }
  return d;
}

/// Observed past: r[0..k] and doses d[0..k-1] (d[i-1] is D_i).
struct History {
  std::vector<double> r;
  std::vector<int> d;

  std::size_t steps() const { return d.size(); }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(History, r, d)

inline void check_history(const History& h, const Params& p) {
  if (h.d.empty()) throw DomainError("history needs at least one step");
  if (h.r.size() != h.d.size() + 1) throw DomainError("history needs one more dysfunction value than doses");
  for (auto x : h.r)
    if (!(x > 0.0 && x < p.w)) throw DomainError("observed dysfunction level outside (0, w)");
  for (auto x : h.d)
    if (x != 0 && x != 1) throw DomainError("doses must be 0 or 1");
}

/// Simulates k steps from a fixed alpha. Levels are not clamped.
inline History simulate_history(const Params& p, const Vec3& alpha, const std::vector<int>& plan, Rng& rng) {
  History h;
  h.d = plan;
  h.r.push_back(p.r0);
  std::normal_distribution<double> noise(0.0, p.sigma);
  for (auto dose : plan) {
    const double prev = h.r.back();
    h.r.push_back(alpha(0) + prev * (alpha(1) + alpha(2) * dose) + noise(rng));
  }
  return h;
}

struct Gaussian3 {
  Vec3 mean;
  Mat3 cov;
};

/// Bayesian linear regression with design rows [1, r_{i-1}, r_{i-1} d_i].
inline Gaussian3 conjugate_posterior(const Params& p, const History& h) {
  const Mat3 prior_precision = p.cov().inverse();
  Mat3 precision = prior_precision;
  Vec3 linear = prior_precision * p.mean();
  const double inv_var = 1.0 / (p.sigma * p.sigma);
  for (std::size_t i = 1; i <= h.steps(); ++i) {
    const Vec3 x(1.0, h.r[i - 1], h.r[i - 1] * h.d[i - 1]);
    precision += inv_var * x * x.transpose();
    linear += inv_var * h.r[i] * x;
  }
  Gaussian3 g;
  g.cov = precision.inverse();
  g.mean = g.cov * linear;
  return g;
}

struct AlphaPosterior {
  Gaussian3 closed_form;
  Gaussian3 sampled;
  Vec3 mean_se;  ///< Monte Carlo standard error of the sampled mean
  SampleSet samples;
};

/// Posterior of alpha given the history, in closed form and via the generic
/// composite sampler on the diagram.
inline AlphaPosterior learn_alpha_posterior(const Params& p, const History& h, const SamplerConfig& config) {
  check_history(h, p);
  const auto k = h.steps();
  const ValidatedDiagram d(build_model(p, k));
  const auto l = layout(k);
  Evidence ev;
  for (std::size_t i = 0; i <= k; ++i) {
    ev.set_real(l.r[i], h.r[i]);
    ev.set_state(l.x[i], 1);
  }
  for (std::size_t i = 0; i < k; ++i) ev.set_state(l.d[i], static_cast<std::size_t>(h.d[i]));

  AlphaPosterior out;
  out.closed_form = conjugate_posterior(p, h);
  // Fifty observed levels make exact forward acceptance hopeless; the seeds
  // only need positive density because the alpha sweeps are exact.
  auto c = config;
  c.acceptance = EvidenceAcceptance::support;
  out.samples = composite_sample(d, ev, c);
  const auto& hs = out.samples.histories;
  const double m = static_cast<double>(hs.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& c : hs) mean += Vec3(c.real(l.alpha[0]), c.real(l.alpha[1]), c.real(l.alpha[2]));
  mean /= m;
  Mat3 cov = Mat3::Zero();
  for (const auto& c : hs) {
    const Vec3 e = Vec3(c.real(l.alpha[0]), c.real(l.alpha[1]), c.real(l.alpha[2])) - mean;
    cov += e * e.transpose();
  }
  cov /= std::max(1.0, m - 1.0);
  out.sampled = {mean, cov};
  out.mean_se = (cov.diagonal() / m).cwiseSqrt();
  return out;
}

struct SurvivalForecast {
  std::vector<double> alive;           ///< P(X_{k+j} = alive), j = 1..plan length
  std::vector<double> standard_error;  ///< Monte Carlo SE per step
  std::uint64_t clamped = 0;           ///< dysfunction draws moved back into (0, w)
};

/// Monte Carlo rollouts from (alive, r_k) under `plan` with alpha drawn from
/// `posterior`. Each rollout contributes its product of survival factors.
inline SurvivalForecast predict_survival(const Params& p, const Gaussian3& posterior, double r_k,
                                         const std::vector<int>& plan, std::size_t rollouts, std::uint64_t seed) {
  check_params(p);
  SurvivalForecast out;
  const auto n = plan.size();
  out.alive.assign(n, 0.0);
  out.standard_error.assign(n, 0.0);
  if (n == 0) return out;
  if (rollouts < 2) throw std::invalid_argument("need at least two rollouts");
  const Mat3 chol = posterior.cov.llt().matrixL();
  const auto surv = knot_pairs(p);
  const double lo = p.clamp_epsilon, hi = p.w - p.clamp_epsilon;
  std::vector<double> sum_sq(n, 0.0);
  for (std::size_t m = 0; m < rollouts; ++m) {
    Rng rng = stream_rng(seed, m);
    std::normal_distribution<double> std_normal;
    const Vec3 z(std_normal(rng), std_normal(rng), std_normal(rng));
    const Vec3 a = posterior.mean + chol * z;
    double r = r_k, alive = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (r < lo || r > hi) {
        r = std::clamp(r, lo, hi);
        ++out.clamped;
      }
      alive *= families::survival_probability(p.infection_rate, p.step, families::interpolate_knots(surv, r));
      out.alive[j] += alive;
      sum_sq[j] += alive * alive;
      r = a(0) + r * (a(1) + a(2) * plan[j]) + p.sigma * std_normal(rng);
    }
  }
  const double m = static_cast<double>(rollouts);
  for (std::size_t j = 0; j < n; ++j) {
    const double mean = out.alive[j] / m;
    const double var = std::max(0.0, (sum_sq[j] - m * mean * mean) / (m - 1));
    out.alive[j] = mean;
    out.standard_error[j] = std::sqrt(var / m);
  }
  return out;
}

}  // namespace tempid::toxicity
