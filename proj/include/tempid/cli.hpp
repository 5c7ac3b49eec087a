#pragma once

// Command-line front end. `run` is the whole program minus main(), so tests
// drive it with captured streams.

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tempid/emc.hpp"
#include "tempid/model_io.hpp"
#include "tempid/models/infection.hpp"
#include "tempid/models/toxicity.hpp"
#include "tempid/oracle.hpp"
#include "tempid/sampler.hpp"

namespace tempid::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInvalidModel = 2, kInfeasible = 3, kRejectionBudget = 4 };

class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string output = "text";
  bool verbose = false;

  bool json() const { return output == "json"; }
};

struct SamplingFlags {
  std::size_t m = 1000;
  std::size_t h = 0;
  std::size_t max_rejections = 100000;
  std::string scan = "fixed";
  std::string retain = "last";
  std::string reachability = "warn";
  std::string acceptance = "exact";
  unsigned threads = 1;
  std::string histories;

  void add(CLI::App* app) {
    app->add_option("--m", m, "Number of consistent histories (chains)")->check(CLI::PositiveNumber);
    app->add_option("--h", h, "Gibbs sweeps per chain");
    app->add_option("--max-rejections", max_rejections, "Rejection cap per accepted forward sample")
        ->check(CLI::PositiveNumber);
    app->add_option("--scan", scan, "Gibbs scan order")->check(CLI::IsMember({"fixed", "random"}));
    app->add_option("--retain", retain, "Keep the last sweep of each chain or every sweep")
        ->check(CLI::IsMember({"last", "all"}));
    app->add_option("--reachability", reachability, "On an unreachable chain: warn or fail")
        ->check(CLI::IsMember({"warn", "fail"}));
    app->add_option("--acceptance", acceptance,
                    "Forward evidence test: exact (keep with probability p(evidence | parents)) or support "
                    "(keep whenever positive)")
        ->check(CLI::IsMember({"exact", "support"}));
    app->add_option("--threads", threads, "Worker threads (results do not depend on this)")
        ->check(CLI::PositiveNumber);
    app->add_option("--histories", histories, "Write sampled histories as JSON lines to this file");
  }

  SamplerConfig config(std::uint64_t seed) const {
    SamplerConfig c;
    c.m = m;
    c.h = h;
    c.seed = seed;
    c.max_rejections = max_rejections;
    c.scan = scan == "random" ? ScanOrder::random : ScanOrder::fixed;
    c.retain = retain == "all" ? Retain::all : Retain::last;
    c.reachability = reachability == "fail" ? ReachabilityPolicy::fail : ReachabilityPolicy::warn;
    c.acceptance = acceptance == "support" ? EvidenceAcceptance::support : EvidenceAcceptance::exact;
    c.threads = threads;
    return c;
  }
};

struct DomainFlags {
  std::string chain;
  std::vector<std::string> exclude;
  std::vector<std::string> restrict;
  bool bidirectional = false;

  void add(CLI::App* app) {
    app->add_option("--chain", chain, "Comma-separated chain variables (default: inferred)");
    app->add_option("--exclude", exclude, "Excluded values, e.g. \"X0:4,5,*\" (';' separates variables)");
    app->add_option("--restrict", restrict, "Allowed values, e.g. \"X2:5\" (';' separates variables)");
    app->add_flag("--bidirectional", bidirectional, "Prune successors as well as predecessors");
  }
  bool any() const { return !exclude.empty() || !restrict.empty(); }
};

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    auto next = s.find(sep, pos);
    auto piece = s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
    while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
    if (!piece.empty()) out.emplace_back(piece);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::uint64_t resolve_seed(const Globals& g) {
  if (g.seed) return *g.seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

inline ValidatedDiagram load_validated(const std::string& path, std::vector<EvidenceItem>* file_evidence = nullptr) {
  auto mf = load_model_file(path);
  if (file_evidence) *file_evidence = mf.evidence;
  return ValidatedDiagram(std::move(mf.diagram));
}

/// Model-file evidence overlaid with command-line evidence.
inline Evidence resolve_evidence(const ValidatedDiagram& d, const std::vector<EvidenceItem>& from_file,
                                 const std::string& text) {
  Evidence ev = make_evidence(d, from_file);
  std::vector<EvidenceItem> items;
  try {
    items = parse_evidence_text(text);
  } catch (const ModelError& e) {
    throw UsageError(e.what());
  }
  for (const auto& item : items) {
    Evidence one;
    try {
      one = make_evidence(d, {item});
    } catch (const Error& e) {
      throw UsageError(fmt::format("evidence token '{}': {}", item.variable, e.what()));
    }
    for (const auto& e : one) ev.assign_raw(e.var, e.value);
  }
  return ev;
}

inline std::vector<VariableId> resolve_chain(const ValidatedDiagram& d, const std::string& names) {
  if (names.empty()) {
    auto chain = infer_chain(d);
    if (chain.empty()) throw UsageError("no embedded chain found; pass --chain");
    return chain;
  }
  std::vector<VariableId> chain;
  for (const auto& n : split(names, ',')) {
    auto v = d.find(n);
    if (!v) throw UsageError("--chain names unknown variable '" + n + "'");
    chain.push_back(*v);
  }
  return chain;
}

/// Applies "X0:4,5,*" style specs to the Emc, removing (exclude) or keeping
/// (restrict) the listed labels.
inline void apply_value_specs(Emc& e, const std::vector<std::string>& specs, bool keep) {
  for (const auto& spec : specs)
    for (const auto& part : split(spec, ';')) {
      const auto colon = part.find(':');
      if (colon == std::string::npos) throw UsageError("malformed value list '" + part + "' (expected Var:v1,v2)");
      const auto name = part.substr(0, colon);
      std::optional<std::size_t> pos;
      for (std::size_t i = 0; i < e.variable_count(); ++i)
        if (e.name(i) == name) pos = i;
      if (!pos) throw UsageError("'" + name + "' is not a chain variable");
      std::vector<std::size_t> states;
      for (const auto& label : split(part.substr(colon + 1), ',')) {
        const auto& labels = e.labels(*pos);
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw UsageError("'" + label + "' is not a value of '" + name + "'");
        states.push_back(static_cast<std::size_t>(it - labels.begin()));
      }
      if (keep) e.restrict_to(*pos, states);
      else
        for (auto s : states) e.remove(*pos, s);
    }
}

inline std::string domain_text(const Emc& e, std::size_t i) {
  std::vector<std::string> labels;
  for (auto s : e.domain(i)) labels.push_back(e.labels(i)[s]);
  return "{" + fmt::format("{}", fmt::join(labels, ",")) + "}";
}

inline Json domain_json(const Emc& e, std::size_t i) {
  Json arr = Json::array();
  for (auto s : e.domain(i)) arr.push_back(e.labels(i)[s]);
  return arr;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write '" + path + "'");
  f << content;
}

inline void write_histories(const std::string& path, const ValidatedDiagram& d, const SampleSet& s,
                            const SamplerConfig& c) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write '" + path + "'");
  const std::size_t per_chain = c.retain == Retain::all ? std::max<std::size_t>(c.h, 1) : 1;
  for (std::size_t i = 0; i < s.histories.size(); ++i) {
    Json line;
    line["chain"] = i / per_chain;
    if (c.retain == Retain::all) line["sweep"] = i % per_chain + 1;
    line["values"] = configuration_to_json(d, s.histories[i]);
    f << line.dump() << '\n';
  }
}

inline Json diagnostics_json(const ValidatedDiagram* d, const Diagnostics& diag) {
  Json j;
  j["forward_attempts"] = diag.forward_attempts;
  j["rejections"] = diag.rejections;
  j["rejection_rate"] = diag.rejection_rate();
  j["reachability_warning"] = diag.reachability_warning();
  if (d) {
    Json g = Json::object();
    for (std::size_t i = 0; i < diag.gibbs_updates.size(); ++i)
      if (diag.gibbs_updates[i] > 0)
        g[d->name(VariableId{i})] = {{"updates", diag.gibbs_updates[i]},
                                     {"moves", diag.gibbs_moves[i]},
                                     {"move_rate", static_cast<double>(diag.gibbs_moves[i]) /
                                                       static_cast<double>(diag.gibbs_updates[i])}};
    j["gibbs"] = g;
  }
  j["warnings"] = diag.warnings;
  return j;
}

inline void diagnostics_text(std::ostream& out, const ValidatedDiagram& d, const Diagnostics& diag, bool verbose) {
  out << fmt::format("forward attempts: {}  rejections: {}  rejection rate: {:.4f}\n", diag.forward_attempts,
                     diag.rejections, diag.rejection_rate());
  if (!verbose) return;
  for (std::size_t i = 0; i < diag.gibbs_updates.size(); ++i)
    if (diag.gibbs_updates[i] > 0)
      out << fmt::format("gibbs {}: {} updates, {} moves ({:.4f})\n", d.name(VariableId{i}), diag.gibbs_updates[i],
                         diag.gibbs_moves[i],
                         static_cast<double>(diag.gibbs_moves[i]) / static_cast<double>(diag.gibbs_updates[i]));
}

inline void print_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

/// Mask from --exclude/--restrict after revision; nullopt when none given.
inline std::optional<DomainMask> build_mask(const ValidatedDiagram& d, const DomainFlags& flags) {
  if (!flags.any()) return std::nullopt;
  Emc e = extract_emc(d, resolve_chain(d, flags.chain));
  apply_value_specs(e, flags.restrict, true);
  apply_value_specs(e, flags.exclude, false);
  revise_g(e, RevisionOptions{.bidirectional = flags.bidirectional, .link_order = {}});
  if (e.infeasible()) throw InfeasibleError("domain restrictions leave an empty domain");
  return domain_mask(d, e);
}

// ---- subcommands -----------------------------------------------------------

inline int cmd_validate(const Globals& g, const std::string& path, std::ostream& out) {
  auto mf = load_model_file(path);
  const auto report = validate_diagram(mf.diagram);
  if (g.json()) {
    Json j;
    j["command"] = "validate";
    j["valid"] = report.ok();
    auto issues = [](const std::vector<Issue>& v) {
      Json a = Json::array();
      for (const auto& i : v) a.push_back({{"node", i.node}, {"message", i.message}});
      return a;
    };
    j["violations"] = issues(report.violations);
    j["warnings"] = issues(report.warnings);
    out << j.dump(2) << '\n';
  } else {
    out << fmt::format("{}: {} variables, {} violations, {} warnings\n", path, mf.diagram.size(),
                       report.violations.size(), report.warnings.size());
    for (const auto& v : report.violations) out << fmt::format("violation [{}]: {}\n", v.node, v.message);
    for (const auto& w : report.warnings) out << fmt::format("warning [{}]: {}\n", w.node, w.message);
  }
  return report.ok() ? kOk : kInvalidModel;
}

struct ReviseArgs {
  std::string model;
  std::string evidence;
  DomainFlags domains;
  std::string dot;
};

inline int cmd_revise(const Globals& g, const ReviseArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<EvidenceItem> file_ev;
  const auto d = load_validated(a.model, &file_ev);
  const auto ev = resolve_evidence(d, file_ev, a.evidence);
  const auto chain = resolve_chain(d, a.domains.chain);
  const Emc before = extract_emc(d, chain);
  Emc after = before;
  for (std::size_t i = 0; i < chain.size(); ++i)
    if (auto x = ev.value(chain[i])) after.restrict_to(i, {static_cast<std::size_t>(*x)});
  apply_value_specs(after, a.domains.restrict, true);
  apply_value_specs(after, a.domains.exclude, false);
  const auto result = revise_g(after, RevisionOptions{.bidirectional = a.domains.bidirectional, .link_order = {}});
  if (!a.dot.empty()) write_file(a.dot, to_dot(after));

  if (g.json()) {
    Json j;
    j["command"] = "revise";
    j["mode"] = a.domains.bidirectional ? "bidirectional" : "literal";
    j["passes"] = result.passes;
    Json vars = Json::array();
    for (std::size_t i = 0; i < chain.size(); ++i)
      vars.push_back({{"variable", before.name(i)}, {"before", domain_json(before, i)}, {"after", domain_json(after, i)}});
    j["variables"] = vars;
    Json links = Json::array();
    for (std::size_t l = 1; l <= after.link_count(); ++l)
      links.push_back({{"link", fmt::format("{}->{}", after.name(l - 1), after.name(l))},
                       {"completely_connected", after.infeasible() ? false : is_completely_connected(after, l)}});
    j["links"] = links;
    j["infeasible"] = after.infeasible();
    out << j.dump(2) << '\n';
  } else {
    out << fmt::format("revision ({}), {} passes\n", a.domains.bidirectional ? "bidirectional" : "literal",
                       result.passes);
    std::size_t width = 8;
    for (std::size_t i = 0; i < chain.size(); ++i) width = std::max(width, before.name(i).size());
    out << fmt::format("{:<{}}  {:<20}  {}\n", "variable", width, "before", "after");
    for (std::size_t i = 0; i < chain.size(); ++i)
      out << fmt::format("{:<{}}  {:<20}  {}\n", before.name(i), width, domain_text(before, i), domain_text(after, i));
    if (!after.infeasible())
      for (std::size_t l = 1; l <= after.link_count(); ++l)
        out << fmt::format("link {}->{}: {}\n", after.name(l - 1), after.name(l),
                           is_completely_connected(after, l) ? "completely connected" : "not completely connected");
  }
  if (after.infeasible()) {
    err << "error: revision left an empty domain; the evidence and exclusions are contradictory\n";
    return kInfeasible;
  }
  return kOk;
}

struct SampleArgs {
  std::string model;
  std::string evidence;
  std::vector<std::string> targets;
  std::string estimator = "mixture";
  SamplingFlags sampling;
  DomainFlags domains;
};

inline int cmd_sample(const Globals& g, const SampleArgs& a, bool is_query, std::ostream& out, std::ostream& err) {
  std::vector<EvidenceItem> file_ev;
  const auto d = load_validated(a.model, &file_ev);
  const auto ev = resolve_evidence(d, file_ev, a.evidence);
  std::vector<VariableId> targets;
  for (const auto& spec : a.targets)
    for (const auto& n : split(spec, ',')) {
      auto v = d.find(n);
      if (!v) throw UsageError("--target names unknown variable '" + n + "'");
      if (ev.contains(*v)) throw UsageError("--target '" + n + "' is observed");
      targets.push_back(*v);
    }
  if (is_query && targets.empty()) throw UsageError("query needs at least one --target");
  const auto mask = build_mask(d, a.domains);
  const DomainMask* mp = mask ? &*mask : nullptr;
  const auto seed = resolve_seed(g);
  const auto config = a.sampling.config(seed);
  const auto est = a.estimator == "kernel" ? Estimator::kernel : Estimator::mixture;

  SampleSet samples;
  QueryResult q = query(d, ev, config, targets, est, mp, &samples);
  if (!a.sampling.histories.empty()) write_histories(a.sampling.histories, d, samples, config);

  if (g.json()) {
    Json j;
    j["command"] = is_query ? "query" : "sample";
    j["seed"] = seed;
    j["m"] = config.m;
    j["h"] = config.h;
    j["histories"] = q.histories;
    j["evidence"] = evidence_to_json(d, ev);
    if (!targets.empty()) {
      j["estimator"] = a.estimator;
      Json post = Json::object();
      for (const auto& t : q.targets) {
        Json tj = Json::object();
        if (t.continuous) {
          tj = {{"mean", t.mean}, {"sd", t.sd}, {"se", t.mean_se}};
        } else {
          for (std::size_t s = 0; s < t.labels.size(); ++s)
            tj[t.labels[s]] = {{"p", t.table[s].probability}, {"se", t.table[s].standard_error}};
        }
        post[t.name] = tj;
      }
      j["posteriors"] = post;
    }
    j["diagnostics"] = diagnostics_json(&d, q.diagnostics);
    out << j.dump(2) << '\n';
  } else {
    out << fmt::format("seed: {}\n", seed);
    out << fmt::format("histories: {} (m={}, h={})\n", q.histories, config.m, config.h);
    diagnostics_text(out, d, q.diagnostics, g.verbose);
    for (const auto& t : q.targets) {
      if (t.continuous) {
        out << fmt::format("posterior {}: mean {:.6f}  sd {:.6f}  se {:.6f}\n", t.name, t.mean, t.sd, t.mean_se);
        continue;
      }
      out << fmt::format("posterior {} ({}):\n", t.name, a.estimator);
      for (std::size_t s = 0; s < t.labels.size(); ++s)
        out << fmt::format("  {:<8} {:.6f}  se {:.6f}\n", t.labels[s], t.table[s].probability,
                           t.table[s].standard_error);
    }
  }
  print_warnings(err, q.diagnostics.warnings);
  return kOk;
}

struct InfectionArgs {
  double t_obs = 3.0;
  std::string params;
  std::string estimator = "mixture";
  std::string emit_model;
  bool check = false;
  SamplingFlags sampling;
};

inline constexpr const char* kTwoPhaseNote =
    "note: the two-phase T_obs density uses the normalizing constant rate0*rate1/(rate1-rate0) of the "
    "exponential convolution; rate0*rate1/(rate0+rate1) would not integrate to 1";

inline int cmd_infection(const Globals& g, const InfectionArgs& a, std::ostream& out, std::ostream& err) {
  const auto p = a.params.empty() ? infection::Params{} : infection::load_params(a.params);
  const ValidatedDiagram d(infection::build_model(p));
  if (!a.emit_model.empty())
    write_file(a.emit_model, model_to_json(d.spec(), {{"T_obs", a.t_obs}}).dump(2) + "\n");
  if (!(a.t_obs > 0.0)) throw UsageError("--t-obs must be positive");
  Evidence ev;
  ev.set_real(d.id("T_obs"), a.t_obs);
  const auto x0 = d.id("X0");
  const auto oracle = infection::posterior_oracle(p, a.t_obs);
  const auto seed = resolve_seed(g);
  const auto config = a.sampling.config(seed);
  const auto est = a.estimator == "kernel" ? Estimator::kernel : Estimator::mixture;
  SampleSet samples;
  const auto q = query(d, ev, config, {x0}, est, nullptr, &samples);
  if (!a.sampling.histories.empty()) write_histories(a.sampling.histories, d, samples, config);
  const auto& t = q.targets.front();

  bool all_ok = true;
  std::vector<double> z(t.table.size(), 0.0);
  for (std::size_t s = 0; s < t.table.size(); ++s) {
    const double diff = std::abs(t.table[s].probability - oracle[s]);
    const double tol = std::max(3.0 * t.table[s].standard_error, 1e-12);
    z[s] = t.table[s].standard_error > 0 ? diff / t.table[s].standard_error : (diff > 1e-12 ? INFINITY : 0.0);
    if (diff > tol) all_ok = false;
  }

  if (g.json()) {
    Json j;
    j["command"] = "demo infection";
    j["seed"] = seed;
    j["t_obs"] = a.t_obs;
    j["m"] = config.m;
    j["h"] = config.h;
    j["estimator"] = a.estimator;
    Json rows = Json::object();
    for (std::size_t s = 0; s < t.table.size(); ++s)
      rows[t.labels[s]] = {{"p", t.table[s].probability}, {"se", t.table[s].standard_error}, {"oracle", oracle[s]}};
    j["posterior_X0"] = rows;
    j["exposed_to_virus_A"] = t.table[1].probability;
    if (a.check) j["check_passed"] = all_ok;
    j["note"] = kTwoPhaseNote;
    j["diagnostics"] = diagnostics_json(&d, q.diagnostics);
    out << j.dump(2) << '\n';
  } else {
    out << kTwoPhaseNote << '\n';
    out << fmt::format("seed: {}\n", seed);
    out << fmt::format("query: p(X0 | T_obs = {}) with m={}, h={}, {} estimator\n", a.t_obs, config.m, config.h,
                       a.estimator);
    diagnostics_text(out, d, q.diagnostics, g.verbose);
    out << fmt::format("  {:<6} {:>10} {:>10} {:>10} {:>8}\n", "X0", "estimate", "se", "oracle", "|d|/se");
    for (std::size_t s = 0; s < t.table.size(); ++s)
      out << fmt::format("  {:<6} {:>10.6f} {:>10.6f} {:>10.6f} {:>8.2f}\n", t.labels[s], t.table[s].probability,
                         t.table[s].standard_error, oracle[s], z[s]);
    out << fmt::format("was the patient exposed to virus A? p(X0=2 | T_obs={}) = {:.6f} (oracle {:.6f})\n", a.t_obs,
                       t.table[1].probability, oracle[1]);
    if (a.check) out << fmt::format("check: {}\n", all_ok ? "pass (all values within 3 se)" : "FAIL");
  }
  print_warnings(err, q.diagnostics.warnings);
  return kOk;
}

struct ToxicityArgs {
  std::string params;
  std::string history;
  std::string plan;
  std::size_t horizon = 0;
  std::size_t steps = 50;
  std::size_t rollouts = 10000;
  bool check = false;
  SamplingFlags sampling;
};

inline std::vector<int> load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open plan file '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    return (j.is_object() ? j.at("d") : j).get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("plan file '" + path + "': " + e.what());
  }
}

inline toxicity::History load_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open history file '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<toxicity::History>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("history file '" + path + "': " + e.what());
  }
}

inline int cmd_toxicity(const Globals& g, const ToxicityArgs& a, std::ostream& out, std::ostream& err) {
  const auto p = a.params.empty() ? toxicity::Params{} : toxicity::load_params(a.params);
  const auto seed = resolve_seed(g);
  toxicity::History hist;
  bool simulated = false;
  if (!a.history.empty()) {
    hist = load_history(a.history);
  } else {
    // Synthetic past: alternate two months on drug, one month off.
    std::vector<int> doses(a.steps);
    for (std::size_t i = 0; i < a.steps; ++i) doses[i] = i % 3 == 2 ? 0 : 1;
    Rng rng = stream_rng(seed, ~std::uint64_t{0});
    hist = toxicity::simulate_history(p, p.mean(), doses, rng);
    simulated = true;
  }
  toxicity::check_history(hist, p);
  const auto k = hist.steps();
  std::vector<int> plan;
  if (!a.plan.empty()) {
    plan = load_plan(a.plan);
    if (a.horizon != 0 && plan.size() + k != a.horizon)
      throw UsageError(fmt::format("plan has {} steps but horizon - k = {}", plan.size(), a.horizon - k));
  } else {
    const std::size_t horizon = a.horizon == 0 ? k + 12 : a.horizon;
    if (horizon < k) throw UsageError("horizon is shorter than the history");
    plan.assign(horizon - k, 1);
  }
  for (auto x : plan)
    if (x != 0 && x != 1) throw UsageError("plan doses must be 0 or 1");

  const auto config = a.sampling.config(seed);
  const auto post = toxicity::learn_alpha_posterior(p, hist, config);
  const auto forecast =
      toxicity::predict_survival(p, post.closed_form, hist.r.back(), plan, a.rollouts, splitmix64(seed));

  const toxicity::Vec3 zmean =
      ((post.sampled.mean - post.closed_form.mean).array() / post.mean_se.array()).abs().matrix();
  const double frob = (post.sampled.cov - post.closed_form.cov).norm() / post.closed_form.cov.norm();
  bool monotone = true;
  for (std::size_t j = 0; j < forecast.alive.size(); ++j) {
    if (forecast.alive[j] < 0.0 || forecast.alive[j] > 1.0) monotone = false;
    if (j > 0 && forecast.alive[j] > forecast.alive[j - 1]) monotone = false;
  }
  const bool ok = zmean.maxCoeff() <= 3.0 && frob < 0.10 && monotone;

  if (g.json()) {
    Json j;
    j["command"] = "demo toxicity";
    j["seed"] = seed;
    j["history_steps"] = k;
    j["history_simulated"] = simulated;
    j["m"] = config.m;
    j["h"] = config.h;
    auto vec = [](const toxicity::Vec3& v) { return std::vector<double>{v(0), v(1), v(2)}; };
    auto mat = [&](const toxicity::Mat3& m) {
      return std::vector<std::vector<double>>{vec(m.row(0)), vec(m.row(1)), vec(m.row(2))};
    };
    j["alpha_closed_form"] = {{"mean", vec(post.closed_form.mean)}, {"cov", mat(post.closed_form.cov)}};
    j["alpha_sampled"] = {{"mean", vec(post.sampled.mean)}, {"cov", mat(post.sampled.cov)}, {"mean_se", vec(post.mean_se)}};
    j["plan"] = plan;
    j["survival"] = forecast.alive;
    j["survival_se"] = forecast.standard_error;
    j["clamped_draws"] = forecast.clamped;
    if (a.check)
      j["check"] = {{"mean_max_z", zmean.maxCoeff()}, {"cov_relative_frobenius", frob}, {"monotone", monotone},
                    {"passed", ok}};
    j["diagnostics"] = diagnostics_json(nullptr, post.samples.diagnostics);
    out << j.dump(2) << '\n';
  } else {
    out << fmt::format("seed: {}\n", seed);
    out << fmt::format("history: {} steps ({}), last dysfunction {:.4f}\n", k, simulated ? "simulated" : "loaded",
                       hist.r.back());
    out << fmt::format("alpha posterior (m={}, h={}):\n", config.m, config.h);
    out << fmt::format("  {:<8} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "", "exact", "exact sd", "sampled", "sd",
                       "mean se");
    for (int i = 0; i < 3; ++i)
      out << fmt::format("  alpha{:<3} {:>10.5f} {:>10.5f} {:>10.5f} {:>10.5f} {:>10.5f}\n", i,
                         post.closed_form.mean(i), std::sqrt(post.closed_form.cov(i, i)), post.sampled.mean(i),
                         std::sqrt(post.sampled.cov(i, i)), post.mean_se(i));
    out << fmt::format("survival under plan ({} steps, {} rollouts):\n", plan.size(), a.rollouts);
    for (std::size_t j = 0; j < plan.size(); ++j)
      out << fmt::format("  step {:>3}  dose {}  P(alive) {:.6f}  se {:.6f}\n", k + j + 1, plan[j],
                         forecast.alive[j], forecast.standard_error[j]);
    if (forecast.clamped > 0) out << fmt::format("clamped dysfunction draws: {}\n", forecast.clamped);
    if (a.check)
      out << fmt::format("check: mean max |d|/se {:.3f}, covariance relative Frobenius error {:.4f}, monotone {}: {}\n",
                         zmean.maxCoeff(), frob, monotone ? "yes" : "no", ok ? "pass" : "FAIL");
  }
  print_warnings(err, post.samples.diagnostics.warnings);
  return kOk;
}

}  // namespace detail

/// Runs the program on `args` (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace detail;
  CLI::App app{"Temporal influence-diagram inference: chain revision and Monte Carlo queries", "tempid"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Root random seed (drawn and printed when absent)");
  app.add_option("--output", g.output, "Report format")->check(CLI::IsMember({"text", "json"}));
  app.add_flag("--verbose", g.verbose, "Print per-variable Gibbs diagnostics");

  std::string validate_model;
  auto* validate = app.add_subcommand("validate", "Check a model file");
  validate->add_option("model", validate_model, "Model file (JSON)")->required();

  ReviseArgs revise_args;
  auto* revise = app.add_subcommand("revise", "Revise the embedded chain's domains by constraint propagation");
  revise->add_option("model", revise_args.model, "Model file (JSON)")->required();
  revise->add_option("--evidence", revise_args.evidence, "Evidence as Var=value,...");
  revise_args.domains.add(revise);
  revise->add_option("--dot", revise_args.dot, "Write the revised compatibility graphs (dot) to this file");

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "Composite sampling of evidence-consistent histories");
  sample->add_option("model", sample_args.model, "Model file (JSON)")->required();
  sample->add_option("--evidence", sample_args.evidence, "Evidence as Var=value,...");
  sample_args.sampling.add(sample);
  sample_args.domains.add(sample);

  SampleArgs query_args;
  auto* query_cmd = app.add_subcommand("query", "Posterior tables for target variables");
  query_cmd->add_option("model", query_args.model, "Model file (JSON)")->required();
  query_cmd->add_option("--evidence", query_args.evidence, "Evidence as Var=value,...");
  query_cmd->add_option("--target", query_args.targets, "Target variable(s), repeatable or comma-separated");
  query_cmd->add_option("--estimator", query_args.estimator, "Posterior estimator")
      ->check(CLI::IsMember({"kernel", "mixture"}));
  query_args.sampling.add(query_cmd);
  query_args.domains.add(query_cmd);

  auto* demo = app.add_subcommand("demo", "Built-in models");
  demo->require_subcommand(1);
  InfectionArgs inf;
  inf.sampling.m = 10000;
  inf.sampling.h = 5;
  auto* infection_cmd = demo->add_subcommand("infection", "Was the patient exposed to virus A?");
  infection_cmd->add_option("--t-obs", inf.t_obs, "Observed onset time in months");
  infection_cmd->add_option("--params", inf.params, "Parameter file (JSON)");
  infection_cmd->add_option("--estimator", inf.estimator, "Posterior estimator")
      ->check(CLI::IsMember({"kernel", "mixture"}));
  infection_cmd->add_flag("--check", inf.check, "Compare against the exact posterior at 3 standard errors");
  infection_cmd->add_option("--emit-model", inf.emit_model, "Write the built model file to this path");
  inf.sampling.add(infection_cmd);

  ToxicityArgs tox;
  tox.sampling.m = 2000;
  tox.sampling.h = 200;
  auto* toxicity_cmd = demo->add_subcommand("toxicity", "Learn the dysfunction dynamics and predict survival");
  toxicity_cmd->add_option("--params", tox.params, "Parameter file (JSON)");
  toxicity_cmd->add_option("--history", tox.history, "Past history file (JSON with r and d arrays)");
  toxicity_cmd->add_option("--plan", tox.plan, "Future doses (JSON array or {\"d\": [...]})");
  toxicity_cmd->add_option("--horizon", tox.horizon, "Total steps n; the plan covers steps k+1..n");
  toxicity_cmd->add_option("--steps", tox.steps, "Length of the simulated history when --history is absent")
      ->check(CLI::PositiveNumber);
  toxicity_cmd->add_option("--rollouts", tox.rollouts, "Survival rollouts")->check(CLI::Range(2, 100000000));
  toxicity_cmd->add_flag("--check", tox.check, "Compare the sampled posterior with the closed form");
  tox.sampling.add(toxicity_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kOk;
    }
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(g, validate_model, out);
    if (*revise) return cmd_revise(g, revise_args, out, err);
    if (*sample) return cmd_sample(g, sample_args, false, out, err);
    if (*query_cmd) return cmd_sample(g, query_args, true, out, err);
    if (*infection_cmd) return cmd_infection(g, inf, out, err);
    if (*toxicity_cmd) return cmd_toxicity(g, tox, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    err << "invalid model: " << e.what() << '\n';
    return kInvalidModel;
  } catch (const ModelError& e) {
    err << "invalid model: " << e.what() << '\n';
    return kInvalidModel;
  } catch (const RejectionBudgetExceeded& e) {
    err << "error: " << e.what() << '\n';
    return kRejectionBudget;
  } catch (const InfeasibleError& e) {
    err << "contradictory evidence: " << e.what() << '\n';
    return kInfeasible;
  } catch (const BlanketInconsistency& e) {
    err << "contradictory evidence: " << e.what() << '\n';
    return kInfeasible;
  } catch (const ReachabilityFailure& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const DomainError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace tempid::cli
