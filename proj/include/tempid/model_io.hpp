#pragma once

// JSON model files. Layout documented in docs/model-format.md.

#include <charconv>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempid/diagram.hpp"
#include "tempid/graph.hpp"

namespace tempid {

using Json = nlohmann::ordered_json;

/// One evidence assignment before it is resolved against a diagram: a label
/// (or decimal text) or a number.
struct EvidenceItem {
  std::string variable;
  std::variant<std::string, double> value;
};

struct ModelFile {
  InfluenceDiagram diagram;
  std::vector<EvidenceItem> evidence;
};

namespace detail {

inline void require_keys(const Json& obj, std::string_view where,
                         std::initializer_list<std::string_view> required,
                         std::initializer_list<std::string_view> optional = {}) {
  if (!obj.is_object()) throw ModelError(std::string(where) + ": expected an object");
  for (auto key : required)
    if (!obj.contains(std::string(key)))
      throw ModelError(std::string(where) + ": missing key '" + std::string(key) + "'");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto k : required) known |= key == k;
    for (auto k : optional) known |= key == k;
    if (!known) throw ModelError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_as(const Json& j, std::string_view where) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string(where) + ": " + e.what());
  }
}

inline std::optional<double> parse_decimal(std::string_view text) {
  double x = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, x);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return x;
}

inline DomainSpec parse_domain(const Json& j, const std::string& where) {
  require_keys(j, where, {"kind"}, {"values", "lower"});
  const auto kind = get_as<std::string>(j.at("kind"), where + ".kind");
  if (kind == "discrete") {
    require_keys(j, where, {"kind", "values"});
    return DiscreteDomain{get_as<std::vector<std::string>>(j.at("values"), where + ".values")};
  }
  if (kind == "continuous") {
    require_keys(j, where, {"kind"}, {"lower"});
    ContinuousDomain cd;
    if (j.contains("lower")) cd.lower = get_as<double>(j.at("lower"), where + ".lower");
    return cd;
  }
  throw ModelError(where + ": unknown domain kind '" + kind + "'");
}

inline DistributionSpec parse_dist(const Json& j, const std::string& where,
                                   const std::vector<std::string>& parent_names) {
  if (!j.is_object() || !j.contains("kind")) throw ModelError(where + ": missing key 'kind'");
  const auto kind = get_as<std::string>(j.at("kind"), where + ".kind");
  auto vec = [&](const char* key) {
    return get_as<std::vector<double>>(j.at(key), where + "." + key);
  };
  if (kind == "cpt") {
    require_keys(j, where, {"kind", "table"});
    return Cpt{get_as<std::vector<std::vector<double>>>(j.at("table"), where + ".table")};
  }
  if (kind == "shifted_exponential") {
    require_keys(j, where, {"kind", "rate", "shift"});
    return ShiftedExponential{vec("rate"), vec("shift")};
  }
  if (kind == "two_phase") {
    require_keys(j, where, {"kind", "rate0", "rate1", "shift", "gate"});
    TwoPhase tp{vec("rate0"), vec("rate1"), vec("shift"), {}};
    for (bool g : get_as<std::vector<bool>>(j.at("gate"), where + ".gate"))
      tp.gate.push_back(g ? 1 : 0);
    return tp;
  }
  if (kind == "gaussian_linear") {
    require_keys(j, where, {"kind", "sigma", "terms"});
    GaussianLinear gl;
    gl.sigma = get_as<double>(j.at("sigma"), where + ".sigma");
    const auto& terms = j.at("terms");
    if (!terms.is_array()) throw ModelError(where + ".terms: expected an array");
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto tw = where + ".terms[" + std::to_string(t) + "]";
      require_keys(terms[t], tw, {"coef"}, {"factors"});
      Monomial m;
      m.coef = get_as<double>(terms[t].at("coef"), tw + ".coef");
      if (terms[t].contains("factors"))
        for (const auto& f : get_as<std::vector<std::string>>(terms[t].at("factors"), tw)) {
          auto it = std::find(parent_names.begin(), parent_names.end(), f);
          if (it == parent_names.end())
            throw ModelError(tw + ": factor '" + f + "' is not a parent of the node");
          m.factors.push_back(static_cast<std::size_t>(it - parent_names.begin()));
        }
      gl.terms.push_back(std::move(m));
    }
    return gl;
  }
  if (kind == "survival_transition") {
    require_keys(j, where, {"kind", "infection_rate", "step", "knots"});
    SurvivalTransition st;
    st.infection_rate = get_as<double>(j.at("infection_rate"), where + ".infection_rate");
    st.step = get_as<double>(j.at("step"), where + ".step");
    for (const auto& k : get_as<std::vector<std::array<double, 2>>>(j.at("knots"), where + ".knots"))
      st.knots.emplace_back(k[0], k[1]);
    return st;
  }
  throw ModelError(where + ": unknown distribution kind '" + kind + "'");
}

inline Json dist_to_json(const Node& n, const InfluenceDiagram& d) {
  return std::visit(
      Overloaded{
          [](const Cpt& c) { return Json{{"kind", "cpt"}, {"table", c.rows}}; },
          [](const ShiftedExponential& s) {
            return Json{{"kind", "shifted_exponential"}, {"rate", s.rate}, {"shift", s.shift}};
          },
          [](const TwoPhase& t) {
            std::vector<bool> gate(t.gate.begin(), t.gate.end());
            return Json{{"kind", "two_phase"}, {"rate0", t.rate0}, {"rate1", t.rate1},
                        {"shift", t.shift},    {"gate", gate}};
          },
          [&](const GaussianLinear& g) {
            Json terms = Json::array();
            for (const auto& m : g.terms) {
              std::vector<std::string> factors;
              for (auto f : m.factors) factors.push_back(d.nodes[n.parents[f].index].name);
              terms.push_back(Json{{"coef", m.coef}, {"factors", factors}});
            }
            return Json{{"kind", "gaussian_linear"}, {"sigma", g.sigma}, {"terms", terms}};
          },
          [](const SurvivalTransition& s) {
            Json knots = Json::array();
            for (auto [r, v] : s.knots) knots.push_back(Json::array({r, v}));
            return Json{{"kind", "survival_transition"},
                        {"infection_rate", s.infection_rate},
                        {"step", s.step},
                        {"knots", knots}};
          },
      },
      n.dist);
}

}  // namespace detail

/// Parses a model document. Unknown keys anywhere are errors.
inline ModelFile parse_model(const Json& j) {
  detail::require_keys(j, "model", {"variables", "nodes"}, {"evidence"});
  const auto& vars = j.at("variables");
  if (!vars.is_array()) throw ModelError("variables: expected an array");

  ModelFile mf;
  const auto n = vars.size();
  mf.diagram.nodes.resize(n);
  std::vector<bool> seen_id(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto where = "variables[" + std::to_string(i) + "]";
    detail::require_keys(vars[i], where, {"id", "name", "domain"});
    const auto id = detail::get_as<std::size_t>(vars[i].at("id"), where + ".id");
    if (id >= n || seen_id[id])
      throw ModelError(where + ": ids must be unique and dense in 0.." + std::to_string(n - 1));
    seen_id[id] = true;
    auto& node = mf.diagram.nodes[id];
    node.name = detail::get_as<std::string>(vars[i].at("name"), where + ".name");
    node.domain = detail::parse_domain(vars[i].at("domain"), where + ".domain");
  }

  const auto& nodes = j.at("nodes");
  if (!nodes.is_array()) throw ModelError("nodes: expected an array");
  std::vector<bool> has_node(n, false);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto where = "nodes[" + std::to_string(i) + "]";
    detail::require_keys(nodes[i], where, {"variable", "dist"}, {"parents"});
    const auto name = detail::get_as<std::string>(nodes[i].at("variable"), where + ".variable");
    auto v = mf.diagram.find(name);
    if (!v) throw ModelError(where + ": unknown variable '" + name + "'");
    if (has_node[v->index]) throw ModelError(where + ": second node for '" + name + "'");
    has_node[v->index] = true;
    auto& node = mf.diagram.nodes[v->index];
    std::vector<std::string> parent_names;
    if (nodes[i].contains("parents"))
      parent_names = detail::get_as<std::vector<std::string>>(nodes[i].at("parents"), where + ".parents");
    for (const auto& p : parent_names) {
      auto pv = mf.diagram.find(p);
      if (!pv) throw ModelError(where + ": unknown parent '" + p + "' of '" + name + "'");
      node.parents.push_back(*pv);
    }
    node.dist = detail::parse_dist(nodes[i].at("dist"), where + ".dist", parent_names);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!has_node[i]) throw ModelError("variable '" + mf.diagram.nodes[i].name + "' has no node entry");

  if (j.contains("evidence")) {
    const auto& ev = j.at("evidence");
    if (!ev.is_object()) throw ModelError("evidence: expected an object");
    for (const auto& [key, val] : ev.items()) {
      if (val.is_string()) mf.evidence.push_back({key, val.get<std::string>()});
      else if (val.is_number()) mf.evidence.push_back({key, val.get<double>()});
      else throw ModelError("evidence." + key + ": expected a label string or a number");
    }
  }
  return mf;
}

inline ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError(path + ": " + e.what());
  }
  return parse_model(j);
}

/// Serializes a diagram (and optional evidence) in the model-file layout.
inline Json model_to_json(const InfluenceDiagram& d, const std::vector<EvidenceItem>& evidence = {}) {
  Json out;
  Json vars = Json::array();
  Json nodes = Json::array();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& n = d.nodes[i];
    Json dom = std::visit(Overloaded{[](const DiscreteDomain& dd) {
                                       return Json{{"kind", "discrete"}, {"values", dd.labels}};
                                     },
                                     [](const ContinuousDomain& cd) {
                                       Json j{{"kind", "continuous"}};
                                       if (cd.lower) j["lower"] = *cd.lower;
                                       return j;
                                     }},
                          n.domain);
    vars.push_back(Json{{"id", i}, {"name", n.name}, {"domain", dom}});
    std::vector<std::string> parents;
    for (auto p : n.parents) parents.push_back(d.nodes[p.index].name);
    nodes.push_back(Json{{"variable", n.name}, {"parents", parents}, {"dist", detail::dist_to_json(n, d)}});
  }
  out["variables"] = vars;
  out["nodes"] = nodes;
  if (!evidence.empty()) {
    Json ev = Json::object();
    for (const auto& e : evidence)
      std::visit([&](const auto& v) { ev[e.variable] = v; }, e.value);
    out["evidence"] = ev;
  }
  return out;
}

/// Resolves labels and numbers against the diagram's domains.
inline Evidence make_evidence(const ValidatedDiagram& d, const std::vector<EvidenceItem>& items) {
  Evidence ev;
  for (const auto& item : items) {
    const auto v = d.find(item.variable);
    if (!v) throw ModelError("evidence names unknown variable '" + item.variable + "'");
    if (d.is_discrete(*v)) {
      const auto* label = std::get_if<std::string>(&item.value);
      if (!label)
        throw DomainError("evidence on discrete '" + item.variable + "' must be a state label");
      auto s = d.discrete_domain(*v).find(*label);
      if (!s) throw DomainError("'" + *label + "' is not a state of '" + item.variable + "'");
      ev.assign_raw(*v, static_cast<double>(*s));
    } else {
      double x = 0.0;
      if (const auto* num = std::get_if<double>(&item.value)) {
        x = *num;
      } else {
        auto parsed = detail::parse_decimal(std::get<std::string>(item.value));
        if (!parsed)
          throw DomainError("evidence on continuous '" + item.variable + "' must be a decimal, got '" +
                            std::get<std::string>(item.value) + "'");
        x = *parsed;
      }
      if (!std::get<ContinuousDomain>(d.node(*v).domain).contains(x))
        throw DomainError("evidence value for '" + item.variable + "' lies outside its domain");
      ev.assign_raw(*v, x);
    }
  }
  return ev;
}

/// Parses "Var=value,Var=value". Errors name the offending token.
inline std::vector<EvidenceItem> parse_evidence_text(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  std::vector<EvidenceItem> items;
  if (trim(text).empty()) return items;
  std::size_t pos = 0;
  for (;;) {
    auto comma = text.find(',', pos);
    const auto token = trim(text.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    const auto eq = token.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 == token.size())
      throw ModelError("malformed evidence token '" + std::string(token) + "' (expected Var=value)");
    items.push_back({std::string(trim(token.substr(0, eq))), std::string(trim(token.substr(eq + 1)))});
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return items;
}

/// Label of a discrete state, shortest round-trip decimal of a real.
inline Json value_to_json(const ValidatedDiagram& d, VariableId v, double raw) {
  if (d.is_discrete(v)) return d.discrete_domain(v).labels.at(static_cast<std::size_t>(raw));
  return raw;
}

inline Json configuration_to_json(const ValidatedDiagram& d, const Configuration& cfg) {
  Json j = Json::object();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const VariableId v{i};
    if (cfg.assigned(v)) j[d.name(v)] = value_to_json(d, v, cfg.raw(v));
  }
  return j;
}

inline Json evidence_to_json(const ValidatedDiagram& d, const Evidence& ev) {
  Json j = Json::object();
  for (const auto& e : ev) j[d.name(e.var)] = value_to_json(d, e.var, e.value);
  return j;
}

}  // namespace tempid
