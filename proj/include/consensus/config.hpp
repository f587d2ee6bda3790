#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "consensus/experiment.hpp"
#include "consensus/records.hpp"

namespace consensus {

// Command-line values that take precedence over the config file.
struct ConfigOverrides {
  std::optional<std::size_t> experiments{};
  std::optional<std::size_t> agents{};
  std::optional<std::size_t> rounds{};
  std::optional<std::uint64_t> seed{};
};

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<std::string_view> known) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
  }
}

inline std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

template <typename T>
T get(const json& j, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t> || std::is_same_v<T, int>) {
      if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (!std::is_same_v<T, int>)
        if (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0)
          throw ConfigError(path, "expected a non-negative integer");
    }
    if constexpr (std::is_same_v<T, double>)
      if (!j.is_number()) throw ConfigError(path, "expected a number");
    return j.get<T>();
  } catch (const json::type_error&) {
    throw ConfigError(path, "has the wrong type");
  }
}

template <typename T>
std::optional<T> get_opt(const json& j, std::string_view key, const std::string& path) {
  const std::string k(key);
  if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
  return get<T>(j.at(k), join(path, key));
}

inline State parse_state(const json& j, int dimension, const std::string& path) {
  try {
    return state_from_json(j, dimension);
  } catch (const SchemaError& e) {
    throw ConfigError(path, e.what());
  }
}

inline StrategyKind parse_kind(const json& j, const std::string& path) {
  const auto name = get<std::string>(j, path);
  auto kind = parse_strategy_kind(name);
  if (!kind) throw ConfigError(path, "unknown strategy kind '" + name + "'");
  return *kind;
}

inline AgentSpec parse_agent(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const auto backend = get_opt<std::string>(j, "backend", path).value_or("strategy");
  if (backend == "strategy") {
    reject_unknown(j, path, {"backend", "kind", "noise_sigma", "temperature", "hallucination_rate", "wrapped_kind"});
    if (!j.contains("kind")) throw ConfigError(join(path, "kind"), "missing");
    StrategySpec s;
    s.kind = parse_kind(j.at("kind"), join(path, "kind"));
    if (auto t = get_opt<double>(j, "temperature", path)) s.noise_sigma = noise_sigma_for_temperature(*t);
    if (auto n = get_opt<double>(j, "noise_sigma", path)) s.noise_sigma = *n;
    s.hallucination_rate = get_opt<double>(j, "hallucination_rate", path).value_or(0.0);
    if (j.contains("wrapped_kind")) s.wrapped_kind = parse_kind(j.at("wrapped_kind"), join(path, "wrapped_kind"));
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
    return s;
  }
  if (backend == "llm") {
    reject_unknown(j, path, {"backend", "personality", "temperature", "retry_limit", "history_window"});
    LlmAgentSpec l;
    if (auto p = get_opt<std::string>(j, "personality", path)) {
      auto parsed = parse_personality(*p);
      if (!parsed) throw ConfigError(join(path, "personality"), "unknown personality '" + *p + "'");
      l.personality = *parsed;
    }
    l.temperature = get_opt<double>(j, "temperature", path).value_or(0.0);
    l.retry_limit = get_opt<int>(j, "retry_limit", path).value_or(3);
    l.history_window = get_opt<std::size_t>(j, "history_window", path);
    return l;
  }
  throw ConfigError(join(path, "backend"), "must be 'strategy' or 'llm', got '" + backend + "'");
}

inline ConnectivityMatrix parse_topology(const json& j, std::size_t n, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown(j, path, {"builder", "leader", "matrix", "remove_edges", "symmetric"});
  std::optional<ConnectivityMatrix> m;
  try {
    if (j.contains("matrix")) {
      if (j.contains("builder")) throw ConfigError(path, "give either 'builder' or 'matrix', not both");
      std::vector<std::vector<bool>> rows;
      const auto& jm = j.at("matrix");
      if (!jm.is_array() || jm.empty()) throw ConfigError(join(path, "matrix"), "expected a non-empty array of rows");
      for (std::size_t i = 0; i < jm.size(); ++i) {
        const std::string row_path = join(path, "matrix") + "[" + std::to_string(i) + "]";
        if (!jm[i].is_array()) throw ConfigError(row_path, "expected an array");
        std::vector<bool> row;
        for (const auto& cell : jm[i]) {
          if (!cell.is_number_integer() || (cell.get<long long>() != 0 && cell.get<long long>() != 1))
            throw ConfigError(row_path, "entries must be 0 or 1");
          row.push_back(cell.get<long long>() == 1);
        }
        rows.push_back(std::move(row));
      }
      m = ConnectivityMatrix::from_rows(rows);
    } else {
      const auto builder = get_opt<std::string>(j, "builder", path).value_or("full");
      if (builder == "full") {
        m = fully_connected(n);
      } else if (builder == "leader_follower") {
        m = leader_follower(n, get_opt<std::size_t>(j, "leader", path).value_or(0));
      } else if (builder == "chain") {
        m = chain(n);
      } else {
        throw ConfigError(join(path, "builder"), "unknown builder '" + builder + "'");
      }
    }
    const bool symmetric = get_opt<bool>(j, "symmetric", path).value_or(true);
    if (j.contains("remove_edges")) {
      for (const auto& e : j.at("remove_edges")) {
        if (!e.is_array() || e.size() != 2) throw ConfigError(join(path, "remove_edges"), "entries must be [i, j]");
        m = remove_edge(*m, get<std::size_t>(e[0], join(path, "remove_edges")),
                        get<std::size_t>(e[1], join(path, "remove_edges")), symmetric);
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(path, e.what());
  }
  return *m;
}

inline ChatEndpointSpec parse_endpoint(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown(j, path, {"base_url", "api_key_env", "timeout_seconds", "model"});
  ChatEndpointSpec e;
  if (auto v = get_opt<std::string>(j, "base_url", path)) e.base_url = *v;
  if (auto v = get_opt<std::string>(j, "api_key_env", path)) e.api_key_env = *v;
  if (auto v = get_opt<double>(j, "timeout_seconds", path)) e.timeout_seconds = *v;
  if (auto v = get_opt<std::string>(j, "model", path)) e.model = *v;
  if (!(e.timeout_seconds > 0.0)) throw ConfigError(join(path, "timeout_seconds"), "must be > 0");
  return e;
}

}  // namespace config_detail

// Builds an experiment config from its JSON form. Agents are given either as
// an explicit "agents" list or as one "agent" template replicated
// "agent_count" times; only the template form can be resized by overrides.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const ConfigOverrides& overrides = {}) {
  using namespace config_detail;
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  reject_unknown(j, "", {"experiments", "rounds", "seed", "dimension", "label", "init_range", "init_states", "clamp",
                         "early_stop_eps", "topology", "agents", "agent", "agent_count", "endpoint"});
  ExperimentConfig c;
  c.experiments = overrides.experiments.value_or(get_opt<std::size_t>(j, "experiments", "").value_or(1));
  c.rounds = overrides.rounds.value_or(get_opt<std::size_t>(j, "rounds", "").value_or(kDefaultRounds));
  c.seed = overrides.seed.value_or(get_opt<std::uint64_t>(j, "seed", "").value_or(0));
  c.dimension = get_opt<int>(j, "dimension", "").value_or(1);
  c.label = get_opt<std::string>(j, "label", "").value_or("");
  c.clamp = get_opt<bool>(j, "clamp", "").value_or(true);
  c.early_stop_eps = get_opt<double>(j, "early_stop_eps", "");
  if (j.contains("init_range")) {
    const auto& r = j.at("init_range");
    if (!r.is_array() || r.size() != 2) throw ConfigError("init_range", "expected [lo, hi]");
    c.init_range = {get<double>(r[0], "init_range[0]"), get<double>(r[1], "init_range[1]")};
  }

  if (j.contains("agents") && j.contains("agent"))
    throw ConfigError("agents", "give either 'agents' or 'agent' + 'agent_count', not both");
  if (j.contains("agents")) {
    const auto& list = j.at("agents");
    if (!list.is_array()) throw ConfigError("agents", "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i)
      c.agents.push_back(parse_agent(list[i], "agents[" + std::to_string(i) + "]"));
    if (overrides.agents && *overrides.agents != c.agents.size())
      throw ConfigError("agents", "lists " + std::to_string(c.agents.size()) + " agents but --agents asks for " +
                                      std::to_string(*overrides.agents) + "; use 'agent' + 'agent_count' to resize");
  } else if (j.contains("agent")) {
    const auto count = overrides.agents.value_or(get_opt<std::size_t>(j, "agent_count", "").value_or(0));
    if (count == 0) throw ConfigError("agent_count", "must be >= 1");
    c.agents.assign(count, parse_agent(j.at("agent"), "agent"));
  } else {
    throw ConfigError("agents", "missing");
  }

  if (j.contains("topology")) {
    c.topology = parse_topology(j.at("topology"), c.agents.size(), "topology");
  } else {
    c.topology = fully_connected(c.agents.size());
  }
  if (j.contains("init_states")) {
    const auto& s = j.at("init_states");
    if (!s.is_array()) throw ConfigError("init_states", "expected an array");
    std::vector<State> states;
    for (std::size_t i = 0; i < s.size(); ++i)
      states.push_back(parse_state(s[i], c.dimension, "init_states[" + std::to_string(i) + "]"));
    c.init_states = std::move(states);
  }
  if (j.contains("endpoint")) c.endpoint = parse_endpoint(j.at("endpoint"), "endpoint");
  c.validate();
  return c;
}

// Canonical JSON of a resolved config; stable across runs and platforms.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : c.agents) {
    if (const auto* s = std::get_if<StrategySpec>(&a)) {
      agents.push_back({{"backend", "strategy"},
                        {"kind", to_string(s->kind)},
                        {"noise_sigma", s->noise_sigma},
                        {"hallucination_rate", s->hallucination_rate},
                        {"wrapped_kind", to_string(s->wrapped_kind)}});
    } else {
      const auto& l = std::get<LlmAgentSpec>(a);
      agents.push_back({{"backend", "llm"},
                        {"personality", to_string(l.personality)},
                        {"temperature", l.temperature},
                        {"retry_limit", l.retry_limit},
                        {"history_window", l.history_window ? nlohmann::json(*l.history_window) : nlohmann::json()}});
    }
  }
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& row : c.topology.rows()) {
    nlohmann::json r = nlohmann::json::array();
    for (bool b : row) r.push_back(b ? 1 : 0);
    matrix.push_back(r);
  }
  nlohmann::json out = {{"experiments", c.experiments},
                        {"rounds", c.rounds},
                        {"seed", c.seed},
                        {"dimension", c.dimension},
                        {"label", c.label},
                        {"init_range", {c.init_range.lo, c.init_range.hi}},
                        {"clamp", c.clamp},
                        {"topology", {{"matrix", matrix}}},
                        {"agents", agents}};
  if (c.init_states) out["init_states"] = states_to_json(*c.init_states);
  if (c.early_stop_eps) out["early_stop_eps"] = *c.early_stop_eps;
  // Endpoint identity only; the API key itself is never part of a config.
  if (c.endpoint)
    out["endpoint"] = {{"base_url", c.endpoint->base_url},
                       {"api_key_env", c.endpoint->api_key_env},
                       {"timeout_seconds", c.endpoint->timeout_seconds},
                       {"model", c.endpoint->model}};
  return out;
}

// FNV-1a 64 of the canonical config JSON, as 16 hex digits.
inline std::string config_fingerprint(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Parses a JSON file, turning syntax errors into line/column diagnostics.
inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("", path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
}

}  // namespace consensus
