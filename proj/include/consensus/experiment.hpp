#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "consensus/llm.hpp"
#include "consensus/state.hpp"
#include "consensus/strategy.hpp"
#include "consensus/topology.hpp"

namespace consensus {

// Invalid experiment or robot configuration; `field` names the offending
// config field (dotted path) so diagnostics can point at it.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// An agent driven by a chat model through the configured endpoint.
struct LlmAgentSpec {
  Personality personality = Personality::None;
  double temperature = 0.0;
  int retry_limit = 3;
  std::optional<std::size_t> history_window;
  friend bool operator==(const LlmAgentSpec&, const LlmAgentSpec&) = default;
};

using AgentSpec = std::variant<StrategySpec, LlmAgentSpec>;

inline constexpr std::size_t kDefaultRounds = 9;

struct ExperimentConfig {
  std::size_t experiments = 1;
  std::size_t rounds = kDefaultRounds;
  ConnectivityMatrix topology = fully_connected(2);
  std::vector<AgentSpec> agents;
  int dimension = 1;
  std::uint64_t seed = 0;
  Bounds init_range{};
  std::optional<std::vector<State>> init_states;
  bool clamp = true;
  std::optional<double> early_stop_eps;
  std::optional<ChatEndpointSpec> endpoint;
  std::string label;  // group tag carried into records (e.g. a noise profile)

  std::size_t agent_count() const { return agents.size(); }

  void validate() const {
    if (experiments < 1) throw ConfigError("experiments", "must be >= 1");
    if (agents.empty()) throw ConfigError("agents", "at least one agent is required");
    if (topology.size() != agents.size())
      throw ConfigError("topology", "size " + std::to_string(topology.size()) + " does not match agents count " +
                                        std::to_string(agents.size()));
    try {
      State::check_dimension(dimension);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("dimension", e.what());
    }
    if (!(init_range.lo <= init_range.hi) || !std::isfinite(init_range.lo) || !std::isfinite(init_range.hi))
      throw ConfigError("init_range", "must be a finite interval [lo, hi] with lo <= hi");
    if (init_states) {
      if (init_states->size() != agents.size())
        throw ConfigError("init_states", "has " + std::to_string(init_states->size()) + " entries, agents count is " +
                                             std::to_string(agents.size()));
      for (std::size_t i = 0; i < init_states->size(); ++i) {
        const auto& s = (*init_states)[i];
        if (s.dimension() != dimension)
          throw ConfigError("init_states[" + std::to_string(i) + "]", "dimension does not match");
        if (!s.is_finite() || !init_range.contains(s))
          throw ConfigError("init_states[" + std::to_string(i) + "]", "outside init_range");
      }
    }
    if (early_stop_eps && !(*early_stop_eps > 0.0)) throw ConfigError("early_stop_eps", "must be > 0");
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const std::string field = "agents[" + std::to_string(i) + "]";
      if (const auto* s = std::get_if<StrategySpec>(&agents[i])) {
        try {
          s->validate();
        } catch (const std::invalid_argument& e) {
          throw ConfigError(field, e.what());
        }
      } else {
        const auto& l = std::get<LlmAgentSpec>(agents[i]);
        if (!(l.temperature >= 0.0 && l.temperature <= 2.0)) throw ConfigError(field + ".temperature", "must lie in [0, 2]");
        if (l.retry_limit < 0) throw ConfigError(field + ".retry_limit", "must be >= 0");
        if (!endpoint) throw ConfigError("endpoint", "required by llm agent " + std::to_string(i));
      }
    }
  }
};

}  // namespace consensus
