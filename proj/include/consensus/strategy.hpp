#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "consensus/rng.hpp"
#include "consensus/state.hpp"

namespace consensus {

// Decision rules observed in LLM agents, used as a verifiable stand-in backend.
enum class StrategyKind {
  AverageIncludeSelf,
  AverageExcludeSelf,
  Suggestible,
  Stubborn,
  Erroneous,
};

inline constexpr std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::AverageIncludeSelf: return "average_include_self";
    case StrategyKind::AverageExcludeSelf: return "average_exclude_self";
    case StrategyKind::Suggestible: return "suggestible";
    case StrategyKind::Stubborn: return "stubborn";
    case StrategyKind::Erroneous: return "erroneous";
  }
  return "unknown";
}

inline std::optional<StrategyKind> parse_strategy_kind(std::string_view name) {
  for (auto k : {StrategyKind::AverageIncludeSelf, StrategyKind::AverageExcludeSelf, StrategyKind::Suggestible,
                 StrategyKind::Stubborn, StrategyKind::Erroneous})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

// Human-readable rule name, used as the reasoning line of strategy replies.
inline constexpr std::string_view rule_description(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::AverageIncludeSelf: return "I move to the average of my position and the positions I observe.";
    case StrategyKind::AverageExcludeSelf: return "I move to the average of the other agents' positions.";
    case StrategyKind::Suggestible: return "I move to the position where most other agents are.";
    case StrategyKind::Stubborn: return "I stay where I am and expect the others to come to me.";
    case StrategyKind::Erroneous: return "I move to the position I believe the others are heading to.";
  }
  return "";
}

// Noise standing in for sampling temperature: T = 0 -> 0, T = 0.7 -> this.
// A calibration constant, not a measured value.
inline constexpr double kTemperature07NoiseSigma = 1.5;

inline double noise_sigma_for_temperature(double temperature) {
  if (temperature <= 0.0) return 0.0;
  return kTemperature07NoiseSigma * temperature / 0.7;
}

struct StrategySpec {
  StrategyKind kind = StrategyKind::AverageIncludeSelf;
  double noise_sigma = 0.0;         // state units, >= 0
  double hallucination_rate = 0.0;  // Erroneous only, in [0, 1]
  StrategyKind wrapped_kind = StrategyKind::AverageIncludeSelf;  // Erroneous only

  void validate() const {
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw std::invalid_argument("noise_sigma must be a finite value >= 0");
    if (!(hallucination_rate >= 0.0 && hallucination_rate <= 1.0))
      throw std::invalid_argument("hallucination_rate must lie in [0, 1]");
    if (kind == StrategyKind::Erroneous && wrapped_kind == StrategyKind::Erroneous)
      throw std::invalid_argument("erroneous strategy cannot wrap itself");
  }

  friend bool operator==(const StrategySpec&, const StrategySpec&) = default;
};

class InvalidObservation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// What agent k sees at the start of a round. neighbor_states is ordered by
// ascending agent index.
struct Observation {
  State self_state;
  std::vector<State> neighbor_states;
  std::size_t round = 0;

  void validate() const {
    if (!self_state.is_finite()) throw InvalidObservation("self state is not finite");
    for (const auto& s : neighbor_states) {
      if (!s.is_finite()) throw InvalidObservation("neighbor state is not finite");
      if (s.dimension() != self_state.dimension()) throw InvalidObservation("neighbor state dimension mismatch");
    }
  }
};

namespace detail {

// Most frequent neighbor state; ties -> nearest to self, then lexicographically smallest.
inline State modal_neighbor(const Observation& obs) {
  const auto& ns = obs.neighbor_states;
  std::size_t best = 0, best_count = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const auto count = static_cast<std::size_t>(std::count(ns.begin(), ns.end(), ns[i]));
    bool better = count > best_count;
    if (!better && count == best_count) {
      const double di = distance(ns[i], obs.self_state), db = distance(ns[best], obs.self_state);
      better = di < db || (di == db && lexicographic_less(ns[i], ns[best]));
    }
    if (better) {
      best = i;
      best_count = count;
    }
  }
  return ns[best];
}

inline State noiseless_rule(StrategyKind kind, const Observation& obs) {
  const auto& ns = obs.neighbor_states;
  if (ns.empty()) return obs.self_state;
  switch (kind) {
    case StrategyKind::AverageIncludeSelf: {
      std::vector<State> all;
      all.reserve(ns.size() + 1);
      all.push_back(obs.self_state);
      all.insert(all.end(), ns.begin(), ns.end());
      return mean_state(all);
    }
    case StrategyKind::AverageExcludeSelf: return mean_state(ns);
    case StrategyKind::Suggestible: return modal_neighbor(obs);
    case StrategyKind::Stubborn: return obs.self_state;
    case StrategyKind::Erroneous: break;
  }
  throw std::logic_error("erroneous strategy has no noiseless rule");
}

inline State add_noise(State s, double sigma, Rng& rng) {
  if (sigma <= 0.0) return s;
  return s.map([&](double c, std::size_t) { return c + rng.normal(0.0, sigma); });
}

}  // namespace detail

// Next state of one agent. The result is not clamped; the engine clamps to
// its state range when clamping is enabled. Hallucinated targets are drawn
// uniformly from `hallucination_range`, componentwise.
inline State decide(const StrategySpec& spec, const Observation& obs, Rng& rng,
                    Bounds hallucination_range = Bounds{}) {
  obs.validate();
  switch (spec.kind) {
    case StrategyKind::Stubborn:
      return obs.self_state;
    case StrategyKind::Erroneous: {
      if (rng.bernoulli(spec.hallucination_rate))
        return obs.self_state.map(
            [&](double, std::size_t) { return rng.uniform(hallucination_range.lo, hallucination_range.hi); });
      StrategySpec inner = spec;
      inner.kind = spec.wrapped_kind;
      return decide(inner, obs, rng, hallucination_range);
    }
    default:
      return detail::add_noise(detail::noiseless_rule(spec.kind, obs), spec.noise_sigma, rng);
  }
}

// Reply text in the canonical two-part format agents are expected to produce.
inline std::string canonical_reply(std::string_view reasoning, const State& position) {
  std::string out = "Reasoning: ";
  out += reasoning;
  out += "\nPosition: ";
  out += format_state(position);
  return out;
}

}  // namespace consensus
