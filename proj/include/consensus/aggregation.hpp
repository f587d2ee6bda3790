#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "consensus/config.hpp"
#include "consensus/engine.hpp"
#include "consensus/state.hpp"
#include "consensus/topology.hpp"

namespace consensus {

// Single-integrator robot in the plane.
struct RobotState {
  State position{0.0, 0.0};
  State target{0.0, 0.0};
  State velocity_command{0.0, 0.0};
};

struct ControllerGains {
  double kp = 1.0;  // 1/s
  double v_max = std::numeric_limits<double>::infinity();  // units/s; infinite = no saturation
};

struct SimTimingConfig {
  double planner_period = 2.0;
  double controller_period = 0.1;
  double duration = 20.0;

  // Controller steps per planner period. Throws unless the planner period is
  // an integer multiple of the controller period.
  std::size_t steps_per_plan() const {
    const double ratio = planner_period / controller_period;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
      throw ConfigError("timing", "planner_period must be an integer multiple of controller_period");
    return static_cast<std::size_t>(rounded);
  }

  std::size_t total_steps() const { return static_cast<std::size_t>(std::llround(duration / controller_period)); }

  void validate() const {
    if (!(controller_period > 0.0)) throw ConfigError("timing.controller_period", "must be > 0");
    if (!(planner_period >= controller_period))
      throw ConfigError("timing.planner_period", "must be >= controller_period");
    if (!(duration > 0.0)) throw ConfigError("timing.duration", "must be > 0");
    steps_per_plan();
  }
};

// v = kp (target - position), scaled down to |v| <= v_max; then an explicit
// Euler step of length dt.
inline RobotState controller_step(const RobotState& s, double kp, double v_max, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("controller dt must be > 0");
  RobotState out = s;
  State v = kp * (s.target - s.position);
  const double speed = std::hypot(v.x(), v.y());
  if (speed > v_max) v = (v_max / speed) * v;
  out.velocity_command = v;
  out.position = s.position + dt * v;
  return out;
}

struct TrajectorySample {
  std::size_t step = 0;
  double time = 0.0;
  std::size_t robot = 0;
  State position{0.0, 0.0};
  State target{0.0, 0.0};
};

struct TrajectoryLog {
  std::size_t robot_count = 0;
  std::vector<TrajectorySample> samples;  // step-major, then robot index
  std::size_t planner_failures = 0;

  std::vector<State> final_positions() const {
    std::vector<State> out;
    for (std::size_t i = samples.size() - robot_count; i < samples.size(); ++i) out.push_back(samples[i].position);
    return out;
  }
};

// Slow planner / fast controller loop. At every planner tick (step multiple
// of steps_per_plan, including 0) each planner proposes a target from the
// current positions it observes; a failed planner keeps its previous target.
// The log holds every robot at every controller step, 0..total_steps.
inline TrajectoryLog run_aggregation(const std::vector<State>& initial_positions,
                                     std::vector<std::unique_ptr<AgentBackend>>& planners,
                                     const SimTimingConfig& timing, const ConnectivityMatrix& topology,
                                     const ControllerGains& gains = {}) {
  timing.validate();
  const std::size_t n = initial_positions.size();
  if (n == 0) throw ConfigError("initial_positions", "at least one robot is required");
  if (planners.size() != n) throw ConfigError("planner", "one planner per robot is required");
  if (topology.size() != n) throw ConfigError("topology", "size does not match robot count");
  for (const auto& p : initial_positions)
    if (p.dimension() != 2 || !p.is_finite()) throw ConfigError("initial_positions", "expected finite [x, y] points");

  std::vector<RobotState> robots(n);
  for (std::size_t k = 0; k < n; ++k) robots[k].position = robots[k].target = initial_positions[k];

  const std::size_t per_plan = timing.steps_per_plan();
  const std::size_t total = timing.total_steps();
  TrajectoryLog log;
  log.robot_count = n;
  log.samples.reserve((total + 1) * n);
  for (std::size_t step = 0; step <= total; ++step) {
    if (step % per_plan == 0) {
      std::vector<State> snapshot(n);
      for (std::size_t k = 0; k < n; ++k) snapshot[k] = robots[k].position;
      std::vector<State> targets(n);
      for (std::size_t k = 0; k < n; ++k) {
        Observation obs{snapshot[k], {}, step / per_plan};
        for (auto m : topology.neighbors(k)) obs.neighbor_states.push_back(snapshot[m]);
        Decision d;
        try {
          d = planners[k]->decide(obs);
        } catch (const std::exception&) {
          d.error = true;
        }
        if (d.error || d.state.dimension() != 2 || !d.state.is_finite()) {
          ++log.planner_failures;
          targets[k] = robots[k].target;
        } else {
          targets[k] = d.state;
        }
      }
      for (std::size_t k = 0; k < n; ++k) robots[k].target = targets[k];
    }
    const double time = static_cast<double>(step) * timing.controller_period;
    for (std::size_t k = 0; k < n; ++k) log.samples.push_back({step, time, k, robots[k].position, robots[k].target});
    if (step < total)
      for (auto& r : robots) r = controller_step(r, gains.kp, gains.v_max, timing.controller_period);
  }
  return log;
}

// A complete robot run: planner agents described like an experiment
// (dimension 2, no clamping), plus positions, timing and gains.
struct RobotScenario {
  ExperimentConfig planners;
  std::vector<State> initial_positions;
  SimTimingConfig timing;
  ControllerGains gains;
};

inline std::vector<State> default_robot_positions() {
  return {State(10.0, 10.0), State(90.0, 20.0), State(20.0, 80.0), State(70.0, 90.0)};
}

inline TrajectoryLog run_aggregation(const RobotScenario& scenario, const BackendFactory& factory) {
  std::vector<std::unique_ptr<AgentBackend>> planners;
  for (std::size_t k = 0; k < scenario.planners.agent_count(); ++k)
    planners.push_back(factory({k, scenario.planners.agents[k],
                                derive_seed(experiment_seed(scenario.planners.seed, 0), kAgentStreamBase + k),
                                scenario.planners}));
  return run_aggregation(scenario.initial_positions, planners, scenario.timing, scenario.planners.topology,
                         scenario.gains);
}

// Robot config: {"initial_positions": [[x, y], ...], "timing": {...},
// "gains": {...}, "planner": {agent spec}, "topology": {...},
// "endpoint": {...}, "seed": n}. Positions default to the built-in scenario.
inline RobotScenario parse_robot_scenario(const nlohmann::json& j) {
  using namespace config_detail;
  if (!j.is_object()) throw ConfigError("", "robot config must be a JSON object");
  reject_unknown(j, "", {"initial_positions", "timing", "gains", "planner", "topology", "endpoint", "seed"});
  RobotScenario s;
  s.initial_positions = default_robot_positions();
  if (j.contains("initial_positions")) {
    s.initial_positions.clear();
    const auto& arr = j.at("initial_positions");
    if (!arr.is_array() || arr.empty()) throw ConfigError("initial_positions", "expected a non-empty array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      s.initial_positions.push_back(parse_state(arr[i], 2, "initial_positions[" + std::to_string(i) + "]"));
  }
  if (j.contains("timing")) {
    const auto& t = j.at("timing");
    if (!t.is_object()) throw ConfigError("timing", "expected an object");
    reject_unknown(t, "timing", {"planner_period", "controller_period", "duration"});
    s.timing.planner_period = get_opt<double>(t, "planner_period", "timing").value_or(s.timing.planner_period);
    s.timing.controller_period = get_opt<double>(t, "controller_period", "timing").value_or(s.timing.controller_period);
    s.timing.duration = get_opt<double>(t, "duration", "timing").value_or(s.timing.duration);
  }
  s.timing.validate();
  if (j.contains("gains")) {
    const auto& g = j.at("gains");
    if (!g.is_object()) throw ConfigError("gains", "expected an object");
    reject_unknown(g, "gains", {"kp", "v_max"});
    s.gains.kp = get_opt<double>(g, "kp", "gains").value_or(s.gains.kp);
    if (auto v = get_opt<double>(g, "v_max", "gains")) s.gains.v_max = *v;
    if (!(s.gains.kp > 0.0)) throw ConfigError("gains.kp", "must be > 0");
    if (!(s.gains.v_max > 0.0)) throw ConfigError("gains.v_max", "must be > 0");
  }

  nlohmann::json planner_cfg = {{"dimension", 2},
                                {"clamp", false},
                                {"agent_count", s.initial_positions.size()},
                                {"agent", j.value("planner", nlohmann::json{{"kind", "average_include_self"}})},
                                {"seed", j.value("seed", 0)},
                                {"rounds", 0}};
  if (j.contains("topology")) planner_cfg["topology"] = j.at("topology");
  if (j.contains("endpoint")) planner_cfg["endpoint"] = j.at("endpoint");
  try {
    s.planners = parse_experiment_config(planner_cfg);
  } catch (const ConfigError& e) {
    const std::string f = e.field();
    throw ConfigError(f == "agent" || f.starts_with("agent.") ? "planner" + f.substr(5) : f,
                      std::string(e.what()).substr(f.empty() ? 0 : f.size() + 2));
  }
  return s;
}

inline void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log) {
  out << "time,robot_id,x,y,target_x,target_y\n";
  char time[32];
  for (const auto& s : log.samples) {
    std::snprintf(time, sizeof time, "%.10g", s.time);
    out << time << ',' << s.robot << ',' << format_number(s.position.x()) << ',' << format_number(s.position.y())
        << ',' << format_number(s.target.x()) << ',' << format_number(s.target.y()) << '\n';
  }
}

inline void write_trajectory_jsonl(std::ostream& out, const TrajectoryLog& log) {
  for (const auto& s : log.samples)
    out << nlohmann::json{{"time", s.time},
                          {"step", s.step},
                          {"robot_id", s.robot},
                          {"position", {s.position.x(), s.position.y()}},
                          {"target", {s.target.x(), s.target.y()}}}
               .dump()
        << '\n';
}

}  // namespace consensus
