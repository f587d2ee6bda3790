#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "consensus/aggregation.hpp"

using namespace consensus;

namespace {

std::vector<std::unique_ptr<AgentBackend>> average_planners(std::size_t n) {
  std::vector<std::unique_ptr<AgentBackend>> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(std::make_unique<StrategyBackend>(StrategySpec{}, k));
  return out;
}

class FailingPlanner final : public AgentBackend {
 public:
  Decision decide(const Observation& obs) override { return {"fail", obs.self_state, true, 1}; }
};

}  // namespace

TEST(Controller, FixedPoint) {
  RobotState s;
  s.position = s.target = State(3.0, 4.0);
  const auto out = controller_step(s, 1.0, 5.0, 0.1);
  EXPECT_EQ(out.position, State(3.0, 4.0));
  EXPECT_EQ(out.velocity_command, State(0.0, 0.0));
}

TEST(Controller, Saturation) {
  RobotState s;
  s.position = State(0.0, 0.0);
  s.target = State(10.0, 0.0);
  const auto out = controller_step(s, 1.0, 5.0, 0.1);
  EXPECT_EQ(out.velocity_command, State(5.0, 0.0));
  EXPECT_DOUBLE_EQ(out.position.x(), 0.5);
  EXPECT_EQ(out.position.y(), 0.0);
  EXPECT_THROW(controller_step(s, 1.0, 5.0, 0.0), std::invalid_argument);
}

TEST(Controller, GeometricDecayWithoutCap) {
  RobotState s;
  s.position = State(0.0, 0.0);
  s.target = State(30.0, -40.0);
  double err = 50.0;
  const double kp = 1.0, dt = 0.1;
  for (int i = 0; i < 100; ++i) {
    s = controller_step(s, kp, std::numeric_limits<double>::infinity(), dt);
    err *= 1.0 - kp * dt;
    EXPECT_NEAR(distance(s.position, s.target), err, 1e-12 * 50.0);
  }
}

TEST(Timing, Validation) {
  SimTimingConfig t;
  EXPECT_EQ(t.steps_per_plan(), 20u);
  EXPECT_EQ(t.total_steps(), 200u);
  t.planner_period = 0.25;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.controller_period = 0.0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.planner_period = 0.05;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.duration = -1;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Aggregation, FirstTickTargetsCentroidAndRobotsConverge) {
  const auto init = default_robot_positions();
  auto planners = average_planners(4);
  const auto log = run_aggregation(init, planners, {}, fully_connected(4));
  const State centroid = mean_state(init);
  ASSERT_EQ(log.samples.size(), 201u * 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(log.samples[k].target, centroid);
  for (const auto& p : log.final_positions()) EXPECT_LT(distance(p, centroid), 1e-6);
  EXPECT_EQ(log.planner_failures, 0u);
}

TEST(Aggregation, TimeGridAndPiecewiseConstantTargets) {
  const SimTimingConfig timing;
  auto planners = average_planners(4);
  const auto log = run_aggregation(default_robot_positions(), planners, timing, fully_connected(4));
  for (const auto& s : log.samples) EXPECT_EQ(s.time, static_cast<double>(s.step) * timing.controller_period);
  for (std::size_t i = 4; i < log.samples.size(); ++i) {
    const auto& now = log.samples[i];
    const auto& before = log.samples[i - 4];
    ASSERT_EQ(now.robot, before.robot);
    if (now.target != before.target) {
      EXPECT_EQ(now.step % timing.steps_per_plan(), 0u) << "step " << now.step;
    }
    if (now.step % timing.steps_per_plan() != 0) {
      EXPECT_LE(distance(now.position, now.target), distance(before.position, before.target));
    }
  }
}

TEST(Aggregation, SingleRobotNeverMoves) {
  auto planners = average_planners(1);
  const auto log = run_aggregation({State(12.0, 34.0)}, planners, {}, fully_connected(1));
  for (const auto& s : log.samples) EXPECT_EQ(s.position, State(12.0, 34.0));
}

TEST(Aggregation, FailedPlannerKeepsTarget) {
  std::vector<std::unique_ptr<AgentBackend>> planners;
  planners.push_back(std::make_unique<FailingPlanner>());
  planners.push_back(std::make_unique<StrategyBackend>(StrategySpec{}, 1));
  const auto log = run_aggregation({State(0.0, 0.0), State(10.0, 0.0)}, planners, {}, fully_connected(2));
  EXPECT_EQ(log.planner_failures, 11u);
  for (const auto& s : log.samples)
    if (s.robot == 0) {
      EXPECT_EQ(s.target, State(0.0, 0.0));
    }
}

TEST(Aggregation, SaturatedGainsStillConverge) {
  auto planners = average_planners(4);
  ControllerGains g;
  g.v_max = 5.0;
  const auto log = run_aggregation(default_robot_positions(), planners, {}, fully_connected(4), g);
  const auto finals = log.final_positions();
  EXPECT_LT(spread(finals), 0.1);
}

TEST(Aggregation, ScenarioParsingAndDeterminism) {
  const auto scenario = parse_robot_scenario(nlohmann::json::parse(R"({"seed": 4})"));
  EXPECT_EQ(scenario.initial_positions, default_robot_positions());
  EXPECT_EQ(scenario.planners.dimension, 2);
  EXPECT_FALSE(scenario.planners.clamp);
  const auto factory = make_backend_factory();
  std::ostringstream a, b;
  write_trajectory_csv(a, run_aggregation(scenario, factory));
  write_trajectory_csv(b, run_aggregation(scenario, factory));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_TRUE(a.str().starts_with("time,robot_id,x,y,target_x,target_y\n0,0,10,10,47.5,50\n"));

  try {
    parse_robot_scenario(nlohmann::json::parse(R"({"timing": {"planner_period": 2, "controller_period": 0.3}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "timing");
  }
  try {
    parse_robot_scenario(nlohmann::json::parse(R"({"planner": {"kind": "nope"}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "planner.kind");
  }
}

TEST(Aggregation, JsonlLog) {
  auto planners = average_planners(2);
  SimTimingConfig t;
  t.duration = 0.2;
  std::ostringstream out;
  write_trajectory_jsonl(out, run_aggregation({State(0.0, 0.0), State(2.0, 0.0)}, planners, t, fully_connected(2)));
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("target"), nlohmann::json::array({1.0, 0.0}));
    ++n;
  }
  EXPECT_EQ(n, 6u);
}
