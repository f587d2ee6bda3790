#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {
consensus::MockChatServer* g_server = nullptr;
void stop_server(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  using namespace consensus::cli;
  CLI::App app{"Multi-agent consensus simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  RunArgs run;
  std::size_t experiments = 0, agents = 0, rounds = 0;
  std::uint64_t seed = 0;
  double eps = 0.0;
  auto* run_cmd = app.add_subcommand("run", "Run a batch of experiments from a config file");
  run_cmd->add_option("config", run.config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--out", run.out_dir, "Output directory")->capture_default_str();
  auto* opt_e = run_cmd->add_option("--experiments", experiments, "Number of experiments (n_e)");
  auto* opt_a = run_cmd->add_option("--agents", agents, "Number of agents (n_a)");
  auto* opt_r = run_cmd->add_option("--rounds", rounds, "Number of rounds (n_r)");
  auto* opt_s = run_cmd->add_option("--seed", seed, "Base seed");
  auto* opt_eps = run_cmd->add_option("--eps", eps, "Consensus spread threshold for summary.csv");
  run_cmd->add_option("-j,--jobs", run.jobs, "Experiments run in parallel")->capture_default_str();

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo sweep over agent counts and noise profiles");
  sweep_cmd->add_option("config", sweep.config_path, "Sweep config (JSON)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("-o,--out", sweep.out_dir, "Output directory")->capture_default_str();
  sweep_cmd->add_option("-j,--jobs", sweep.jobs, "Experiments run in parallel")->capture_default_str();

  RobotsArgs robots;
  std::uint64_t robot_seed = 0;
  std::string endpoint;
  auto* robots_cmd = app.add_subcommand("robots", "Multi-robot aggregation with planner/controller loops");
  robots_cmd->add_option("config", robots.config_path, "Robot config (JSON)")->required()->check(CLI::ExistingFile);
  robots_cmd->add_option("-o,--out", robots.out_dir, "Output directory")->capture_default_str();
  robots_cmd->add_option("--planner", robots.planner, "Planner backend")
      ->check(CLI::IsMember({"config", "average", "llm"}))
      ->capture_default_str();
  auto* opt_endpoint = robots_cmd->add_option("--endpoint", endpoint, "Chat endpoint base URL for --planner=llm");
  auto* opt_robot_seed = robots_cmd->add_option("--seed", robot_seed, "Seed");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Analyze a records.jsonl file");
  analyze_cmd->add_option("records", analyze.records_path, "records.jsonl")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("-o,--out", analyze.out_dir, "Output directory")->capture_default_str();
  analyze_cmd->add_option("--eps", analyze.eps, "Consensus spread threshold")->capture_default_str();
  analyze_cmd->add_option("--gap", analyze.gap, "Minimum gap between clusters")->capture_default_str();
  analyze_cmd->add_option("--window", analyze.window, "Trailing window for oscillation detection")
      ->capture_default_str();
  analyze_cmd->add_option("--osc-tol", analyze.oscillation_tol, "Equality tolerance for oscillation detection")
      ->capture_default_str();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* mock_cmd = app.add_subcommand("mock-server", "Serve the offline chat-completions mock");
  mock_cmd->add_option("--host", host)->capture_default_str();
  mock_cmd->add_option("--port", port)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (*run_cmd) {
    if (*opt_e) run.overrides.experiments = experiments;
    if (*opt_a) run.overrides.agents = agents;
    if (*opt_r) run.overrides.rounds = rounds;
    if (*opt_s) run.overrides.seed = seed;
    if (*opt_eps) run.eps = eps;
    return cmd_run(run);
  }
  if (*sweep_cmd) return cmd_sweep(sweep);
  if (*robots_cmd) {
    if (*opt_endpoint) robots.endpoint = endpoint;
    if (*opt_robot_seed) robots.seed = robot_seed;
    return cmd_robots(robots);
  }
  if (*analyze_cmd) return cmd_analyze(analyze);
  if (*mock_cmd) {
    consensus::MockChatServer server;
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cout << "mock chat endpoint on http://" << host << ":" << port << "/v1" << std::endl;
    server.listen(host, port);
    return 0;
  }
  return 0;
}
