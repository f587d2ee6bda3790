#pragma once

// Subcommand implementations for the `consensus` CLI. Each returns the
// process exit status and writes diagnostics to `err`.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "consensus/consensus.hpp"
#include "consensus/http.hpp"

namespace consensus::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kInvalidInput = 2 };

namespace fs = std::filesystem;

struct RunArgs {
  std::string config_path;
  std::string out_dir = "out";
  ConfigOverrides overrides;
  std::size_t jobs = 1;
  std::optional<double> eps;
};

struct SweepArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::size_t jobs = 1;
};

struct RobotsArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::string planner = "config";  // config | average | llm
  std::optional<std::string> endpoint;
  std::optional<std::uint64_t> seed;
};

struct AnalyzeArgs {
  std::string records_path;
  std::string out_dir = "out";
  double eps = kExactConsensusEps;
  double gap = kDefaultClusterGap;
  std::size_t window = 6;
  double oscillation_tol = 0.0;
};

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Written first (status "running") and rewritten at the end, so every
// output directory says what produced it and whether it is complete.
class Manifest {
 public:
  Manifest(fs::path dir, std::string subcommand, std::string config_path, nlohmann::json parameters,
           std::uint64_t seed)
      : dir_(std::move(dir)) {
    doc_ = {{"tool", "consensus"},
            {"version", kToolVersion},
            {"subcommand", std::move(subcommand)},
            {"config_path", std::move(config_path)},
            {"output_dir", dir_.string()},
            {"parameters", std::move(parameters)},
            {"seed", seed},
            {"timestamp", utc_timestamp()},
            {"status", "running"}};
    write();
  }

  void finish(const std::string& status, nlohmann::json extra = nlohmann::json::object()) {
    doc_["status"] = status;
    for (auto& [k, v] : extra.items()) doc_[k] = v;
    write();
  }

 private:
  void write() const {
    std::ofstream out(dir_ / "manifest.json");
    out << doc_.dump(2) << '\n';
  }
  fs::path dir_;
  nlohmann::json doc_;
};

inline bool is_noiseless(const ExperimentConfig& c) {
  for (const auto& a : c.agents) {
    const auto* s = std::get_if<StrategySpec>(&a);
    if (!s || s->noise_sigma > 0.0 || (s->kind == StrategyKind::Erroneous && s->hallucination_rate > 0.0)) return false;
  }
  return true;
}

inline double default_eps(const ExperimentConfig& c) { return is_noiseless(c) ? kExactConsensusEps : kNoisyConsensusEps; }

inline bool uses_llm(const ExperimentConfig& c) {
  for (const auto& a : c.agents)
    if (std::holds_alternative<LlmAgentSpec>(a)) return true;
  return false;
}

inline RunOptions options_for(const ExperimentConfig& c, std::size_t jobs) {
  RunOptions o;
  o.jobs = jobs;
  if (uses_llm(c)) {
    o.factory = make_backend_factory(std::make_shared<HttpChatTransport>(*c.endpoint));
    o.round_parallelism = c.agent_count();
  }
  return o;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace detail

inline int cmd_run(const RunArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  ExperimentConfig config;
  try {
    config = parse_experiment_config(load_json_file(args.config_path), args.overrides);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kInvalidInput;
  }
  const fs::path dir = args.out_dir;
  fs::create_directories(dir);
  detail::Manifest manifest(dir, "run", args.config_path,
                            {{"experiments", config.experiments},
                             {"agents", config.agent_count()},
                             {"rounds", config.rounds},
                             {"jobs", args.jobs},
                             {"fingerprint", config_fingerprint(config)}},
                            config.seed);
  try {
    const auto records = run_batch(config, detail::options_for(config, args.jobs));
    {
      std::ofstream rec(dir / "records.jsonl");
      write_records(rec, records);
    }
    {
      std::ofstream sum(dir / "summary.csv");
      write_convergence_csv(sum, records, args.eps.value_or(detail::default_eps(config)));
    }
    std::size_t fallbacks = 0;
    for (const auto& r : records) fallbacks += r.fallback_count;
    manifest.finish("complete", {{"experiments_completed", records.size()}, {"fallback_count", fallbacks}});
    out << "wrote " << records.size() << " records to " << (dir / "records.jsonl").string() << '\n';
    return kOk;
  } catch (const std::exception& e) {
    fs::remove(dir / "records.jsonl");
    fs::remove(dir / "summary.csv");
    manifest.finish("incomplete", {{"error", e.what()}});
    err << "run failed: " << e.what() << '\n';
    return kFailure;
  }
}

// {"base": <run config with an "agent" template>, "sweep": {"agent_counts":
// [...], "noise_profiles": [{"label": ..., "noise_sigma" | "temperature": ...}],
// "trials": n}}. One group per (agent count, profile).
inline int cmd_sweep(const SweepArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  struct Group {
    ExperimentConfig config;
    double eps;
  };
  std::vector<Group> groups;
  std::uint64_t base_seed = 0;
  try {
    const auto doc = load_json_file(args.config_path);
    if (!doc.is_object() || !doc.contains("base") || !doc.contains("sweep"))
      throw ConfigError("", "sweep config needs 'base' and 'sweep' objects");
    config_detail::reject_unknown(doc, "", {"base", "sweep"});
    const auto& sweep = doc.at("sweep");
    config_detail::reject_unknown(sweep, "sweep", {"agent_counts", "noise_profiles", "trials"});
    auto base = doc.at("base");
    if (!base.is_object() || !base.contains("agent"))
      throw ConfigError("base.agent", "sweeps need an 'agent' template");
    base_seed = config_detail::get_opt<std::uint64_t>(base, "seed", "base").value_or(0);
    const auto trials = config_detail::get_opt<std::size_t>(sweep, "trials", "sweep").value_or(300);
    const auto counts = sweep.value("agent_counts", nlohmann::json::array({2, 4, 6, 8}));
    auto profiles = sweep.value("noise_profiles", nlohmann::json::array({{{"label", "T=0.0"}, {"temperature", 0.0}},
                                                                         {{"label", "T=0.7"}, {"temperature", 0.7}}}));
    std::size_t index = 0;
    for (std::size_t pi = 0; pi < profiles.size(); ++pi) {
      const auto& p = profiles[pi];
      const std::string path = "sweep.noise_profiles[" + std::to_string(pi) + "]";
      config_detail::reject_unknown(p, path, {"label", "noise_sigma", "temperature"});
      double sigma = 0.0;
      if (auto t = config_detail::get_opt<double>(p, "temperature", path)) sigma = noise_sigma_for_temperature(*t);
      if (auto s = config_detail::get_opt<double>(p, "noise_sigma", path)) sigma = *s;
      const std::string label = p.value("label", "sigma=" + format_number(sigma));
      for (std::size_t ci = 0; ci < counts.size(); ++ci) {
        auto cfg = base;
        cfg["agent_count"] = config_detail::get<std::size_t>(counts[ci], "sweep.agent_counts[" + std::to_string(ci) + "]");
        cfg["agent"]["noise_sigma"] = sigma;
        cfg["agent"].erase("temperature");
        cfg["experiments"] = trials;
        cfg["label"] = label;
        cfg["seed"] = derive_seed(base_seed, index++);
        auto parsed = parse_experiment_config(cfg);
        groups.push_back({parsed, detail::default_eps(parsed)});
      }
    }
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kInvalidInput;
  }

  const fs::path dir = args.out_dir;
  fs::create_directories(dir);
  detail::Manifest manifest(dir, "sweep", args.config_path, {{"groups", groups.size()}, {"jobs", args.jobs}}, base_seed);
  try {
    std::vector<ExperimentRecord> all;
    std::vector<MonteCarloSummary> summaries;
    std::ofstream sum(dir / "summary.csv");
    bool header = true;
    for (const auto& g : groups) {
      auto records = run_batch(g.config, detail::options_for(g.config, args.jobs));
      std::ostringstream rows;
      write_convergence_csv(rows, records, g.eps);
      std::string text = rows.str();
      if (!header) text = text.substr(text.find('\n') + 1);
      header = false;
      sum << text;
      auto s = summarize({RecordGroup{g.config.agent_count(), g.config.label, records}}, g.eps);
      summaries.insert(summaries.end(), s.begin(), s.end());
      all.insert(all.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
    }
    {
      std::ofstream rec(dir / "records.jsonl");
      write_records(rec, all);
    }
    {
      std::ofstream csv(dir / "groups.csv");
      write_summary_csv(csv, summaries);
    }
    detail::write_text(dir / "groups.json", summaries_to_json(summaries).dump(2) + "\n");
    manifest.finish("complete", {{"experiments_completed", all.size()}});
    out << "wrote " << all.size() << " records in " << summaries.size() << " groups to " << dir.string() << '\n';
    return kOk;
  } catch (const std::exception& e) {
    manifest.finish("incomplete", {{"error", e.what()}});
    err << "sweep failed: " << e.what() << '\n';
    return kFailure;
  }
}

inline int cmd_robots(const RobotsArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RobotScenario scenario;
  try {
    auto doc = load_json_file(args.config_path);
    if (!doc.is_object()) throw ConfigError("", "robot config must be a JSON object");
    if (args.seed) doc["seed"] = *args.seed;
    if (args.planner == "average") {
      doc["planner"] = {{"kind", "average_include_self"}};
    } else if (args.planner == "llm") {
      doc["planner"] = {{"backend", "llm"}};
      if (args.endpoint) doc["endpoint"] = {{"base_url", *args.endpoint}};
      if (!doc.contains("endpoint")) throw ConfigError("endpoint", "--planner=llm needs --endpoint or an endpoint block");
    } else if (args.planner != "config") {
      throw ConfigError("planner", "must be config, average or llm");
    }
    scenario = parse_robot_scenario(doc);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kInvalidInput;
  }
  const fs::path dir = args.out_dir;
  fs::create_directories(dir);
  detail::Manifest manifest(dir, "robots", args.config_path,
                            {{"robots", scenario.initial_positions.size()},
                             {"planner", args.planner},
                             {"planner_period", scenario.timing.planner_period},
                             {"controller_period", scenario.timing.controller_period},
                             {"duration", scenario.timing.duration}},
                            scenario.planners.seed);
  try {
    const auto options = detail::options_for(scenario.planners, 1);
    const auto log = run_aggregation(scenario, options.factory);
    {
      std::ofstream csv(dir / "trajectory.csv");
      write_trajectory_csv(csv, log);
    }
    {
      std::ofstream jl(dir / "trajectory.jsonl");
      write_trajectory_jsonl(jl, log);
    }
    manifest.finish("complete", {{"samples", log.samples.size()}, {"planner_failures", log.planner_failures}});
    out << "wrote " << log.samples.size() << " trajectory samples to " << (dir / "trajectory.csv").string() << '\n';
    return kOk;
  } catch (const std::exception& e) {
    manifest.finish("incomplete", {{"error", e.what()}});
    err << "robot run failed: " << e.what() << '\n';
    return kFailure;
  }
}

inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<ExperimentRecord> records;
  try {
    if (!(args.eps < args.gap)) throw std::invalid_argument("--eps must be smaller than --gap");
    if (args.window < kMinOscillationPoints) throw std::invalid_argument("--window must be >= 4");
    std::ifstream in(args.records_path);
    if (!in) throw std::invalid_argument("cannot open '" + args.records_path + "'");
    records = read_records(in);
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::invalid_argument& e) {
    err << e.what() << '\n';
    return kInvalidInput;
  }

  const fs::path dir = args.out_dir;
  fs::create_directories(dir);
  {
    std::ofstream sum(dir / "summary.csv");
    write_convergence_csv(sum, records, args.eps);
  }
  std::vector<MonteCarloSummary> summaries;
  if (!records.empty()) summaries = summarize(group_records(records), args.eps);
  {
    std::ofstream csv(dir / "groups.csv");
    write_summary_csv(csv, summaries);
  }
  detail::write_text(dir / "groups.json", summaries_to_json(summaries).dump(2) + "\n");

  auto clusters = nlohmann::json::array();
  auto oscillations = nlohmann::json::array();
  std::size_t oscillating = 0;
  for (const auto& r : records) {
    const auto c = detect_clusters(r.final_states, args.eps, args.gap);
    auto jc = nlohmann::json::array();
    for (const auto& cl : c.clusters)
      jc.push_back({{"representative", state_to_json(cl.representative)}, {"members", cl.members}, {"spread", cl.spread}});
    clusters.push_back({{"experiment", r.experiment}, {"label", r.label}, {"gap", c.gap}, {"clusters", jc}});
    const auto o = detect_oscillation(r, args.window, args.oscillation_tol);
    oscillating += o.oscillating ? 1 : 0;
    oscillations.push_back({{"experiment", r.experiment},
                            {"label", r.label},
                            {"oscillating", o.oscillating},
                            {"period", o.period},
                            {"participants", o.participants}});
  }
  detail::write_text(dir / "clusters.json", clusters.dump(2) + "\n");
  detail::write_text(dir / "oscillations.json", oscillations.dump(2) + "\n");
  {
    std::ofstream traj(dir / "trajectories.csv");
    write_trajectories_csv(traj, records);
  }
  if (records.empty()) {
    out << "no records\n";
    return kOk;
  }
  std::size_t converged = 0;
  for (const auto& r : records) converged += detect_consensus(r, args.eps).consensus ? 1 : 0;
  out << records.size() << " records: " << converged << " reached consensus, " << oscillating << " oscillating\n";
  return kOk;
}

}  // namespace consensus::cli
