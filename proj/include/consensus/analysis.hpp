#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "consensus/records.hpp"
#include "consensus/state.hpp"

namespace consensus {

inline constexpr double kExactConsensusEps = 1e-6;  // noiseless strategy runs
inline constexpr double kNoisyConsensusEps = 0.5;   // noisy or LLM runs
inline constexpr double kDefaultClusterGap = 5.0;

struct ConvergenceReport {
  bool consensus = false;
  std::optional<State> consensus_value;
  std::optional<std::size_t> convergence_round;  // trajectory index; 0 = initial states
  double final_spread = 0.0;
  State bias;  // consensus value (or final mean) minus initial mean
};

// Consensus when the final spread is below eps; the convergence round is the
// first trajectory index from which the spread stays below eps.
inline ConvergenceReport detect_consensus(const ExperimentRecord& record, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("consensus eps must be > 0");
  ConvergenceReport r;
  if (record.initial_states.empty()) return r;
  const auto traj = record.trajectory();
  r.final_spread = spread(traj.back());
  r.consensus = r.final_spread < eps;
  const State final_mean = mean_state(traj.back());
  r.bias = final_mean - mean_state(record.initial_states);
  if (r.consensus) {
    r.consensus_value = final_mean;
    std::size_t first = traj.size() - 1;
    while (first > 0 && spread(traj[first - 1]) < eps) --first;
    r.convergence_round = first;
  }
  return r;
}

struct OscillationReport {
  bool oscillating = false;
  std::size_t period = 0;
  std::vector<std::size_t> participants;
};

inline constexpr std::size_t kMinOscillationPoints = 4;

// Period-2 detection over the trailing `window` trajectory points: an agent
// participates when x(t) == x(t-2) and x(t) != x(t-1) throughout the window
// (equality up to `tol`; tol = 0 is exact). Needs at least 4 points.
inline OscillationReport detect_oscillation(const ExperimentRecord& record, std::size_t window, double tol = 0.0) {
  if (window < kMinOscillationPoints) throw std::invalid_argument("oscillation window must be >= 4");
  OscillationReport r;
  const auto traj = record.trajectory();
  const std::size_t len = std::min(window, traj.size());
  if (len < kMinOscillationPoints) return r;
  const std::size_t first = traj.size() - len;
  for (std::size_t agent = 0; agent < record.agent_count(); ++agent) {
    bool periodic = true;
    for (std::size_t t = first + 2; t < traj.size() && periodic; ++t) {
      const State& now = traj[t][agent];
      periodic = distance(now, traj[t - 2][agent]) <= tol && distance(now, traj[t - 1][agent]) > tol;
    }
    if (periodic) r.participants.push_back(agent);
  }
  r.oscillating = !r.participants.empty();
  if (r.oscillating) r.period = 2;
  return r;
}

struct Cluster {
  State representative;
  std::vector<std::size_t> members;
  double spread = 0.0;
};

struct ClusterReport {
  std::vector<Cluster> clusters;
  double gap = 0.0;
  double eps = 0.0;
};

// Single-linkage gap clustering: agents closer than `gap` (Euclidean) share a
// cluster. In 1-D this is a split of the sorted states wherever neighbors
// differ by >= gap. Clusters come out ordered by representative.
inline ClusterReport detect_clusters(const std::vector<State>& states, double eps, double gap) {
  if (!(eps < gap)) throw std::invalid_argument("cluster eps must be smaller than the gap");
  ClusterReport r;
  r.gap = gap;
  r.eps = eps;
  const std::size_t n = states.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (distance(states[i], states[j]) < gap) parent[find(i)] = find(j);

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
  for (auto& [root, members] : groups) {
    std::vector<State> pts;
    for (auto m : members) pts.push_back(states[m]);
    r.clusters.push_back({mean_state(pts), members, spread(pts)});
  }
  std::sort(r.clusters.begin(), r.clusters.end(),
            [](const Cluster& a, const Cluster& b) { return lexicographic_less(a.representative, b.representative); });
  return r;
}

struct MonteCarloSummary {
  std::size_t n_agents = 0;
  std::string profile;
  std::size_t trials = 0;
  double mean_bias = 0.0;
  double var_bias = 0.0;  // population variance
  double consensus_rate = 0.0;
  std::optional<double> mean_round;  // over converged trials only
};

struct RecordGroup {
  std::size_t n_agents = 0;
  std::string profile;
  std::vector<ExperimentRecord> records;
};

// Groups records by (agent count, label), in ascending key order.
inline std::vector<RecordGroup> group_records(const std::vector<ExperimentRecord>& records) {
  std::map<std::pair<std::size_t, std::string>, RecordGroup> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.agent_count(), r.label}];
    g.n_agents = r.agent_count();
    g.profile = r.label;
    g.records.push_back(r);
  }
  std::vector<RecordGroup> out;
  for (auto& [_, g] : groups) out.push_back(std::move(g));
  return out;
}

// Per-group bias statistics. Bias is taken along the first axis.
inline std::vector<MonteCarloSummary> summarize(const std::vector<RecordGroup>& groups, double eps) {
  std::vector<MonteCarloSummary> out;
  for (const auto& g : groups) {
    if (g.records.empty()) throw std::invalid_argument("cannot summarize an empty record group");
    MonteCarloSummary s;
    s.n_agents = g.n_agents;
    s.profile = g.profile;
    s.trials = g.records.size();
    double mean = 0.0, m2 = 0.0, round_sum = 0.0;
    std::size_t k = 0, converged = 0;
    for (const auto& rec : g.records) {
      const auto report = detect_consensus(rec, eps);
      const double b = report.bias[0];
      ++k;  // Welford
      const double delta = b - mean;
      mean += delta / static_cast<double>(k);
      m2 += delta * (b - mean);
      if (report.consensus) {
        ++converged;
        round_sum += static_cast<double>(*report.convergence_round);
      }
    }
    s.mean_bias = mean;
    s.var_bias = std::max(0.0, m2 / static_cast<double>(k));
    s.consensus_rate = static_cast<double>(converged) / static_cast<double>(k);
    if (converged) s.mean_round = round_sum / static_cast<double>(converged);
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {
inline std::string csv_number(double v) { return format_number(v); }
inline std::string csv_state(const State& s) {
  return s.dimension() == 1 ? format_number(s.x()) : format_number(s.x()) + "," + format_number(s.y());
}
}  // namespace detail

inline void write_summary_csv(std::ostream& out, const std::vector<MonteCarloSummary>& rows) {
  out << "n_a,noise_profile,trials,mean_bias,var_bias,consensus_rate,mean_round\n";
  for (const auto& s : rows)
    out << s.n_agents << ',' << s.profile << ',' << s.trials << ',' << detail::csv_number(s.mean_bias) << ','
        << detail::csv_number(s.var_bias) << ',' << detail::csv_number(s.consensus_rate) << ','
        << (s.mean_round ? detail::csv_number(*s.mean_round) : "") << '\n';
}

inline nlohmann::json summaries_to_json(const std::vector<MonteCarloSummary>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& s : rows)
    arr.push_back({{"n_a", s.n_agents},
                   {"noise_profile", s.profile},
                   {"trials", s.trials},
                   {"mean_bias", s.mean_bias},
                   {"var_bias", s.var_bias},
                   {"consensus_rate", s.consensus_rate},
                   {"mean_round", s.mean_round ? nlohmann::json(*s.mean_round) : nlohmann::json()}});
  return arr;
}

// One row per experiment.
inline void write_convergence_csv(std::ostream& out, const std::vector<ExperimentRecord>& records, double eps) {
  out << "experiment,label,n_a,consensus,consensus_value,convergence_round,final_spread,bias\n";
  for (const auto& r : records) {
    const auto c = detect_consensus(r, eps);
    auto quoted_state = [](const State& s) {
      return s.dimension() == 1 ? format_number(s.x()) : "\"" + format_state(s) + "\"";
    };
    out << r.experiment << ',' << r.label << ',' << r.agent_count() << ',' << (c.consensus ? 1 : 0) << ','
        << (c.consensus_value ? quoted_state(*c.consensus_value) : "") << ','
        << (c.convergence_round ? std::to_string(*c.convergence_round) : "") << ','
        << detail::csv_number(c.final_spread) << ',' << (r.initial_states.empty() ? "" : quoted_state(c.bias)) << '\n';
  }
}

// Long format: experiment, round, agent, state (or x, y).
inline void write_trajectories_csv(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  const bool planar = !records.empty() && records.front().dimension == 2;
  out << (planar ? "experiment,round,agent,x,y\n" : "experiment,round,agent,state\n");
  for (const auto& r : records) {
    const auto traj = r.trajectory();
    for (std::size_t t = 0; t < traj.size(); ++t)
      for (std::size_t a = 0; a < traj[t].size(); ++a)
        out << r.experiment << ',' << t << ',' << a << ',' << detail::csv_state(traj[t][a]) << '\n';
  }
}

}  // namespace consensus
