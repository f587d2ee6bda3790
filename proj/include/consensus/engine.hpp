#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <future>
#include <memory>
#include <numeric>
#include <optional>
#include <thread>
#include <vector>

#include "consensus/config.hpp"
#include "consensus/experiment.hpp"
#include "consensus/llm.hpp"
#include "consensus/records.hpp"
#include "consensus/rng.hpp"
#include "consensus/strategy.hpp"

namespace consensus {

// One agent's decision maker for the lifetime of an experiment. A backend
// is only ever called from one thread at a time.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual Decision decide(const Observation& obs) = 0;
};

class StrategyBackend final : public AgentBackend {
 public:
  StrategyBackend(StrategySpec spec, std::uint64_t seed, Bounds hallucination_range = {})
      : spec_(spec), rng_(seed), range_(hallucination_range) {
    spec_.validate();
  }

  Decision decide(const Observation& obs) override {
    const State next = consensus::decide(spec_, obs, rng_, range_);
    return {canonical_reply(rule_description(spec_.kind), next), next, false, 1};
  }

 private:
  StrategySpec spec_;
  Rng rng_;
  Bounds range_;
};

class LlmBackend final : public AgentBackend {
 public:
  LlmBackend(AgentSession session, std::shared_ptr<ChatTransport> transport, RetryPolicy policy = {})
      : session_(std::move(session)), transport_(std::move(transport)), policy_(std::move(policy)) {}

  Decision decide(const Observation& obs) override {
    auto outcome = step_session(session_, obs, *transport_, policy_);
    if (outcome.state) return {outcome.reply, *outcome.state, false, outcome.attempts};
    return {"backend failure after " + std::to_string(outcome.attempts) + " attempts: " + outcome.error,
            obs.self_state, true, outcome.attempts};
  }

  const AgentSession& session() const { return session_; }

 private:
  AgentSession session_;
  std::shared_ptr<ChatTransport> transport_;
  RetryPolicy policy_;
};

struct AgentContext {
  std::size_t agent_index;
  const AgentSpec& spec;
  std::uint64_t seed;
  const ExperimentConfig& config;
};

using BackendFactory = std::function<std::unique_ptr<AgentBackend>(const AgentContext&)>;

// Strategy agents always work; LLM agents need `transport`.
inline BackendFactory make_backend_factory(std::shared_ptr<ChatTransport> transport = nullptr,
                                           RetryPolicy policy = {}) {
  return [transport = std::move(transport), policy = std::move(policy)](
             const AgentContext& ctx) -> std::unique_ptr<AgentBackend> {
    if (const auto* s = std::get_if<StrategySpec>(&ctx.spec))
      return std::make_unique<StrategyBackend>(*s, ctx.seed, ctx.config.init_range);
    const auto& l = std::get<LlmAgentSpec>(ctx.spec);
    if (!transport)
      throw ConfigError("agents[" + std::to_string(ctx.agent_index) + "]", "llm backend needs a chat transport");
    auto session = AgentSession::create(ctx.agent_index, l.personality,
                                        ctx.config.endpoint ? ctx.config.endpoint->model : "", l.temperature,
                                        l.retry_limit, ctx.config.dimension);
    session.history_window = l.history_window;
    return std::make_unique<LlmBackend>(std::move(session), transport, policy);
  };
}

struct RunOptions {
  BackendFactory factory = make_backend_factory();
  std::size_t jobs = 1;               // experiments in flight (run_batch)
  std::size_t round_parallelism = 1;  // agent decisions in flight per round
  // Order in which agents are queried within a round. Decisions are always
  // assembled by agent index, so this never changes the record.
  std::optional<std::vector<std::size_t>> evaluation_order;
};

inline std::uint64_t experiment_seed(std::uint64_t base_seed, std::size_t experiment_index) {
  return derive_seed(base_seed, experiment_index);
}

// One experiment, round-synchronous: every agent decides from the same
// snapshot and the state vector advances only after all have answered.
inline ExperimentRecord run_experiment(const ExperimentConfig& config, std::size_t experiment_index,
                                       const RunOptions& options = {}) {
  config.validate();
  const std::size_t n = config.agent_count();
  ExperimentRecord rec;
  rec.experiment = experiment_index;
  rec.label = config.label;
  rec.seed = experiment_seed(config.seed, experiment_index);
  rec.fingerprint = config_fingerprint(config);
  rec.dimension = config.dimension;

  if (config.init_states) {
    rec.initial_states = *config.init_states;
  } else {
    Rng init_rng(derive_seed(rec.seed, kInitStream));
    for (std::size_t k = 0; k < n; ++k) {
      State s = State::zero(config.dimension);
      for (int a = 0; a < config.dimension; ++a) s[a] = init_rng.uniform(config.init_range.lo, config.init_range.hi);
      rec.initial_states.push_back(s);
    }
  }

  std::vector<std::unique_ptr<AgentBackend>> backends;
  for (std::size_t k = 0; k < n; ++k)
    backends.push_back(options.factory({k, config.agents[k], derive_seed(rec.seed, kAgentStreamBase + k), config}));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.evaluation_order) {
    order = *options.evaluation_order;
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < n; ++k)
      if (sorted.size() != n || sorted[k] != k) throw std::invalid_argument("evaluation_order must permute agents");
  }
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t k = 0; k < n; ++k) neighbors[k] = config.topology.neighbors(k);

  std::vector<State> x = rec.initial_states;
  for (std::size_t round = 0; round < config.rounds; ++round) {
    RoundRecord rr;
    rr.round = round;
    rr.states_before = x;
    rr.decisions.resize(n);

    auto ask = [&](std::size_t k) {
      Observation obs{x[k], {}, round};
      for (auto m : neighbors[k]) obs.neighbor_states.push_back(x[m]);
      try {
        rr.decisions[k] = backends[k]->decide(obs);
      } catch (const std::exception& e) {
        rr.decisions[k] = {std::string("backend failure: ") + e.what(), x[k], true, 1};
      }
      if (!rr.decisions[k].state.is_finite() || rr.decisions[k].state.dimension() != config.dimension)
        rr.decisions[k] = {"backend failure: invalid state", x[k], true, rr.decisions[k].attempts};
      if (config.clamp) rr.decisions[k].state = config.init_range.clamp(rr.decisions[k].state);
    };

    const std::size_t width = std::max<std::size_t>(1, options.round_parallelism);
    if (width == 1) {
      for (auto k : order) ask(k);
    } else {
      for (std::size_t start = 0; start < n; start += width) {
        std::vector<std::future<void>> inflight;
        for (std::size_t i = start; i < std::min(n, start + width); ++i)
          inflight.push_back(std::async(std::launch::async, ask, order[i]));
        for (auto& f : inflight) f.get();
      }
    }

    for (std::size_t k = 0; k < n; ++k) {
      x[k] = rr.decisions[k].state;
      if (rr.decisions[k].error) ++rec.fallback_count;
    }
    rr.states_after = x;
    rec.rounds.push_back(std::move(rr));
    if (config.early_stop_eps && spread(x) < *config.early_stop_eps) break;
  }
  rec.final_states = x;
  return rec;
}

// n_e independent experiments; experiment i is seeded from (seed, i) and the
// result is in index order whatever `jobs` is.
inline std::vector<ExperimentRecord> run_batch(const ExperimentConfig& config, const RunOptions& options = {}) {
  config.validate();
  std::vector<ExperimentRecord> out(config.experiments);
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, config.experiments);
  if (jobs == 1) {
    for (std::size_t i = 0; i < config.experiments; ++i) out[i] = run_experiment(config, i, options);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < config.experiments; i = next++) out[i] = run_experiment(config, i, options);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace consensus
