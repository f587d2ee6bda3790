#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "consensus/state.hpp"

namespace consensus {

inline constexpr int kRecordSchema = 1;

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One agent's answer in one round.
struct Decision {
  std::string reasoning;
  State state;
  bool error = false;
  int attempts = 1;
  friend bool operator==(const Decision&, const Decision&) = default;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<State> states_before;
  std::vector<Decision> decisions;
  std::vector<State> states_after;
  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct ExperimentRecord {
  std::size_t experiment = 0;
  std::string label;
  std::uint64_t seed = 0;
  std::string fingerprint;
  int dimension = 1;
  std::vector<State> initial_states;
  std::vector<RoundRecord> rounds;
  std::vector<State> final_states;
  std::size_t fallback_count = 0;

  std::size_t agent_count() const { return initial_states.size(); }

  // initial_states followed by each round's states_after.
  std::vector<std::vector<State>> trajectory() const {
    std::vector<std::vector<State>> out{initial_states};
    for (const auto& r : rounds) out.push_back(r.states_after);
    return out;
  }

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

inline nlohmann::json state_to_json(const State& s) {
  if (s.dimension() == 1) return s.x();
  return nlohmann::json::array({s.x(), s.y()});
}

inline State state_from_json(const nlohmann::json& j, int dimension) {
  if (dimension == 1) {
    if (!j.is_number()) throw SchemaError("expected a number for a 1-D state");
    return State(j.get<double>());
  }
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw SchemaError("expected [x, y] for a 2-D state");
  return State(j[0].get<double>(), j[1].get<double>());
}

inline nlohmann::json states_to_json(const std::vector<State>& states) {
  auto arr = nlohmann::json::array();
  for (const auto& s : states) arr.push_back(state_to_json(s));
  return arr;
}

inline std::vector<State> states_from_json(const nlohmann::json& j, int dimension) {
  if (!j.is_array()) throw SchemaError("expected an array of states");
  std::vector<State> out;
  for (const auto& e : j) out.push_back(state_from_json(e, dimension));
  return out;
}

inline nlohmann::json to_json(const ExperimentRecord& r) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& rr : r.rounds) {
    nlohmann::json decisions = nlohmann::json::array();
    for (const auto& d : rr.decisions)
      decisions.push_back({{"reasoning", d.reasoning},
                           {"state", state_to_json(d.state)},
                           {"error", d.error},
                           {"attempts", d.attempts}});
    rounds.push_back({{"round", rr.round},
                      {"states_before", states_to_json(rr.states_before)},
                      {"decisions", decisions},
                      {"states_after", states_to_json(rr.states_after)}});
  }
  return {{"schema", kRecordSchema},
          {"experiment", r.experiment},
          {"label", r.label},
          {"seed", r.seed},
          {"fingerprint", r.fingerprint},
          {"dimension", r.dimension},
          {"initial_states", states_to_json(r.initial_states)},
          {"rounds", rounds},
          {"final_states", states_to_json(r.final_states)},
          {"fallback_count", r.fallback_count}};
}

inline ExperimentRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema")) throw SchemaError("record has no schema field");
  const auto version = j.at("schema");
  if (!version.is_number_integer() || version.get<int>() != kRecordSchema)
    throw SchemaError("unsupported record schema version " + version.dump() + " (expected " +
                      std::to_string(kRecordSchema) + ")");
  try {
    ExperimentRecord r;
    r.experiment = j.at("experiment").get<std::size_t>();
    r.label = j.at("label").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.dimension = j.at("dimension").get<int>();
    r.initial_states = states_from_json(j.at("initial_states"), r.dimension);
    for (const auto& jr : j.at("rounds")) {
      RoundRecord rr;
      rr.round = jr.at("round").get<std::size_t>();
      rr.states_before = states_from_json(jr.at("states_before"), r.dimension);
      for (const auto& jd : jr.at("decisions"))
        rr.decisions.push_back({jd.at("reasoning").get<std::string>(), state_from_json(jd.at("state"), r.dimension),
                                jd.at("error").get<bool>(), jd.at("attempts").get<int>()});
      rr.states_after = states_from_json(jr.at("states_after"), r.dimension);
      r.rounds.push_back(std::move(rr));
    }
    r.final_states = states_from_json(j.at("final_states"), r.dimension);
    r.fallback_count = j.at("fallback_count").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed record: ") + e.what());
  }
}

// JSON Lines: one record per line.
inline void write_records(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<ExperimentRecord> read_records(std::istream& in) {
  std::vector<ExperimentRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      out.push_back(record_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace consensus
