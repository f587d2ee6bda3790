#include <gtest/gtest.h>

#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "consensus/consensus.hpp"

using namespace consensus;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in) << path;
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string golden(const std::string& name) { return read_file(std::string(CONSENSUS_TEST_DATA) + "/golden/" + name); }

Observation obs1(double self, std::vector<double> others, std::size_t round) {
  Observation o{State(self), {}, round};
  for (double v : others) o.neighbor_states.emplace_back(v);
  return o;
}

// Replays a fixed list of outcomes; an empty optional is a transport error.
class ScriptedTransport final : public ChatTransport {
 public:
  explicit ScriptedTransport(std::deque<std::optional<std::string>> script) : script_(std::move(script)) {}
  std::string complete(const ChatRequest& request) override {
    requests.push_back(request);
    if (script_.empty()) throw TransportError("script exhausted");
    auto next = script_.front();
    script_.pop_front();
    if (!next) throw TransportError("timeout");
    return *next;
  }
  std::vector<ChatRequest> requests;

 private:
  std::deque<std::optional<std::string>> script_;
};

RetryPolicy recording_policy(std::vector<std::chrono::milliseconds>& sleeps) {
  RetryPolicy p;
  p.sleep = [&sleeps](std::chrono::milliseconds d) { sleeps.push_back(d); };
  return p;
}

}  // namespace

TEST(Prompts, RoleGolden) {
  EXPECT_EQ(render_role_prompt(Personality::None), golden("role_none.txt"));
  EXPECT_EQ(render_role_prompt(Personality::Stubborn), golden("role_stubborn.txt"));
  EXPECT_EQ(render_role_prompt(Personality::Suggestible), golden("role_suggestible.txt"));
  EXPECT_TRUE(render_role_prompt(Personality::Stubborn).ends_with("prefer to remain stationary."));
  for (auto p : {Personality::None, Personality::Stubborn, Personality::Suggestible}) {
    const auto text = render_role_prompt(p);
    EXPECT_EQ(text.find('{'), std::string::npos);
    EXPECT_EQ(text.find("[Personality"), std::string::npos);
  }
}

TEST(Prompts, TurnGolden) {
  EXPECT_EQ(render_turn_prompt(obs1(20, {80}, 0)), golden("round0_two_agent.txt"));
  EXPECT_EQ(render_turn_prompt(obs1(50, {40, 60, 70}, 0)), golden("round0_multi_agent.txt"));
  EXPECT_EQ(render_turn_prompt(obs1(50, {35.5}, 1)), golden("later_two_agent.txt"));
  EXPECT_EQ(render_turn_prompt(obs1(50.0, {40, 60, 70}, 2)), golden("later_multi_agent.txt"));
  Observation planar{State(10.0, 10.0), {State(90.0, 20.0), State(20.0, 80.0), State(70.0, 90.0)}, 3};
  EXPECT_EQ(render_turn_prompt(planar), golden("later_multi_agent_2d.txt"));
}

TEST(Prompts, WorkedExamples) {
  const auto two = render_turn_prompt(obs1(20, {80}, 0));
  EXPECT_NE(two.find("Your position is: 20"), std::string::npos);
  EXPECT_NE(two.find("the other agent's position is: 80"), std::string::npos);
  EXPECT_NE(render_turn_prompt(obs1(50.0, {40, 60, 70}, 2)).find("positions of other agents are [40, 60, 70]"),
            std::string::npos);
}

TEST(Prompts, TwoAgentVariantIffOneNeighbor) {
  const auto& t = PromptTemplates::standard();
  for (std::size_t round : {0u, 1u, 5u})
    for (std::size_t k = 0; k <= 5; ++k) {
      std::vector<double> others(k, 1.0);
      const auto text = render_turn_prompt(obs1(0, others, round));
      const bool two = text.starts_with(round == 0 ? "Another agent" : "You have moved");
      EXPECT_EQ(two, k == 1) << "round " << round << " neighbors " << k;
      EXPECT_EQ(text.find('{'), std::string::npos);
      EXPECT_EQ(&t.for_turn(round, k) == &t.round0_two_agent || &t.for_turn(round, k) == &t.later_two_agent, k == 1);
    }
}

TEST(Prompts, TemplateMatchInvertsRendering) {
  const auto text = render_turn_prompt(obs1(12.5, {1, 2, 3}, 4));
  const auto slots = match_turn_template(PromptTemplates::standard().later_multi_agent, text);
  ASSERT_TRUE(slots);
  EXPECT_EQ(slots->first, "12.5");
  EXPECT_EQ(slots->second, "[1, 2, 3]");
  EXPECT_FALSE(match_turn_template(PromptTemplates::standard().round0_two_agent, text));
}

TEST(Parser, WorkedExamples) {
  EXPECT_EQ(parse_position("Reasoning: average is fair.\nPosition: 50", 1), State(50.0));
  EXPECT_EQ(parse_position("I will move to 47.5 to meet halfway.", 1), State(47.5));
  EXPECT_EQ(parse_position("Let's gather together!", 1), std::nullopt);
}

TEST(Parser, CorpusFullyExtracted) {
  std::ifstream in(std::string(CONSENSUS_TEST_DATA) + "/data/parser_corpus.jsonl");
  ASSERT_TRUE(in);
  std::string line;
  std::size_t cases = 0, correct = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const int dim = j.at("dimension").get<int>();
    std::optional<State> expected;
    if (!j.at("expected").is_null()) expected = state_from_json(j.at("expected"), dim);
    const auto got = parse_position(j.at("reply").get<std::string>(), dim);
    ++cases;
    if (got == expected) ++correct;
    EXPECT_EQ(got, expected) << j.at("reply");
  }
  EXPECT_GE(cases, 20u);
  EXPECT_EQ(correct, cases);
}

TEST(Parser, EchoRoundTripProperty) {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> mantissa(-1.0, 1.0);
  std::uniform_int_distribution<int> exponent(-300, 300);
  for (int i = 0; i < 20000; ++i) {
    const double v = std::ldexp(mantissa(gen), exponent(gen) * 3);
    if (!std::isnormal(v) && v != 0.0) continue;
    EXPECT_EQ(parse_position("Position: " + format_number(v), 1), State(v)) << format_number(v);
    const State p(v, -v / 3);
    EXPECT_EQ(parse_position("Position: " + format_state(p), 2), p);
  }
}

TEST(Parser, RejectsNonFinite) {
  EXPECT_EQ(parse_position("Position: 1e999", 1), std::nullopt);
  EXPECT_EQ(parse_position("Position: inf", 1), std::nullopt);
}

TEST(Session, CreateValidates) {
  const auto s = AgentSession::create(0, Personality::Stubborn, "m", 0.7, 3);
  ASSERT_EQ(s.history.size(), 1u);
  EXPECT_EQ(s.history[0], (ChatMessage{"system", golden("role_stubborn.txt")}));
  EXPECT_THROW(AgentSession::create(0, Personality::None, "m", 2.5, 3), std::invalid_argument);
  EXPECT_THROW(AgentSession::create(0, Personality::None, "m", 0.0, -1), std::invalid_argument);
}

TEST(Session, SimpleRoundTrip) {
  auto s = AgentSession::create(0, Personality::None, "m", 0.0, 3);
  ScriptedTransport t({"Position: 42"});
  const auto out = step_session(s, obs1(20, {80}, 0), t);
  EXPECT_EQ(out.state, State(42.0));
  EXPECT_EQ(out.reply, "Position: 42");
  EXPECT_EQ(out.attempts, 1);
  ASSERT_EQ(t.requests.size(), 1u);
  EXPECT_EQ(t.requests[0].model, "m");
  EXPECT_EQ(t.requests[0].messages.size(), 2u);
  EXPECT_EQ(s.history.back(), (ChatMessage{"assistant", "Position: 42"}));
}

TEST(Session, TransportRetriesWithBackoff) {
  auto s = AgentSession::create(0, Personality::None, "m", 0.0, 3);
  ScriptedTransport t({std::nullopt, std::nullopt, "Reasoning: ok\nPosition: 55"});
  std::vector<std::chrono::milliseconds> sleeps;
  const auto out = step_session(s, obs1(20, {80}, 0), t, recording_policy(sleeps));
  EXPECT_EQ(out.state, State(55.0));
  EXPECT_EQ(out.attempts, 3);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(250), std::chrono::milliseconds(500)}));
  EXPECT_EQ(s.history.size(), 3u);
}

TEST(Session, ParseFailureReasksThenSucceeds) {
  auto s = AgentSession::create(0, Personality::None, "m", 0.0, 3);
  ScriptedTransport t({"I am thinking about it.", "Position: 61"});
  std::vector<std::chrono::milliseconds> sleeps;
  const auto out = step_session(s, obs1(20, {80}, 0), t, recording_policy(sleeps));
  EXPECT_EQ(out.state, State(61.0));
  EXPECT_EQ(out.attempts, 2);
  EXPECT_TRUE(sleeps.empty());
  ASSERT_EQ(t.requests.size(), 2u);
  const auto& second = t.requests[1].messages;
  ASSERT_EQ(second.size(), 4u);
  EXPECT_EQ(second[2], (ChatMessage{"assistant", "I am thinking about it."}));
  EXPECT_EQ(second[3], (ChatMessage{"user", PromptTemplates::standard().clarify_1d}));
  EXPECT_EQ(s.history.size(), 3u);  // the failed exchange is not kept
}

TEST(Session, ExhaustionLeavesHistoryUntouched) {
  auto s = AgentSession::create(0, Personality::None, "m", 0.0, 2);
  ScriptedTransport t({"Let's gather together!", "We should meet.", "Agreed, gathering."});
  std::vector<std::chrono::milliseconds> sleeps;
  const auto out = step_session(s, obs1(20, {80}, 0), t, recording_policy(sleeps));
  EXPECT_FALSE(out.state);
  EXPECT_EQ(out.attempts, 3);
  EXPECT_FALSE(out.error.empty());
  EXPECT_EQ(s.history.size(), 1u);
}

TEST(Session, HistoryInvariantOverRounds) {
  auto s = AgentSession::create(0, Personality::None, "m", 0.0, 3);
  std::deque<std::optional<std::string>> script;
  for (int r = 0; r < 8; ++r) {
    if (r % 3 == 1) script.push_back(std::nullopt);
    if (r % 3 == 2) script.push_back("no numbers here");
    script.push_back("Position: " + std::to_string(r));
  }
  ScriptedTransport t(script);
  std::vector<std::chrono::milliseconds> sleeps;
  for (std::size_t r = 0; r < 8; ++r) {
    ASSERT_TRUE(step_session(s, obs1(1, {2}, r), t, recording_policy(sleeps)).state);
    EXPECT_EQ(s.history.size(), 1 + 2 * (r + 1));
    EXPECT_EQ(s.history[0].role, "system");
  }
}

TEST(Session, HistoryWindowTruncatesContext) {
  auto s = AgentSession::create(0, Personality::None, "m", 0.0, 0);
  s.history_window = 2;
  MockChatTransport mock;
  for (std::size_t r = 0; r < 5; ++r) step_session(s, obs1(10, {20}, r), mock);
  const auto ctx = s.context();
  ASSERT_EQ(ctx.size(), 5u);
  EXPECT_EQ(ctx[0].role, "system");
  EXPECT_EQ(ctx.back(), s.history.back());
}

TEST(MockReply, AnswersLikeTheAverageRule) {
  const std::vector<ChatMessage> msgs{{"system", render_role_prompt(Personality::None)},
                                      {"user", render_turn_prompt(obs1(20, {40, 60, 70}, 0))}};
  EXPECT_EQ(mock_average_reply(msgs),
            canonical_reply(rule_description(StrategyKind::AverageIncludeSelf), State(47.5)));
  Observation planar{State(10.0, 10.0), {State(90.0, 20.0), State(20.0, 80.0), State(70.0, 90.0)}, 3};
  EXPECT_EQ(parse_position(*mock_average_reply({{"user", render_turn_prompt(planar)}}), 2), State(47.5, 50.0));
  EXPECT_EQ(mock_average_reply({{"user", "hello"}}), std::nullopt);
}

TEST(LlmEngine, InProcessMockMatchesStrategyRun) {
  auto strategy_cfg = parse_experiment_config(nlohmann::json::parse(
      R"({"experiments": 3, "seed": 5, "agent": {"kind": "average_include_self"}, "agent_count": 4})"));
  auto llm_cfg = parse_experiment_config(nlohmann::json::parse(
      R"({"experiments": 3, "seed": 5, "agent": {"backend": "llm"}, "agent_count": 4, "endpoint": {"base_url": "http://127.0.0.1:1/v1"}})"));
  RunOptions opts;
  opts.factory = make_backend_factory(std::make_shared<MockChatTransport>());
  auto a = run_batch(strategy_cfg);
  auto b = run_batch(llm_cfg, opts);
  for (auto* batch : {&a, &b})
    for (auto& r : *batch) r.fingerprint.clear();
  EXPECT_EQ(a, b);
}

TEST(LlmEngine, ApiKeyNeverRecorded) {
  const std::string secret = "sk-test-very-secret-token";
  ::setenv("CONSENSUS_TEST_KEY_VAR", secret.c_str(), 1);
  auto cfg = parse_experiment_config(nlohmann::json::parse(
      R"({"agent": {"backend": "llm"}, "agent_count": 2, "endpoint": {"base_url": "http://127.0.0.1:1/v1", "api_key_env": "CONSENSUS_TEST_KEY_VAR"}})"));
  RunOptions opts;
  opts.factory = make_backend_factory(std::make_shared<MockChatTransport>());
  std::ostringstream out;
  write_records(out, run_batch(cfg, opts));
  EXPECT_EQ(out.str().find(secret), std::string::npos);
  EXPECT_EQ(config_to_json(cfg).dump().find(secret), std::string::npos);
  ::unsetenv("CONSENSUS_TEST_KEY_VAR");
}
