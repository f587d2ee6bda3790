#pragma once

#include <cctype>
#include <charconv>
#include <chrono>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "consensus/state.hpp"
#include "consensus/strategy.hpp"

namespace consensus {

enum class Personality { None, Stubborn, Suggestible };

inline constexpr std::string_view to_string(Personality p) {
  switch (p) {
    case Personality::None: return "none";
    case Personality::Stubborn: return "stubborn";
    case Personality::Suggestible: return "suggestible";
  }
  return "none";
}

inline std::optional<Personality> parse_personality(std::string_view name) {
  for (auto p : {Personality::None, Personality::Stubborn, Personality::Suggestible})
    if (to_string(p) == name) return p;
  return std::nullopt;
}

// Prompt texts. "{personality}", "{self}" and "{others}" are the substitution
// slots; two-agent variants take a single state in {others}, multi-agent
// variants a bracketed list.
struct PromptTemplates {
  std::string role = "You are an agent moving in a one-dimensional space.{personality}";
  std::string stubborn = "You are an extremely stubborn person, prefer to remain stationary.";
  std::string suggestible = "You are an extremely suggestible person, prefer to move to someone else's position.";
  std::string round0_two_agent =
      "Another agent is present in the space, and you need to gather. Your position is: {self} and the other "
      "agent's position is: {others}.\"You need to choose a position to move to in order to gather, and briefly "
      "explain the reasoning behind your decision.";
  std::string round0_multi_agent =
      "There are many other agents in the space, you all need to gather at the same position, your position is: "
      "{self}, other people's positions are: {others}.You need to choose a position to move to in order to gather, "
      "and briefly explain the reasoning behind your decision.";
  std::string later_two_agent =
      "You have moved to {self}, and the latest position of another agent is: {others}., please choose the "
      "position you want to move to next.";
  std::string later_multi_agent =
      "You have now moved to {self}, the positions of other agents are {others}, please choose the position you "
      "want to move to next";
  std::string clarify_1d = "Please state the position you choose in the form \"Position: <number>\".";
  std::string clarify_2d = "Please state the position you choose in the form \"Position: [x, y]\".";

  static const PromptTemplates& standard() {
    static const PromptTemplates t;
    return t;
  }

  // Template used for a given round and neighbor count.
  const std::string& for_turn(std::size_t round, std::size_t neighbor_count) const {
    const bool two = neighbor_count == 1;
    if (round == 0) return two ? round0_two_agent : round0_multi_agent;
    return two ? later_two_agent : later_multi_agent;
  }
};

namespace detail {

inline void replace_all(std::string& text, std::string_view slot, std::string_view value) {
  for (auto pos = text.find(slot); pos != std::string::npos; pos = text.find(slot, pos + value.size()))
    text.replace(pos, slot.size(), value);
}

}  // namespace detail

inline std::string render_role_prompt(Personality personality, const PromptTemplates& t = PromptTemplates::standard()) {
  std::string text = t.role;
  std::string trait;
  if (personality == Personality::Stubborn) trait = " " + t.stubborn;
  if (personality == Personality::Suggestible) trait = " " + t.suggestible;
  detail::replace_all(text, "{personality}", trait);
  return text;
}

inline std::string render_turn_prompt(const Observation& obs, const PromptTemplates& t = PromptTemplates::standard()) {
  std::string text = t.for_turn(obs.round, obs.neighbor_states.size());
  const std::string others = obs.neighbor_states.size() == 1 ? format_state(obs.neighbor_states.front())
                                                             : format_state_list(obs.neighbor_states);
  // {others} first: a formatted state never contains "{self}".
  detail::replace_all(text, "{others}", others);
  detail::replace_all(text, "{self}", format_state(obs.self_state));
  return text;
}

// Splits `text` against a template with {self} before {others}; returns the
// two slot contents or nullopt when the literal parts do not line up.
inline std::optional<std::pair<std::string, std::string>> match_turn_template(std::string_view tmpl,
                                                                              std::string_view text) {
  const auto self_at = tmpl.find("{self}");
  const auto others_at = tmpl.find("{others}");
  if (self_at == std::string_view::npos || others_at == std::string_view::npos || others_at < self_at)
    return std::nullopt;
  const auto head = tmpl.substr(0, self_at);
  const auto middle = tmpl.substr(self_at + 6, others_at - self_at - 6);
  const auto tail = tmpl.substr(others_at + 8);
  if (!text.starts_with(head) || !text.ends_with(tail) || text.size() < head.size() + tail.size())
    return std::nullopt;
  const auto body = text.substr(head.size(), text.size() - head.size() - tail.size());
  const auto split = body.find(middle);
  if (split == std::string_view::npos) return std::nullopt;
  return std::pair{std::string(body.substr(0, split)), std::string(body.substr(split + middle.size()))};
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace detail {

struct NumberToken {
  std::size_t offset;
  double value;
};

inline std::vector<NumberToken> scan_numbers(std::string_view text) {
  auto digit_at = [&](std::size_t k) { return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k])); };
  auto word_at = [&](std::size_t k) {
    return k < text.size() && (std::isalpha(static_cast<unsigned char>(text[k])) || text[k] == '_');
  };
  std::vector<NumberToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (word_at(i)) {  // identifiers such as "agent2" carry no value
      while (word_at(i) || digit_at(i)) ++i;
      continue;
    }
    const bool starts_digits = digit_at(i) || (text[i] == '.' && digit_at(i + 1));
    // A sign right after a digit is a range dash ("40-60"), not a sign.
    const bool starts_signed = (text[i] == '-' || text[i] == '+') && (i == 0 || !digit_at(i - 1)) &&
                               (digit_at(i + 1) || (i + 1 < text.size() && text[i + 1] == '.' && digit_at(i + 2)));
    if (!starts_digits && !starts_signed) {
      ++i;
      continue;
    }
    std::size_t j = i + (starts_signed ? 1 : 0);
    while (digit_at(j)) ++j;
    if (j < text.size() && text[j] == '.' && digit_at(j + 1)) {
      ++j;
      while (digit_at(j)) ++j;
    }
    if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
      std::size_t k = j + 1;
      if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
      if (digit_at(k)) {
        while (digit_at(k)) ++k;
        j = k;
      }
    }
    std::string token(text.substr(i, j - i));
    if (token.front() == '+') token.erase(0, 1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) value = std::numeric_limits<double>::infinity();
    out.push_back({i, value});
    i = j;
  }
  return out;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Offset just past the last "position" label: the word followed by optional
// markup (*, _, quotes, blanks) and a colon, or a line that begins with it.
// Without a label, the last free-standing "position" in running text.
inline std::optional<std::size_t> last_position_label(std::string_view text) {
  const std::string lower = lowercase(text);
  std::optional<std::size_t> found, phrase;
  for (auto pos = lower.find("position"); pos != std::string::npos; pos = lower.find("position", pos + 1)) {
    const bool word_end = pos + 8 == lower.size() || !std::isalpha(static_cast<unsigned char>(lower[pos + 8]));
    if (word_end) phrase = pos + 8;
    std::size_t k = pos + 8;
    while (k < lower.size() && (lower[k] == '*' || lower[k] == '_' || lower[k] == '"' || lower[k] == ' ')) ++k;
    bool labeled = k < lower.size() && lower[k] == ':';
    if (labeled) {
      found = k + 1;
      continue;
    }
    std::size_t b = pos;
    while (b > 0 && (lower[b - 1] == ' ' || lower[b - 1] == '*' || lower[b - 1] == '#' || lower[b - 1] == '-')) --b;
    const bool line_start = b == 0 || lower[b - 1] == '\n';
    if (line_start && word_end) found = pos + 8;
  }
  return found ? found : phrase;
}

}  // namespace detail

// Extracts the chosen position from a free-text reply: the first number(s)
// after the last "Position" label, else the last number(s) in the reply.
inline std::optional<State> parse_position(std::string_view reply, int dimension) {
  State::check_dimension(dimension);
  const auto need = static_cast<std::size_t>(dimension);
  auto make = [&](const std::vector<detail::NumberToken>& toks, std::size_t first) -> std::optional<State> {
    for (std::size_t k = first; k < first + need; ++k)
      if (!std::isfinite(toks[k].value)) return std::nullopt;
    return dimension == 1 ? State(toks[first].value) : State(toks[first].value, toks[first + 1].value);
  };
  if (auto label = detail::last_position_label(reply)) {
    auto toks = detail::scan_numbers(reply.substr(*label));
    if (toks.size() >= need) return make(toks, 0);
  }
  auto toks = detail::scan_numbers(reply);
  if (toks.size() < need) return std::nullopt;
  return make(toks, toks.size() - need);
}

// ---------------------------------------------------------------------------
// Sessions and transport

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline void to_json(nlohmann::json& j, const ChatMessage& m) { j = {{"role", m.role}, {"content", m.content}}; }
inline void from_json(const nlohmann::json& j, ChatMessage& m) {
  j.at("role").get_to(m.role);
  j.at("content").get_to(m.content);
}

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  std::vector<ChatMessage> messages;
};

inline nlohmann::json to_wire(const ChatRequest& r) {
  return {{"model", r.model}, {"temperature", r.temperature}, {"messages", r.messages}};
}

// Network, HTTP status or malformed-response failure.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything that can complete a chat. Implementations must be safe to call
// from several threads at once (sessions are never shared, transports are).
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

inline constexpr std::string_view kDefaultApiKeyEnv = "CONSENSUS_LLM_API_KEY";

// Where to send chat requests. Holds the *name* of the key variable only.
struct ChatEndpointSpec {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = std::string(kDefaultApiKeyEnv);
  double timeout_seconds = 30.0;
  std::string model = "gpt-3.5-turbo-0613";
  friend bool operator==(const ChatEndpointSpec&, const ChatEndpointSpec&) = default;
};

struct AgentSession {
  std::size_t agent_index = 0;
  Personality personality = Personality::None;
  std::vector<ChatMessage> history;
  std::string model = "gpt-3.5-turbo-0613";
  double temperature = 0.0;
  int retry_limit = 3;
  std::optional<std::size_t> history_window;  // rounds of context resent; nullopt = all
  int dimension = 1;

  static AgentSession create(std::size_t agent_index, Personality personality, std::string model, double temperature,
                             int retry_limit, int dimension = 1,
                             const PromptTemplates& templates = PromptTemplates::standard()) {
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw std::invalid_argument("temperature must lie in [0, 2]");
    if (retry_limit < 0) throw std::invalid_argument("retry_limit must be >= 0");
    State::check_dimension(dimension);
    AgentSession s;
    s.agent_index = agent_index;
    s.personality = personality;
    s.model = std::move(model);
    s.temperature = temperature;
    s.retry_limit = retry_limit;
    s.dimension = dimension;
    s.history.push_back({"system", render_role_prompt(personality, templates)});
    return s;
  }

  // System prompt plus the trailing window of exchanged messages.
  std::vector<ChatMessage> context() const {
    if (!history_window || history.size() <= 1 + 2 * *history_window) return history;
    std::vector<ChatMessage> out{history.front()};
    out.insert(out.end(), history.end() - static_cast<std::ptrdiff_t>(2 * *history_window), history.end());
    return out;
  }
};

struct RetryPolicy {
  std::chrono::milliseconds initial_backoff{250};
  double backoff_factor = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

struct StepOutcome {
  std::optional<State> state;  // nullopt: backend failure, caller holds previous state
  std::string reply;           // last reply received (may be empty)
  int attempts = 0;
  std::string error;
};

// One round for one agent: render, send the full context, parse. Transport
// failures are retried with exponential backoff; unparseable replies are
// re-asked with a clarifying message. Both draw from the same budget of
// 1 + retry_limit attempts. On success the history gains exactly the prompt
// and the accepted reply; on exhaustion it is left as it was.
inline StepOutcome step_session(AgentSession& session, const Observation& obs, ChatTransport& transport,
                                const RetryPolicy& policy = {},
                                const PromptTemplates& templates = PromptTemplates::standard()) {
  obs.validate();
  StepOutcome out;
  const std::size_t mark = session.history.size();
  const ChatMessage prompt{"user", render_turn_prompt(obs, templates)};
  session.history.push_back(prompt);
  auto backoff = policy.initial_backoff;

  for (int attempt = 0; attempt <= session.retry_limit; ++attempt) {
    out.attempts = attempt + 1;
    std::string reply;
    try {
      reply = transport.complete({session.model, session.temperature, session.context()});
    } catch (const TransportError& e) {
      out.error = e.what();
      if (attempt < session.retry_limit && policy.sleep) {
        policy.sleep(backoff);
        backoff = std::chrono::milliseconds(static_cast<long long>(backoff.count() * policy.backoff_factor));
      }
      continue;
    }
    out.reply = reply;
    if (auto pos = parse_position(reply, session.dimension)) {
      session.history.resize(mark);
      session.history.push_back(prompt);
      session.history.push_back({"assistant", reply});
      out.state = *pos;
      out.error.clear();
      return out;
    }
    out.error = "no position found in reply";
    session.history.push_back({"assistant", reply});
    session.history.push_back({"user", session.dimension == 1 ? templates.clarify_1d : templates.clarify_2d});
  }
  session.history.resize(mark);
  return out;
}

// ---------------------------------------------------------------------------
// Offline stand-in for a chat model

// Reads the latest turn prompt in `messages` and answers with the
// include-self average in canonical reply form, exactly as the
// AverageIncludeSelf strategy would. nullopt if no turn prompt is found.
inline std::optional<std::string> mock_average_reply(const std::vector<ChatMessage>& messages,
                                                     const PromptTemplates& templates = PromptTemplates::standard()) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role != "user") continue;
    for (const std::string* tmpl : {&templates.round0_two_agent, &templates.round0_multi_agent,
                                    &templates.later_two_agent, &templates.later_multi_agent}) {
      auto slots = match_turn_template(*tmpl, it->content);
      if (!slots) continue;
      const bool two = tmpl == &templates.round0_two_agent || tmpl == &templates.later_two_agent;
      for (int dim : {1, 2}) {
        auto self = parse_state_text(slots->first, dim);
        if (!self) continue;
        std::vector<State> population{*self};
        if (two) {
          auto other = parse_state_text(slots->second, dim);
          if (!other) continue;
          population.push_back(*other);
        } else {
          std::string_view list = slots->second;
          if (list.size() < 2 || list.front() != '[' || list.back() != ']') continue;
          list = list.substr(1, list.size() - 2);
          bool ok = true;
          while (ok && !list.empty()) {
            std::size_t end = dim == 1 ? list.find(',') : list.find(']');
            if (dim == 2 && end != std::string_view::npos) ++end;
            auto item = parse_state_text(list.substr(0, end), dim);
            ok = item.has_value();
            if (ok) population.push_back(*item);
            if (end == std::string_view::npos || end >= list.size()) break;
            list = list.substr(end);
            while (!list.empty() && (list.front() == ',' || list.front() == ' ')) list.remove_prefix(1);
          }
          if (!ok) continue;
        }
        return canonical_reply(rule_description(StrategyKind::AverageIncludeSelf), mean_state(population));
      }
    }
  }
  return std::nullopt;
}

// In-process transport answering with mock_average_reply.
class MockChatTransport final : public ChatTransport {
 public:
  std::string complete(const ChatRequest& request) override {
    auto reply = mock_average_reply(request.messages);
    if (!reply) throw TransportError("mock: no turn prompt in request");
    return *reply;
  }
};

}  // namespace consensus
