#pragma once

// HTTP pieces of the chat backend. Kept apart from llm.hpp so that code
// which never talks to a server does not pull in cpp-httplib.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "consensus/llm.hpp"

namespace consensus {

struct ParsedUrl {
  std::string scheme_host_port;  // "https://api.example.com:443"
  std::string path_prefix;       // "/v1" or ""
};

inline ParsedUrl parse_base_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw std::invalid_argument("invalid endpoint base URL '" + url + "'");
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

// POSTs {model, temperature, messages} to <base_url>/chat/completions and
// returns choices[0].message.content. The bearer token is read from the
// named environment variable at request time and never stored.
class HttpChatTransport final : public ChatTransport {
 public:
  explicit HttpChatTransport(ChatEndpointSpec spec) : spec_(std::move(spec)), url_(parse_base_url(spec_.base_url)) {}

  std::string complete(const ChatRequest& request) override {
    httplib::Client client(url_.scheme_host_port);
    const auto whole = static_cast<time_t>(spec_.timeout_seconds);
    const auto micros = static_cast<time_t>(std::llround((spec_.timeout_seconds - static_cast<double>(whole)) * 1e6));
    client.set_connection_timeout(whole, micros);
    client.set_read_timeout(whole, micros);
    client.set_write_timeout(whole, micros);
    httplib::Headers headers;
    if (const char* key = std::getenv(spec_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(url_.path_prefix + "/chat/completions", headers, to_wire(request).dump(),
                           "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError("HTTP status " + std::to_string(res->status));
    try {
      const auto body = nlohmann::json::parse(res->body);
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed chat response: ") + e.what());
    }
  }

  const ChatEndpointSpec& spec() const { return spec_; }

 private:
  ChatEndpointSpec spec_;
  ParsedUrl url_;
};

inline nlohmann::json chat_response_body(const std::string& content) {
  return {{"object", "chat.completion"},
          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}}};
}

// Local chat-completions server for offline runs and tests. By default it
// answers like the AverageIncludeSelf rule (see mock_average_reply); a
// script can override individual requests to delay, fail or return prose.
class MockChatServer {
 public:
  struct Scripted {
    std::chrono::milliseconds delay{0};
    int status = 200;
    std::optional<std::string> content;  // nullopt: average-rule reply
  };
  using Script = std::function<std::optional<Scripted>(std::size_t request_index)>;

  explicit MockChatServer(Script script = nullptr) : script_(std::move(script)) {
    server_.Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t index = requests_++;
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(req.body);
        authorizations_.push_back(req.get_header_value("Authorization"));
      }
      std::optional<Scripted> plan = script_ ? script_(index) : std::nullopt;
      if (plan && plan->delay.count() > 0) std::this_thread::sleep_for(plan->delay);
      if (plan && plan->status != 200) {
        res.status = plan->status;
        res.set_content(R"({"error":"scripted failure"})", "application/json");
        return;
      }
      std::optional<std::string> content = plan ? plan->content : std::nullopt;
      if (!content) {
        try {
          const auto body = nlohmann::json::parse(req.body);
          content = mock_average_reply(body.at("messages").get<std::vector<ChatMessage>>());
        } catch (const nlohmann::json::exception&) {
        }
      }
      if (!content) {
        res.status = 400;
        res.set_content(R"({"error":"no turn prompt found"})", "application/json");
        return;
      }
      res.set_content(chat_response_body(*content).dump(), "application/json");
    });
  }

  ~MockChatServer() { stop(); }
  MockChatServer(const MockChatServer&) = delete;
  MockChatServer& operator=(const MockChatServer&) = delete;

  // Binds to host:port (port 0 picks a free one) and serves in the background.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("mock server could not bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stop() is called elsewhere.
  void listen(const std::string& host, int port) {
    port_ = port;
    if (!server_.listen(host, port)) throw std::runtime_error("mock server could not listen on port " + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::size_t request_count() const { return requests_; }
  std::vector<std::string> request_bodies() const {
    std::lock_guard lock(mutex_);
    return bodies_;
  }
  std::vector<std::string> authorization_headers() const {
    std::lock_guard lock(mutex_);
    return authorizations_;
  }

 private:
  Script script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<std::size_t> requests_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> bodies_;
  std::vector<std::string> authorizations_;
};

}  // namespace consensus
