#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace page {

struct GeneratorConfig {
  std::string endpoint = "http://localhost:11434";
  std::string model = "llama3.1:8b";
  double temperature = 0.0;
  double timeout_seconds = 120.0;
  int max_retries = 2;
  int backoff_ms = 500;
  std::size_t concurrency = 1;  // in-flight requests

  void validate() const {
    if (!(timeout_seconds > 0.0)) throw std::invalid_argument("generator timeout must be positive");
    if (max_retries < 0) throw std::invalid_argument("generator retries must be non-negative");
    if (backoff_ms < 0) throw std::invalid_argument("generator backoff must be non-negative");
    if (concurrency == 0) throw std::invalid_argument("generator concurrency must be at least 1");
    if (model.empty()) throw std::invalid_argument("generator model name is empty");
  }
};

struct GenerationResult {
  std::string raw;
  std::string cleaned;
  double latency_ms = 0.0;
  int attempts = 1;
};

struct GenerationError : std::runtime_error {
  explicit GenerationError(const std::string& what, std::optional<int> status = std::nullopt)
      : std::runtime_error(what), status(status) {}
  std::optional<int> status;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) return false;
  }
  return true;
}

}  // namespace detail

/// Trims, drops a leading "EARS Requirement:" label and one pair of
/// enclosing double quotes. Applied until nothing changes, so it is
/// idempotent.
inline std::string clean_response(std::string_view raw) {
  static constexpr std::string_view kLabel = "EARS Requirement:";
  std::string_view s = detail::trim(raw);
  for (;;) {
    const std::size_t before = s.size();
    if (detail::starts_with_icase(s, kLabel)) s = detail::trim(s.substr(kLabel.size()));
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = detail::trim(s.substr(1, s.size() - 2));
    if (s.size() == before) break;
  }
  return std::string(s);
}

/// Anything that turns a prompt into text. Implementations must be safe to
/// call from several threads at once.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual GenerationResult generate(const std::string& prompt) const = 0;
  virtual std::string describe() const = 0;
  virtual std::size_t max_in_flight() const { return 1; }
};

struct Endpoint {
  std::string scheme_host_port;  // e.g. http://localhost:11434
  std::string path_prefix;       // "" or "/proxy"
};

inline Endpoint parse_endpoint(std::string_view url) {
  url = detail::trim(url);
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw std::invalid_argument("endpoint '" + std::string(url) + "' has no scheme");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw std::invalid_argument("endpoint '" + std::string(url) + "' must use http or https");
  }
  const auto path_at = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = std::string(url.substr(0, path_at));
  if (ep.scheme_host_port.size() == scheme_end + 3) throw std::invalid_argument("endpoint '" + std::string(url) + "' has no host");
  if (path_at != std::string_view::npos) {
    ep.path_prefix = std::string(url.substr(path_at));
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  }
  return ep;
}

/// Client for a local inference server's /api/generate endpoint
/// (non-streaming JSON).
class HttpGenerator final : public TextGenerator {
 public:
  explicit HttpGenerator(GeneratorConfig config) : config_(std::move(config)), endpoint_(parse_endpoint(config_.endpoint)) {
    config_.validate();
  }

  const GeneratorConfig& config() const noexcept { return config_; }
  std::string describe() const override { return config_.model + " @ " + config_.endpoint; }
  std::size_t max_in_flight() const override { return config_.concurrency; }

  /// Throws GenerationError when nothing answers at the endpoint. Any HTTP
  /// response, whatever its status, counts as reachable.
  void check_reachable() const {
    httplib::Client client(endpoint_.scheme_host_port);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(
                          std::chrono::duration<double>(std::min(config_.timeout_seconds, 10.0)))
                          .count();
    client.set_connection_timeout(usec / 1000000, usec % 1000000);
    client.set_read_timeout(usec / 1000000, usec % 1000000);
    auto res = client.Get(endpoint_.path_prefix.empty() ? "/" : endpoint_.path_prefix);
    if (!res) {
      throw GenerationError("cannot reach generator endpoint " + config_.endpoint + ": " + httplib::to_string(res.error()));
    }
  }

  std::string request_body(const std::string& prompt) const {
    nlohmann::json body = {{"model", config_.model},
                           {"prompt", prompt},
                           {"stream", false},
                           {"options", {{"temperature", config_.temperature}}}};
    return body.dump();
  }

  // Transport failures, timeouts, 429 and 5xx are retried with exponential
  // backoff; other statuses fail at once.
  GenerationResult generate(const std::string& prompt) const override {
    const auto start = std::chrono::steady_clock::now();
    const std::string body = request_body(prompt);
    const std::string path = endpoint_.path_prefix + "/api/generate";
    const int max_attempts = config_.max_retries + 1;

    for (int attempt = 1;; ++attempt) {
      httplib::Client client(endpoint_.scheme_host_port);
      const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
      const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout).count();
      client.set_connection_timeout(usec / 1000000, usec % 1000000);
      client.set_read_timeout(usec / 1000000, usec % 1000000);
      client.set_write_timeout(usec / 1000000, usec % 1000000);

      auto res = client.Post(path, body, "application/json");
      std::string failure;
      std::optional<int> status;
      bool retryable = true;
      if (!res) {
        failure = "cannot reach generator endpoint " + config_.endpoint + ": " + httplib::to_string(res.error());
      } else if (res->status < 200 || res->status >= 300) {
        status = res->status;
        retryable = res->status == 429 || res->status >= 500;
        failure = "generator endpoint " + config_.endpoint + " returned HTTP " + std::to_string(res->status) + ": " +
                  res->body.substr(0, 200);
      } else {
        GenerationResult out;
        out.raw = parse_response(res->body);
        out.cleaned = clean_response(out.raw);
        out.attempts = attempt;
        out.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return out;
      }
      if (!retryable || attempt >= max_attempts) {
        throw GenerationError(failure + " (after " + std::to_string(attempt) + " attempt" + (attempt == 1 ? "" : "s") + ")",
                              status);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(config_.backoff_ms) << (attempt - 1)));
    }
  }

 private:
  std::string parse_response(const std::string& body) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      throw GenerationError("generator endpoint " + config_.endpoint + " sent a non-JSON body: " + body.substr(0, 200));
    }
    if (!j.is_object() || !j.contains("response") || !j["response"].is_string()) {
      throw GenerationError("generator endpoint " + config_.endpoint + " sent JSON without a \"response\" string");
    }
    return j["response"].get<std::string>();
  }

  GeneratorConfig config_;
  Endpoint endpoint_;
};

/// Answers with the gold rewrite of whichever known requirement appears in
/// the prompt. When several do (examples can quote dataset rows), the one
/// occurring last wins, then the longest.
class MockGoldGenerator final : public TextGenerator {
 public:
  explicit MockGoldGenerator(std::map<std::string, std::string> natural_to_gold) : gold_(std::move(natural_to_gold)) {}

  std::string describe() const override { return "mock-gold"; }
  std::size_t max_in_flight() const override { return 1; }

  GenerationResult generate(const std::string& prompt) const override {
    const std::string* best = nullptr;
    std::size_t best_at = 0, best_len = 0;
    for (const auto& [natural, gold] : gold_) {
      const auto at = prompt.rfind(natural);
      if (at == std::string::npos) continue;
      if (!best || at > best_at || (at == best_at && natural.size() > best_len)) {
        best = &gold;
        best_at = at;
        best_len = natural.size();
      }
    }
    if (!best) throw GenerationError("mock-gold: prompt contains no known requirement");
    return {*best, clean_response(*best), 0.0, 1};
  }

 private:
  std::map<std::string, std::string> gold_;
};

class MockFixedGenerator final : public TextGenerator {
 public:
  explicit MockFixedGenerator(std::string text) : text_(std::move(text)) {}
  std::string describe() const override { return "mock-fixed"; }
  GenerationResult generate(const std::string&) const override { return {text_, clean_response(text_), 0.0, 1}; }

 private:
  std::string text_;
};

inline std::unique_ptr<TextGenerator> mock_gold_generator(std::map<std::string, std::string> natural_to_gold) {
  return std::make_unique<MockGoldGenerator>(std::move(natural_to_gold));
}

inline std::unique_ptr<TextGenerator> mock_fixed_generator(std::string text) {
  return std::make_unique<MockFixedGenerator>(std::move(text));
}

}  // namespace page
