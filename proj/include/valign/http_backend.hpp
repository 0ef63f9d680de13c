#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include "httplib.h"
#include "valign/backend.hpp"
#include "valign/jsonl.hpp"
#include "valign/rng.hpp"

namespace valign {

inline constexpr const char* kApiKeyEnv = "VALIGN_API_KEY";

struct RetryPolicy {
  std::size_t max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  std::chrono::milliseconds max_delay{60'000};
  double jitter = 0.25;  // extra delay, uniform in [0, jitter * backoff)

  std::chrono::milliseconds backoff(std::size_t attempt, Rng& rng) const {
    const double base = static_cast<double>(base_delay.count()) * static_cast<double>(std::uint64_t{1} << std::min<std::size_t>(attempt, 30));
    const double capped = std::min(base, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<long long>(capped * (1.0 + jitter * rng.uniform())));
  }
};

struct HttpConfig {
  std::string url;  // full completions endpoint, e.g. https://host/v1/completions
  std::string model_name;
  std::string api_key;  // taken from VALIGN_API_KEY when empty
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("backend.url must start with http:// or https://");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (out.origin.size() <= scheme_end + 3) throw ConfigError("backend.url has no host");
  return out;
}

// Client for OpenAI-compatible text completion endpoints. Transient failures
// (connection errors, 408/409/429/5xx) are retried with exponential backoff.
class HttpBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(HttpConfig cfg, Sleeper sleeper = {}) : cfg_(std::move(cfg)), sleeper_(std::move(sleeper)) {
    endpoint_ = parse_url(cfg_.url);
    if (cfg_.api_key.empty()) {
      if (const char* key = std::getenv(kApiKeyEnv)) cfg_.api_key = key;
    }
    if (cfg_.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  static json request_body(const GenRequest& r, const std::string& model) {
    json body = {{"model", model},
                 {"prompt", r.prompt},
                 {"top_p", r.top_p},
                 {"temperature", r.temperature},
                 {"max_tokens", r.max_tokens},
                 {"n", r.n_samples}};
    if (!r.stop_sequences.empty()) body["stop"] = r.stop_sequences;
    return body;
  }

  GenResult complete(const GenRequest& request, std::size_t request_index = 0) const override {
    request.validate();
    const std::string body = request_body(request, cfg_.model_name).dump();
    Rng jitter_rng(derive_seed(fnv1a64(request.prompt), request_index));

    BackendErrorKind last_kind = BackendErrorKind::network;
    std::string last_error;
    std::optional<std::chrono::milliseconds> retry_after;
    for (std::size_t attempt = 0; attempt < cfg_.retry.max_attempts; ++attempt) {
      if (attempt > 0) {
        sleeper_(retry_after ? std::min(*retry_after, cfg_.retry.max_delay) : cfg_.retry.backoff(attempt - 1, jitter_rng));
      }

      httplib::Client client(endpoint_.origin);
      const auto secs = static_cast<time_t>(cfg_.timeout.count());
      client.set_connection_timeout(secs, 0);
      client.set_read_timeout(secs, 0);
      client.set_write_timeout(secs, 0);
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

      auto res = client.Post(endpoint_.path, headers, body, "application/json");
      if (!res) {
        last_kind = BackendErrorKind::network;
        last_error = redact("request to " + cfg_.url + " failed: " + httplib::to_string(res.error()));
        retry_after.reset();
        continue;
      }
      const int status = res->status;
      if (status >= 200 && status < 300) return parse_response(res->body, request, request_index);

      const std::string detail =
          redact("HTTP " + std::to_string(status) + " from " + cfg_.url + ": " + res->body.substr(0, 200));
      if (status == 401 || status == 403) throw BackendError(BackendErrorKind::auth, detail);
      const bool transient = status == 408 || status == 409 || status == 429 || status >= 500;
      if (!transient) throw BackendError(BackendErrorKind::request, detail);
      last_kind = status == 429 ? BackendErrorKind::rate_limit : BackendErrorKind::network;
      last_error = detail;
      retry_after.reset();
      if (res->has_header("Retry-After")) {
        char* end = nullptr;
        const std::string v = res->get_header_value("Retry-After");
        const double s = std::strtod(v.c_str(), &end);
        if (end != v.c_str() && s >= 0) retry_after = std::chrono::milliseconds(static_cast<long long>(s * 1000.0));
      }
    }
    throw BackendError(last_kind, last_error + " (after " + std::to_string(cfg_.retry.max_attempts) + " attempts)");
  }

  std::string backend_id() const override { return "http"; }
  std::string model_name() const override { return cfg_.model_name; }

 private:
  std::string redact(std::string msg) const {
    if (cfg_.api_key.empty()) return msg;
    for (auto p = msg.find(cfg_.api_key); p != std::string::npos; p = msg.find(cfg_.api_key, p + 3)) {
      msg.replace(p, cfg_.api_key.size(), "***");
    }
    return msg;
  }

  GenResult parse_response(const std::string& payload, const GenRequest& request, std::size_t request_index) const {
    json doc;
    try {
      doc = json::parse(payload);
    } catch (const json::parse_error& e) {
      throw BackendError(BackendErrorKind::malformed_response, std::string("response is not JSON: ") + e.what());
    }
    const auto choices = doc.find("choices");
    if (!doc.is_object() || choices == doc.end() || !choices->is_array()) {
      throw BackendError(BackendErrorKind::malformed_response, "response has no choices array");
    }
    if (choices->size() != request.n_samples) {
      throw BackendError(BackendErrorKind::malformed_response,
                         "expected " + std::to_string(request.n_samples) + " choices, got " + std::to_string(choices->size()));
    }
    std::vector<std::pair<std::size_t, std::string>> ordered;
    for (std::size_t i = 0; i < choices->size(); ++i) {
      const auto& c = (*choices)[i];
      const auto text = c.find("text");
      if (!c.is_object() || text == c.end() || !text->is_string()) {
        throw BackendError(BackendErrorKind::malformed_response, "choice " + std::to_string(i) + " has no text");
      }
      std::size_t index = i;
      if (auto idx = c.find("index"); idx != c.end() && idx->is_number_unsigned()) index = idx->get<std::size_t>();
      ordered.emplace_back(index, text->get<std::string>());
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    GenResult out;
    for (auto& [idx, text] : ordered) out.completions.push_back(std::move(text));
    out.backend_id = backend_id();
    out.model_name = doc.value("model", cfg_.model_name);
    out.request_index = request_index;
    return out;
  }

  HttpConfig cfg_;
  Sleeper sleeper_;
  ParsedUrl endpoint_;
};

}  // namespace valign
