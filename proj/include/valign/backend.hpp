#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "valign/error.hpp"

namespace valign {

inline constexpr double kDefaultTopP = 0.7;
inline constexpr double kDefaultTemperature = 1.0;
inline constexpr std::size_t kDefaultMaxTokens = 256;

struct GenRequest {
  std::string prompt;
  double top_p = kDefaultTopP;
  double temperature = kDefaultTemperature;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t n_samples = 1;
  std::vector<std::string> stop_sequences;

  void validate() const {
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be non-negative");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  }
};

struct GenResult {
  std::vector<std::string> completions;
  std::string backend_id;
  std::string model_name;
  std::size_t request_index = 0;
};

// Text-completion backend. Implementations must be callable concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual GenResult complete(const GenRequest& request, std::size_t request_index = 0) const = 0;

  virtual std::string backend_id() const = 0;
  virtual std::string model_name() const = 0;
};

struct BatchFailure {
  std::size_t index = 0;
  std::optional<BackendErrorKind> kind;  // empty for non-backend errors
  std::string message;
};

struct BatchResult {
  std::vector<std::optional<GenResult>> results;  // aligned with the input requests
  std::vector<BatchFailure> failures;             // sorted by index

  bool ok() const noexcept { return failures.empty(); }
  std::size_t succeeded() const noexcept { return results.size() - failures.size(); }
};

// Runs requests on up to `parallelism` threads. Output order always matches
// input order; failures are recorded per index and never abort the batch.
inline BatchResult batch_complete(const Backend& backend, const std::vector<GenRequest>& requests,
                                  std::size_t parallelism, std::size_t index_offset = 0) {
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  BatchResult out;
  out.results.resize(requests.size());
  std::vector<std::optional<BatchFailure>> failures(requests.size());

  auto run_one = [&](std::size_t i) {
    try {
      out.results[i] = backend.complete(requests[i], index_offset + i);
    } catch (const BackendError& e) {
      failures[i] = BatchFailure{index_offset + i, e.kind(), e.what()};
    } catch (const std::exception& e) {
      failures[i] = BatchFailure{index_offset + i, std::nullopt, e.what()};
    }
  };

  const std::size_t workers = std::min(parallelism, requests.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) run_one(i);
      });
    }
  }

  for (auto& f : failures) {
    if (f) out.failures.push_back(std::move(*f));
  }
  return out;
}

}  // namespace valign
