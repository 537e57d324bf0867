/* Copyright 2026 The StorInfer Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <chrono>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "storinfer/embedding.hpp"
#include "storinfer/error.hpp"
#include "storinfer/llm_client.hpp"
#include "storinfer/pair_store.hpp"

namespace storinfer {

using Millis = std::chrono::duration<double, std::milli>;

struct RuntimeConfig {
  // Stored response served only when best similarity is strictly above.
  double hit_threshold = 0.9;
  std::size_t top_k = 1;
  bool insert_on_miss = false;
  std::string system_prompt = "You are a helpful assistant.";
  int max_tokens = 256;

  void validate() const;
};

enum class AnswerSource { kHit, kMiss };

struct AnswerOutcome {
  std::string text;
  AnswerSource source = AnswerSource::kMiss;
  std::optional<RecordId> matched_id;
  std::optional<double> similarity;
  Millis search_latency{0};
  std::optional<Millis> llm_latency;
  Millis total_latency{0};

  nlohmann::json to_json() const;
};

struct MetricsSnapshot {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::optional<double> hit_rate;  // null with no traffic
  std::optional<double> mean_search_ms;
  std::optional<double> mean_llm_ms;
  std::optional<double> mean_total_ms;

  nlohmann::json to_json() const;
};

/// Hit/miss counters and per-path latency means. Thread-safe.
class MetricsRegistry {
 public:
  void record(const AnswerOutcome& outcome);
  MetricsSnapshot snapshot() const;

 private:
  mutable std::mutex mu_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
  double search_ms_sum_ = 0.0;
  double llm_ms_sum_ = 0.0;
  std::uint64_t llm_samples_ = 0;
  double total_ms_sum_ = 0.0;
};

void record_metrics(const AnswerOutcome& outcome, MetricsRegistry& registry);

struct GatewayDeps {
  std::shared_ptr<Artifacts> artifacts;
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<LlmClient> llm;
  std::shared_ptr<MetricsRegistry> metrics;  // optional
};

/// Online answer path. Each answer() runs the LLM call on a worker and the
/// embed + vector search on the calling thread; a hit fires the LLM's
/// cancel token and returns the stored response without waiting for it.
class Gateway {
 public:
  Gateway(GatewayDeps deps, RuntimeConfig cfg);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Throws kEmptyQuery; kLlmUnavailable on the miss path only.
  AnswerOutcome answer(std::string_view query);
  AnswerOutcome answer(std::string_view query, const RuntimeConfig& cfg);

  // The exact request sent upstream for a query.
  CompletionRequest request_for(std::string_view query) const;

  const RuntimeConfig& config() const noexcept { return cfg_; }
  const GatewayDeps& deps() const noexcept { return deps_; }

  // Writes queued miss pairs (insert_on_miss) under the exclusive lock.
  std::size_t flush_pending();
  std::size_t pending() const;

  // Blocks until every abandoned LLM call has returned.
  void drain();

 private:
  struct LlmResult {
    std::optional<Completion> completion;
    std::optional<Error> error;
    Millis latency{0};
  };
  struct PendingPair {
    std::string query;
    std::string response;
    Embedding embedding;
  };

  void reap(bool wait_all);

  GatewayDeps deps_;
  RuntimeConfig cfg_;
  std::mutex background_mu_;
  std::vector<std::future<LlmResult>> background_;
  mutable std::mutex pending_mu_;
  std::vector<PendingPair> pending_;
};

/// HTTP front end: POST /v1/answer, GET /v1/stats, GET /healthz.
class Server {
 public:
  explicit Server(Gateway& gateway);
  ~Server();

  // Binds host:port (port 0 picks a free one). Throws kBindFailure.
  int bind(const std::string& host, int port);
  // Blocks serving until stop().
  void run();
  void wait_until_ready() const;
  // Stops accepting and drains in-flight requests.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// "host:port" -> pair; throws kInvalidArgument.
std::pair<std::string, int> parse_bind_address(std::string_view addr);

}  // namespace storinfer
