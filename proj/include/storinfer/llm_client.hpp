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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace storinfer {

using Clock = std::chrono::steady_clock;

struct CompletionRequest {
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 256;

  // Throws kInvalidArgument: empty user, temperature outside [0, 2],
  // max_tokens < 1.
  void validate() const;
  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

/// Shareable one-shot cancellation flag. Copies refer to the same state;
/// fire() is idempotent and wakes every waiter.
class CancelToken {
 public:
  CancelToken();

  void fire() const;
  bool fired() const;
  std::optional<Clock::time_point> fired_at() const;

  // True if the token fired before the deadline.
  bool wait_until(Clock::time_point deadline) const;
  bool wait_for(Clock::duration d) const { return wait_until(Clock::now() + d); }

 private:
  struct State {
    mutable std::mutex mu;
    std::condition_variable cv;
    bool fired = false;
    Clock::time_point fired_at;
  };
  std::shared_ptr<State> state_;
};

struct Completion {
  enum class Status { kCompleted, kCancelled };

  Status status = Status::kCompleted;
  std::string text;

  bool cancelled() const noexcept { return status == Status::kCancelled; }
  static Completion done(std::string text) { return {Status::kCompleted, std::move(text)}; }
  static Completion cancel() { return {Status::kCancelled, {}}; }
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;

  // Exactly one outcome: a Completion (text or cancelled) or an Error
  // (kLlmUnavailable, kEmptyCompletion). Safe to call concurrently.
  virtual Completion complete(const CompletionRequest& req,
                              const CancelToken& cancel) = 0;
};

enum class MockBehavior { kEcho, kScripted, kConstant, kSynthetic, kCallback };

struct MockLlmConfig {
  std::chrono::milliseconds latency{0};
  MockBehavior behavior = MockBehavior::kEcho;
  // kEcho returns echo_prefix + user.
  std::string echo_prefix;
  // kScripted returns script[n % size] for the n-th started call.
  std::vector<std::string> script;
  std::string constant;
  // kCallback computes the text from the request.
  std::function<std::string(const CompletionRequest&)> callback;
  std::uint64_t seed = 0;
  // When false every call throws kLlmUnavailable.
  bool available = true;
};

/// In-process LLM stand-in with a simulated decode latency. The latency
/// sleep waits on the cancel token, so a fire() is observed well inside one
/// 5 ms poll interval.
class MockLlm final : public LlmClient {
 public:
  struct Stats {
    std::uint64_t started = 0;
    std::uint64_t completed = 0;
    std::uint64_t cancelled = 0;
    // fire() to observed-cancel delay for each cancelled call, including
    // calls whose token fired before they started.
    std::vector<Clock::duration> cancel_delays;
  };

  explicit MockLlm(MockLlmConfig cfg);

  Completion complete(const CompletionRequest& req, const CancelToken& cancel) override;

  // Text the mock would produce for the n-th call, without latency.
  std::string render(const CompletionRequest& req, std::uint64_t call_index) const;

  Stats stats() const;
  void set_available(bool available) { available_.store(available); }

 private:
  MockLlmConfig cfg_;
  std::atomic<bool> available_;
  std::atomic<std::uint64_t> calls_{0};
  mutable std::mutex mu_;
  Stats stats_;
};

struct RemoteLlmConfig {
  std::string url;
  std::string api_key;
  std::string model = "default";
  std::chrono::milliseconds timeout{60000};
  int retries = 0;

  // STORINFER_LLM_URL, STORINFER_LLM_KEY, STORINFER_LLM_MODEL; nullopt when
  // the URL is unset.
  static std::optional<RemoteLlmConfig> from_env();
};

/// Chat-completions client. A request runs on a worker thread; the caller
/// polls the cancel token every 5 ms and on fire stops the transport.
class RemoteLlm final : public LlmClient {
 public:
  explicit RemoteLlm(RemoteLlmConfig cfg);

  Completion complete(const CompletionRequest& req, const CancelToken& cancel) override;

  std::string request_body(const CompletionRequest& req) const;
  // Pulls choices[0].message.content; throws kLlmUnavailable / kEmptyCompletion.
  static std::string parse_response(const std::string& body);

 private:
  Completion attempt(const CompletionRequest& req, const CancelToken& cancel);

  RemoteLlmConfig cfg_;
  std::string origin_;
  std::string path_;
};

}  // namespace storinfer
