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

#include "storinfer/llm_client.hpp"

#include <httplib.h>

#include <cctype>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#include "http_util.hpp"
#include "storinfer/embedding.hpp"
#include "storinfer/error.hpp"

namespace storinfer {
using nlohmann::json;

void CompletionRequest::validate() const {
  if (user.empty()) throw Error(Errc::kInvalidArgument, "completion user message is empty");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw Error(Errc::kInvalidArgument, "temperature must be in [0, 2]");
  }
  if (max_tokens < 1) throw Error(Errc::kInvalidArgument, "max_tokens must be >= 1");
}

CancelToken::CancelToken() : state_(std::make_shared<State>()) {}

void CancelToken::fire() const {
  {
    std::lock_guard lock(state_->mu);
    if (state_->fired) return;
    state_->fired = true;
    state_->fired_at = Clock::now();
  }
  state_->cv.notify_all();
}

bool CancelToken::fired() const {
  std::lock_guard lock(state_->mu);
  return state_->fired;
}

std::optional<Clock::time_point> CancelToken::fired_at() const {
  std::lock_guard lock(state_->mu);
  if (!state_->fired) return std::nullopt;
  return state_->fired_at;
}

bool CancelToken::wait_until(Clock::time_point deadline) const {
  std::unique_lock lock(state_->mu);
  return state_->cv.wait_until(lock, deadline, [this] { return state_->fired; });
}

MockLlm::MockLlm(MockLlmConfig cfg) : cfg_(std::move(cfg)), available_(cfg_.available) {
  if (cfg_.latency.count() < 0) throw Error(Errc::kInvalidArgument, "mock latency must be >= 0");
  if (cfg_.behavior == MockBehavior::kScripted && cfg_.script.empty()) {
    throw Error(Errc::kInvalidArgument, "scripted mock needs at least one output");
  }
  if (cfg_.behavior == MockBehavior::kCallback && !cfg_.callback) {
    throw Error(Errc::kInvalidArgument, "callback mock needs a callback");
  }
}

std::string MockLlm::render(const CompletionRequest& req, std::uint64_t call_index) const {
  switch (cfg_.behavior) {
    case MockBehavior::kEcho:
      return cfg_.echo_prefix + req.user;
    case MockBehavior::kScripted:
      return cfg_.script[call_index % cfg_.script.size()];
    case MockBehavior::kConstant:
      return cfg_.constant;
    case MockBehavior::kCallback:
      return cfg_.callback(req);
    case MockBehavior::kSynthetic: {
      // Question-shaped text built from content words of the prompt.
      std::vector<std::string> words;
      std::string cur;
      for (unsigned char c : req.user + " ") {
        if (std::isalnum(c)) {
          cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
          if (cur.size() >= 4) words.push_back(cur);
          cur.clear();
        }
      }
      if (words.empty()) return "What is this about?";
      // Pure in (request, seed): temperature steers the pick instead of the
      // call counter, so a retry at a higher temperature can differ.
      std::uint64_t h = fnv1a64(req.user, cfg_.seed ^ fnv1a64(std::to_string(req.temperature), 0));
      std::string out = "What does the text say about";
      for (int i = 0; i < 3; ++i) {
        out += ' ';
        out += words[(h >> (i * 16)) % words.size()];
      }
      return out + "?";
    }
  }
  return {};
}

Completion MockLlm::complete(const CompletionRequest& req, const CancelToken& cancel) {
  req.validate();
  if (cancel.fired()) {
    auto observed = Clock::now();
    std::lock_guard lock(mu_);
    ++stats_.cancelled;
    stats_.cancel_delays.push_back(observed - *cancel.fired_at());
    return Completion::cancel();
  }
  if (!available_.load()) throw Error(Errc::kLlmUnavailable, "mock LLM marked unavailable");

  std::uint64_t index = calls_.fetch_add(1);
  {
    std::lock_guard lock(mu_);
    ++stats_.started;
  }
  if (cancel.wait_until(Clock::now() + cfg_.latency)) {
    auto observed = Clock::now();
    std::lock_guard lock(mu_);
    ++stats_.cancelled;
    stats_.cancel_delays.push_back(observed - *cancel.fired_at());
    return Completion::cancel();
  }
  std::string text = render(req, index);
  if (text.empty()) throw Error(Errc::kEmptyCompletion, "mock produced no text");
  std::lock_guard lock(mu_);
  ++stats_.completed;
  return Completion::done(std::move(text));
}

MockLlm::Stats MockLlm::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::optional<RemoteLlmConfig> RemoteLlmConfig::from_env() {
  const char* url = std::getenv("STORINFER_LLM_URL");
  if (url == nullptr || *url == '\0') return std::nullopt;
  RemoteLlmConfig cfg;
  cfg.url = url;
  if (const char* key = std::getenv("STORINFER_LLM_KEY")) cfg.api_key = key;
  if (const char* model = std::getenv("STORINFER_LLM_MODEL"); model && *model) cfg.model = model;
  return cfg;
}

RemoteLlm::RemoteLlm(RemoteLlmConfig cfg) : cfg_(std::move(cfg)) {
  auto parts = detail::split_url(cfg_.url);
  origin_ = std::move(parts.origin);
  path_ = parts.path + "/v1/chat/completions";
}

std::string RemoteLlm::request_body(const CompletionRequest& req) const {
  json messages = json::array();
  if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
  messages.push_back({{"role", "user"}, {"content", req.user}});
  json body = {
      {"model", cfg_.model},
      {"messages", messages},
      {"temperature", req.temperature},
      {"max_tokens", req.max_tokens},
  };
  return body.dump();
}

std::string RemoteLlm::parse_response(const std::string& body) {
  std::string text;
  try {
    auto j = json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_null()) text = content.get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::kLlmUnavailable, std::string("malformed completion response: ") + e.what());
  }
  if (detail::trim(text).empty()) throw Error(Errc::kEmptyCompletion, "completion text is empty");
  return text;
}

Completion RemoteLlm::attempt(const CompletionRequest& req, const CancelToken& cancel) {
  auto client = std::make_shared<httplib::Client>(origin_);
  auto secs = cfg_.timeout.count() / 1000;
  auto usecs = (cfg_.timeout.count() % 1000) * 1000;
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  if (!cfg_.api_key.empty()) client->set_bearer_token_auth(cfg_.api_key);

  struct Shared {
    std::atomic<bool> done{false};
    httplib::Result result;
  };
  auto shared = std::make_shared<Shared>();
  std::string body = request_body(req);
  std::thread worker([client, shared, body, path = path_] {
    shared->result = client->Post(path, body, "application/json");
    shared->done.store(true);
  });

  constexpr auto kPoll = std::chrono::milliseconds(5);
  while (!shared->done.load()) {
    if (cancel.wait_for(kPoll)) {
      client->stop();
      worker.join();
      return Completion::cancel();
    }
  }
  worker.join();

  const auto& res = shared->result;
  if (!res) {
    throw Error(Errc::kLlmUnavailable, "completion request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::kLlmUnavailable, "completion endpoint returned HTTP " + std::to_string(res->status));
  }
  return Completion::done(parse_response(res->body));
}

Completion RemoteLlm::complete(const CompletionRequest& req, const CancelToken& cancel) {
  req.validate();
  if (cancel.fired()) return Completion::cancel();
  for (int tries = 0;; ++tries) {
    try {
      return attempt(req, cancel);
    } catch (const Error& e) {
      if (e.code() != Errc::kLlmUnavailable || tries >= cfg_.retries || cancel.fired()) throw;
    }
  }
}

}  // namespace storinfer
