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

#include "storinfer/gateway.hpp"

#include <iostream>

#include "http_util.hpp"
#include "storinfer/error.hpp"

namespace storinfer {
using nlohmann::json;

namespace {

Millis since(Clock::time_point start) { return Clock::now() - start; }

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

void RuntimeConfig::validate() const {
  if (!(hit_threshold > 0.0 && hit_threshold <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "hit threshold must be in (0, 1]");
  }
  if (top_k == 0) throw Error(Errc::kInvalidArgument, "top_k must be >= 1");
}

json AnswerOutcome::to_json() const {
  return {
      {"text", text},
      {"source", source == AnswerSource::kHit ? "hit" : "miss"},
      {"similarity", opt(similarity)},
      {"matched_id", opt(matched_id)},
      {"search_latency_ms", search_latency.count()},
      {"llm_latency_ms", llm_latency ? json(llm_latency->count()) : json(nullptr)},
      {"total_latency_ms", total_latency.count()},
  };
}

json MetricsSnapshot::to_json() const {
  return {
      {"hit_count", hits},
      {"miss_count", misses},
      {"hit_rate", opt(hit_rate)},
      {"mean_search_latency_ms", opt(mean_search_ms)},
      {"mean_llm_latency_ms", opt(mean_llm_ms)},
      {"mean_total_latency_ms", opt(mean_total_ms)},
  };
}

void MetricsRegistry::record(const AnswerOutcome& outcome) {
  std::lock_guard lock(mu_);
  if (outcome.source == AnswerSource::kHit) {
    ++hits_;
  } else {
    ++misses_;
  }
  search_ms_sum_ += outcome.search_latency.count();
  total_ms_sum_ += outcome.total_latency.count();
  if (outcome.llm_latency) {
    llm_ms_sum_ += outcome.llm_latency->count();
    ++llm_samples_;
  }
}

MetricsSnapshot MetricsRegistry::snapshot() const {
  std::lock_guard lock(mu_);
  MetricsSnapshot s;
  s.hits = hits_;
  s.misses = misses_;
  auto n = hits_ + misses_;
  if (n > 0) {
    s.hit_rate = static_cast<double>(hits_) / static_cast<double>(n);
    s.mean_search_ms = search_ms_sum_ / static_cast<double>(n);
    s.mean_total_ms = total_ms_sum_ / static_cast<double>(n);
  }
  if (llm_samples_ > 0) s.mean_llm_ms = llm_ms_sum_ / static_cast<double>(llm_samples_);
  return s;
}

void record_metrics(const AnswerOutcome& outcome, MetricsRegistry& registry) {
  registry.record(outcome);
}

Gateway::Gateway(GatewayDeps deps, RuntimeConfig cfg) : deps_(std::move(deps)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (!deps_.artifacts || !deps_.embedder || !deps_.llm) {
    throw Error(Errc::kInvalidArgument, "gateway needs artifacts, embedder and llm");
  }
  if (deps_.embedder->dim() != deps_.artifacts->dim()) {
    throw Error(Errc::kDimensionMismatch, "embedder dim differs from store dim");
  }
}

Gateway::~Gateway() { drain(); }

CompletionRequest Gateway::request_for(std::string_view query) const {
  CompletionRequest req;
  req.system = cfg_.system_prompt;
  req.user = std::string(query);
  req.temperature = 0.0;
  req.max_tokens = cfg_.max_tokens;
  return req;
}

AnswerOutcome Gateway::answer(std::string_view query) { return answer(query, cfg_); }

AnswerOutcome Gateway::answer(std::string_view query, const RuntimeConfig& cfg) {
  if (detail::trim(query).empty()) throw Error(Errc::kEmptyQuery, "query is empty");
  cfg.validate();
  auto start = Clock::now();

  CancelToken cancel;
  auto llm = deps_.llm;
  auto request = request_for(query);
  auto llm_task = std::async(std::launch::async, [llm, request, cancel] {
    LlmResult r;
    auto t0 = Clock::now();
    try {
      r.completion = llm->complete(request, cancel);
    } catch (const Error& e) {
      r.error = e;
    }
    r.latency = since(t0);
    return r;
  });

  AnswerOutcome out;
  std::optional<Embedding> query_vec;
  std::optional<SearchHit> best;
  try {
    query_vec = deps_.embedder->embed(query);
    auto hits = deps_.artifacts->search(*query_vec, cfg.top_k);
    if (!hits.empty()) best = hits.front();
  } catch (const Error& e) {
    // Search failure degrades to the LLM path.
    std::cerr << "storinfer: vector search failed, using LLM: " << e.what() << "\n";
  }
  out.search_latency = since(start);

  if (best && best->score > cfg.hit_threshold) {
    if (auto record = deps_.artifacts->get(best->id)) {
      cancel.fire();
      {
        std::lock_guard lock(background_mu_);
        background_.push_back(std::move(llm_task));
      }
      out.text = record->response;
      out.source = AnswerSource::kHit;
      out.matched_id = best->id;
      out.similarity = best->score;
      out.total_latency = since(start);
      reap(false);
      if (deps_.metrics) deps_.metrics->record(out);
      return out;
    }
  }

  LlmResult result = llm_task.get();
  if (result.error) throw *result.error;
  if (!result.completion || result.completion->cancelled()) {
    throw Error(Errc::kLlmUnavailable, "LLM call ended without a completion");
  }
  out.text = std::move(result.completion->text);
  out.source = AnswerSource::kMiss;
  if (best) out.similarity = best->score;
  out.llm_latency = result.latency;
  out.total_latency = since(start);

  if (cfg.insert_on_miss && query_vec) {
    std::lock_guard lock(pending_mu_);
    pending_.push_back({std::string(query), out.text, *query_vec});
  }
  reap(false);
  if (deps_.metrics) deps_.metrics->record(out);
  return out;
}

void Gateway::reap(bool wait_all) {
  std::vector<std::future<LlmResult>> finished;
  {
    std::lock_guard lock(background_mu_);
    auto it = background_.begin();
    while (it != background_.end()) {
      if (wait_all || it->wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
        finished.push_back(std::move(*it));
        it = background_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& f : finished) {
    auto r = f.get();
    if (r.error) std::cerr << "storinfer: LLM error on a served hit: " << r.error->what() << "\n";
  }
}

void Gateway::drain() { reap(true); }

std::size_t Gateway::flush_pending() {
  std::vector<PendingPair> batch;
  {
    std::lock_guard lock(pending_mu_);
    batch.swap(pending_);
  }
  for (auto& p : batch) {
    deps_.artifacts->add({0, p.query, p.response, "runtime-miss", 0.0}, p.embedding);
  }
  if (!batch.empty()) deps_.artifacts->flush();
  return batch.size();
}

std::size_t Gateway::pending() const {
  std::lock_guard lock(pending_mu_);
  return pending_.size();
}

}  // namespace storinfer
