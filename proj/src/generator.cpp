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

#include "storinfer/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "http_util.hpp"

namespace storinfer {
namespace {

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

std::string render_masked(std::span<const std::string> queries) {
  std::string out;
  for (const auto& q : queries) {
    out += "- ";
    out += q;
    out += '\n';
  }
  return out;
}

std::string render_generation_user(std::string_view chunk_text,
                                   std::span<const std::string> masked,
                                   const GeneratorConfig& cfg) {
  auto text = replace_all(cfg.scaffold_template, "{chunk}", chunk_text);
  return replace_all(std::move(text), "{masked_queries}", render_masked(masked));
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

std::size_t token_count(std::string_view text) noexcept {
  std::size_t chars = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++chars;  // skip UTF-8 continuation bytes
  }
  return (chars + 3) / 4;
}

void GeneratorConfig::validate() const {
  if (!(dedup_threshold > 0.0 && dedup_threshold <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "dedup threshold must be in (0, 1]");
  }
  if (!(temp_step > 0.0)) throw Error(Errc::kInvalidArgument, "temp_step must be > 0");
  if (!(temp_init <= temp_max)) throw Error(Errc::kInvalidArgument, "temp_init must be <= temp_max");
  if (temp_init < 0.0 || temp_max > 2.0) {
    throw Error(Errc::kInvalidArgument, "temperatures must lie in [0, 2]");
  }
  if (max_context_tokens == 0) throw Error(Errc::kInvalidArgument, "max_context_tokens must be > 0");
}

double scheduled_temperature(const GeneratorConfig& cfg, std::size_t duplicate_events) {
  double t = std::min(cfg.temp_max, cfg.temp_init + cfg.temp_step * static_cast<double>(duplicate_events));
  return std::round(t * 1e12) / 1e12;
}

SamplingState adapt_temperature(SamplingState state, bool was_duplicate, const GeneratorConfig& cfg) {
  if (!was_duplicate) return state;
  ++state.duplicate_events;
  state.temperature = scheduled_temperature(cfg, state.duplicate_events);
  return state;
}

KnowledgeChunk KnowledgeChunk::make(std::string chunk_id, std::string text, const TokenCounter& counter) {
  auto n = counter(text);
  return {std::move(chunk_id), std::move(text), n};
}

std::size_t scaffold_tokens(const GeneratorConfig& cfg, const TokenCounter& counter) {
  return counter(cfg.system_prompt) + counter(render_generation_user("", {}, cfg));
}

MaskContext build_mask_context(std::span<const std::string> recent, const KnowledgeChunk& chunk,
                               const GeneratorConfig& cfg, const TokenCounter& counter) {
  std::size_t fixed = scaffold_tokens(cfg, counter) + chunk.token_count;
  if (fixed > cfg.max_context_tokens) {
    throw Error(Errc::kChunkTooLarge,
                "chunk " + chunk.chunk_id + " needs " + std::to_string(fixed) +
                    " tokens with scaffolding, context is " + std::to_string(cfg.max_context_tokens));
  }
  MaskContext ctx;
  ctx.budget = cfg.max_context_tokens - fixed;
  for (const auto& q : recent) {
    std::size_t n = counter(q);
    if (ctx.tokens_used + n > ctx.budget) break;
    ctx.tokens_used += n;
    ctx.included_queries.push_back(q);
  }
  std::reverse(ctx.included_queries.begin(), ctx.included_queries.end());
  return ctx;
}

CompletionRequest render_generation_request(const KnowledgeChunk& chunk, const MaskContext& mask,
                                            const GeneratorConfig& cfg, double temperature) {
  CompletionRequest req;
  req.system = cfg.system_prompt;
  req.user = render_generation_user(chunk.text, mask.included_queries, cfg);
  req.temperature = temperature;
  req.max_tokens = cfg.query_max_tokens;
  return req;
}

CompletionRequest render_answer_request(std::string_view query, std::string_view context,
                                        const GeneratorConfig& cfg) {
  CompletionRequest req;
  req.system = cfg.answer_system_prompt;
  req.user = replace_all(replace_all(cfg.answer_template, "{chunk}", context), "{query}", query);
  req.temperature = cfg.answer_temperature;
  req.max_tokens = cfg.answer_max_tokens;
  return req;
}

DedupVerdict dedup_check(const Embedding& candidate, const GraphIndex& index, const GeneratorConfig& cfg) {
  if (index.empty()) return {};
  auto top = cfg.exact_dedup ? index.exact_search(candidate, 1) : index.search(candidate, 1);
  const SearchHit& best = top.front();
  bool duplicate = best.score > cfg.dedup_threshold ||
                   same_bits(candidate.values(), index.vector(best.id));
  return {!duplicate, best.id, best.score};
}

ChunkQueries generate_queries(const KnowledgeChunk& chunk, const GeneratorConfig& cfg, LlmClient& llm,
                              const Embedder& embedder, GraphIndex& index, const IdSource& next_id,
                              const TokenCounter& counter) {
  cfg.validate();
  ChunkQueries out;
  out.final_state = SamplingState::fresh(cfg);
  // Newest at the back; reversed when building the mask.
  std::vector<std::string> history;
  CancelToken never;

  while (out.accepted.size() < cfg.target_per_chunk && out.attempts < cfg.attempts_limit()) {
    std::vector<std::string> recent(history.rbegin(), history.rend());
    auto mask = build_mask_context(recent, chunk, cfg, counter);
    auto req = render_generation_request(chunk, mask, cfg, out.final_state.temperature);

    ++out.attempts;
    out.attempt_temperatures.push_back(out.final_state.temperature);
    std::string text;
    try {
      text = std::string(detail::trim(llm.complete(req, never).text));
    } catch (const Error& e) {
      if (e.code() == Errc::kEmptyCompletion) continue;
      out.failure = e;
      return out;
    }
    if (text.empty()) continue;

    auto vec = embedder.embed(text);
    auto verdict = dedup_check(vec, index, cfg);
    if (!verdict.accepted) {
      out.final_state = adapt_temperature(out.final_state, true, cfg);
      if (cfg.mask_include_rejected) history.push_back(text);
      continue;
    }
    RecordId id = next_id();
    index.insert(id, vec);
    history.push_back(text);
    out.accepted.push_back({id, std::move(text), std::move(vec), out.attempt_temperatures.back()});
  }
  return out;
}

std::string generate_response(std::string_view query, const KnowledgeChunk& chunk,
                              const GeneratorConfig& cfg, LlmClient& llm) {
  if (detail::trim(query).empty()) throw Error(Errc::kInvalidArgument, "query is empty");
  CancelToken never;
  auto completion = llm.complete(render_answer_request(query, chunk.text, cfg), never);
  if (detail::trim(completion.text).empty()) {
    throw Error(Errc::kEmptyCompletion, "empty answer for query");
  }
  return completion.text;
}

StoreStats precompute_corpus(std::span<const KnowledgeChunk> chunks, const GeneratorConfig& cfg,
                             LlmClient& llm, const Embedder& embedder, Artifacts& artifacts,
                             const std::function<void(const PrecomputeProgress&)>& on_chunk,
                             const TokenCounter& counter) {
  cfg.validate();
  if (embedder.dim() != artifacts.dim()) {
    throw Error(Errc::kDimensionMismatch, "embedder dim differs from store dim");
  }
  for (const auto& chunk : chunks) {
    PrecomputeProgress progress{chunk.chunk_id};
    artifacts.with_exclusive([&](PairStore& store, GraphIndex& index) {
      if (store.chunk_completed(chunk.chunk_id)) {
        progress.skipped = true;
        return;
      }
      auto result = generate_queries(chunk, cfg, llm, embedder, index,
                                     [&store] { return store.allocate_id(); }, counter);
      if (result.failure) throw *result.failure;

      std::vector<PairRecord> records;
      records.reserve(result.accepted.size());
      for (const auto& q : result.accepted) {
        records.push_back({q.id, q.text, generate_response(q.text, chunk, cfg, llm),
                           chunk.chunk_id, q.temperature});
      }
      for (const auto& r : records) store.put(r);
      store.mark_chunk_completed(chunk.chunk_id);
      index.save(store.dir() / PairStore::kIndexFile);
      store.flush();
      progress.accepted = result.accepted.size();
      progress.attempts = result.attempts;
    });
    if (on_chunk) on_chunk(progress);
  }
  artifacts.flush();
  return artifacts.stats();
}

std::vector<KnowledgeChunk> load_corpus(const std::filesystem::path& path, const TokenCounter& counter) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoFailure, "cannot open " + path.string());
  std::vector<KnowledgeChunk> chunks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      chunks.push_back(KnowledgeChunk::make(j.at("chunk_id").get<std::string>(),
                                            j.at("text").get<std::string>(), counter));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kFileFormat,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return chunks;
}

}  // namespace storinfer
