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

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "storinfer/embedding.hpp"
#include "storinfer/error.hpp"
#include "storinfer/llm_client.hpp"
#include "storinfer/pair_store.hpp"
#include "storinfer/vector_index.hpp"

namespace storinfer {

using TokenCounter = std::function<std::size_t(std::string_view)>;

// ceil(characters / 4), counting UTF-8 code points.
std::size_t token_count(std::string_view text) noexcept;

struct GeneratorConfig {
  // Candidates scoring above this against any stored query are discarded.
  double dedup_threshold = 0.99;
  double temp_init = 0.7;
  double temp_step = 0.1;
  double temp_max = 1.0;
  std::size_t target_per_chunk = 8;
  // 0 means 4 * target_per_chunk.
  std::size_t max_attempts_per_chunk = 0;
  std::size_t max_context_tokens = 4096;
  // Placeholders: {chunk}, {masked_queries}.
  std::string scaffold_template =
      "Document:\n{chunk}\n\n"
      "Questions already written about this document (do not repeat them):\n"
      "{masked_queries}\n"
      "Write exactly one new question a reader might ask about the document. "
      "Reply with the question only.";
  std::string system_prompt =
      "You write realistic user questions about a given document.";
  // Placeholders: {chunk}, {query}.
  std::string answer_template = "Context:\n{chunk}\n\nQuestion: {query}";
  std::string answer_system_prompt =
      "You are a helpful assistant. Answer the question using the context.";
  double answer_temperature = 0.0;
  int query_max_tokens = 64;
  int answer_max_tokens = 256;
  // Exact all-pairs dedup instead of ANN top-1.
  bool exact_dedup = false;
  // Feed rejected candidates into the mask context too.
  bool mask_include_rejected = false;

  std::size_t attempts_limit() const noexcept {
    return max_attempts_per_chunk != 0 ? max_attempts_per_chunk : 4 * target_per_chunk;
  }
  void validate() const;
};

struct SamplingState {
  double temperature = 0.7;
  std::size_t duplicate_events = 0;

  static SamplingState fresh(const GeneratorConfig& cfg) { return {cfg.temp_init, 0}; }
  friend bool operator==(const SamplingState&, const SamplingState&) = default;
};

// temperature = min(temp_max, temp_init + temp_step * events), snapped to a
// 1e-12 grid so 0.7 + 0.1 compares equal to 0.8.
double scheduled_temperature(const GeneratorConfig& cfg, std::size_t duplicate_events);

SamplingState adapt_temperature(SamplingState state, bool was_duplicate,
                                const GeneratorConfig& cfg);

struct KnowledgeChunk {
  std::string chunk_id;
  std::string text;
  std::size_t token_count = 0;

  static KnowledgeChunk make(std::string chunk_id, std::string text,
                             const TokenCounter& counter = ::storinfer::token_count);
};

struct MaskContext {
  // Oldest first, as rendered into the prompt.
  std::vector<std::string> included_queries;
  std::size_t tokens_used = 0;
  std::size_t budget = 0;
};

// Rendered prompt with an empty chunk and no masked queries.
std::size_t scaffold_tokens(const GeneratorConfig& cfg, const TokenCounter& counter = token_count);

// recent is newest first. Throws kChunkTooLarge when the chunk and scaffold
// alone exceed max_context_tokens.
MaskContext build_mask_context(std::span<const std::string> recent,
                               const KnowledgeChunk& chunk,
                               const GeneratorConfig& cfg,
                               const TokenCounter& counter = ::storinfer::token_count);

CompletionRequest render_generation_request(const KnowledgeChunk& chunk,
                                            const MaskContext& mask,
                                            const GeneratorConfig& cfg,
                                            double temperature);

CompletionRequest render_answer_request(std::string_view query,
                                        std::string_view context,
                                        const GeneratorConfig& cfg);

struct DedupVerdict {
  bool accepted = true;
  std::optional<RecordId> similar_id;
  double score = 0.0;
};

// Top-1 against the index (exact scan when cfg.exact_dedup). Rejects when
// the score is strictly above the threshold, or when the nearest stored
// vector is bit-identical to the candidate.
DedupVerdict dedup_check(const Embedding& candidate, const GraphIndex& index,
                         const GeneratorConfig& cfg);

struct AcceptedQuery {
  RecordId id = 0;
  std::string text;
  Embedding embedding;
  double temperature = 0.0;
};

struct ChunkQueries {
  std::vector<AcceptedQuery> accepted;  // acceptance order
  std::vector<double> attempt_temperatures;
  SamplingState final_state;
  std::size_t attempts = 0;
  // Set when the LLM failed; accepted keeps what was produced before.
  std::optional<Error> failure;
};

using IdSource = std::function<RecordId()>;

// Accepted embeddings are inserted into index under ids from next_id.
ChunkQueries generate_queries(const KnowledgeChunk& chunk, const GeneratorConfig& cfg,
                              LlmClient& llm, const Embedder& embedder,
                              GraphIndex& index, const IdSource& next_id,
                              const TokenCounter& counter = ::storinfer::token_count);

// Throws kInvalidArgument (empty query), kLlmUnavailable, kEmptyCompletion.
std::string generate_response(std::string_view query, const KnowledgeChunk& chunk,
                              const GeneratorConfig& cfg, LlmClient& llm);

struct PrecomputeProgress {
  std::string chunk_id;
  std::size_t accepted = 0;
  std::size_t attempts = 0;
  bool skipped = false;
};

/// Runs query and response generation over every chunk not already marked
/// completed in the store. A chunk's pairs, index entries and the progress
/// marker are flushed together once the chunk finishes, so a failed run
/// resumes at the first unfinished chunk.
StoreStats precompute_corpus(std::span<const KnowledgeChunk> chunks,
                             const GeneratorConfig& cfg, LlmClient& llm,
                             const Embedder& embedder, Artifacts& artifacts,
                             const std::function<void(const PrecomputeProgress&)>& on_chunk = {},
                             const TokenCounter& counter = ::storinfer::token_count);

// Line-delimited {"chunk_id": "...", "text": "..."} records.
std::vector<KnowledgeChunk> load_corpus(const std::filesystem::path& path,
                                        const TokenCounter& counter = ::storinfer::token_count);

}  // namespace storinfer
