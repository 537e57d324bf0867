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
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "storinfer/gateway.hpp"

namespace storinfer {

struct QualityScores {
  double unigram_f1 = 0.0;
  double rouge_l_f1 = 0.0;
};

// Lowercase, ASCII punctuation to spaces, split on whitespace.
std::vector<std::string> tokenize_for_metrics(std::string_view text);

// Clipped multiset overlap F1; 0 when either side is empty or no overlap.
double unigram_f1(std::string_view candidate, std::string_view reference);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// ROUGE-L F-measure with beta = 1.
double rouge_l_f1(std::string_view candidate, std::string_view reference);

QualityScores quality(std::string_view candidate, std::string_view reference);

// hit_rate * search + (1 - hit_rate) * llm. Throws kDomainError when
// hit_rate is outside [0, 1] or a latency is negative.
double effective_latency(double hit_rate, double search_latency, double llm_latency);

struct LatencyReport {
  double hit_rate = 0.0;
  double miss_rate = 1.0;
  double vector_search_latency = 0.0;  // seconds
  double llm_inference_latency = 0.0;  // seconds
  double effective_latency = 0.0;      // seconds
  double reduction_pct = 0.0;

  static LatencyReport make(double hit_rate, double search_latency, double llm_latency);
};

struct BenchQuery {
  std::string query;
  std::string reference;
};

// Line-delimited {"query": ..., "reference": ...}. Throws kFileFormat.
std::vector<BenchQuery> load_bench_queries(const std::filesystem::path& path);

struct BenchRow {
  double threshold = 0.0;
  std::size_t queries = 0;
  std::size_t hits = 0;
  LatencyReport latency;
  // Mean end-to-end latency actually observed through the gateway.
  double observed_mean_latency = 0.0;
  QualityScores quality;
};

struct BenchReport {
  std::size_t pair_count = 0;
  std::uint64_t index_bytes = 0;
  std::uint64_t metadata_bytes = 0;
  // Direct LLM calls for every query: the traditional-inference baseline.
  double baseline_llm_latency = 0.0;
  QualityScores baseline_quality;
  std::vector<BenchRow> rows;

  nlohmann::json to_json() const;
  void print_table(std::ostream& os) const;
};

/// Replays the query stream once straight through the LLM (baseline), then
/// once per threshold through the gateway's answer path. Latencies are
/// measured, the effective latency is computed from the measured hit rate,
/// mean search latency and baseline LLM latency.
BenchReport bench(Gateway& gateway, std::span<const BenchQuery> queries,
                  std::span<const double> thresholds);

// One storage-scaling sample: store size vs. hit rate and footprint.
struct ScalingPoint {
  std::size_t pair_count = 0;
  double hit_rate = 0.0;
  std::uint64_t index_bytes = 0;
  std::uint64_t metadata_bytes = 0;

  nlohmann::json to_json() const;
};

}  // namespace storinfer
