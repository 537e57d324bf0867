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

#include "storinfer/metrics_eval.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "http_util.hpp"
#include "storinfer/error.hpp"

namespace storinfer {
using nlohmann::json;

std::vector<std::string> tokenize_for_metrics(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c) || std::ispunct(c)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

double unigram_f1(std::string_view candidate, std::string_view reference) {
  auto cand = tokenize_for_metrics(candidate);
  auto ref = tokenize_for_metrics(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : cand) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  // 2PR / (P + R) with P = o/|c|, R = o/|r|.
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(cand.size() + ref.size());
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_f1(std::string_view candidate, std::string_view reference) {
  auto cand = tokenize_for_metrics(candidate);
  auto ref = tokenize_for_metrics(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  auto l = lcs_length(cand, ref);
  if (l == 0) return 0.0;
  return 2.0 * static_cast<double>(l) / static_cast<double>(cand.size() + ref.size());
}

QualityScores quality(std::string_view candidate, std::string_view reference) {
  return {unigram_f1(candidate, reference), rouge_l_f1(candidate, reference)};
}

double effective_latency(double hit_rate, double search_latency, double llm_latency) {
  if (!(hit_rate >= 0.0 && hit_rate <= 1.0)) {
    throw Error(Errc::kDomainError, "hit_rate must be in [0, 1]");
  }
  if (!(search_latency >= 0.0) || !(llm_latency >= 0.0)) {
    throw Error(Errc::kDomainError, "latencies must be non-negative");
  }
  return hit_rate * search_latency + (1.0 - hit_rate) * llm_latency;
}

LatencyReport LatencyReport::make(double hit_rate, double search_latency, double llm_latency) {
  LatencyReport r;
  r.effective_latency = storinfer::effective_latency(hit_rate, search_latency, llm_latency);
  r.hit_rate = hit_rate;
  r.miss_rate = 1.0 - hit_rate;
  r.vector_search_latency = search_latency;
  r.llm_inference_latency = llm_latency;
  r.reduction_pct = llm_latency > 0.0
                        ? (llm_latency - r.effective_latency) / llm_latency * 100.0
                        : 0.0;
  return r;
}

std::vector<BenchQuery> load_bench_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoFailure, "cannot open " + path.string());
  std::vector<BenchQuery> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      out.push_back({j.at("query").get<std::string>(), j.value("reference", std::string())});
    } catch (const json::exception& e) {
      throw Error(Errc::kFileFormat, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

BenchReport bench(Gateway& gateway, std::span<const BenchQuery> queries,
                  std::span<const double> thresholds) {
  BenchReport report;
  auto st = gateway.deps().artifacts->stats();
  report.pair_count = st.pair_count;
  report.index_bytes = st.index_bytes;
  report.metadata_bytes = st.metadata_bytes;
  if (queries.empty()) throw Error(Errc::kFileFormat, "bench needs at least one query");
  auto n = static_cast<double>(queries.size());

  double llm_sum = 0.0;
  for (const auto& q : queries) {
    CancelToken never;
    auto t0 = Clock::now();
    auto c = gateway.deps().llm->complete(gateway.request_for(q.query), never);
    llm_sum += std::chrono::duration<double>(Clock::now() - t0).count();
    auto s = quality(c.text, q.reference);
    report.baseline_quality.unigram_f1 += s.unigram_f1;
    report.baseline_quality.rouge_l_f1 += s.rouge_l_f1;
  }
  report.baseline_llm_latency = llm_sum / n;
  report.baseline_quality.unigram_f1 /= n;
  report.baseline_quality.rouge_l_f1 /= n;

  for (double threshold : thresholds) {
    RuntimeConfig cfg = gateway.config();
    cfg.hit_threshold = threshold;
    cfg.insert_on_miss = false;
    BenchRow row;
    row.threshold = threshold;
    row.queries = queries.size();
    double search_sum = 0.0, total_sum = 0.0;
    for (const auto& q : queries) {
      auto outcome = gateway.answer(q.query, cfg);
      if (outcome.source == AnswerSource::kHit) ++row.hits;
      search_sum += std::chrono::duration<double>(outcome.search_latency).count();
      total_sum += std::chrono::duration<double>(outcome.total_latency).count();
      auto s = quality(outcome.text, q.reference);
      row.quality.unigram_f1 += s.unigram_f1;
      row.quality.rouge_l_f1 += s.rouge_l_f1;
    }
    row.quality.unigram_f1 /= n;
    row.quality.rouge_l_f1 /= n;
    gateway.drain();
    row.latency = LatencyReport::make(static_cast<double>(row.hits) / n, search_sum / n,
                                      report.baseline_llm_latency);
    row.observed_mean_latency = total_sum / n;
    report.rows.push_back(row);
  }
  return report;
}

json BenchReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({
        {"threshold", r.threshold},
        {"queries", r.queries},
        {"hits", r.hits},
        {"hit_rate", r.latency.hit_rate},
        {"miss_rate", r.latency.miss_rate},
        {"vector_search_latency_s", r.latency.vector_search_latency},
        {"llm_inference_latency_s", r.latency.llm_inference_latency},
        {"effective_latency_s", r.latency.effective_latency},
        {"reduction_pct", r.latency.reduction_pct},
        {"observed_mean_latency_s", r.observed_mean_latency},
        {"unigram_f1", r.quality.unigram_f1},
        {"rouge_l_f1", r.quality.rouge_l_f1},
    });
  }
  return {
      {"schema", "storinfer.bench.v1"},
      {"pair_count", pair_count},
      {"index_bytes", index_bytes},
      {"metadata_bytes", metadata_bytes},
      {"baseline", {{"llm_latency_s", baseline_llm_latency},
                    {"unigram_f1", baseline_quality.unigram_f1},
                    {"rouge_l_f1", baseline_quality.rouge_l_f1}}},
      {"rows", rows_json},
  };
}

void BenchReport::print_table(std::ostream& os) const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "pairs=%zu index_bytes=%llu metadata_bytes=%llu\n", pair_count,
                static_cast<unsigned long long>(index_bytes),
                static_cast<unsigned long long>(metadata_bytes));
  os << buf;
  std::snprintf(buf, sizeof buf, "baseline llm: latency %.4f s  unigram %.3f  rouge-l %.3f\n",
                baseline_llm_latency, baseline_quality.unigram_f1, baseline_quality.rouge_l_f1);
  os << buf;
  os << "threshold  hit_rate  search_s  llm_s    effective_s  reduction%  observed_s  unigram  rouge-l\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%-9.3f  %-8.3f  %-8.4f  %-7.4f  %-11.4f  %-10.1f  %-10.4f  %-7.3f  %.3f\n",
                  r.threshold, r.latency.hit_rate, r.latency.vector_search_latency,
                  r.latency.llm_inference_latency, r.latency.effective_latency,
                  r.latency.reduction_pct, r.observed_mean_latency, r.quality.unigram_f1,
                  r.quality.rouge_l_f1);
    os << buf;
  }
}

json ScalingPoint::to_json() const {
  return {{"schema", "storinfer.scaling.v1"},
          {"pair_count", pair_count},
          {"hit_rate", hit_rate},
          {"index_bytes", index_bytes},
          {"metadata_bytes", metadata_bytes}};
}

}  // namespace storinfer
