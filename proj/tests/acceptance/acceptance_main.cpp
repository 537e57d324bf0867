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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Everything is hermetic (deterministic embedder + mock LLM).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "storinfer/embedding.hpp"
#include "storinfer/gateway.hpp"
#include "storinfer/generator.hpp"
#include "storinfer/llm_client.hpp"
#include "storinfer/metrics_eval.hpp"
#include "storinfer/pair_store.hpp"
#include "storinfer/vector_index.hpp"
#include "support.hpp"

namespace si = storinfer;
using si::testing::at_similarity;
using si::testing::oracle_dot;
using si::testing::random_unit;
using si::testing::TempDir;
using namespace std::chrono_literals;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "MISSED ") + what;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(si::Clock::time_point t0) {
  return std::chrono::duration<double>(si::Clock::now() - t0).count();
}

si::StoreMeta meta_for(std::size_t dim) {
  si::StoreMeta m;
  m.dim = dim;
  m.embedder.dim = dim;
  return m;
}

// 1. Effective latency against the published dedup rows.
Verdict latency_formula() {
  Verdict v;
  struct Row {
    double hit_rate, effective, reduction;
  };
  for (Row row : {Row{0.225, 0.086, 17.3}, Row{0.180, 0.090, 13.8}}) {
    auto r = si::LatencyReport::make(row.hit_rate, 0.020, 0.105);
    double oracle = row.hit_rate * 0.020 + (1.0 - row.hit_rate) * 0.105;
    v.require(std::abs(r.effective_latency - oracle) < 1e-12,
              fmt("h=%.3f formula matches direct arithmetic", row.hit_rate));
    v.require(std::abs(r.effective_latency - row.effective) <= 0.001,
              fmt("h=%.3f effective %.5f s vs %.3f +-0.001", row.hit_rate, r.effective_latency, row.effective));
    v.require(std::abs(r.reduction_pct - row.reduction) <= 0.5,
              fmt("h=%.3f reduction %.2f%% vs %.1f +-0.5", row.hit_rate, r.reduction_pct, row.reduction));
  }
  return v;
}

// 2. Graph recall@10 on 10k random vectors with default parameters.
Verdict ann_recall() {
  Verdict v;
  constexpr std::size_t kN = 10000, kDim = 384, kQueries = 100, kK = 10;
  auto t0 = si::Clock::now();
  std::mt19937_64 rng(20240601);
  si::GraphIndex index(kDim);
  std::vector<std::pair<si::RecordId, si::Embedding>> items;
  items.reserve(kN);
  for (std::size_t i = 0; i < kN; ++i) {
    items.emplace_back(i, random_unit(kDim, rng));
    index.insert(i, items.back().second);
  }
  double build_s = seconds_since(t0);

  double recall = 0.0;
  for (std::size_t q = 0; q < kQueries; ++q) {
    auto query = random_unit(kDim, rng);
    std::vector<std::pair<double, si::RecordId>> all;
    all.reserve(kN);
    for (const auto& [id, e] : items) all.emplace_back(oracle_dot(query, e), id);
    std::partial_sort(all.begin(), all.begin() + kK, all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    auto hits = index.search(query, kK);
    std::size_t found = 0;
    for (const auto& h : hits) {
      for (std::size_t i = 0; i < kK; ++i) found += all[i].second == h.id;
    }
    recall += static_cast<double>(found) / kK;
  }
  recall /= kQueries;
  double total_s = seconds_since(t0);
  v.require(recall >= 0.95, fmt("mean recall@10 %.3f (>= 0.95)", recall));
  v.require(total_s < 60.0, fmt("runtime %.1f s, build %.1f s (< 60)", total_s, build_s));
  return v;
}

// Generation prompts get the next scripted question; answer prompts get a
// fixed-shape answer.
std::shared_ptr<si::MockLlm> scripted_generator(std::vector<std::string> script) {
  auto next = std::make_shared<std::size_t>(0);
  auto lines = std::make_shared<std::vector<std::string>>(std::move(script));
  return std::make_shared<si::MockLlm>(si::MockLlmConfig{
      .behavior = si::MockBehavior::kCallback,
      .callback = [next, lines](const si::CompletionRequest& r) -> std::string {
        if (r.user.starts_with("Context:")) return "Answer: " + r.user.substr(r.user.find("Question: ") + 10);
        return (*lines)[(*next)++ % lines->size()];
      }});
}

// 3. No two stored queries above the dedup threshold after a full run.
Verdict dedup_invariant() {
  Verdict v;
  auto t0 = si::Clock::now();
  constexpr std::size_t kChunks = 20, kDim = 384;
  std::vector<si::KnowledgeChunk> chunks;
  std::vector<std::string> script;
  for (std::size_t c = 0; c < kChunks; ++c) {
    auto topic = "topic " + std::to_string(c);
    chunks.push_back(si::KnowledgeChunk::make("chunk-" + std::to_string(c), "Notes on " + topic + "."));
    // Surface variants of one question collapse to nearly the same vector,
    // and one question repeats an earlier chunk's.
    for (const auto& q : {"What is " + topic + "?", "what is " + topic, "WHAT IS " + topic + "?!",
                          "Why does " + topic + " matter?", "why does " + topic + " matter",
                          std::string("What is topic 0?"), "How is " + topic + " measured?",
                          "Who studies " + topic + "?"}) {
      script.push_back(q);
    }
  }
  auto llm = scripted_generator(script);
  si::DeterministicEmbedder embedder(kDim, 3, /*semantic_collapse=*/true, 0.05);

  TempDir dir;
  auto art = si::Artifacts::open(dir.path(), meta_for(kDim));
  si::GeneratorConfig cfg;
  cfg.dedup_threshold = 0.99;
  cfg.exact_dedup = true;
  cfg.target_per_chunk = 4;
  cfg.max_attempts_per_chunk = 8;
  std::size_t attempts = 0;
  auto st = si::precompute_corpus(chunks, cfg, *llm, embedder, *art,
                                  [&](const si::PrecomputeProgress& p) { attempts += p.attempts; });

  std::vector<si::Embedding> stored;
  art->with_shared([&](const si::PairStore& store, const si::GraphIndex&) {
    for (auto id : store.ids()) stored.push_back(embedder.embed(store.get(id)->query));
  });
  double worst = -1.0;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    for (std::size_t j = i + 1; j < stored.size(); ++j) {
      double s = oracle_dot(stored[i], stored[j]);
      worst = std::max(worst, s);
      violations += s > 0.99 + 1e-6;
    }
  }
  v.require(attempts > st.pair_count, fmt("%zu attempts for %llu pairs (duplicates were offered)", attempts,
                                          static_cast<unsigned long long>(st.pair_count)));
  v.require(violations == 0, fmt("%zu pairs above 0.99 among %zu queries, max %.6f", violations,
                                 stored.size(), worst));
  v.require(art->audit().empty(), "index/store bijection");
  double secs = seconds_since(t0);
  v.require(secs < 30.0, fmt("runtime %.1f s (< 30)", secs));
  return v;
}

// 4. Temperature walk under an always-duplicate mock.
Verdict temperature_schedule() {
  Verdict v;
  si::GeneratorConfig cfg;
  cfg.target_per_chunk = 1;
  cfg.max_attempts_per_chunk = 10;
  cfg.exact_dedup = true;
  si::DeterministicEmbedder embedder(64, 1);
  si::GraphIndex index(64);
  index.insert(0, embedder.embed("The same question?"));
  si::MockLlm llm({.behavior = si::MockBehavior::kScripted, .script = {"The same question?"}});
  si::RecordId next = 1;
  auto out = si::generate_queries(si::KnowledgeChunk::make("c", "text"), cfg, llm, embedder, index,
                                  [&] { return next++; });
  std::vector<double> expected{0.7, 0.8, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  v.require(out.attempt_temperatures == expected, "attempt temperatures 0.7, 0.8, 0.9, 1.0 x7");
  v.require(out.accepted.empty(), "no candidate accepted");
  v.require(out.final_state.temperature == 1.0 && out.final_state.duplicate_events == 10,
            fmt("final state %.1f after %zu duplicates", out.final_state.temperature,
                out.final_state.duplicate_events));
  return v;
}

// Stored pairs plus a MappedEmbedder so probes land at chosen similarities.
struct Fixture {
  TempDir dir;
  std::shared_ptr<si::Artifacts> artifacts;
  std::shared_ptr<si::MappedEmbedder> embedder;
  std::vector<si::Embedding> stored;
  std::mt19937_64 rng;

  Fixture(std::size_t n, std::size_t dim, std::uint64_t seed)
      : embedder(std::make_shared<si::MappedEmbedder>(std::make_shared<si::DeterministicEmbedder>(dim, seed))),
        rng(seed) {
    artifacts = si::Artifacts::open(dir.path(), meta_for(dim));
    for (std::size_t i = 0; i < n; ++i) add_one();
  }

  void add_one() {
    auto i = stored.size();
    stored.push_back(random_unit(embedder->dim(), rng));
    auto q = "stored question " + std::to_string(i);
    embedder->set(q, stored.back());
    artifacts->add({0, q, "stored answer " + std::to_string(i), "c", 0.7}, stored.back());
  }

  std::string probe(std::size_t target, double s) {
    auto name = "probe " + std::to_string(target) + " at " + std::to_string(s) + " #" + std::to_string(rng());
    embedder->set(name, at_similarity(stored[target], s, rng));
    return name;
  }
};

// 5. Hit returns before the slow LLM and cancels it; miss is transparent.
Verdict race_semantics() {
  Verdict v;
  Fixture fx(1000, 384, 5);
  auto llm = std::make_shared<si::MockLlm>(si::MockLlmConfig{.latency = 100ms, .echo_prefix = "LLM says: "});
  si::Gateway gw({fx.artifacts, fx.embedder, llm, nullptr}, {});

  gw.answer("stored question 0");  // warm-up
  gw.drain();
  auto before = llm->stats().cancel_delays.size();

  auto t0 = si::Clock::now();
  auto hit = gw.answer("stored question 17");
  double wall_ms = seconds_since(t0) * 1000.0;
  gw.drain();
  auto st = llm->stats();
  v.require(hit.source == si::AnswerSource::kHit && hit.text == "stored answer 17", "source=hit with stored text");
  v.require(wall_ms <= 35.0, fmt("hit returned in %.2f ms (<= 35)", wall_ms));
  bool observed = st.cancel_delays.size() == before + 1;
  double delay_ms = observed ? std::chrono::duration<double, std::milli>(st.cancel_delays.back()).count() : -1.0;
  v.require(observed && delay_ms <= 25.0, fmt("cancel observed %.3f ms after fire (<= 25)", delay_ms));

  auto q = fx.probe(3, 0.3);
  auto miss = gw.answer(q);
  si::CancelToken never;
  auto direct = llm->complete(gw.request_for(q), never);
  v.require(miss.source == si::AnswerSource::kMiss && miss.text == direct.text,
            "miss text byte-identical to direct call");
  return v;
}

std::vector<double> hit_rates(si::Gateway& gw, const std::vector<si::BenchQuery>& qs,
                              const std::vector<double>& ths) {
  auto report = si::bench(gw, qs, ths);
  std::vector<double> out;
  for (const auto& row : report.rows) out.push_back(row.latency.hit_rate);
  return out;
}

// 6. Hit rate vs runtime threshold on two engineered similarity profiles.
Verdict threshold_shape() {
  Verdict v;
  const std::vector<double> ths{0.5, 0.7, 0.9};
  Fixture fx(500, 384, 6);
  auto llm = std::make_shared<si::MockLlm>(si::MockLlmConfig{});
  si::Gateway gw({fx.artifacts, fx.embedder, llm, nullptr}, {});
  std::uniform_int_distribution<std::size_t> pick(0, fx.stored.size() - 1);

  std::vector<si::BenchQuery> uniform;
  std::uniform_real_distribution<double> u(0.4, 1.0);
  for (int i = 0; i < 300; ++i) uniform.push_back({fx.probe(pick(fx.rng), u(fx.rng)), ""});
  auto ur = hit_rates(gw, uniform, ths);
  v.require(ur[0] > ur[1] && ur[1] > ur[2],
            fmt("uniform profile %.3f > %.3f > %.3f", ur[0], ur[1], ur[2]));

  // 14 / 48 / 93 / 45 queries in the bands split at 0.5, 0.7, 0.9.
  struct Band {
    int count;
    double lo, hi;
  };
  std::vector<si::BenchQuery> shaped;
  for (Band b : {Band{14, 0.30, 0.49}, Band{48, 0.51, 0.69}, Band{93, 0.71, 0.89}, Band{45, 0.91, 0.99}}) {
    std::uniform_real_distribution<double> d(b.lo, b.hi);
    for (int i = 0; i < b.count; ++i) shaped.push_back({fx.probe(pick(fx.rng), d(fx.rng)), ""});
  }
  std::shuffle(shaped.begin(), shaped.end(), fx.rng);
  auto pr = hit_rates(gw, shaped, ths);
  const double target[] = {0.93, 0.69, 0.225};
  for (int i = 0; i < 3; ++i) {
    v.require(std::abs(pr[i] - target[i]) <= 0.02,
              fmt("profile @%.1f hit rate %.3f vs %.3f +-0.02", ths[i], pr[i], target[i]));
  }
  return v;
}

// 7. Metric values and properties.
Verdict metric_oracles() {
  Verdict v;
  v.require(si::unigram_f1("the cat sat", "the cat") == 0.8, "unigram_f1 = 0.8 exactly");
  v.require(si::rouge_l_f1("a b c", "a c") == 0.8, "rouge_l_f1 = 0.8 exactly");

  static const char* vocab[] = {"the", "cat", "sat", "on", "mat", "dog", "ran", "far", "A", "b,", "C.", "x"};
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(0, 12), pick(0, 11);
  auto sentence = [&] {
    std::string s;
    for (int i = 0, n = len(rng); i < n; ++i) s += std::string(i ? " " : "") + vocab[pick(rng)];
    return s;
  };
  std::size_t violations = 0;
  for (int t = 0; t < 1000; ++t) {
    auto a = sentence(), b = sentence();
    double u = si::unigram_f1(a, b), r = si::rouge_l_f1(a, b);
    auto ta = si::tokenize_for_metrics(a), tb = si::tokenize_for_metrics(b);
    bool ok = u >= 0.0 && u <= 1.0 && r >= 0.0 && r <= 1.0;
    ok = ok && u == si::unigram_f1(b, a) && r == si::rouge_l_f1(b, a);
    ok = ok && si::lcs_length(ta, tb) <= std::min(ta.size(), tb.size());
    if (!ta.empty()) ok = ok && si::unigram_f1(a, a) == 1.0 && si::rouge_l_f1(a, a) == 1.0;
    bool disjoint = std::none_of(ta.begin(), ta.end(), [&](const auto& w) {
      return std::find(tb.begin(), tb.end(), w) != tb.end();
    });
    if (disjoint) ok = ok && u == 0.0 && r == 0.0;
    violations += !ok;
  }
  v.require(violations == 0, fmt("%zu property violations over 1000 random pairs", violations));
  return v;
}

// 8. Save/load round trip of index and store, then replay.
Verdict persistence() {
  Verdict v;
  TempDir dir;
  const std::size_t dim = 128;
  auto embedder = std::make_shared<si::DeterministicEmbedder>(dim, 8);
  auto llm = std::make_shared<si::MockLlm>(si::MockLlmConfig{.echo_prefix = "LLM: "});
  std::vector<std::string> queries;
  {
    auto art = si::Artifacts::open(dir.path(), meta_for(dim));
    for (int i = 0; i < 300; ++i) {
      auto q = "question number " + std::to_string(i);
      art->add({0, q, "answer number " + std::to_string(i), "c" + std::to_string(i % 7), 0.7}, embedder->embed(q));
    }
    art->flush();
  }
  for (int i = 0; i < 10; ++i) queries.push_back("question number " + std::to_string(i * 29));
  for (int i = 0; i < 10; ++i) queries.push_back("unseen query " + std::to_string(i));

  auto snapshot = [&](si::Artifacts& art) {
    std::vector<si::PairRecord> records;
    std::optional<si::GraphIndex> index;
    art.with_shared([&](const si::PairStore& store, const si::GraphIndex& g) {
      for (auto id : store.ids()) records.push_back(*store.get(id));
      index.emplace(g);
    });
    return std::make_pair(records, *index);
  };
  auto replay = [&](std::shared_ptr<si::Artifacts> art) {
    si::Gateway gw({art, embedder, llm, nullptr}, {});
    std::vector<nlohmann::json> out;
    for (const auto& q : queries) {
      auto j = gw.answer(q).to_json();
      for (const char* k : {"search_latency_ms", "llm_latency_ms", "total_latency_ms"}) j.erase(k);
      out.push_back(j);
    }
    return out;
  };

  std::shared_ptr<si::Artifacts> first = si::Artifacts::load(dir.path());
  auto [records_a, index_a] = snapshot(*first);
  auto answers_a = replay(first);
  first.reset();

  std::shared_ptr<si::Artifacts> second = si::Artifacts::load(dir.path());
  auto [records_b, index_b] = snapshot(*second);
  auto answers_b = replay(second);

  index_a.save(dir / "copy.index");
  std::ifstream f1(dir.path() / si::PairStore::kIndexFile, std::ios::binary), f2(dir / "copy.index", std::ios::binary);
  std::string b1{std::istreambuf_iterator<char>(f1), {}}, b2{std::istreambuf_iterator<char>(f2), {}};

  v.require(index_a == index_b && b1 == b2, "index structurally equal and re-save byte-identical");
  v.require(records_a == records_b && records_a.size() == 300, "store records equal");
  v.require(answers_a == answers_b, "20 replayed outcomes identical (timings excluded)");
  std::size_t hits = std::count_if(answers_a.begin(), answers_a.end(),
                                   [](const auto& j) { return j["source"] == "hit"; });
  v.require(hits == 10, fmt("%zu of 20 replay queries hit", hits));
  return v;
}

// 9. Hit rate and footprint as the store grows.
Verdict storage_scaling() {
  Verdict v;
  constexpr std::size_t kDim = 384, kMax = 8000;
  Fixture fx(0, kDim, 9);
  // Queries aim at the full 8k universe, so a bigger store covers more.
  std::vector<si::Embedding> universe;
  for (std::size_t i = 0; i < kMax; ++i) universe.push_back(random_unit(kDim, fx.rng));
  std::vector<si::BenchQuery> stream;
  std::uniform_int_distribution<std::size_t> pick(0, kMax - 1);
  std::uniform_real_distribution<double> sim(0.8, 1.0);
  for (int i = 0; i < 400; ++i) {
    auto name = "stream query " + std::to_string(i);
    fx.embedder->set(name, at_similarity(universe[pick(fx.rng)], sim(fx.rng), fx.rng));
    stream.push_back({name, ""});
  }

  auto llm = std::make_shared<si::MockLlm>(si::MockLlmConfig{});
  std::vector<si::ScalingPoint> points;
  const std::vector<double> ths{0.9};
  for (std::size_t n : {1000, 2000, 4000, 8000}) {
    while (fx.stored.size() < n) {
      auto i = fx.stored.size();
      fx.stored.push_back(universe[i]);
      fx.artifacts->add({0, "u" + std::to_string(i), "a" + std::to_string(i), "c", 0.7}, universe[i]);
    }
    fx.artifacts->flush();
    si::Gateway gw({fx.artifacts, fx.embedder, llm, nullptr}, {});
    auto report = si::bench(gw, stream, ths);
    points.push_back({report.pair_count, report.rows[0].latency.hit_rate, report.index_bytes, report.metadata_bytes});
    std::printf("  %s\n", points.back().to_json().dump().c_str());
  }
  bool hits_ok = true, bytes_ok = true;
  for (std::size_t i = 1; i < points.size(); ++i) {
    hits_ok = hits_ok && points[i].hit_rate >= points[i - 1].hit_rate;
    bytes_ok = bytes_ok && points[i].index_bytes > points[i - 1].index_bytes;
  }
  v.require(hits_ok, fmt("hit rate non-decreasing %.3f -> %.3f -> %.3f -> %.3f", points[0].hit_rate,
                         points[1].hit_rate, points[2].hit_rate, points[3].hit_rate));
  v.require(bytes_ok, "index_bytes strictly increasing");
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Verdict (*run)();
  };
  const Criterion criteria[] = {
      {"effective-latency formula", latency_formula},
      {"ANN recall@10 on 10k vectors", ann_recall},
      {"dedup invariant after generation", dedup_invariant},
      {"temperature schedule", temperature_schedule},
      {"race semantics", race_semantics},
      {"threshold monotonicity and hit-rate profile", threshold_shape},
      {"metric oracles", metric_oracles},
      {"persistence round trip", persistence},
      {"hit-rate and storage scaling", storage_scaling},
  };
  int failed = 0;
  int n = 0;
  for (const auto& c : criteria) {
    ++n;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("threw: ") + e.what();
    }
    failed += !v.pass;
    std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", n, c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}
