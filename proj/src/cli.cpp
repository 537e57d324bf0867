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

#include "storinfer/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "storinfer/error.hpp"
#include "storinfer/gateway.hpp"
#include "storinfer/generator.hpp"
#include "storinfer/metrics_eval.hpp"
#include "storinfer/pair_store.hpp"

namespace storinfer {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested.store(true); }

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LlmOptions {
  bool mock = false;
  int mock_latency_ms = -1;
  std::string mock_behavior = "echo";
  std::uint64_t mock_seed = 0;
  std::string url;
  std::string key;
  std::string model;
  int timeout_ms = 60000;
  int retries = 0;

  void add_to(CLI::App* cmd, const std::string& default_behavior) {
    mock_behavior = default_behavior;
    cmd->add_flag("--mock-llm", mock, "Use the in-process mock LLM");
    cmd->add_option("--mock-llm-latency-ms", mock_latency_ms,
                    "Simulated mock decode latency (implies --mock-llm)");
    cmd->add_option("--mock-behavior", mock_behavior, "Mock output mode")
        ->check(CLI::IsMember({"echo", "synthetic"}));
    cmd->add_option("--mock-seed", mock_seed, "Mock seed");
    cmd->add_option("--llm-url", url, "Chat-completions base URL [STORINFER_LLM_URL]");
    cmd->add_option("--llm-key", key, "API key [STORINFER_LLM_KEY]");
    cmd->add_option("--llm-model", model, "Model name [STORINFER_LLM_MODEL]");
    cmd->add_option("--llm-timeout-ms", timeout_ms, "Upstream timeout")->check(CLI::PositiveNumber);
    cmd->add_option("--llm-retries", retries, "Retries on upstream failure")->check(CLI::Range(0, 1));
  }

  std::shared_ptr<LlmClient> build() const {
    bool use_mock = mock || mock_latency_ms >= 0;
    if (use_mock && !url.empty()) {
      throw UsageError("--mock-llm conflicts with --llm-url");
    }
    if (use_mock) {
      MockLlmConfig cfg;
      cfg.latency = std::chrono::milliseconds(std::max(0, mock_latency_ms));
      cfg.behavior = mock_behavior == "synthetic" ? MockBehavior::kSynthetic : MockBehavior::kEcho;
      cfg.seed = mock_seed;
      return std::make_shared<MockLlm>(cfg);
    }
    auto env = RemoteLlmConfig::from_env();
    RemoteLlmConfig cfg = env.value_or(RemoteLlmConfig{});
    if (!url.empty()) cfg.url = url;
    if (!key.empty()) cfg.api_key = key;
    if (!model.empty()) cfg.model = model;
    if (cfg.url.empty()) {
      throw UsageError("no LLM configured: pass --llm-url, set STORINFER_LLM_URL, or use --mock-llm");
    }
    cfg.timeout = std::chrono::milliseconds(timeout_ms);
    cfg.retries = retries;
    return std::make_shared<RemoteLlm>(cfg);
  }
};

struct EmbedOptions {
  std::size_t dim = 384;
  std::uint64_t seed = 0;
  std::string backend = "deterministic";
  std::string url;
  bool collapse = false;
  double jitter = 0.0;
  int timeout_ms = 10000;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--dim", dim, "Embedding dimension")->check(CLI::Range(2, 65536));
    cmd->add_option("--seed", seed, "Deterministic embedder seed");
    cmd->add_option("--embed-backend", backend, "Embedding backend")
        ->check(CLI::IsMember({"deterministic", "remote"}));
    cmd->add_option("--embed-url", url, "Embedding endpoint [STORINFER_EMBED_URL]");
    cmd->add_flag("--semantic-collapse", collapse,
                  "Deterministic backend: texts with the same canonical form embed nearby");
    cmd->add_option("--collapse-jitter", jitter, "Perturbation size in collapse mode")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--embed-timeout-ms", timeout_ms, "Embedding request timeout")
        ->check(CLI::PositiveNumber);
  }

  EmbedderConfig build() const {
    EmbedderConfig cfg;
    cfg.dim = dim;
    cfg.seed = seed;
    cfg.semantic_collapse = collapse;
    cfg.collapse_jitter = jitter;
    cfg.timeout = std::chrono::milliseconds(timeout_ms);
    std::string endpoint = url;
    if (endpoint.empty()) {
      if (const char* env = std::getenv("STORINFER_EMBED_URL")) endpoint = env;
    }
    if (backend == "remote") {
      if (endpoint.empty()) throw UsageError("--embed-backend remote needs --embed-url or STORINFER_EMBED_URL");
      cfg.backend = EmbedderBackend::kRemote;
      cfg.endpoint = endpoint;
    } else if (!url.empty()) {
      throw UsageError("--embed-url conflicts with the deterministic embedding backend");
    }
    return cfg;
  }
};

// Rebuilds the embedder a store was generated with; the remote endpoint
// may be overridden by STORINFER_EMBED_URL.
std::shared_ptr<const Embedder> embedder_for_store(const StoreMeta& meta) {
  EmbedderConfig cfg = meta.embedder;
  if (cfg.backend == EmbedderBackend::kRemote) {
    if (const char* env = std::getenv("STORINFER_EMBED_URL"); env && *env) cfg.endpoint = env;
  }
  return make_embedder(cfg);
}

json with_schema(json j, const char* schema) {
  j["schema"] = schema;
  return j;
}

std::string text_field(const json& j) {
  for (const char* key : {"text", "prediction", "response", "reference", "answer"}) {
    if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
  }
  throw Error(Errc::kFileFormat, "record has no text field");
}

std::vector<std::string> read_texts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoFailure, "cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(text_field(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(Errc::kFileFormat, path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<double> parse_thresholds(const std::string& list) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string::npos) end = list.size();
    auto item = list.substr(start, end - start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !(v > 0.0 && v <= 1.0)) {
      throw UsageError("bad threshold '" + item + "': expected numbers in (0, 1]");
    }
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Storage-assisted precomputed query/response cache for LLM inference", "storinfer"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values");

  // generate
  auto* gen = app.add_subcommand("generate", "Precompute deduplicated query/response pairs");
  fs::path corpus, out_dir;
  GeneratorConfig gen_cfg;
  IndexParams index_params;
  bool resume = false;
  EmbedOptions gen_embed;
  LlmOptions gen_llm;
  gen->add_option("--corpus", corpus, "Line-delimited {chunk_id, text} records")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Store directory")->required();
  gen->add_option("--target-per-chunk", gen_cfg.target_per_chunk, "Queries to accept per chunk")->required();
  gen->add_option("--max-attempts-per-chunk", gen_cfg.max_attempts_per_chunk, "Default 4 x target");
  gen->add_option("--gen-threshold", gen_cfg.dedup_threshold, "Dedup similarity threshold")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--max-context-tokens", gen_cfg.max_context_tokens, "Model context length")
      ->required()->check(CLI::PositiveNumber);
  gen->add_flag("--exact-dedup", gen_cfg.exact_dedup, "Dedup against all stored queries exactly");
  gen->add_flag("--mask-include-rejected", gen_cfg.mask_include_rejected,
                "Also mask rejected candidates");
  gen->add_flag("--resume", resume, "Continue an existing store, skipping completed chunks");
  gen->add_option("--max-degree", index_params.max_degree, "Graph degree bound R");
  gen->add_option("--build-beam", index_params.build_beam, "Build beam L_build");
  gen->add_option("--alpha", index_params.alpha, "Prune alpha");
  gen->add_option("--search-beam", index_params.search_beam, "Search beam L_search");
  gen_embed.add_to(gen);
  gen_llm.add_to(gen, "synthetic");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP answer service");
  fs::path serve_store;
  RuntimeConfig serve_cfg;
  std::string bind_addr = "127.0.0.1:8080";
  LlmOptions serve_llm;
  serve->add_option("--store", serve_store, "Store directory")->required();
  serve->add_option("--hit-threshold", serve_cfg.hit_threshold, "Runtime similarity threshold")
      ->check(CLI::Range(0.0, 1.0));
  serve->add_option("--top-k", serve_cfg.top_k, "Hits fetched per search")->check(CLI::PositiveNumber);
  serve->add_flag("--insert-on-miss", serve_cfg.insert_on_miss, "Store miss responses");
  serve->add_option("--bind", bind_addr, "host:port");
  serve_llm.add_to(serve, "echo");

  // query
  auto* query = app.add_subcommand("query", "Answer one query and print the outcome");
  fs::path query_store;
  RuntimeConfig query_cfg;
  std::string query_text;
  LlmOptions query_llm;
  query->add_option("--store", query_store, "Store directory")->required();
  query->add_option("--hit-threshold", query_cfg.hit_threshold, "Runtime similarity threshold")
      ->check(CLI::Range(0.0, 1.0));
  query->add_option("--top-k", query_cfg.top_k, "Hits fetched per search")->check(CLI::PositiveNumber);
  query->add_option("text", query_text, "Query text")->required();
  query_llm.add_to(query, "echo");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Replay a query file at several thresholds");
  fs::path bench_store, bench_queries, bench_report_path = "bench_report.json";
  std::string thresholds = "0.5,0.7,0.9";
  LlmOptions bench_llm;
  bench_cmd->add_option("--store", bench_store, "Store directory")->required();
  bench_cmd->add_option("--queries", bench_queries, "Line-delimited {query, reference}")
      ->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--thresholds", thresholds, "Comma-separated thresholds");
  bench_cmd->add_option("--report", bench_report_path, "Machine-readable report file");
  bench_llm.add_to(bench_cmd, "echo");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  fs::path pred_file, ref_file;
  eval->add_option("--pred", pred_file, "Predictions, one record per line")->required()->check(CLI::ExistingFile);
  eval->add_option("--ref", ref_file, "References, one record per line")->required()->check(CLI::ExistingFile);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Print store size and footprint");
  fs::path stats_store;
  stats_cmd->add_option("--store", stats_store, "Store directory")->required();

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "storinfer: " << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      gen_cfg.validate();
      index_params.validate();
      auto embed_cfg = gen_embed.build();
      auto llm = gen_llm.build();
      if (fs::exists(out_dir / PairStore::kMetaFile) && !resume) {
        err << "storinfer: " << out_dir.string() << " already holds a store; pass --resume to continue it\n";
        return kExitFailure;
      }
      StoreMeta initial;
      initial.dim = embed_cfg.dim;
      initial.embedder = embed_cfg;
      initial.index_params = index_params;
      auto artifacts = Artifacts::open(out_dir, initial);
      auto embedder = make_embedder(artifacts->meta().embedder);
      auto chunks = load_corpus(corpus);
      auto st = precompute_corpus(chunks, gen_cfg, *llm, *embedder, *artifacts,
                                  [&err](const PrecomputeProgress& p) {
                                    err << "chunk " << p.chunk_id << ": "
                                        << (p.skipped ? std::string("skipped (completed earlier)")
                                                      : std::to_string(p.accepted) + " accepted in " +
                                                            std::to_string(p.attempts) + " attempts")
                                        << "\n";
                                  });
      out << with_schema({{"pair_count", st.pair_count},
                          {"index_bytes", st.index_bytes},
                          {"metadata_bytes", st.metadata_bytes}},
                         "storinfer.stats.v1")
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (stats_cmd->parsed()) {
      auto artifacts = Artifacts::load(stats_store);
      auto st = artifacts->stats();
      out << with_schema({{"pair_count", st.pair_count},
                          {"index_bytes", st.index_bytes},
                          {"metadata_bytes", st.metadata_bytes}},
                         "storinfer.stats.v1")
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (eval->parsed()) {
      auto preds = read_texts(pred_file);
      auto refs = read_texts(ref_file);
      if (preds.size() != refs.size()) {
        throw Error(Errc::kFileFormat, "prediction and reference files differ in length");
      }
      QualityScores mean;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        auto s = quality(preds[i], refs[i]);
        mean.unigram_f1 += s.unigram_f1;
        mean.rouge_l_f1 += s.rouge_l_f1;
        out << with_schema({{"index", i}, {"unigram_f1", s.unigram_f1}, {"rouge_l_f1", s.rouge_l_f1}},
                           "storinfer.eval.v1")
                   .dump()
            << "\n";
      }
      auto n = static_cast<double>(std::max<std::size_t>(preds.size(), 1));
      out << with_schema({{"aggregate", true},
                          {"count", preds.size()},
                          {"unigram_f1", mean.unigram_f1 / n},
                          {"rouge_l_f1", mean.rouge_l_f1 / n}},
                         "storinfer.eval.v1")
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (query->parsed()) {
      auto llm = query_llm.build();
      std::shared_ptr<Artifacts> artifacts = Artifacts::load(query_store);
      Gateway gateway({artifacts, embedder_for_store(artifacts->meta()), llm, nullptr}, query_cfg);
      auto outcome = gateway.answer(query_text);
      out << with_schema(outcome.to_json(), "storinfer.answer.v1").dump() << "\n";
      return kExitOk;
    }

    if (bench_cmd->parsed()) {
      auto ths = parse_thresholds(thresholds);
      auto llm = bench_llm.build();
      std::shared_ptr<Artifacts> artifacts = Artifacts::load(bench_store);
      Gateway gateway({artifacts, embedder_for_store(artifacts->meta()), llm, nullptr}, RuntimeConfig{});
      auto queries = load_bench_queries(bench_queries);
      auto report = bench(gateway, queries, ths);
      report.print_table(out);
      std::ofstream rep(bench_report_path);
      if (!rep) throw Error(Errc::kIoFailure, "cannot write " + bench_report_path.string());
      rep << report.to_json().dump(2) << "\n";
      err << "report written to " << bench_report_path.string() << "\n";
      return kExitOk;
    }

    if (serve->parsed()) {
      auto [host, port] = parse_bind_address(bind_addr);
      auto llm = serve_llm.build();
      std::shared_ptr<Artifacts> artifacts = Artifacts::load(serve_store);
      auto metrics = std::make_shared<MetricsRegistry>();
      Gateway gateway({artifacts, embedder_for_store(artifacts->meta()), llm, metrics}, serve_cfg);
      Server server(gateway);
      int bound = server.bind(host, port);
      err << "serving " << artifacts->size() << " pairs on " << host << ":" << bound << "\n";

      g_stop_requested.store(false);
      std::signal(SIGINT, on_stop_signal);
      std::signal(SIGTERM, on_stop_signal);
      std::thread watcher([&] {
        server.wait_until_ready();
        auto last_flush = Clock::now();
        while (!g_stop_requested.load()) {
          std::this_thread::sleep_for(std::chrono::milliseconds(100));
          if (serve_cfg.insert_on_miss && Clock::now() - last_flush > std::chrono::seconds(5)) {
            gateway.flush_pending();
            last_flush = Clock::now();
          }
        }
        server.stop();
      });
      server.run();
      g_stop_requested.store(true);
      watcher.join();
      gateway.drain();
      if (serve_cfg.insert_on_miss) gateway.flush_pending();
      err << "shut down\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "storinfer: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "storinfer: " << e.what() << "\n";
    return e.code() == Errc::kInvalidArgument ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "storinfer: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace storinfer
