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

#include "storinfer/pair_store.hpp"

#include <json.hpp>

#include "storinfer/error.hpp"

namespace storinfer {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPairsFormat = "storinfer-pairs";

json embedder_to_json(const EmbedderConfig& cfg) {
  return {
      {"backend", cfg.backend == EmbedderBackend::kRemote ? "remote" : "deterministic"},
      {"dim", cfg.dim},
      {"endpoint", cfg.endpoint ? json(*cfg.endpoint) : json(nullptr)},
      {"seed", cfg.seed},
      {"semantic_collapse", cfg.semantic_collapse},
      {"collapse_jitter", cfg.collapse_jitter},
      {"timeout_ms", cfg.timeout.count()},
  };
}

EmbedderConfig embedder_from_json(const json& j) {
  EmbedderConfig cfg;
  cfg.backend = j.at("backend").get<std::string>() == "remote"
                    ? EmbedderBackend::kRemote
                    : EmbedderBackend::kDeterministic;
  cfg.dim = j.at("dim").get<std::size_t>();
  if (!j.at("endpoint").is_null()) cfg.endpoint = j.at("endpoint").get<std::string>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.semantic_collapse = j.at("semantic_collapse").get<bool>();
  cfg.collapse_jitter = j.at("collapse_jitter").get<double>();
  cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", 10000));
  return cfg;
}

std::uint64_t file_size_or_zero(const fs::path& p) {
  std::error_code ec;
  auto n = fs::file_size(p, ec);
  return ec ? 0 : static_cast<std::uint64_t>(n);
}

}  // namespace

std::string PairStore::header_line() {
  json h = {{"format", kPairsFormat}, {"version", StoreMeta::kFormatVersion}};
  return h.dump() + "\n";
}

std::string PairStore::encode(const PairRecord& r) {
  // Field order is fixed so the file is stable and diffable.
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["id"] = r.id;
  j["chunk_id"] = r.chunk_id;
  j["query"] = r.query;
  j["response"] = r.response;
  j["temp"] = r.created_temperature;
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
}

PairRecord PairStore::decode(const std::string& line) {
  try {
    auto j = json::parse(line);
    PairRecord r;
    r.id = j.at("id").get<RecordId>();
    r.chunk_id = j.at("chunk_id").get<std::string>();
    r.query = j.at("query").get<std::string>();
    r.response = j.at("response").get<std::string>();
    r.created_temperature = j.at("temp").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::kFileFormat, std::string("bad pair record: ") + e.what());
  }
}

StoreMeta read_meta(const fs::path& dir) {
  std::ifstream in(dir / PairStore::kMetaFile);
  if (!in) throw Error(Errc::kIoFailure, "cannot open " + (dir / PairStore::kMetaFile).string());
  try {
    auto j = json::parse(in);
    StoreMeta m;
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != StoreMeta::kFormatVersion) {
      throw Error(Errc::kFileFormat, "unsupported store version " + std::to_string(m.version));
    }
    m.dim = j.at("dim").get<std::size_t>();
    m.next_id = j.at("next_id").get<RecordId>();
    for (const auto& c : j.at("completed_chunks")) m.completed_chunks.insert(c.get<std::string>());
    m.embedder = embedder_from_json(j.at("embedder"));
    const auto& p = j.at("index");
    m.index_params.max_degree = p.at("max_degree").get<std::uint32_t>();
    m.index_params.build_beam = p.at("build_beam").get<std::uint32_t>();
    m.index_params.alpha = p.at("alpha").get<double>();
    m.index_params.search_beam = p.at("search_beam").get<std::uint32_t>();
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::kFileFormat, std::string("bad store.meta: ") + e.what());
  }
}

void PairStore::write_meta() const {
  json j = {
      {"version", meta_.version},
      {"dim", meta_.dim},
      {"next_id", meta_.next_id},
      {"completed_chunks", meta_.completed_chunks},
      {"embedder", embedder_to_json(meta_.embedder)},
      {"index",
       {{"max_degree", meta_.index_params.max_degree},
        {"build_beam", meta_.index_params.build_beam},
        {"alpha", meta_.index_params.alpha},
        {"search_beam", meta_.index_params.search_beam}}},
  };
  auto path = dir_ / kMetaFile;
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::kIoFailure, "cannot write " + tmp.string());
    out << j.dump(2) << "\n";
    if (!out.flush()) throw Error(Errc::kIoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::kIoFailure, "rename to " + path.string() + ": " + ec.message());
}

PairStore PairStore::open(const fs::path& dir, StoreMeta initial) {
  PairStore store;
  store.dir_ = dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::kIoFailure, "cannot create " + dir.string() + ": " + ec.message());

  auto pairs_path = dir / kPairsFile;
  if (fs::exists(dir / kMetaFile)) {
    store.meta_ = read_meta(dir);
    if (initial.dim != 0 && initial.dim != store.meta_.dim) {
      throw Error(Errc::kDimensionMismatch,
                  "store has dim " + std::to_string(store.meta_.dim) +
                      ", requested " + std::to_string(initial.dim));
    }
    std::ifstream in(pairs_path);
    if (!in) throw Error(Errc::kIoFailure, "cannot open " + pairs_path.string());
    std::string line;
    if (!std::getline(in, line) || line + "\n" != header_line()) {
      throw Error(Errc::kFileFormat, "missing or unknown header in " + pairs_path.string());
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto record = decode(line);
      if (!store.records_.emplace(record.id, record).second) {
        throw Error(Errc::kFileFormat, "duplicate id " + std::to_string(record.id) +
                                           " in " + pairs_path.string());
      }
    }
    store.pairs_out_.open(pairs_path, std::ios::app);
  } else {
    if (initial.dim == 0) initial.dim = initial.embedder.dim;
    if (initial.dim != initial.embedder.dim) {
      throw Error(Errc::kDimensionMismatch, "store dim differs from embedder dim");
    }
    store.meta_ = std::move(initial);
    store.pairs_out_.open(pairs_path, std::ios::trunc);
    store.pairs_out_ << header_line();
    store.pairs_out_.flush();
    store.write_meta();
  }
  if (!store.pairs_out_) throw Error(Errc::kIoFailure, "cannot append to " + pairs_path.string());
  return store;
}

void PairStore::put(const PairRecord& record) {
  if (records_.contains(record.id)) {
    throw Error(Errc::kDuplicateId, "pair id " + std::to_string(record.id) + " already stored");
  }
  if (record.query.empty()) throw Error(Errc::kInvalidArgument, "pair query is empty");
  pairs_out_ << encode(record);
  if (!pairs_out_) throw Error(Errc::kIoFailure, "append to pairs file failed");
  records_.emplace(record.id, record);
  if (record.id >= meta_.next_id) meta_.next_id = record.id + 1;
}

std::optional<PairRecord> PairStore::get(RecordId id) const {
  if (auto it = records_.find(id); it != records_.end()) return it->second;
  return std::nullopt;
}

std::vector<RecordId> PairStore::ids() const {
  std::vector<RecordId> out;
  out.reserve(records_.size());
  for (const auto& [id, r] : records_) out.push_back(id);
  return out;
}

void PairStore::mark_chunk_completed(const std::string& chunk_id) {
  meta_.completed_chunks.insert(chunk_id);
}

bool PairStore::chunk_completed(const std::string& chunk_id) const {
  return meta_.completed_chunks.contains(chunk_id);
}

void PairStore::flush() {
  if (!pairs_out_.flush()) throw Error(Errc::kIoFailure, "flush of pairs file failed");
  write_meta();
}

std::uint64_t PairStore::metadata_bytes() const {
  return file_size_or_zero(dir_ / kPairsFile);
}

StoreStats stats(const PairStore& store, const fs::path& index_file) {
  return {store.size(), store.metadata_bytes(), file_size_or_zero(index_file)};
}

Artifacts::Artifacts(PairStore store, GraphIndex index)
    : dim_(store.meta().dim), store_(std::move(store)), index_(std::move(index)) {}

std::unique_ptr<Artifacts> Artifacts::open(const fs::path& dir, StoreMeta initial) {
  auto store = PairStore::open(dir, std::move(initial));
  auto index_path = dir / PairStore::kIndexFile;
  if (!fs::exists(index_path)) {
    if (store.size() != 0) {
      throw Error(Errc::kArtifactLoadFailure, index_path.string() + " is missing");
    }
    GraphIndex index(store.meta().dim, store.meta().index_params);
    return std::unique_ptr<Artifacts>(new Artifacts(std::move(store), std::move(index)));
  }
  auto index = GraphIndex::load(index_path);
  if (index.dim() != store.meta().dim) {
    throw Error(Errc::kArtifactLoadFailure, "index dim differs from store dim");
  }
  return std::unique_ptr<Artifacts>(new Artifacts(std::move(store), std::move(index)));
}

std::unique_ptr<Artifacts> Artifacts::load(const fs::path& dir) {
  if (!fs::exists(dir / PairStore::kMetaFile)) {
    throw Error(Errc::kArtifactLoadFailure, "no store at " + dir.string());
  }
  try {
    return open(dir, StoreMeta{});
  } catch (const Error& e) {
    if (e.code() == Errc::kArtifactLoadFailure) throw;
    throw Error(Errc::kArtifactLoadFailure, e.what());
  }
}

std::size_t Artifacts::size() const {
  std::shared_lock lock(mutex_);
  return store_.size();
}

StoreMeta Artifacts::meta() const {
  std::shared_lock lock(mutex_);
  return store_.meta();
}

RecordId Artifacts::add(PairRecord record, const Embedding& query_embedding) {
  std::unique_lock lock(mutex_);
  record.id = store_.allocate_id();
  index_.insert(record.id, query_embedding);
  store_.put(record);
  return record.id;
}

std::vector<SearchHit> Artifacts::search(const Embedding& query, std::size_t k) const {
  std::shared_lock lock(mutex_);
  if (index_.empty()) return {};
  return index_.search(query, k);
}

std::optional<PairRecord> Artifacts::get(RecordId id) const {
  std::shared_lock lock(mutex_);
  return store_.get(id);
}

void Artifacts::flush() {
  std::unique_lock lock(mutex_);
  index_.save(store_.dir() / PairStore::kIndexFile);
  store_.flush();
}

StoreStats Artifacts::stats() const {
  std::shared_lock lock(mutex_);
  return storinfer::stats(store_, store_.dir() / PairStore::kIndexFile);
}

std::vector<std::string> Artifacts::audit() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> problems;
  for (RecordId id : index_.ids()) {
    if (!store_.get(id)) problems.push_back("index id " + std::to_string(id) + " has no record");
  }
  for (RecordId id : store_.ids()) {
    if (!index_.contains(id)) problems.push_back("record " + std::to_string(id) + " is not indexed");
  }
  return problems;
}

}  // namespace storinfer
