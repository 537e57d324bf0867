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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "storinfer/embedding.hpp"
#include "storinfer/vector_index.hpp"

namespace storinfer {

struct PairRecord {
  RecordId id = 0;
  std::string query;
  std::string response;
  std::string chunk_id;
  double created_temperature = 0.0;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

struct StoreStats {
  std::uint64_t pair_count = 0;
  std::uint64_t metadata_bytes = 0;
  std::uint64_t index_bytes = 0;
};

// Contents of store.meta.
struct StoreMeta {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  std::size_t dim = 0;
  RecordId next_id = 0;
  std::set<std::string> completed_chunks;
  EmbedderConfig embedder;
  IndexParams index_params;
};

/// Append-only query/response metadata (pairs.jsonl) plus the id counter
/// and progress marker (store.meta). Records are also held in memory for
/// lookup. One writer; get() is safe from any thread once flush() returned.
class PairStore {
 public:
  static constexpr const char* kPairsFile = "pairs.jsonl";
  static constexpr const char* kIndexFile = "pairs.index";
  static constexpr const char* kMetaFile = "store.meta";

  // Creates the directory and files when absent, otherwise loads them.
  // Throws kIoFailure, kFileFormat, kDimensionMismatch (existing store
  // with a different dim).
  static PairStore open(const std::filesystem::path& dir, StoreMeta initial);

  PairStore(PairStore&&) = default;
  PairStore& operator=(PairStore&&) = default;

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const StoreMeta& meta() const noexcept { return meta_; }
  std::size_t size() const noexcept { return records_.size(); }

  RecordId allocate_id() { return meta_.next_id++; }

  // Throws kDuplicateId, kIoFailure. Durable after flush().
  void put(const PairRecord& record);
  std::optional<PairRecord> get(RecordId id) const;
  std::vector<RecordId> ids() const;

  void mark_chunk_completed(const std::string& chunk_id);
  bool chunk_completed(const std::string& chunk_id) const;

  void flush();

  // Bytes of the pairs file on disk after the last flush.
  std::uint64_t metadata_bytes() const;

  static std::string header_line();
  static std::string encode(const PairRecord& record);
  static PairRecord decode(const std::string& line);

 private:
  PairStore() = default;
  void write_meta() const;

  std::filesystem::path dir_;
  StoreMeta meta_;
  std::map<RecordId, PairRecord> records_;
  std::ofstream pairs_out_;
};

// Counts plus on-disk sizes of pairs.jsonl and pairs.index.
StoreStats stats(const PairStore& store, const std::filesystem::path& index_file);

StoreMeta read_meta(const std::filesystem::path& dir);

/// Pair store and graph index for one store directory, behind a
/// reader/writer lock: lookups share, inserts and flushes are exclusive.
class Artifacts {
 public:
  // Opens or creates dir. A missing pairs.index with an empty store starts
  // a fresh index.
  static std::unique_ptr<Artifacts> open(const std::filesystem::path& dir,
                                         StoreMeta initial);
  // Existing store only; throws kArtifactLoadFailure otherwise.
  static std::unique_ptr<Artifacts> load(const std::filesystem::path& dir);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const;
  StoreMeta meta() const;

  // Insert under an id allocated here; returns the id.
  RecordId add(PairRecord record, const Embedding& query_embedding);

  std::vector<SearchHit> search(const Embedding& query, std::size_t k) const;
  std::optional<PairRecord> get(RecordId id) const;

  void flush();
  StoreStats stats() const;

  // Empty when every index id has exactly one record and vice versa,
  // otherwise one line per violation.
  std::vector<std::string> audit() const;

  // Writer-side access for the generator, which drives the index directly.
  template <typename Fn>
  decltype(auto) with_exclusive(Fn&& fn) {
    std::unique_lock lock(mutex_);
    return fn(store_, index_);
  }
  template <typename Fn>
  decltype(auto) with_shared(Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return fn(store_, index_);
  }

 private:
  Artifacts(PairStore store, GraphIndex index);

  mutable std::shared_mutex mutex_;
  std::size_t dim_;
  PairStore store_;
  GraphIndex index_;
};

}  // namespace storinfer
