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
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "storinfer/embedding.hpp"

namespace storinfer {

using RecordId = std::uint64_t;

struct IndexParams {
  std::uint32_t max_degree = 32;    // R
  std::uint32_t build_beam = 64;    // L_build
  double alpha = 1.2;               // persisted as alpha * 1000
  std::uint32_t search_beam = 64;   // L_search

  void validate() const;
  friend bool operator==(const IndexParams&, const IndexParams&) = default;
};

struct SearchHit {
  RecordId id = 0;
  double score = 0.0;
  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

// Score descending, id ascending on ties.
bool hit_order(const SearchHit& a, const SearchHit& b) noexcept;

/// Vamana-style proximity graph over unit-norm embeddings, searched by
/// inner product. Nodes are kept in insertion order; external ids map to
/// dense slots.
///
/// Not internally synchronized. Concurrent const calls are safe; insert
/// needs exclusive access (see Artifacts for the reader/writer wrapper).
class GraphIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit GraphIndex(std::size_t dim, IndexParams params = {});

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const IndexParams& params() const noexcept { return params_; }
  bool contains(RecordId id) const { return slot_of_.contains(id); }

  // Throws kDuplicateId, kDimensionMismatch.
  void insert(RecordId id, const Embedding& vec);

  // Beam search with width max(search_beam, k). Throws kEmptyIndex,
  // kDimensionMismatch.
  std::vector<SearchHit> search(const Embedding& query, std::size_t k) const;

  // Exact top-k over every stored vector.
  std::vector<SearchHit> exact_search(const Embedding& query,
                                      std::size_t k) const;

  RecordId entry_point() const;
  std::vector<RecordId> ids() const { return ids_; }
  std::vector<RecordId> neighbors(RecordId id) const;
  std::span<const float> vector(RecordId id) const;

  void save(const std::filesystem::path& path) const;
  static GraphIndex load(const std::filesystem::path& path);

  // Same nodes, vectors, adjacency, entry point and params.
  friend bool operator==(const GraphIndex& a, const GraphIndex& b);

 private:
  using Slot = std::uint32_t;

  std::span<const float> row(Slot s) const noexcept {
    return {data_.data() + static_cast<std::size_t>(s) * dim_, dim_};
  }
  double distance(Slot a, Slot b) const noexcept;

  // Greedy beam search; returns the final beam (sorted) and, when asked,
  // every node whose neighborhood was expanded.
  std::vector<std::pair<double, Slot>> beam_search(
      std::span<const float> query, std::size_t beam,
      std::vector<Slot>* expanded) const;

  std::vector<Slot> robust_prune(Slot p, std::vector<Slot> candidates) const;

  std::size_t dim_;
  IndexParams params_;
  std::vector<RecordId> ids_;
  std::vector<float> data_;
  std::vector<std::vector<Slot>> adjacency_;
  std::unordered_map<RecordId, Slot> slot_of_;
  Slot entry_ = 0;
};

// Exact top-k by inner product. Empty input gives an empty list.
std::vector<SearchHit> brute_force(
    std::span<const std::pair<RecordId, Embedding>> vectors,
    const Embedding& query, std::size_t k);

}  // namespace storinfer
