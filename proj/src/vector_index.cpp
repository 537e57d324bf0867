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

#include "storinfer/vector_index.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "storinfer/error.hpp"

namespace storinfer {
namespace {

constexpr char kMagic[4] = {'S', 'I', 'N', 'F'};
// magic, version, dim, count, entry, 4 params
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8 + 8 + 4 * 4;

class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const noexcept { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(Errc::kCorruptFile, "index file is truncated");
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in slices for very large files.
  constexpr std::size_t kSlice = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kSlice) {
    auto n = std::min(kSlice, bytes.size() - off);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off),
                static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

double quantize_alpha(double alpha) { return std::round(alpha * 1000.0) / 1000.0; }

// Float inner product with independent lanes so the compiler vectorizes it.
// Used for graph navigation only; returned scores are recomputed in double.
float fast_dot(const float* a, const float* b, std::size_t n) noexcept {
  constexpr std::size_t kLanes = 8;
  float acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  }
  float total = 0.0f;
  for (std::size_t l = 0; l < kLanes; ++l) total += acc[l];
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

}  // namespace

void IndexParams::validate() const {
  if (max_degree == 0 || max_degree > 0xFFFF) {
    throw Error(Errc::kInvalidArgument, "max_degree must be in [1, 65535]");
  }
  if (build_beam < max_degree) {
    throw Error(Errc::kInvalidArgument, "build_beam must be >= max_degree");
  }
  if (!(alpha >= 1.0)) throw Error(Errc::kInvalidArgument, "alpha must be >= 1");
  if (search_beam == 0) throw Error(Errc::kInvalidArgument, "search_beam must be >= 1");
}

bool hit_order(const SearchHit& a, const SearchHit& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

GraphIndex::GraphIndex(std::size_t dim, IndexParams params)
    : dim_(dim), params_(params) {
  if (dim_ == 0) throw Error(Errc::kInvalidArgument, "index dim must be positive");
  params_.validate();
  params_.alpha = quantize_alpha(params_.alpha);
}

double GraphIndex::distance(Slot a, Slot b) const noexcept {
  // Squared L2 between unit vectors.
  return 2.0 - 2.0 * fast_dot(row(a).data(), row(b).data(), dim_);
}

std::vector<std::pair<double, GraphIndex::Slot>> GraphIndex::beam_search(
    std::span<const float> query, std::size_t beam,
    std::vector<Slot>* expanded) const {
  struct Candidate {
    double score;
    Slot slot;
    bool expanded;
  };
  auto better = [this](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return ids_[a.slot] < ids_[b.slot];
  };

  std::vector<Candidate> list;
  list.reserve(beam + 1);
  std::vector<bool> visited(ids_.size(), false);

  list.push_back({fast_dot(query.data(), row(entry_).data(), dim_), entry_, false});
  visited[entry_] = true;

  while (true) {
    auto next = std::find_if(list.begin(), list.end(),
                             [](const Candidate& c) { return !c.expanded; });
    if (next == list.end()) break;
    next->expanded = true;
    Slot current = next->slot;
    if (expanded) expanded->push_back(current);

    for (Slot nbr : adjacency_[current]) {
      if (visited[nbr]) continue;
      visited[nbr] = true;
      Candidate cand{fast_dot(query.data(), row(nbr).data(), dim_), nbr, false};
      if (list.size() >= beam && !better(cand, list.back())) continue;
      list.insert(std::upper_bound(list.begin(), list.end(), cand, better), cand);
      if (list.size() > beam) list.pop_back();
    }
  }

  std::vector<std::pair<double, Slot>> out;
  out.reserve(list.size());
  for (const auto& c : list) out.emplace_back(c.score, c.slot);
  return out;
}

std::vector<GraphIndex::Slot> GraphIndex::robust_prune(
    Slot p, std::vector<Slot> candidates) const {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  std::erase(candidates, p);

  std::vector<std::pair<double, Slot>> pool;
  pool.reserve(candidates.size());
  for (Slot c : candidates) pool.emplace_back(distance(p, c), c);
  std::sort(pool.begin(), pool.end(), [this](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return ids_[a.second] < ids_[b.second];
  });

  std::vector<Slot> kept;
  kept.reserve(params_.max_degree);
  std::vector<bool> removed(pool.size(), false);
  for (std::size_t i = 0; i < pool.size() && kept.size() < params_.max_degree; ++i) {
    if (removed[i]) continue;
    Slot chosen = pool[i].second;
    kept.push_back(chosen);
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      if (removed[j]) continue;
      if (params_.alpha * distance(chosen, pool[j].second) <= pool[j].first) {
        removed[j] = true;
      }
    }
  }
  return kept;
}

void GraphIndex::insert(RecordId id, const Embedding& vec) {
  if (vec.dim() != dim_) {
    throw Error(Errc::kDimensionMismatch,
                "vector dim " + std::to_string(vec.dim()) + ", index dim " +
                    std::to_string(dim_));
  }
  if (slot_of_.contains(id)) {
    throw Error(Errc::kDuplicateId, "id " + std::to_string(id) + " already indexed");
  }
  auto slot = static_cast<Slot>(ids_.size());
  ids_.push_back(id);
  data_.insert(data_.end(), vec.values().begin(), vec.values().end());
  adjacency_.emplace_back();
  slot_of_.emplace(id, slot);

  if (slot == 0) {
    entry_ = slot;
    return;
  }

  std::vector<Slot> expanded;
  auto beam = beam_search(row(slot), params_.build_beam, &expanded);
  std::vector<Slot> candidates = std::move(expanded);
  for (const auto& [score, s] : beam) candidates.push_back(s);
  std::erase(candidates, slot);

  adjacency_[slot] = robust_prune(slot, std::move(candidates));

  for (Slot nbr : adjacency_[slot]) {
    auto& back = adjacency_[nbr];
    if (std::find(back.begin(), back.end(), slot) != back.end()) continue;
    back.push_back(slot);
    if (back.size() > params_.max_degree) {
      adjacency_[nbr] = robust_prune(nbr, back);
    }
  }
}

std::vector<SearchHit> GraphIndex::search(const Embedding& query,
                                          std::size_t k) const {
  if (query.dim() != dim_) {
    throw Error(Errc::kDimensionMismatch,
                "query dim " + std::to_string(query.dim()) + ", index dim " +
                    std::to_string(dim_));
  }
  if (empty()) throw Error(Errc::kEmptyIndex, "search on an empty index");
  if (k == 0) throw Error(Errc::kInvalidArgument, "k must be >= 1");

  auto beam = beam_search(query.values(),
                          std::max<std::size_t>(params_.search_beam, k), nullptr);
  std::vector<SearchHit> hits;
  hits.reserve(beam.size());
  for (const auto& [approx, s] : beam) {
    hits.push_back({ids_[s], dot(query.values(), row(s))});
  }
  std::sort(hits.begin(), hits.end(), hit_order);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

std::vector<SearchHit> GraphIndex::exact_search(const Embedding& query,
                                                std::size_t k) const {
  if (query.dim() != dim_) {
    throw Error(Errc::kDimensionMismatch, "query dim differs from index dim");
  }
  if (k == 0) throw Error(Errc::kInvalidArgument, "k must be >= 1");
  std::vector<SearchHit> all;
  all.reserve(ids_.size());
  for (Slot s = 0; s < ids_.size(); ++s) {
    all.push_back({ids_[s], dot(query.values(), row(s))});
  }
  auto n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n),
                    all.end(), hit_order);
  all.resize(n);
  return all;
}

RecordId GraphIndex::entry_point() const {
  if (empty()) throw Error(Errc::kEmptyIndex, "empty index has no entry point");
  return ids_[entry_];
}

std::vector<RecordId> GraphIndex::neighbors(RecordId id) const {
  auto it = slot_of_.find(id);
  if (it == slot_of_.end()) {
    throw Error(Errc::kInvalidArgument, "unknown id " + std::to_string(id));
  }
  std::vector<RecordId> out;
  for (Slot s : adjacency_[it->second]) out.push_back(ids_[s]);
  return out;
}

std::span<const float> GraphIndex::vector(RecordId id) const {
  auto it = slot_of_.find(id);
  if (it == slot_of_.end()) {
    throw Error(Errc::kInvalidArgument, "unknown id " + std::to_string(id));
  }
  return row(it->second);
}

void GraphIndex::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u64(ids_.size());
  w.u64(empty() ? 0 : ids_[entry_]);
  w.u32(params_.max_degree);
  w.u32(params_.build_beam);
  w.u32(static_cast<std::uint32_t>(std::lround(params_.alpha * 1000.0)));
  w.u32(params_.search_beam);
  for (Slot s = 0; s < ids_.size(); ++s) {
    w.u64(ids_[s]);
    for (float v : row(s)) w.f32(v);
    w.u16(static_cast<std::uint16_t>(adjacency_[s].size()));
    for (Slot n : adjacency_[s]) w.u64(ids_[n]);
  }
  std::uint32_t crc = crc_of(w.bytes());
  w.u32(crc);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIoFailure, "cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    out.flush();
    if (!out) throw Error(Errc::kIoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::kIoFailure, "rename to " + path.string() + ": " + ec.message());
}

GraphIndex GraphIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoFailure, "cannot open " + path.string());
  std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw Error(Errc::kIoFailure, "read error on " + path.string());

  if (bytes.size() < kHeaderBytes + 4) {
    throw Error(Errc::kCorruptFile, "index file is truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(Errc::kCorruptFile, "bad magic in " + path.string());
  }
  std::string_view payload(bytes.data(), bytes.size() - 4);
  ByteReader trailer(std::string_view(bytes).substr(bytes.size() - 4));
  if (trailer.u32() != crc_of(payload)) {
    throw Error(Errc::kCorruptFile, "checksum mismatch in " + path.string());
  }

  ByteReader r(payload);
  r.take(4);
  if (auto version = r.u32(); version != kFormatVersion) {
    throw Error(Errc::kCorruptFile, "unsupported index version " + std::to_string(version));
  }
  std::size_t dim = r.u32();
  std::uint64_t count = r.u64();
  RecordId entry = r.u64();
  IndexParams params;
  params.max_degree = r.u32();
  params.build_beam = r.u32();
  params.alpha = r.u32() / 1000.0;
  params.search_beam = r.u32();

  GraphIndex index = [&] {
    try {
      return GraphIndex(dim, params);
    } catch (const Error& e) {
      throw Error(Errc::kCorruptFile, std::string("bad header: ") + e.what());
    }
  }();

  std::vector<std::vector<RecordId>> raw_adjacency;
  raw_adjacency.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    RecordId id = r.u64();
    if (!index.slot_of_.emplace(id, static_cast<Slot>(index.ids_.size())).second) {
      throw Error(Errc::kCorruptFile, "duplicate id in index file");
    }
    index.ids_.push_back(id);
    for (std::size_t i = 0; i < dim; ++i) index.data_.push_back(r.f32());
    std::uint16_t degree = r.u16();
    auto& nbrs = raw_adjacency.emplace_back();
    for (std::uint16_t i = 0; i < degree; ++i) nbrs.push_back(r.u64());
  }
  if (!r.done()) throw Error(Errc::kCorruptFile, "trailing bytes in index file");

  index.adjacency_.resize(count);
  for (std::size_t s = 0; s < count; ++s) {
    for (RecordId nbr : raw_adjacency[s]) {
      auto it = index.slot_of_.find(nbr);
      if (it == index.slot_of_.end() || it->second == s) {
        throw Error(Errc::kCorruptFile, "dangling or self neighbor in index file");
      }
      index.adjacency_[s].push_back(it->second);
    }
  }
  if (count > 0) {
    auto it = index.slot_of_.find(entry);
    if (it == index.slot_of_.end()) {
      throw Error(Errc::kCorruptFile, "entry point not among nodes");
    }
    index.entry_ = it->second;
  }
  return index;
}

bool operator==(const GraphIndex& a, const GraphIndex& b) {
  if (a.dim_ != b.dim_ || !(a.params_ == b.params_) || a.ids_ != b.ids_) return false;
  if (a.data_.size() != b.data_.size() ||
      std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) != 0) {
    return false;
  }
  if (a.adjacency_ != b.adjacency_) return false;
  return a.empty() || a.entry_ == b.entry_;
}

std::vector<SearchHit> brute_force(
    std::span<const std::pair<RecordId, Embedding>> vectors,
    const Embedding& query, std::size_t k) {
  if (k == 0) throw Error(Errc::kInvalidArgument, "k must be >= 1");
  std::vector<SearchHit> all;
  all.reserve(vectors.size());
  for (const auto& [id, vec] : vectors) all.push_back({id, similarity(query, vec)});
  auto n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n),
                    all.end(), hit_order);
  all.resize(n);
  return all;
}

}  // namespace storinfer
