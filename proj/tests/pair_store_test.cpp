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

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "storinfer/error.hpp"
#include "support.hpp"

namespace storinfer {
namespace {

using testing::random_unit;
using testing::TempDir;

StoreMeta meta_for(std::size_t dim) {
  StoreMeta m;
  m.dim = dim;
  m.embedder.dim = dim;
  return m;
}

PairRecord rec(RecordId id, std::string q = "q", std::string r = "r") {
  return {id, std::move(q), std::move(r), "chunk-0", 0.7};
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kInvalidArgument;
}

TEST(PairStore, PutGet) {
  TempDir dir;
  auto store = PairStore::open(dir.path(), meta_for(8));
  PairRecord r{5, "what is \"x\"?\nline two", "ünïcode answer", "c1", 0.8};
  store.put(r);
  EXPECT_EQ(store.get(5), r);
  EXPECT_FALSE(store.get(6).has_value());
}

TEST(PairStore, DuplicateId) {
  TempDir dir;
  auto store = PairStore::open(dir.path(), meta_for(8));
  store.put(rec(1));
  EXPECT_EQ(code_of([&] { store.put(rec(1)); }), Errc::kDuplicateId);
}

TEST(PairStore, TenThousandPuts) {
  TempDir dir;
  auto store = PairStore::open(dir.path(), meta_for(8));
  for (RecordId i = 0; i < 10000; ++i) store.put(rec(i, "query " + std::to_string(i)));
  store.flush();
  EXPECT_EQ(stats(store, dir / "pairs.index").pair_count, 10000u);
}

TEST(PairStore, ReopenKeepsRecordsAndCounter) {
  TempDir dir;
  {
    auto store = PairStore::open(dir.path(), meta_for(8));
    store.put(rec(store.allocate_id(), "a"));
    store.put(rec(store.allocate_id(), "b"));
    store.mark_chunk_completed("c9");
    store.flush();
  }
  auto store = PairStore::open(dir.path(), StoreMeta{});
  EXPECT_EQ(store.size(), 2u);
  EXPECT_EQ(store.get(1)->query, "b");
  EXPECT_EQ(store.allocate_id(), 2u);
  EXPECT_TRUE(store.chunk_completed("c9"));
  EXPECT_EQ(store.meta().dim, 8u);
}

TEST(PairStore, DimensionMismatchOnReopen) {
  TempDir dir;
  { PairStore::open(dir.path(), meta_for(8)).flush(); }
  EXPECT_EQ(code_of([&] { PairStore::open(dir.path(), meta_for(16)); }), Errc::kDimensionMismatch);
}

TEST(PairStore, EmptyStoreHoldsHeaderOnly) {
  TempDir dir;
  auto store = PairStore::open(dir.path(), meta_for(8));
  auto st = stats(store, dir / "pairs.index");
  EXPECT_EQ(st.pair_count, 0u);
  EXPECT_EQ(st.metadata_bytes, PairStore::header_line().size());
  EXPECT_EQ(st.index_bytes, 0u);
}

TEST(PairStore, AppendOnlyAndMonotoneBytes) {
  TempDir dir;
  auto store = PairStore::open(dir.path(), meta_for(8));
  std::uint64_t last = store.metadata_bytes();
  std::string prefix;
  for (RecordId i = 0; i < 20; ++i) {
    store.put(rec(i, "query " + std::to_string(i)));
    store.flush();
    auto now = store.metadata_bytes();
    EXPECT_GT(now, last);
    last = now;

    std::ifstream in(dir / "pairs.jsonl");
    std::string contents{std::istreambuf_iterator<char>(in), {}};
    EXPECT_EQ(contents.compare(0, prefix.size(), prefix), 0);
    prefix = contents;
  }
}

TEST(PairStore, EncodedLineShape) {
  auto line = PairStore::encode({3, "q", "r", "c", 0.5});
  EXPECT_EQ(line, "{\"id\":3,\"chunk_id\":\"c\",\"query\":\"q\",\"response\":\"r\",\"temp\":0.5}\n");
  EXPECT_EQ(PairStore::decode(line), (PairRecord{3, "q", "r", "c", 0.5}));
  EXPECT_EQ(code_of([] { PairStore::decode("{\"id\":1}"); }), Errc::kFileFormat);
}

TEST(Artifacts, IndexBytesLowerBound) {
  TempDir dir;
  auto art = Artifacts::open(dir.path(), meta_for(384));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) art->add(rec(0, "q" + std::to_string(i)), random_unit(384, rng));
  art->flush();
  auto st = art->stats();
  EXPECT_EQ(st.pair_count, 1000u);
  EXPECT_GE(st.index_bytes, 1000u * 384u * 4u);
  EXPECT_TRUE(art->audit().empty());
}

TEST(Artifacts, ReloadRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(2);
  std::vector<Embedding> vecs;
  {
    auto art = Artifacts::open(dir.path(), meta_for(32));
    for (int i = 0; i < 50; ++i) {
      vecs.push_back(random_unit(32, rng));
      art->add(rec(0, "q" + std::to_string(i), "r" + std::to_string(i)), vecs.back());
    }
    art->flush();
  }
  auto art = Artifacts::load(dir.path());
  EXPECT_EQ(art->size(), 50u);
  EXPECT_TRUE(art->audit().empty());
  for (int i = 0; i < 50; ++i) {
    auto hits = art->search(vecs[i], 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(art->get(hits[0].id)->response, "r" + std::to_string(i));
  }
}

TEST(Artifacts, AuditFindsUnindexedRecord) {
  TempDir dir;
  auto art = Artifacts::open(dir.path(), meta_for(8));
  std::mt19937_64 rng(3);
  art->add(rec(0), random_unit(8, rng));
  art->with_exclusive([](PairStore& store, GraphIndex&) { store.put(rec(store.allocate_id())); });
  EXPECT_EQ(art->audit().size(), 1u);
}

TEST(Artifacts, LoadMissingStore) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { Artifacts::load(dir / "nothing"); }), Errc::kArtifactLoadFailure);
}

TEST(Artifacts, EmptyIndexSearchIsEmpty) {
  TempDir dir;
  auto art = Artifacts::open(dir.path(), meta_for(8));
  std::mt19937_64 rng(4);
  EXPECT_TRUE(art->search(random_unit(8, rng), 1).empty());
}

}  // namespace
}  // namespace storinfer
