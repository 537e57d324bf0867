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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace storinfer {

/// Unit-norm embedding vector. The only way to build one is through
/// normalize(), so every instance satisfies |v| = 1 within float rounding.
class Embedding {
 public:
  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  friend Embedding normalize(std::span<const double> raw);
  friend Embedding normalize(std::span<const float> raw);
  explicit Embedding(std::vector<float> values) : values_(std::move(values)) {}

  std::vector<float> values_;
};

// Both throw Errc::kZeroVector when the norm is below 1e-12.
Embedding normalize(std::span<const double> raw);
Embedding normalize(std::span<const float> raw);

// Inner product accumulated in double. On unit vectors this is cosine
// similarity. Throws Errc::kDimensionMismatch.
double similarity(const Embedding& a, const Embedding& b);
double dot(std::span<const float> a, std::span<const float> b) noexcept;

enum class EmbedderBackend { kRemote, kDeterministic };

struct EmbedderConfig {
  std::size_t dim = 384;
  EmbedderBackend backend = EmbedderBackend::kDeterministic;
  std::optional<std::string> endpoint;
  std::uint64_t seed = 0;
  // Deterministic backend: texts with the same canonical form (lowercase,
  // punctuation stripped, whitespace collapsed) embed to nearby vectors.
  bool semantic_collapse = false;
  // Relative size of the per-raw-text perturbation added in collapse mode.
  double collapse_jitter = 0.0;
  std::chrono::milliseconds timeout{10000};

  void validate() const;
};

class Embedder {
 public:
  virtual ~Embedder() = default;

  // Throws Errc::kEmptyText if text is blank.
  virtual Embedding embed(std::string_view text) const = 0;
  virtual std::size_t dim() const noexcept = 0;
};

class DeterministicEmbedder final : public Embedder {
 public:
  DeterministicEmbedder(std::size_t dim, std::uint64_t seed,
                        bool semantic_collapse = false,
                        double collapse_jitter = 0.0);

  Embedding embed(std::string_view text) const override;
  std::size_t dim() const noexcept override { return dim_; }

  // Seeded Gaussian direction for an arbitrary key; exposed for fixtures.
  std::vector<double> gaussian(std::uint64_t key) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  bool collapse_;
  double jitter_;
};

// Talks to POST {endpoint}/embed with {"input": text} -> {"embedding": [...]}.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(std::string endpoint, std::size_t dim,
                 std::chrono::milliseconds timeout);

  Embedding embed(std::string_view text) const override;
  std::size_t dim() const noexcept override { return dim_; }

 private:
  std::string origin_;
  std::string path_;
  std::size_t dim_;
  std::chrono::milliseconds timeout_;
};

// Explicit text -> vector table with a fallback for unknown texts. Used to
// build fixtures with a controlled similarity structure.
class MappedEmbedder final : public Embedder {
 public:
  explicit MappedEmbedder(std::shared_ptr<const Embedder> fallback);

  void set(std::string text, Embedding vec);
  Embedding embed(std::string_view text) const override;
  std::size_t dim() const noexcept override { return fallback_->dim(); }

 private:
  std::shared_ptr<const Embedder> fallback_;
  std::unordered_map<std::string, Embedding> table_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg);

// One-shot convenience over make_embedder(cfg)->embed(text).
Embedding embed(std::string_view text, const EmbedderConfig& cfg);

// Lowercase, punctuation to spaces, collapse runs of whitespace, trim.
std::string canonical_form(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) noexcept;

}  // namespace storinfer
