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

#include "storinfer/embedding.hpp"

#include <httplib.h>

#include <cctype>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "http_util.hpp"
#include "storinfer/error.hpp"

namespace storinfer {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform in (0, 1], never zero so log() is finite.
double unit_open(std::uint64_t& state) noexcept {
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

template <typename T>
std::vector<float> normalize_impl(std::span<const T> raw) {
  double sq = 0.0;
  for (T v : raw) sq += static_cast<double>(v) * static_cast<double>(v);
  double norm = std::sqrt(sq);
  if (!(norm > 1e-12)) {
    throw Error(Errc::kZeroVector, "cannot normalize a zero-length vector");
  }
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(raw[i]) / norm);
  }
  return out;
}

void require_text(std::string_view text) {
  if (detail::trim(text).empty()) {
    throw Error(Errc::kEmptyText, "text is empty after trimming");
  }
}

}  // namespace

Embedding normalize(std::span<const double> raw) {
  return Embedding(normalize_impl(raw));
}

Embedding normalize(std::span<const float> raw) {
  return Embedding(normalize_impl(raw));
}

double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(Errc::kDimensionMismatch,
                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  return dot(a.values(), b.values());
}

void EmbedderConfig::validate() const {
  if (dim < 2) throw Error(Errc::kInvalidArgument, "embedding dim must be >= 2");
  bool remote = backend == EmbedderBackend::kRemote;
  if (remote != endpoint.has_value()) {
    throw Error(Errc::kInvalidArgument,
                "endpoint must be set exactly when the backend is remote");
  }
  if (collapse_jitter < 0.0) {
    throw Error(Errc::kInvalidArgument, "collapse_jitter must be >= 0");
  }
}

std::string canonical_form(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x100000001b3ULL);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

DeterministicEmbedder::DeterministicEmbedder(std::size_t dim,
                                             std::uint64_t seed,
                                             bool semantic_collapse,
                                             double collapse_jitter)
    : dim_(dim), seed_(seed), collapse_(semantic_collapse),
      jitter_(collapse_jitter) {
  if (dim_ < 2) throw Error(Errc::kInvalidArgument, "embedding dim must be >= 2");
}

std::vector<double> DeterministicEmbedder::gaussian(std::uint64_t key) const {
  std::uint64_t state = key ^ (seed_ + 0x51ED270B27ULL);
  std::vector<double> out(dim_);
  // Box-Muller, two normals per draw.
  for (std::size_t i = 0; i < dim_; i += 2) {
    double r = std::sqrt(-2.0 * std::log(unit_open(state)));
    double theta = 2.0 * std::numbers::pi * unit_open(state);
    out[i] = r * std::cos(theta);
    if (i + 1 < dim_) out[i + 1] = r * std::sin(theta);
  }
  return out;
}

Embedding DeterministicEmbedder::embed(std::string_view text) const {
  require_text(text);
  if (!collapse_) {
    auto v = gaussian(fnv1a64(text, seed_));
    return normalize(std::span<const double>(v));
  }
  auto v = gaussian(fnv1a64(canonical_form(text), seed_));
  if (jitter_ > 0.0) {
    auto noise = gaussian(fnv1a64(text, seed_ ^ 0xA5A5A5A5A5A5A5A5ULL));
    for (std::size_t i = 0; i < dim_; ++i) v[i] += jitter_ * noise[i];
  }
  return normalize(std::span<const double>(v));
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::size_t dim,
                               std::chrono::milliseconds timeout)
    : dim_(dim), timeout_(timeout) {
  auto parts = detail::split_url(endpoint);
  origin_ = std::move(parts.origin);
  path_ = parts.path + "/embed";
}

Embedding RemoteEmbedder::embed(std::string_view text) const {
  require_text(text);
  httplib::Client client(origin_);
  auto secs = timeout_.count() / 1000;
  auto usecs = (timeout_.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  nlohmann::json body = {{"input", std::string(text)}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::kRemoteUnavailable,
                "embedding request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::kRemoteUnavailable,
                "embedding endpoint returned HTTP " + std::to_string(res->status));
  }
  std::vector<double> raw;
  try {
    auto parsed = nlohmann::json::parse(res->body);
    raw = parsed.at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kRemoteUnavailable,
                std::string("malformed embedding response: ") + e.what());
  }
  if (raw.size() != dim_) {
    throw Error(Errc::kDimensionMismatch,
                "endpoint returned " + std::to_string(raw.size()) +
                    " values, expected " + std::to_string(dim_));
  }
  return normalize(std::span<const double>(raw));
}

MappedEmbedder::MappedEmbedder(std::shared_ptr<const Embedder> fallback)
    : fallback_(std::move(fallback)) {}

void MappedEmbedder::set(std::string text, Embedding vec) {
  if (vec.dim() != fallback_->dim()) {
    throw Error(Errc::kDimensionMismatch, "mapped vector dim differs");
  }
  table_.insert_or_assign(std::move(text), std::move(vec));
}

Embedding MappedEmbedder::embed(std::string_view text) const {
  require_text(text);
  if (auto it = table_.find(std::string(text)); it != table_.end()) {
    return it->second;
  }
  return fallback_->embed(text);
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg) {
  cfg.validate();
  if (cfg.backend == EmbedderBackend::kRemote) {
    return std::make_unique<RemoteEmbedder>(*cfg.endpoint, cfg.dim, cfg.timeout);
  }
  return std::make_unique<DeterministicEmbedder>(
      cfg.dim, cfg.seed, cfg.semantic_collapse, cfg.collapse_jitter);
}

Embedding embed(std::string_view text, const EmbedderConfig& cfg) {
  return make_embedder(cfg)->embed(text);
}

}  // namespace storinfer
