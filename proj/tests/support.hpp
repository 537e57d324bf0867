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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "storinfer/embedding.hpp"
#include "storinfer/error.hpp"

namespace storinfer::testing {

// Removes itself on destruction.
class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (;;) {
      path_ = base / ("storinfer-test-" + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> gaussian_vec(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

inline Embedding random_unit(std::size_t dim, std::mt19937_64& rng) {
  return normalize(std::span<const double>(gaussian_vec(dim, rng)));
}

// Unit vector whose inner product with base is s (up to float rounding):
// s * base + sqrt(1 - s^2) * w, with w a random direction orthogonal to base.
inline Embedding at_similarity(const Embedding& base, double s, std::mt19937_64& rng) {
  auto w = gaussian_vec(base.dim(), rng);
  double proj = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) proj += w[i] * base[i];
  double norm = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] -= proj * base[i];
    norm += w[i] * w[i];
  }
  norm = std::sqrt(norm);
  double c = std::sqrt(std::max(0.0, 1.0 - s * s));
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = s * base[i] + c * w[i] / norm;
  return normalize(std::span<const double>(out));
}

// Plain double dot product, independent of the library's similarity().
inline double oracle_dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace storinfer::testing
