#pragma once

// Hand-rolled generators for property tests.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "alignreid/array.hpp"

namespace testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {  // inclusive
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline areid::Array random_array(Rng& rng, areid::Shape shape, double lo = -1.0, double hi = 1.0) {
  areid::Array a(std::move(shape));
  for (auto& v : a.values()) v = uniform(rng, lo, hi);
  return a;
}

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Runs `property` on `cases` seeded generators; the failing seed is reported.
inline void for_all(std::uint64_t seed, int cases, const std::function<void(Rng&)>& property) {
  for (int c = 0; c < cases; ++c) {
    Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(c));
    INFO("case " << c << " of seed " << seed);
    property(rng);
  }
}

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("alignreid-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
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

}  // namespace testing
