#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace relwalk {

/// Seeded random source. Every consumer gets its own stream; nothing global.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives an independent stream from a root seed and a stream name
  /// ("train", "init", "negatives", "diagnostics", "genwalk", ...).
  static Rng substream(std::uint64_t root_seed, std::string_view name);
  /// Derives an indexed child stream, e.g. one per relation or per worker.
  static Rng substream(std::uint64_t root_seed, std::string_view name, std::uint64_t index);

  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  /// Uniform real in [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return normal_(engine_); }
  bool coin() { return std::bernoulli_distribution(0.5)(engine_); }

  /// Fills `out` with a point drawn uniformly from the unit sphere.
  void unit_sphere(std::span<double> out);

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

}  // namespace relwalk
