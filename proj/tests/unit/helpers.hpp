#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "relwalk/kgdata.hpp"
#include "relwalk/model.hpp"
#include "relwalk/rng.hpp"

namespace testutil {

using namespace relwalk;

/// Gaussian entities (not normalized) and arbitrary, non-orthogonal relations.
inline Model random_model(std::size_t n, std::size_t m, std::size_t d, Rng& rng, double ent_scale = 1.0,
                          double rel_noise = 0.3) {
  Model model(n, m, d);
  for (Eigen::Index i = 0; i < model.entities().size(); ++i) model.entities().data()[i] = ent_scale * rng.normal();
  for (auto& rel : model.relations()) {
    rel.r1 = random_orthogonal(d, rng);
    rel.r2 = random_orthogonal(d, rng);
    for (Eigen::Index i = 0; i < rel.r1.size(); ++i) {
      rel.r1.data()[i] += rel_noise * rng.normal();
      rel.r2.data()[i] += rel_noise * rng.normal();
    }
  }
  return model;
}

inline std::vector<Triple> random_triples(std::size_t count, std::size_t n, std::size_t m, Rng& rng) {
  std::vector<Triple> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({rng.uniform_index(n), rng.uniform_index(m), rng.uniform_index(n)});
  }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("relwalk_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
