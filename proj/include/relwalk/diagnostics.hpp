#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "relwalk/model.hpp"
#include "relwalk/rng.hpp"

namespace relwalk {

/// Sum of |off-diagonal| entries of R1^T R1 and R2^T R2.
double nu_r(const RelationEmbedding& rel);

enum class WhichMatrix { r1, r2 };

Matrix gram(const RelationEmbedding& rel, WhichMatrix which);

/// Partition-function spread for one relation: Z_c (head slot, R1) and
/// Z_c' (tail slot, R2) over sampled unit knowledge vectors.
struct ConcentrationRow {
  RelationId relation = 0;
  std::size_t samples = 0;
  std::size_t subset_size = 0;
  double mean_c = 0.0;
  double mean_c_prime = 0.0;
  double sigma_c = 0.0;  // sample standard deviation
  double sigma_c_prime = 0.0;
  double combined = 0.0;  // sqrt(sigma_c^2 + sigma_c'^2)
  double cv_c = 0.0;      // sigma / mean
  double cv_c_prime = 0.0;
};

/// Draws `num_c` vectors uniformly on the unit sphere and evaluates both
/// partition functions over min(subset_size, n) entities sampled without
/// replacement.
ConcentrationRow concentration_stats(const Model& model, RelationId relation, std::size_t num_c,
                                     std::size_t subset_size, Rng& rng);

struct ConcentrationConfig {
  std::size_t num_c = 1000;
  std::size_t subset_size = 10000;
  std::uint64_t seed = 0;
};

/// One row per relation, each from its own seeded substream.
std::vector<ConcentrationRow> concentration_report(const Model& model, const ConcentrationConfig& config,
                                                   unsigned threads = 1);

/// Pearson product-moment correlation; nullopt when either side has zero
/// variance. Throws for fewer than 3 pairs or mismatched lengths.
std::optional<double> correlate(std::span<const double> a, std::span<const double> b);

/// Writes the d x d Gram matrix as TSV, shortest round-trip decimals.
void dump_gram(const std::filesystem::path& path, const RelationEmbedding& rel, WhichMatrix which);
void write_matrix_tsv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_tsv(const std::filesystem::path& path);

struct DiagnosticsRow {
  RelationId relation = 0;
  double hits10 = 0.0;
  double nu = 0.0;
  ConcentrationRow concentration;
};

/// `relation, H@10, nu_R, sigma_c, sigma_c', combined, cv_c, cv_c'` plus a
/// footer of Pearson correlations of each column against H@10.
void write_diagnostics_tsv(const std::filesystem::path& path, std::span<const DiagnosticsRow> rows,
                           const Vocabulary& vocab);

}  // namespace relwalk
