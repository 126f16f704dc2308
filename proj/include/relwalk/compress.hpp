#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "relwalk/eval.hpp"
#include "relwalk/model.hpp"

namespace relwalk {

/// A = U diag(values) V^T with values sorted descending, U and V orthogonal.
struct SingularDecomposition {
  Vector values;
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;
};

/// One-sided (Hestenes) Jacobi SVD of a square matrix. Column pairs are
/// rotated until |a_p . a_q| <= tol * ||a_p|| ||a_q|| for every pair.
SingularDecomposition jacobi_svd(const Matrix& a, double tol = 1e-12, std::size_t max_sweeps = 100);

/// Full factorization of R - I in the requested mode. In symmetric_eigen
/// mode the eigenpairs of (R' + R'^T) / 2 are ordered by |eigenvalue|.
FactorBlock factorize_offset(const Matrix& r, FactorMode mode);

/// Keeps the leading `rank` factors.
FactorBlock truncate(const FactorBlock& full, std::size_t rank);

/// sqrt of the sum of squares of factor values beyond `rank`.
double discarded_tail_norm(const FactorBlock& full, std::size_t rank);

/// Rank-K approximation of R1 - I and R2 - I; 1 <= K <= d.
CompressedRelation compress_relation(const RelationEmbedding& rel, std::size_t rank, FactorMode mode = FactorMode::svd);
RelationEmbedding reconstruct(const CompressedRelation& c, std::size_t dim);

/// Parameter-count ratio dK / d^2 = K / d.
double compression_ratio(std::size_t rank, std::size_t dim);

CompressedModel compress_model(const Model& model, std::size_t rank, FactorMode mode = FactorMode::svd,
                               unsigned threads = 1);
/// Copy of `model` with every relation replaced by its reconstruction.
Model decompress(const Model& model, const CompressedModel& compressed);

struct TradeoffRow {
  std::size_t rank = 0;
  double ratio = 0.0;
  RankingSummary metrics;
  double mean_frobenius_error = 0.0;  // mean over all R1, R2 of ||R - R_hat||_F
};

/// Link prediction on `split` with every relation reconstructed at each rank.
std::vector<TradeoffRow> sweep_ranks(const Model& model, std::span<const Triple> split, const KnownIndex& known,
                                     std::span<const std::size_t> ranks, FactorMode mode = FactorMode::svd,
                                     unsigned threads = 1);

/// `K, ratio, MRR, MR, H@1, H@3, H@10, mean_frobenius_error`.
void write_tradeoff_tsv(const std::filesystem::path& path, std::span<const TradeoffRow> rows);

}  // namespace relwalk
