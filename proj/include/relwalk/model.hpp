#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "relwalk/kgdata.hpp"
#include "relwalk/rng.hpp"

namespace relwalk {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A relation is the ordered pair (R1, R2): R1 acts on the head argument,
/// R2 on the tail argument. Orthogonality is encouraged, not enforced.
struct RelationEmbedding {
  Matrix r1;
  Matrix r2;
};

enum class Slot { head, tail };

/// Entity vectors (n x d, one row per entity) plus one RelationEmbedding per
/// relation. Shapes are fixed at construction.
class Model {
 public:
  Model() = default;
  /// Zero entities and identity relation matrices.
  Model(std::size_t num_entities, std::size_t num_relations, std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t num_entities() const { return static_cast<std::size_t>(entities_.rows()); }
  std::size_t num_relations() const { return relations_.size(); }

  Matrix& entities() { return entities_; }
  const Matrix& entities() const { return entities_; }

  std::span<const double> entity(EntityId id) const { return {entities_.data() + id * dim_, dim_}; }
  std::span<double> entity(EntityId id) { return {entities_.data() + id * dim_, dim_}; }

  RelationEmbedding& relation(RelationId id) { return relations_[id]; }
  const RelationEmbedding& relation(RelationId id) const { return relations_[id]; }
  std::vector<RelationEmbedding>& relations() { return relations_; }
  const std::vector<RelationEmbedding>& relations() const { return relations_; }

  const Matrix& transform(RelationId id, Slot slot) const {
    return slot == Slot::head ? relations_[id].r1 : relations_[id].r2;
  }

  bool all_finite() const;
  void check_triple(const Triple& t) const;

  friend bool operator==(const Model& a, const Model& b);

 private:
  std::size_t dim_ = 0;
  Matrix entities_;
  std::vector<RelationEmbedding> relations_;
};

/// out = R^T v, with a fixed accumulation order shared by every scoring path.
void transform_transposed(const Matrix& r, std::span<const double> v, std::span<double> out);

/// ||a + b||^2 with a fixed accumulation order.
double squared_norm_of_sum(std::span<const double> a, std::span<const double> b);

/// ||R1^T h + R2^T t||^2. Larger means more plausible.
double score(const Model& model, const Triple& triple);

/// Theorem-form log p(h, t | R) = score / (2d) - 2 log Z.
double log_probability(const Model& model, const Triple& triple, double log_z);
double log_probability_from_score(double score, std::size_t dim, double log_z);

struct PartitionValue {
  double log_z = 0.0;
  double z = 0.0;  // exp(log_z); may be +inf when the linear value overflows
};

/// sum_{v in subset} exp(v^T R c), R = R1 for the head slot, R2 for the tail
/// slot. Uses a subtract-max accumulation. `c` must be unit norm (1e-9).
PartitionValue partition_function(const Model& model, RelationId relation, Slot slot, std::span<const double> c,
                                  std::span<const EntityId> subset);
/// Same, over every entity.
PartitionValue partition_function(const Model& model, RelationId relation, Slot slot, std::span<const double> c);

/// Uniformly (Haar) distributed orthogonal d x d matrix.
Matrix random_orthogonal(std::size_t dim, Rng& rng);

/// Entities ~ N(0, 1/d) component-wise; every R1, R2 a random orthogonal matrix.
Model init_model(std::size_t num_entities, std::size_t num_relations, std::size_t dim, Rng& rng);

// ---------------------------------------------------------------------------
// Serialization

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kModelFormatDense = 1;
inline constexpr std::uint32_t kModelFormatCompressed = 2;

/// Rank-K factors of R - I: R ~ I + sum_k values[k] * left.row(k)^T * right.row(k).
struct FactorBlock {
  Vector values;  // length K
  Matrix left;    // K x d
  Matrix right;   // K x d
};

struct CompressedRelation {
  FactorBlock r1;
  FactorBlock r2;
};

enum class FactorMode : std::uint8_t { svd = 0, symmetric_eigen = 1 };

struct CompressedModel {
  std::size_t rank = 0;
  FactorMode mode = FactorMode::svd;
  std::vector<CompressedRelation> relations;
};

/// I + sum_k s_k u_k v_k^T.
Matrix reconstruct(const FactorBlock& block, std::size_t dim);

struct LoadedModel {
  Model model;
  Vocabulary vocab;
  std::uint32_t version = kModelFormatDense;
  std::optional<CompressedModel> compressed;
};

/// Binary layout (little-endian): "RELWALK\0", u32 version, u64 n, m, d,
/// [v2: u64 K, u8 mode], entity rows, then per relation R1 and R2 row-major
/// (v1) or their factor blocks (v2), then a u8 vocabulary flag followed by
/// u32-length-prefixed UTF-8 names (n entities, m relations).
void save_model(std::ostream& out, const Model& model, const Vocabulary& vocab);
void save_compressed_model(std::ostream& out, const Model& model, const CompressedModel& compressed,
                           const Vocabulary& vocab);
LoadedModel load_model(std::istream& in);

/// File variants. `sidecar` (if non-null) is written to `<path>.json`
/// together with the dimensions.
void save_model(const std::filesystem::path& path, const Model& model, const Vocabulary& vocab,
                const nlohmann::json* sidecar = nullptr);
void save_compressed_model(const std::filesystem::path& path, const Model& model, const CompressedModel& compressed,
                           const Vocabulary& vocab, const nlohmann::json* sidecar = nullptr);
LoadedModel load_model(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& model_path);

}  // namespace relwalk
