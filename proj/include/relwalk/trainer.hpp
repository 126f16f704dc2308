#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "relwalk/kgdata.hpp"
#include "relwalk/model.hpp"
#include "relwalk/rng.hpp"

namespace relwalk {

enum class LossMode { single_negative, multi_negative_max };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& s);

struct Hyperparams {
  double margin = 1.0;  // gamma; stands in for 2d log(eta)
  double learning_rate = 0.01;
  double lambda1 = 10.0;
  double lambda2 = 10.0;
  std::size_t negatives = 100;
  std::size_t dim = 100;
  std::size_t max_epochs = 1000;
  std::size_t batches_per_epoch = 100;
  std::size_t eval_every = 20;
  std::size_t patience = 5;  // evaluation rounds without improvement
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::multi_negative_max;

  /// Every violated constraint, empty when valid.
  std::vector<std::string> validate() const;
};

nlohmann::json to_json(const Hyperparams& h);

/// max(0, gamma + neg - pos).
double margin_loss_single(double pos_score, double neg_score, double margin);
/// Hinge against the highest-scoring negative.
double margin_loss_multi(double pos_score, std::span<const double> neg_scores, double margin);
/// lambda1 ||R1^T R1 - I||_F^2 + lambda2 ||R2^T R2 - I||_F^2.
double orthogonality_penalty(const RelationEmbedding& rel, double lambda1, double lambda2);

struct RelationGradient {
  Matrix r1;
  Matrix r2;
};

/// Gradient restricted to the rows and relations an example touches.
struct SparseGradient {
  std::map<EntityId, Vector> entities;
  std::map<RelationId, RelationGradient> relations;

  void add_entity(EntityId id, const Vector& g, double scale = 1.0);
  RelationGradient& relation(RelationId id, std::size_t dim);
  void merge(const SparseGradient& other, double scale = 1.0);
};

/// Per-example objective value: hinge part (summed over negatives in
/// single-negative mode, hardest negative in multi mode) plus the penalty
/// of the example's relation when `with_penalty` is set.
double example_loss(const Model& model, const Triple& pos, std::span<const Triple> negs, const Hyperparams& hyper,
                    bool with_penalty = true);

/// Analytic gradient of example_loss. Hinge ties at exactly zero give a zero
/// subgradient.
SparseGradient gradients(const Model& model, const Triple& pos, std::span<const Triple> negs, const Hyperparams& hyper,
                         bool with_penalty = true);

/// Adds 4 lambda R (R^T R - I) for both matrices of `relation` to `grad`.
void add_penalty_gradient(const Model& model, RelationId relation, double lambda1, double lambda2,
                          SparseGradient& grad);

/// theta <- theta - step * grad.
void apply_gradient(Model& model, const SparseGradient& grad, double step);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
      : std::runtime_error("non-finite parameters at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;     // mean hinge loss per positive
  double mean_penalty = 0.0;  // mean orthogonality penalty over relations at epoch end
  std::optional<double> validation_mrr;
};

struct TrainState {
  Model model;
  Model best_model;
  double best_metric = -1.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;
};

struct TrainOptions {
  unsigned threads = 1;
  /// Called after every epoch (after validation, when it ran).
  std::function<void(const EpochRecord&, const Model&)> on_epoch;
};

/// One SGD step on a batch: the mean of per-example hinge gradients plus one
/// penalty gradient per relation touched by the batch. Returns the summed
/// hinge loss of the batch. Negatives are drawn from `rng` in example order.
double train_batch(Model& model, std::span<const Triple> batch, const Hyperparams& hyper, Rng& rng,
                   unsigned threads = 1);

/// Shuffled mini-batch SGD with validation MRR every `eval_every` epochs,
/// best-snapshot retention and patience-based early stopping.
TrainState train(const Dataset& dataset, const Hyperparams& hyper, const TrainOptions& options = {});
/// Same, from a given starting model.
TrainState train(const Dataset& dataset, Model initial, const Hyperparams& hyper, const TrainOptions& options = {});

/// Training log: `epoch, mean_loss, mean_penalty, valid_MRR` (blank when not evaluated).
void write_training_log(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace relwalk
