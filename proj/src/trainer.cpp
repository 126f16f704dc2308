#include "relwalk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relwalk/eval.hpp"
#include "relwalk/parallel.hpp"
#include "relwalk/textio.hpp"

namespace relwalk {

std::string to_string(LossMode mode) {
  return mode == LossMode::single_negative ? "single" : "multi-max";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "single" || s == "single-negative") return LossMode::single_negative;
  if (s == "multi-max" || s == "multi" || s == "multi-negative-max") return LossMode::multi_negative_max;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected single or multi-max)");
}

std::vector<std::string> Hyperparams::validate() const {
  std::vector<std::string> errs;
  if (!(margin > 0.0)) errs.push_back("margin must be > 0");
  if (!(learning_rate > 0.0)) errs.push_back("learning rate must be > 0");
  if (!(lambda1 >= 0.0)) errs.push_back("lambda1 must be >= 0");
  if (!(lambda2 >= 0.0)) errs.push_back("lambda2 must be >= 0");
  if (negatives < 1) errs.push_back("negatives must be >= 1");
  if (dim < 1) errs.push_back("dim must be >= 1");
  if (batches_per_epoch < 1) errs.push_back("batches per epoch must be >= 1");
  if (eval_every < 1) errs.push_back("eval-every must be >= 1");
  if (patience < 1) errs.push_back("patience must be >= 1");
  return errs;
}

nlohmann::json to_json(const Hyperparams& h) {
  return {{"margin", h.margin},
          {"learning_rate", h.learning_rate},
          {"lambda1", h.lambda1},
          {"lambda2", h.lambda2},
          {"negatives", h.negatives},
          {"dim", h.dim},
          {"max_epochs", h.max_epochs},
          {"batches_per_epoch", h.batches_per_epoch},
          {"eval_every", h.eval_every},
          {"patience", h.patience},
          {"seed", h.seed},
          {"loss_mode", to_string(h.loss_mode)}};
}

double margin_loss_single(double pos_score, double neg_score, double margin) {
  return std::max(0.0, margin + neg_score - pos_score);
}

double margin_loss_multi(double pos_score, std::span<const double> neg_scores, double margin) {
  if (neg_scores.empty()) throw std::invalid_argument("margin_loss_multi: no negatives");
  return margin_loss_single(pos_score, *std::max_element(neg_scores.begin(), neg_scores.end()), margin);
}

namespace {

Matrix gram_residual(const Matrix& r) {
  Matrix g = r.transpose() * r;
  g.diagonal().array() -= 1.0;
  return g;
}

}  // namespace

double orthogonality_penalty(const RelationEmbedding& rel, double lambda1, double lambda2) {
  double p = 0.0;
  if (lambda1 != 0.0) p += lambda1 * gram_residual(rel.r1).squaredNorm();
  if (lambda2 != 0.0) p += lambda2 * gram_residual(rel.r2).squaredNorm();
  return p;
}

// SparseGradient

void SparseGradient::add_entity(EntityId id, const Vector& g, double scale) {
  auto [it, inserted] = entities.try_emplace(id);
  if (inserted) {
    it->second = scale * g;
  } else {
    it->second += scale * g;
  }
}

RelationGradient& SparseGradient::relation(RelationId id, std::size_t dim) {
  auto [it, inserted] = relations.try_emplace(id);
  if (inserted) {
    const auto d = static_cast<Eigen::Index>(dim);
    it->second.r1 = Matrix::Zero(d, d);
    it->second.r2 = Matrix::Zero(d, d);
  }
  return it->second;
}

void SparseGradient::merge(const SparseGradient& other, double scale) {
  for (const auto& [id, g] : other.entities) add_entity(id, g, scale);
  for (const auto& [id, g] : other.relations) {
    auto& mine = relation(id, static_cast<std::size_t>(g.r1.rows()));
    mine.r1 += scale * g.r1;
    mine.r2 += scale * g.r2;
  }
}

namespace {

class ExampleScorer {
 public:
  ExampleScorer(const Model& model, const Triple& pos)
      : model_(model), pos_(pos), d_(model.dim()), rel_(model.relation(pos.relation)),
        head_part_(d_), tail_part_(d_), scratch_(d_), scratch_tail_(d_) {
    model.check_triple(pos);
    transform_transposed(rel_.r1, model.entity(pos.head), head_part_);
    transform_transposed(rel_.r2, model.entity(pos.tail), tail_part_);
  }

  double positive_score() const { return squared_norm_of_sum(head_part_, tail_part_); }

  double score(const Triple& t) {
    model_.check_triple(t);
    if (t.relation != pos_.relation) throw std::invalid_argument("negative must share the positive's relation");
    std::span<const double> hp = head_part_;
    std::span<const double> tp = tail_part_;
    if (t.head != pos_.head) {
      transform_transposed(rel_.r1, model_.entity(t.head), scratch_);
      hp = scratch_;
    }
    if (t.tail != pos_.tail) {
      transform_transposed(rel_.r2, model_.entity(t.tail), scratch_tail_);
      tp = scratch_tail_;
    }
    return squared_norm_of_sum(hp, tp);
  }

 private:
  const Model& model_;
  Triple pos_;
  std::size_t d_;
  const RelationEmbedding& rel_;
  std::vector<double> head_part_, tail_part_, scratch_, scratch_tail_;
};

struct HingeTerms {
  double loss = 0.0;
  double pos_weight = 0.0;                       // coefficient on -d(score_pos)
  std::vector<std::pair<std::size_t, double>> neg_weights;  // coefficient on +d(score_neg_k)
};

HingeTerms hinge_terms(const Model& model, const Triple& pos, std::span<const Triple> negs, const Hyperparams& hyper) {
  if (negs.empty()) throw std::invalid_argument("at least one negative is required");
  ExampleScorer scorer(model, pos);
  const double sp = scorer.positive_score();
  std::vector<double> sn(negs.size());
  for (std::size_t k = 0; k < negs.size(); ++k) sn[k] = scorer.score(negs[k]);
  HingeTerms terms;
  if (hyper.loss_mode == LossMode::multi_negative_max) {
    const auto kmax = static_cast<std::size_t>(std::max_element(sn.begin(), sn.end()) - sn.begin());
    terms.loss = margin_loss_single(sp, sn[kmax], hyper.margin);
    if (terms.loss > 0.0) {
      terms.pos_weight = 1.0;
      terms.neg_weights.emplace_back(kmax, 1.0);
    }
  } else {
    for (std::size_t k = 0; k < negs.size(); ++k) {
      const double l = margin_loss_single(sp, sn[k], hyper.margin);
      if (l > 0.0) {
        terms.loss += l;
        terms.pos_weight += 1.0;
        terms.neg_weights.emplace_back(k, 1.0);
      }
    }
  }
  return terms;
}

/// grad += weight * d(score(t)) where score = ||R1^T h + R2^T t||^2.
void add_score_gradient(const Model& model, const Triple& t, double weight, SparseGradient& grad) {
  const auto& rel = model.relation(t.relation);
  const std::size_t d = model.dim();
  std::vector<double> a(d), b(d);
  transform_transposed(rel.r1, model.entity(t.head), a);
  transform_transposed(rel.r2, model.entity(t.tail), b);
  Vector u(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) u[static_cast<Eigen::Index>(j)] = a[j] + b[j];
  const auto h = Eigen::Map<const Vector>(model.entity(t.head).data(), static_cast<Eigen::Index>(d));
  const auto tv = Eigen::Map<const Vector>(model.entity(t.tail).data(), static_cast<Eigen::Index>(d));
  grad.add_entity(t.head, rel.r1 * u, 2.0 * weight);
  grad.add_entity(t.tail, rel.r2 * u, 2.0 * weight);
  auto& rg = grad.relation(t.relation, d);
  rg.r1.noalias() += (2.0 * weight) * h * u.transpose();
  rg.r2.noalias() += (2.0 * weight) * tv * u.transpose();
}

void accumulate_example(const Model& model, const Triple& pos, std::span<const Triple> negs, const Hyperparams& hyper,
                        double scale, SparseGradient& grad, double* loss_out) {
  const HingeTerms terms = hinge_terms(model, pos, negs, hyper);
  if (loss_out) *loss_out = terms.loss;
  if (terms.pos_weight == 0.0) return;
  add_score_gradient(model, pos, -scale * terms.pos_weight, grad);
  for (const auto& [k, w] : terms.neg_weights) add_score_gradient(model, negs[k], scale * w, grad);
}

}  // namespace

double example_loss(const Model& model, const Triple& pos, std::span<const Triple> negs, const Hyperparams& hyper,
                    bool with_penalty) {
  double loss = hinge_terms(model, pos, negs, hyper).loss;
  if (with_penalty) loss += orthogonality_penalty(model.relation(pos.relation), hyper.lambda1, hyper.lambda2);
  return loss;
}

void add_penalty_gradient(const Model& model, RelationId relation, double lambda1, double lambda2,
                          SparseGradient& grad) {
  const auto& rel = model.relation(relation);
  auto& rg = grad.relation(relation, model.dim());
  if (lambda1 != 0.0) rg.r1.noalias() += (4.0 * lambda1) * rel.r1 * gram_residual(rel.r1);
  if (lambda2 != 0.0) rg.r2.noalias() += (4.0 * lambda2) * rel.r2 * gram_residual(rel.r2);
}

SparseGradient gradients(const Model& model, const Triple& pos, std::span<const Triple> negs, const Hyperparams& hyper,
                         bool with_penalty) {
  SparseGradient grad;
  accumulate_example(model, pos, negs, hyper, 1.0, grad, nullptr);
  if (with_penalty) add_penalty_gradient(model, pos.relation, hyper.lambda1, hyper.lambda2, grad);
  return grad;
}

void apply_gradient(Model& model, const SparseGradient& grad, double step) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  for (const auto& [id, g] : grad.entities) {
    Eigen::Map<Vector>(model.entity(id).data(), d) -= step * g;
  }
  for (const auto& [id, g] : grad.relations) {
    auto& rel = model.relation(id);
    rel.r1 -= step * g.r1;
    rel.r2 -= step * g.r2;
  }
}

namespace {

bool touched_finite(const Model& model, const SparseGradient& grad) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  for (const auto& [id, g] : grad.entities) {
    if (!Eigen::Map<const Vector>(model.entity(id).data(), d).allFinite()) return false;
  }
  for (const auto& [id, g] : grad.relations) {
    const auto& rel = model.relation(id);
    if (!rel.r1.allFinite() || !rel.r2.allFinite()) return false;
  }
  return true;
}

}  // namespace

double train_batch(Model& model, std::span<const Triple> batch, const Hyperparams& hyper, Rng& rng,
                   unsigned threads) {
  if (batch.empty()) return 0.0;
  const std::size_t k = hyper.negatives;
  std::vector<Triple> negs;
  negs.reserve(batch.size() * k);
  for (const auto& pos : batch) sample_negatives_into(pos, k, model.num_entities(), rng, negs);

  const double scale = 1.0 / static_cast<double>(batch.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(batch.size())));
  std::vector<SparseGradient> partial(workers);
  std::vector<double> losses(batch.size(), 0.0);
  const std::size_t chunk = (batch.size() + workers - 1) / workers;
  parallel_for(workers, workers, [&](std::size_t w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(batch.size(), lo + chunk);
    for (std::size_t i = lo; i < hi; ++i) {
      accumulate_example(model, batch[i], std::span<const Triple>(negs).subspan(i * k, k), hyper, scale, partial[w],
                         &losses[i]);
    }
  });
  SparseGradient grad = std::move(partial[0]);
  for (unsigned w = 1; w < workers; ++w) grad.merge(partial[w]);

  std::vector<RelationId> touched;
  for (const auto& pos : batch) touched.push_back(pos.relation);
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (RelationId r : touched) add_penalty_gradient(model, r, hyper.lambda1, hyper.lambda2, grad);

  apply_gradient(model, grad, hyper.learning_rate);
  if (!touched_finite(model, grad)) throw std::runtime_error("non-finite parameter after update");
  return std::accumulate(losses.begin(), losses.end(), 0.0);
}

TrainState train(const Dataset& dataset, const Hyperparams& hyper, const TrainOptions& options) {
  Rng init_rng = Rng::substream(hyper.seed, "init");
  return train(dataset, init_model(dataset.vocab.num_entities(), dataset.vocab.num_relations(), hyper.dim, init_rng),
               hyper, options);
}

TrainState train(const Dataset& dataset, Model initial, const Hyperparams& hyper, const TrainOptions& options) {
  if (auto errs = hyper.validate(); !errs.empty()) throw std::invalid_argument("invalid hyperparameters: " + errs.front());
  if (dataset.train.empty()) throw std::invalid_argument("train: empty training split");
  if (initial.dim() != hyper.dim) throw std::invalid_argument("train: model dimension differs from hyperparameters");

  TrainState state;
  state.model = std::move(initial);
  state.best_model = state.model;

  Rng shuffle_rng = Rng::substream(hyper.seed, "shuffle");
  Rng neg_rng = Rng::substream(hyper.seed, "negatives");
  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size = (order.size() + hyper.batches_per_epoch - 1) / hyper.batches_per_epoch;
  std::vector<Triple> batch;
  batch.reserve(batch_size);
  std::size_t stale_rounds = 0;
  bool evaluated_last = false;

  auto evaluate = [&](std::size_t epoch) {
    const double mrr = link_prediction(state.model, dataset.valid, dataset.known, options.threads).overall.mrr;
    if (mrr > state.best_metric) {
      state.best_metric = mrr;
      state.best_epoch = epoch;
      state.best_model = state.model;
      stale_rounds = 0;
    } else {
      ++stale_rounds;
    }
    return mrr;
  };

  for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double loss_sum = 0.0;
    for (std::size_t b = 0, start = 0; start < order.size(); ++b, start += batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
        batch.push_back(dataset.train[order[i]]);
      }
      try {
        loss_sum += train_batch(state.model, batch, hyper, neg_rng, options.threads);
      } catch (const std::runtime_error& e) {
        throw DivergenceError(epoch, b, e.what());
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(order.size());
    for (const auto& rel : state.model.relations()) {
      rec.mean_penalty += orthogonality_penalty(rel, hyper.lambda1, hyper.lambda2);
    }
    rec.mean_penalty /= static_cast<double>(std::max<std::size_t>(1, state.model.num_relations()));
    evaluated_last = false;
    if (!dataset.valid.empty() && epoch % hyper.eval_every == 0) {
      rec.validation_mrr = evaluate(epoch);
      evaluated_last = true;
    }
    state.history.push_back(rec);
    state.epochs_run = epoch;
    if (options.on_epoch) options.on_epoch(rec, state.model);
    if (stale_rounds >= hyper.patience) {
      state.stopped_early = true;
      break;
    }
  }

  if (dataset.valid.empty()) {
    state.best_model = state.model;
    state.best_epoch = state.epochs_run;
  } else if (!evaluated_last && state.epochs_run > 0) {
    state.history.back().validation_mrr = evaluate(state.epochs_run);
  }
  return state;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  auto out = open_for_write(path);
  out << "epoch\tmean_loss\tmean_penalty\tvalid_MRR\n";
  for (const auto& r : history) {
    out << r.epoch << '\t' << format_double(r.mean_loss) << '\t' << format_double(r.mean_penalty) << '\t'
        << (r.validation_mrr ? format_double(*r.validation_mrr) : "") << '\n';
  }
}

}  // namespace relwalk
