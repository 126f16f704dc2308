#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "relwalk/model.hpp"
#include "relwalk/rng.hpp"

namespace relwalk {

struct WorldConfig {
  std::size_t num_entities = 2000;
  std::size_t num_relations = 5;
  std::size_t dim = 10;
  double kappa = 2.0;         // entity norms are uniform on [0, kappa]
  double step_bound = 0.05;   // max ||c_{k+1} - c_k||
  std::size_t walk_length = 1000;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const WorldConfig& c);

/// A triple emitted by the walk: head under knowledge vector c_step, tail
/// under c_{step+1}.
struct EmittedTriple {
  Triple triple;
  std::size_t step = 0;
};

/// Ground-truth model drawn from the norm-bounded isotropic prior with
/// exactly orthogonal relation matrices, the walk and what it emitted.
struct SyntheticWorld {
  WorldConfig config;
  Model model;
  Matrix walk;  // walk_length x d, one knowledge vector per row
  std::vector<EmittedTriple> emitted;
};

SyntheticWorld make_world(const WorldConfig& config);

/// Entities v = s * v_hat with s ~ U[0, kappa] and v_hat uniform on the sphere.
Matrix sample_prior_entities(std::size_t num_entities, std::size_t dim, double kappa, Rng& rng);

/// One slow-walk step from unit vector `c`: an isotropic perturbation of
/// scale step_bound / sqrt(d), mapped back onto the sphere along the
/// geodesic, with the chord length capped below step_bound.
Vector walk_step(std::span<const double> c, double step_bound, Rng& rng);

/// c_0 uniform on the sphere followed by steps - 1 walk steps.
Matrix sample_walk(std::size_t dim, std::size_t steps, double step_bound, Rng& rng);

/// Draws an entity from the exact softmax exp(v^T R c) / Z_c (R = R1 for the
/// head slot, R2 for the tail slot) over all entities.
EntityId emit_entity(const Model& world, RelationId relation, Slot slot, std::span<const double> c, Rng& rng);

/// Exact emission probabilities (the softmax emit_entity samples from).
std::vector<double> emission_probabilities(const Model& world, RelationId relation, Slot slot,
                                           std::span<const double> c);

struct JointEstimate {
  double log_p = 0.0;
  double std_err = 0.0;  // standard error of log_p (delta method)
  std::size_t samples = 0;
};

/// Monte Carlo log p(h, t | R): mean over (c, c') pairs, c uniform on the
/// sphere and c' one walk step from c, of p(h | R, c) p(t | R, c') with exact
/// partition sums. Accumulates in log space.
JointEstimate estimate_joint(const Model& world, const Triple& triple, std::size_t n_mc, double step_bound, Rng& rng);

struct TheoremCheck {
  std::vector<Triple> triples;
  std::vector<double> log_p_hat;
  std::vector<double> rhs;  // score / (2d) - 2 log Z
  std::vector<double> std_err;
  std::vector<double> log_z;  // per relation: mean of sampled log Z_c and log Z_c'
  std::size_t n_mc = 0;
  std::optional<double> pearson;
  double slope = 0.0;
  double intercept = 0.0;
  double max_abs_deviation = 0.0;  // max |log p_hat - rhs|
  bool degenerate = false;
};

/// Samples `n_triples` uniform (h, R, t) combinations and compares the Monte
/// Carlo estimate with the theorem's right-hand side. Per relation, one set
/// of n_mc (c, c') draws is shared by all its triples.
TheoremCheck check_theorem(const SyntheticWorld& world, std::size_t n_triples, std::size_t n_mc, std::uint64_t seed,
                           unsigned threads = 1);

nlohmann::json to_json(const TheoremCheck& c);
void write_theorem_scatter_tsv(const std::filesystem::path& path, const TheoremCheck& c);

struct SlotConcentration {
  double mean_z = 0.0;
  double cv = 0.0;
  std::vector<std::pair<double, double>> within;  // (eps, fraction of samples in (1 +- eps) mean)
};

struct RelationConcentration {
  RelationId relation = 0;
  SlotConcentration head;
  SlotConcentration tail;
};

struct ConcentrationCheck {
  std::size_t num_c = 0;
  std::vector<RelationConcentration> relations;
  double max_cv = 0.0;
  double min_within_5pct = 1.0;
};

/// Exact Z_c over the whole vocabulary for `num_c` uniform unit vectors, per
/// relation and slot.
ConcentrationCheck check_concentration(const Model& world, std::size_t num_c, std::uint64_t seed,
                                       unsigned threads = 1);

nlohmann::json to_json(const ConcentrationCheck& c);

}  // namespace relwalk
