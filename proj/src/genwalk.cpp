#include "relwalk/genwalk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relwalk/diagnostics.hpp"
#include "relwalk/parallel.hpp"
#include "relwalk/textio.hpp"

namespace relwalk {

nlohmann::json to_json(const WorldConfig& c) {
  return {{"num_entities", c.num_entities}, {"num_relations", c.num_relations}, {"dim", c.dim},
          {"kappa", c.kappa},               {"step_bound", c.step_bound},       {"walk_length", c.walk_length},
          {"seed", c.seed}};
}

Matrix sample_prior_entities(std::size_t num_entities, std::size_t dim, double kappa, Rng& rng) {
  Matrix e(static_cast<Eigen::Index>(num_entities), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < num_entities; ++i) {
    std::span<double> row(e.data() + i * dim, dim);
    rng.unit_sphere(row);
    const double s = kappa * rng.uniform();
    for (double& x : row) x *= s;
  }
  return e;
}

Vector walk_step(std::span<const double> c, double step_bound, Rng& rng) {
  if (!(step_bound > 0.0)) throw std::invalid_argument("walk_step: step bound must be > 0");
  const auto d = static_cast<Eigen::Index>(c.size());
  const Eigen::Map<const Vector> cv(c.data(), d);
  Vector g(d);
  const double scale = step_bound / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < d; ++i) g[i] = scale * rng.normal();
  const double radial = g.dot(cv);
  Vector tangent = g - radial * cv;
  const double tn = tangent.norm();
  if (tn == 0.0) return cv;
  // normalize(c + g) sits at this angle from c, in the direction of `tangent`.
  double theta = std::atan2(tn, 1.0 + radial);
  const double theta_max = 2.0 * std::asin(std::min(1.0, step_bound / 2.0)) * (1.0 - 1e-9);
  theta = std::min(theta, theta_max);
  Vector next = std::cos(theta) * cv + (std::sin(theta) / tn) * tangent;
  next.normalize();
  return next;
}

Matrix sample_walk(std::size_t dim, std::size_t steps, double step_bound, Rng& rng) {
  if (dim < 2) throw std::invalid_argument("sample_walk: dimension must be >= 2");
  if (!(step_bound > 0.0)) throw std::invalid_argument("sample_walk: step bound must be > 0");
  Matrix walk(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(dim));
  if (steps == 0) return walk;
  rng.unit_sphere(std::span<double>(walk.data(), dim));
  for (std::size_t k = 1; k < steps; ++k) {
    const Vector next = walk_step(std::span<const double>(walk.data() + (k - 1) * dim, dim), step_bound, rng);
    walk.row(static_cast<Eigen::Index>(k)) = next.transpose();
  }
  return walk;
}

namespace {

Vector logits(const Model& world, RelationId relation, Slot slot, std::span<const double> c) {
  const auto d = static_cast<Eigen::Index>(world.dim());
  if (static_cast<Eigen::Index>(c.size()) != d) throw std::invalid_argument("knowledge vector has wrong dimension");
  const Vector rc = world.transform(relation, slot) * Eigen::Map<const Vector>(c.data(), d);
  return world.entities() * rc;
}

double log_sum_exp(const Vector& x) {
  const double mx = x.maxCoeff();
  return mx + std::log((x.array() - mx).exp().sum());
}

struct LogMean {
  double log_mean = 0.0;
  double std_err = 0.0;
};

LogMean log_mean_exp(std::span<const double> l) {
  const double mx = *std::max_element(l.begin(), l.end());
  double sum = 0.0;
  for (double x : l) sum += std::exp(x - mx);
  const double n = static_cast<double>(l.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : l) {
    const double w = std::exp(x - mx) - mean;
    ss += w * w;
  }
  const double sd = l.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return {mx + std::log(mean), sd / (std::sqrt(n) * mean)};
}

}  // namespace

std::vector<double> emission_probabilities(const Model& world, RelationId relation, Slot slot,
                                           std::span<const double> c) {
  const Vector l = logits(world, relation, slot, c);
  const double lz = log_sum_exp(l);
  std::vector<double> p(static_cast<std::size_t>(l.size()));
  for (Eigen::Index i = 0; i < l.size(); ++i) p[static_cast<std::size_t>(i)] = std::exp(l[i] - lz);
  return p;
}

EntityId emit_entity(const Model& world, RelationId relation, Slot slot, std::span<const double> c, Rng& rng) {
  const std::vector<double> p = emission_probabilities(world, relation, slot, c);
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  return dist(rng.engine());
}

SyntheticWorld make_world(const WorldConfig& config) {
  if (config.num_entities < 1 || config.num_relations < 1) throw std::invalid_argument("make_world: empty world");
  SyntheticWorld w;
  w.config = config;
  w.model = Model(config.num_entities, config.num_relations, config.dim);
  Rng ent_rng = Rng::substream(config.seed, "genwalk-entities");
  w.model.entities() = sample_prior_entities(config.num_entities, config.dim, config.kappa, ent_rng);
  Rng rel_rng = Rng::substream(config.seed, "genwalk-relations");
  for (auto& rel : w.model.relations()) {
    rel.r1 = random_orthogonal(config.dim, rel_rng);
    rel.r2 = random_orthogonal(config.dim, rel_rng);
  }
  Rng walk_rng = Rng::substream(config.seed, "genwalk-walk");
  w.walk = sample_walk(config.dim, config.walk_length, config.step_bound, walk_rng);
  Rng emit_rng = Rng::substream(config.seed, "genwalk-emit");
  const std::size_t d = config.dim;
  for (std::size_t k = 0; k + 1 < config.walk_length; ++k) {
    const RelationId r = emit_rng.uniform_index(config.num_relations);
    const std::span<const double> c(w.walk.data() + k * d, d);
    const std::span<const double> c_next(w.walk.data() + (k + 1) * d, d);
    const EntityId h = emit_entity(w.model, r, Slot::head, c, emit_rng);
    const EntityId t = emit_entity(w.model, r, Slot::tail, c_next, emit_rng);
    w.emitted.push_back({{h, r, t}, k});
  }
  return w;
}

JointEstimate estimate_joint(const Model& world, const Triple& triple, std::size_t n_mc, double step_bound, Rng& rng) {
  world.check_triple(triple);
  if (n_mc == 0) throw std::invalid_argument("estimate_joint: n_mc must be > 0");
  const std::size_t d = world.dim();
  std::vector<double> terms(n_mc);
  std::vector<double> c(d);
  for (std::size_t s = 0; s < n_mc; ++s) {
    rng.unit_sphere(c);
    const Vector cp = walk_step(c, step_bound, rng);
    const Vector lh = logits(world, triple.relation, Slot::head, c);
    const Vector lt = logits(world, triple.relation, Slot::tail, std::span<const double>(cp.data(), d));
    terms[s] = (lh[static_cast<Eigen::Index>(triple.head)] - log_sum_exp(lh)) +
               (lt[static_cast<Eigen::Index>(triple.tail)] - log_sum_exp(lt));
  }
  const LogMean lm = log_mean_exp(terms);
  return {lm.log_mean, lm.std_err, n_mc};
}

namespace {

/// Shared knowledge-vector draws for one relation: rows of R1 c_s and R2 c'_s
/// plus the exact log partition values.
struct RelationDraws {
  Matrix head_dirs;  // n_mc x d
  Matrix tail_dirs;
  std::vector<double> log_zc;
  std::vector<double> log_zcp;
};

void log_partitions(const Matrix& entities, const Matrix& dirs, std::vector<double>& out) {
  constexpr Eigen::Index kChunk = 256;
  const Eigen::Index total = dirs.rows();
  out.resize(static_cast<std::size_t>(total));
  for (Eigen::Index lo = 0; lo < total; lo += kChunk) {
    const Eigen::Index cnt = std::min(kChunk, total - lo);
    const Eigen::MatrixXd l = entities * dirs.middleRows(lo, cnt).transpose();  // n x cnt
    for (Eigen::Index j = 0; j < cnt; ++j) {
      const double mx = l.col(j).maxCoeff();
      out[static_cast<std::size_t>(lo + j)] = mx + std::log((l.col(j).array() - mx).exp().sum());
    }
  }
}

RelationDraws draw_for_relation(const Model& world, RelationId r, std::size_t n_mc, double step_bound, Rng& rng) {
  const std::size_t d = world.dim();
  const auto D = static_cast<Eigen::Index>(d);
  Matrix c(static_cast<Eigen::Index>(n_mc), D), cp(static_cast<Eigen::Index>(n_mc), D);
  for (std::size_t s = 0; s < n_mc; ++s) {
    std::span<double> row(c.data() + s * d, d);
    rng.unit_sphere(row);
    cp.row(static_cast<Eigen::Index>(s)) = walk_step(row, step_bound, rng).transpose();
  }
  RelationDraws out;
  out.head_dirs = c * world.relation(r).r1.transpose();
  out.tail_dirs = cp * world.relation(r).r2.transpose();
  log_partitions(world.entities(), out.head_dirs, out.log_zc);
  log_partitions(world.entities(), out.tail_dirs, out.log_zcp);
  return out;
}

}  // namespace

TheoremCheck check_theorem(const SyntheticWorld& world, std::size_t n_triples, std::size_t n_mc, std::uint64_t seed,
                           unsigned threads) {
  if (n_triples == 0 || n_mc == 0) throw std::invalid_argument("check_theorem: counts must be > 0");
  const Model& model = world.model;
  const std::size_t m = model.num_relations();
  const std::size_t d = model.dim();

  TheoremCheck out;
  out.n_mc = n_mc;
  Rng pick = Rng::substream(seed, "theorem-triples");
  for (std::size_t i = 0; i < n_triples; ++i) {
    const EntityId h = pick.uniform_index(model.num_entities());
    const RelationId r = pick.uniform_index(m);
    const EntityId t = pick.uniform_index(model.num_entities());
    out.triples.push_back({h, r, t});
  }

  std::vector<RelationDraws> draws(m);
  parallel_for(m, threads, [&](std::size_t r) {
    Rng rng = Rng::substream(seed, "theorem-draws", r);
    draws[r] = draw_for_relation(model, r, n_mc, world.config.step_bound, rng);
  });
  out.log_z.resize(m);
  for (RelationId r = 0; r < m; ++r) {
    const double s = std::accumulate(draws[r].log_zc.begin(), draws[r].log_zc.end(), 0.0) +
                     std::accumulate(draws[r].log_zcp.begin(), draws[r].log_zcp.end(), 0.0);
    out.log_z[r] = s / static_cast<double>(2 * n_mc);
  }

  out.log_p_hat.resize(n_triples);
  out.rhs.resize(n_triples);
  out.std_err.resize(n_triples);
  parallel_for(n_triples, threads, [&](std::size_t i) {
    const Triple& tr = out.triples[i];
    const auto& dr = draws[tr.relation];
    const auto D = static_cast<Eigen::Index>(d);
    const Vector lh = dr.head_dirs * Eigen::Map<const Vector>(model.entity(tr.head).data(), D);
    const Vector lt = dr.tail_dirs * Eigen::Map<const Vector>(model.entity(tr.tail).data(), D);
    std::vector<double> terms(n_mc);
    for (std::size_t s = 0; s < n_mc; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      terms[s] = (lh[si] - dr.log_zc[s]) + (lt[si] - dr.log_zcp[s]);
    }
    const LogMean lm = log_mean_exp(terms);
    out.log_p_hat[i] = lm.log_mean;
    out.std_err[i] = lm.std_err;
    out.rhs[i] = log_probability(model, tr, out.log_z[tr.relation]);
  });

  for (std::size_t i = 0; i < n_triples; ++i) {
    out.max_abs_deviation = std::max(out.max_abs_deviation, std::abs(out.log_p_hat[i] - out.rhs[i]));
  }
  if (n_triples >= 3) out.pearson = correlate(out.rhs, out.log_p_hat);
  // least-squares fit log_p_hat = slope * rhs + intercept
  const double n = static_cast<double>(n_triples);
  const double mx = std::accumulate(out.rhs.begin(), out.rhs.end(), 0.0) / n;
  const double my = std::accumulate(out.log_p_hat.begin(), out.log_p_hat.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n_triples; ++i) {
    sxy += (out.rhs[i] - mx) * (out.log_p_hat[i] - my);
    sxx += (out.rhs[i] - mx) * (out.rhs[i] - mx);
  }
  if (sxx == 0.0 || !out.pearson) {
    out.degenerate = true;
    out.slope = 0.0;
    out.intercept = my;
  } else {
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
  }
  return out;
}

nlohmann::json to_json(const TheoremCheck& c) {
  nlohmann::json j;
  j["n_triples"] = c.triples.size();
  j["n_mc"] = c.n_mc;
  j["pearson"] = c.pearson ? nlohmann::json(*c.pearson) : nlohmann::json(nullptr);
  j["slope"] = c.slope;
  j["intercept"] = c.intercept;
  j["max_abs_deviation"] = c.max_abs_deviation;
  j["degenerate"] = c.degenerate;
  j["log_z"] = c.log_z;
  auto& rows = j["triples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < c.triples.size(); ++i) {
    rows.push_back({{"head", c.triples[i].head},
                    {"relation", c.triples[i].relation},
                    {"tail", c.triples[i].tail},
                    {"log_p_hat", c.log_p_hat[i]},
                    {"rhs", c.rhs[i]},
                    {"std_err", c.std_err[i]}});
  }
  return j;
}

void write_theorem_scatter_tsv(const std::filesystem::path& path, const TheoremCheck& c) {
  auto out = open_for_write(path);
  out << "head\trelation\ttail\trhs\tlog_p_hat\tstd_err\n";
  for (std::size_t i = 0; i < c.triples.size(); ++i) {
    out << c.triples[i].head << '\t' << c.triples[i].relation << '\t' << c.triples[i].tail << '\t'
        << format_double(c.rhs[i]) << '\t' << format_double(c.log_p_hat[i]) << '\t' << format_double(c.std_err[i])
        << '\n';
  }
}

namespace {

SlotConcentration summarize_slot(std::span<const double> z) {
  SlotConcentration s;
  const double n = static_cast<double>(z.size());
  s.mean_z = std::accumulate(z.begin(), z.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : z) ss += (x - s.mean_z) * (x - s.mean_z);
  s.cv = z.size() > 1 ? std::sqrt(ss / (n - 1.0)) / s.mean_z : 0.0;
  for (double eps : {0.01, 0.05, 0.1}) {
    const auto inside = std::count_if(z.begin(), z.end(), [&](double x) {
      return x >= (1.0 - eps) * s.mean_z && x <= (1.0 + eps) * s.mean_z;
    });
    s.within.emplace_back(eps, static_cast<double>(inside) / n);
  }
  return s;
}

}  // namespace

ConcentrationCheck check_concentration(const Model& world, std::size_t num_c, std::uint64_t seed, unsigned threads) {
  if (num_c < 2) throw std::invalid_argument("check_concentration: need at least 2 samples");
  const std::size_t m = world.num_relations();
  const std::size_t d = world.dim();
  ConcentrationCheck out;
  out.num_c = num_c;
  out.relations.resize(m);
  parallel_for(m, threads, [&](std::size_t r) {
    Rng rng = Rng::substream(seed, "concentration", r);
    Matrix c(static_cast<Eigen::Index>(num_c), static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < num_c; ++s) rng.unit_sphere(std::span<double>(c.data() + s * d, d));
    std::vector<double> lzh, lzt;
    log_partitions(world.entities(), Matrix(c * world.relation(r).r1.transpose()), lzh);
    log_partitions(world.entities(), Matrix(c * world.relation(r).r2.transpose()), lzt);
    std::vector<double> zh(num_c), zt(num_c);
    for (std::size_t s = 0; s < num_c; ++s) {
      zh[s] = std::exp(lzh[s]);
      zt[s] = std::exp(lzt[s]);
    }
    out.relations[r] = {r, summarize_slot(zh), summarize_slot(zt)};
  });
  for (const auto& rc : out.relations) {
    for (const auto* s : {&rc.head, &rc.tail}) {
      out.max_cv = std::max(out.max_cv, s->cv);
      out.min_within_5pct = std::min(out.min_within_5pct, s->within[1].second);
    }
  }
  return out;
}

nlohmann::json to_json(const ConcentrationCheck& c) {
  nlohmann::json j;
  j["num_c"] = c.num_c;
  j["max_cv"] = c.max_cv;
  j["min_fraction_within_5pct"] = c.min_within_5pct;
  auto slot = [](const SlotConcentration& s) {
    nlohmann::json w = nlohmann::json::object();
    for (const auto& [eps, frac] : s.within) w[format_double(eps)] = frac;
    return nlohmann::json{{"mean_z", s.mean_z}, {"cv", s.cv}, {"fraction_within", w}};
  };
  auto& rows = j["relations"] = nlohmann::json::array();
  for (const auto& r : c.relations) {
    rows.push_back({{"relation", r.relation}, {"head", slot(r.head)}, {"tail", slot(r.tail)}});
  }
  return j;
}

}  // namespace relwalk
