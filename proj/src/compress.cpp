#include "relwalk/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relwalk/parallel.hpp"
#include "relwalk/textio.hpp"

namespace relwalk {

namespace {

/// Fills zero columns of `q` (d x d) with unit vectors orthogonal to the rest.
void complete_basis(Eigen::MatrixXd& q, const std::vector<bool>& valid) {
  const Eigen::Index d = q.rows();
  Eigen::Index next_e = 0;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (valid[static_cast<std::size_t>(j)]) continue;
    while (next_e < d) {
      Eigen::VectorXd cand = Eigen::VectorXd::Unit(d, next_e++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index k = 0; k < q.cols(); ++k) {
          if (k == j || (!valid[static_cast<std::size_t>(k)] && k > j)) continue;
          cand -= q.col(k).dot(cand) * q.col(k);
        }
      }
      const double nrm = cand.norm();
      if (nrm > 1e-6) {
        q.col(j) = cand / nrm;
        break;
      }
    }
  }
}

}  // namespace

SingularDecomposition jacobi_svd(const Matrix& a_in, double tol, std::size_t max_sweeps) {
  if (a_in.rows() != a_in.cols()) throw std::invalid_argument("jacobi_svd: square matrix expected");
  const Eigen::Index d = a_in.rows();
  Eigen::MatrixXd a = a_in;  // column-major: rotations act on contiguous columns
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d);

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < d; ++p) {
      for (Eigen::Index q = p + 1; q < d; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < d; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector sv(d);
  for (Eigen::Index j = 0; j < d; ++j) sv[j] = a.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return sv[x] > sv[y]; });

  SingularDecomposition out;
  out.values.resize(d);
  out.u.resize(d, d);
  out.v.resize(d, d);
  std::vector<bool> valid(static_cast<std::size_t>(d), true);
  const double floor = (sv.size() ? sv.maxCoeff() : 0.0) * 1e-300;
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::Index j = order[static_cast<std::size_t>(k)];
    out.values[k] = sv[j];
    out.v.col(k) = v.col(j);
    if (sv[j] > floor && sv[j] > 0.0) {
      out.u.col(k) = a.col(j) / sv[j];
    } else {
      out.u.col(k).setZero();
      valid[static_cast<std::size_t>(k)] = false;
    }
  }
  complete_basis(out.u, valid);
  return out;
}

FactorBlock factorize_offset(const Matrix& r, FactorMode mode) {
  const Eigen::Index d = r.rows();
  Matrix offset = r;
  offset.diagonal().array() -= 1.0;
  FactorBlock block;
  if (mode == FactorMode::svd) {
    const SingularDecomposition sd = jacobi_svd(offset);
    block.values = sd.values;
    block.left = sd.u.transpose();
    block.right = sd.v.transpose();
    return block;
  }
  const Eigen::MatrixXd sym = 0.5 * (offset + offset.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return std::abs(ev[x]) > std::abs(ev[y]); });
  block.values.resize(d);
  block.left.resize(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::Index j = order[static_cast<std::size_t>(k)];
    block.values[k] = ev[j];
    block.left.row(k) = es.eigenvectors().col(j).transpose();
  }
  block.right = block.left;
  return block;
}

FactorBlock truncate(const FactorBlock& full, std::size_t rank) {
  const auto k = static_cast<Eigen::Index>(rank);
  if (k > full.values.size()) throw std::invalid_argument("truncate: rank exceeds available factors");
  return {full.values.head(k), full.left.topRows(k), full.right.topRows(k)};
}

double discarded_tail_norm(const FactorBlock& full, std::size_t rank) {
  const auto k = static_cast<Eigen::Index>(rank);
  return full.values.tail(full.values.size() - k).norm();
}

namespace {

void check_rank(std::size_t rank, std::size_t dim) {
  if (rank < 1 || rank > dim) {
    throw std::invalid_argument("rank " + std::to_string(rank) + " outside [1, " + std::to_string(dim) + "]");
  }
}

}  // namespace

CompressedRelation compress_relation(const RelationEmbedding& rel, std::size_t rank, FactorMode mode) {
  check_rank(rank, static_cast<std::size_t>(rel.r1.rows()));
  return {truncate(factorize_offset(rel.r1, mode), rank), truncate(factorize_offset(rel.r2, mode), rank)};
}

RelationEmbedding reconstruct(const CompressedRelation& c, std::size_t dim) {
  return {reconstruct(c.r1, dim), reconstruct(c.r2, dim)};
}

double compression_ratio(std::size_t rank, std::size_t dim) {
  check_rank(rank, dim);
  return static_cast<double>(rank) / static_cast<double>(dim);
}

CompressedModel compress_model(const Model& model, std::size_t rank, FactorMode mode, unsigned threads) {
  check_rank(rank, model.dim());
  CompressedModel cm;
  cm.rank = rank;
  cm.mode = mode;
  cm.relations.resize(model.num_relations());
  parallel_for(model.num_relations(), threads,
               [&](std::size_t r) { cm.relations[r] = compress_relation(model.relation(r), rank, mode); });
  return cm;
}

Model decompress(const Model& model, const CompressedModel& compressed) {
  Model out = model;
  for (RelationId r = 0; r < model.num_relations(); ++r) {
    out.relation(r) = reconstruct(compressed.relations[r], model.dim());
  }
  return out;
}

std::vector<TradeoffRow> sweep_ranks(const Model& model, std::span<const Triple> split, const KnownIndex& known,
                                     std::span<const std::size_t> ranks, FactorMode mode, unsigned threads) {
  const std::size_t d = model.dim();
  for (std::size_t k : ranks) check_rank(k, d);
  const std::size_t m = model.num_relations();
  std::vector<FactorBlock> full1(m), full2(m);
  parallel_for(m, threads, [&](std::size_t r) {
    full1[r] = factorize_offset(model.relation(r).r1, mode);
    full2[r] = factorize_offset(model.relation(r).r2, mode);
  });
  std::vector<TradeoffRow> rows;
  for (std::size_t k : ranks) {
    Model approx = model;
    double err = 0.0;
    for (RelationId r = 0; r < m; ++r) {
      auto& rel = approx.relation(r);
      rel.r1 = reconstruct(truncate(full1[r], k), d);
      rel.r2 = reconstruct(truncate(full2[r], k), d);
      err += (model.relation(r).r1 - rel.r1).norm() + (model.relation(r).r2 - rel.r2).norm();
    }
    TradeoffRow row;
    row.rank = k;
    row.ratio = compression_ratio(k, d);
    row.metrics = link_prediction(approx, split, known, threads).overall;
    row.mean_frobenius_error = m ? err / static_cast<double>(2 * m) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

void write_tradeoff_tsv(const std::filesystem::path& path, std::span<const TradeoffRow> rows) {
  auto out = open_for_write(path);
  out << "K\tratio\tMRR\tMR\tH@1\tH@3\tH@10\tmean_frobenius_error\n";
  for (const auto& r : rows) {
    out << r.rank << '\t' << format_double(r.ratio) << '\t' << format_double(r.metrics.mrr) << '\t'
        << format_double(r.metrics.mr) << '\t' << format_double(r.metrics.hits1) << '\t'
        << format_double(r.metrics.hits3) << '\t' << format_double(r.metrics.hits10) << '\t'
        << format_double(r.mean_frobenius_error) << '\n';
  }
}

}  // namespace relwalk
