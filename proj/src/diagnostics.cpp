#include "relwalk/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "relwalk/parallel.hpp"
#include "relwalk/textio.hpp"

namespace relwalk {

Matrix gram(const RelationEmbedding& rel, WhichMatrix which) {
  const Matrix& r = which == WhichMatrix::r1 ? rel.r1 : rel.r2;
  return r.transpose() * r;
}

double nu_r(const RelationEmbedding& rel) {
  double total = 0.0;
  for (const auto which : {WhichMatrix::r1, WhichMatrix::r2}) {
    const Matrix g = gram(rel, which);
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        if (i != j) total += std::abs(g(i, j));
  }
  return total;
}

namespace {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(std::span<const double> xs) {
  MeanSd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

}  // namespace

ConcentrationRow concentration_stats(const Model& model, RelationId relation, std::size_t num_c,
                                     std::size_t subset_size, Rng& rng) {
  if (num_c < 2) throw std::invalid_argument("concentration_stats: need at least 2 knowledge vectors");
  if (relation >= model.num_relations()) throw std::out_of_range("concentration_stats: relation out of range");
  const std::size_t n = model.num_entities();
  const std::size_t k = std::min(subset_size, n);
  if (k == 0) throw std::invalid_argument("concentration_stats: empty entity subset");
  std::vector<EntityId> all(n), subset;
  std::iota(all.begin(), all.end(), 0);
  subset.reserve(k);
  std::sample(all.begin(), all.end(), std::back_inserter(subset), k, rng.engine());

  std::vector<double> zc(num_c), zcp(num_c), c(model.dim());
  for (std::size_t s = 0; s < num_c; ++s) {
    rng.unit_sphere(c);
    zc[s] = partition_function(model, relation, Slot::head, c, subset).z;
    zcp[s] = partition_function(model, relation, Slot::tail, c, subset).z;
  }
  const MeanSd a = mean_sd(zc);
  const MeanSd b = mean_sd(zcp);
  ConcentrationRow row;
  row.relation = relation;
  row.samples = num_c;
  row.subset_size = k;
  row.mean_c = a.mean;
  row.mean_c_prime = b.mean;
  row.sigma_c = a.sd;
  row.sigma_c_prime = b.sd;
  row.combined = std::sqrt(a.sd * a.sd + b.sd * b.sd);
  row.cv_c = a.sd / a.mean;
  row.cv_c_prime = b.sd / b.mean;
  return row;
}

std::vector<ConcentrationRow> concentration_report(const Model& model, const ConcentrationConfig& config,
                                                   unsigned threads) {
  std::vector<ConcentrationRow> rows(model.num_relations());
  parallel_for(rows.size(), threads, [&](std::size_t r) {
    Rng rng = Rng::substream(config.seed, "diagnostics", r);
    rows[r] = concentration_stats(model, r, config.num_c, config.subset_size, rng);
  });
  return rows;
}

std::optional<double> correlate(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("correlate: length mismatch");
  if (a.size() < 3) throw std::invalid_argument("correlate: need at least 3 pairs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void write_matrix_tsv(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_for_write(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << '\t';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void dump_gram(const std::filesystem::path& path, const RelationEmbedding& rel, WhichMatrix which) {
  write_matrix_tsv(path, gram(rel, which));
}

Matrix read_matrix_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& f : split(line, '\t')) row.push_back(parse_double(f));
    if (!rows.empty() && row.size() != rows.front().size()) throw std::runtime_error("ragged matrix TSV");
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void write_diagnostics_tsv(const std::filesystem::path& path, std::span<const DiagnosticsRow> rows,
                           const Vocabulary& vocab) {
  auto out = open_for_write(path);
  out << "relation\tH@10\tnu_R\tsigma_c\tsigma_c_prime\tcombined\tcv_c\tcv_c_prime\n";
  std::vector<std::vector<double>> cols(7);
  for (const auto& r : rows) {
    const double vals[7] = {r.hits10,
                            r.nu,
                            r.concentration.sigma_c,
                            r.concentration.sigma_c_prime,
                            r.concentration.combined,
                            r.concentration.cv_c,
                            r.concentration.cv_c_prime};
    out << (r.relation < vocab.num_relations() ? vocab.relation_name(r.relation) : std::to_string(r.relation));
    for (int i = 0; i < 7; ++i) {
      out << '\t' << format_double(vals[i]);
      cols[i].push_back(vals[i]);
    }
    out << '\n';
  }
  out << "pearson_vs_H@10\t";
  for (int i = 0; i < 7; ++i) {
    if (i) out << '\t';
    if (rows.size() < 3) {
      out << "NA";
      continue;
    }
    const auto r = correlate(cols[0], cols[i]);
    out << (r ? format_double(*r) : "NA");
  }
  out << '\n';
}

}  // namespace relwalk
