#include "relwalk/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace relwalk {

Model::Model(std::size_t num_entities, std::size_t num_relations, std::size_t dim)
    : dim_(dim), entities_(Matrix::Zero(static_cast<Eigen::Index>(num_entities), static_cast<Eigen::Index>(dim))) {
  if (dim == 0) throw std::invalid_argument("model dimension must be >= 1");
  const auto d = static_cast<Eigen::Index>(dim);
  relations_.assign(num_relations, RelationEmbedding{Matrix::Identity(d, d), Matrix::Identity(d, d)});
}

bool Model::all_finite() const {
  if (!entities_.allFinite()) return false;
  return std::all_of(relations_.begin(), relations_.end(),
                     [](const RelationEmbedding& r) { return r.r1.allFinite() && r.r2.allFinite(); });
}

void Model::check_triple(const Triple& t) const {
  if (t.head >= num_entities() || t.tail >= num_entities() || t.relation >= num_relations()) {
    throw std::out_of_range("triple (" + std::to_string(t.head) + "," + std::to_string(t.relation) + "," +
                            std::to_string(t.tail) + ") out of range");
  }
}

bool operator==(const Model& a, const Model& b) {
  if (a.dim_ != b.dim_ || a.entities_.rows() != b.entities_.rows() || a.relations_.size() != b.relations_.size()) {
    return false;
  }
  auto same = [](const Matrix& x, const Matrix& y) {
    return std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
  };
  if (!same(a.entities_, b.entities_)) return false;
  for (std::size_t r = 0; r < a.relations_.size(); ++r) {
    if (!same(a.relations_[r].r1, b.relations_[r].r1) || !same(a.relations_[r].r2, b.relations_[r].r2)) return false;
  }
  return true;
}

// Scoring kernels. Row i of R contributes v_i * R(i, :) to R^T v; the inner
// loop runs over contiguous memory and never reassociates a sum.

void transform_transposed(const Matrix& r, std::span<const double> v, std::span<double> out) {
  const std::size_t d = v.size();
  std::fill(out.begin(), out.end(), 0.0);
  const double* row = r.data();
  double* o = out.data();
  for (std::size_t i = 0; i < d; ++i, row += d) {
    const double vi = v[i];
    for (std::size_t j = 0; j < d; ++j) o[j] += vi * row[j];
  }
}

double squared_norm_of_sum(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double x = a[j] + b[j];
    s += x * x;
  }
  return s;
}

double score(const Model& model, const Triple& triple) {
  model.check_triple(triple);
  const std::size_t d = model.dim();
  std::vector<double> u(d), w(d);
  const auto& rel = model.relation(triple.relation);
  transform_transposed(rel.r1, model.entity(triple.head), u);
  transform_transposed(rel.r2, model.entity(triple.tail), w);
  return squared_norm_of_sum(u, w);
}

double log_probability_from_score(double score, std::size_t dim, double log_z) {
  return score / (2.0 * static_cast<double>(dim)) - 2.0 * log_z;
}

double log_probability(const Model& model, const Triple& triple, double log_z) {
  if (!std::isfinite(log_z)) throw std::invalid_argument("log_probability: log Z must be finite");
  return log_probability_from_score(score(model, triple), model.dim(), log_z);
}

namespace {

void check_unit(std::span<const double> c, std::size_t dim) {
  if (c.size() != dim) throw std::invalid_argument("knowledge vector has wrong dimension");
  double n2 = 0.0;
  for (double x : c) n2 += x * x;
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-9) throw std::invalid_argument("knowledge vector must have unit norm");
}

template <typename ForEachId>
PartitionValue log_sum_exp_over(const Model& model, RelationId relation, Slot slot, std::span<const double> c,
                                ForEachId&& for_each_id) {
  const std::size_t d = model.dim();
  if (relation >= model.num_relations()) throw std::out_of_range("relation id out of range");
  check_unit(c, d);
  // v^T R c = (R c) . v
  const Matrix& r = model.transform(relation, slot);
  Vector rc = r * Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(d));
  std::vector<double> logits;
  for_each_id([&](EntityId id) {
    const auto v = model.entity(id);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += v[j] * rc[static_cast<Eigen::Index>(j)];
    logits.push_back(dot);
  });
  const double mx = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (double l : logits) acc += std::exp(l - mx);
  PartitionValue out;
  out.log_z = mx + std::log(acc);
  out.z = std::exp(out.log_z);
  return out;
}

}  // namespace

PartitionValue partition_function(const Model& model, RelationId relation, Slot slot, std::span<const double> c,
                                  std::span<const EntityId> subset) {
  if (subset.empty()) throw std::invalid_argument("partition_function: empty entity subset");
  for (EntityId id : subset) {
    if (id >= model.num_entities()) throw std::out_of_range("partition_function: entity id out of range");
  }
  return log_sum_exp_over(model, relation, slot, c, [&](auto&& f) {
    for (EntityId id : subset) f(id);
  });
}

PartitionValue partition_function(const Model& model, RelationId relation, Slot slot, std::span<const double> c) {
  if (model.num_entities() == 0) throw std::invalid_argument("partition_function: empty entity subset");
  return log_sum_exp_over(model, relation, slot, c, [&](auto&& f) {
    for (EntityId id = 0; id < model.num_entities(); ++id) f(id);
  });
}

Matrix random_orthogonal(std::size_t dim, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd& packed = qr.matrixQR();
  // Sign fix on diag(R) makes Q Haar distributed.
  for (Eigen::Index j = 0; j < d; ++j) {
    if (packed(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

Model init_model(std::size_t num_entities, std::size_t num_relations, std::size_t dim, Rng& rng) {
  Model model(num_entities, num_relations, dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  Matrix& e = model.entities();
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) e(i, j) = sd * rng.normal();
  for (auto& rel : model.relations()) {
    rel.r1 = random_orthogonal(dim, rng);
    rel.r2 = random_orthogonal(dim, rng);
  }
  return model;
}

Matrix reconstruct(const FactorBlock& block, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix r = Matrix::Identity(d, d);
  for (Eigen::Index k = 0; k < block.values.size(); ++k) {
    r.noalias() += block.values[k] * block.left.row(k).transpose() * block.right.row(k);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Binary format

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'W', 'A', 'L', 'K', '\0'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_doubles(const double* p, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
      out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    } else {
      for (std::size_t i = 0; i < count; ++i) put(p[i]);
    }
  }
  void put_matrix(const Matrix& m) { put_doubles(m.data(), static_cast<std::size_t>(m.size())); }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void put_raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {
    const auto here = in_.tellg();
    if (here != std::streampos(-1)) {
      in_.seekg(0, std::ios::end);
      const auto end = in_.tellg();
      in_.seekg(here);
      if (end != std::streampos(-1)) remaining_ = static_cast<std::uint64_t>(end - here);
    }
  }
  template <typename T>
  T get(const char* what) {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T), what);
    return to_little(v);
  }
  void read(char* p, std::size_t n, const char* what) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(std::string("truncated model file (") + what + ")");
    if (remaining_) *remaining_ -= n;
  }
  void get_doubles(double* p, std::size_t count, const char* what) {
    read(reinterpret_cast<char*>(p), count * sizeof(double), what);
    if constexpr (std::endian::native != std::endian::little) {
      for (std::size_t i = 0; i < count; ++i) p[i] = to_little(p[i]);
    }
  }
  void get_matrix(Matrix& m, const char* what) { get_doubles(m.data(), static_cast<std::size_t>(m.size()), what); }
  std::string get_string(const char* what) {
    const auto len = get<std::uint32_t>(what);
    require(len, what);
    std::string s(len, '\0');
    read(s.data(), len, what);
    return s;
  }
  /// Fails early when the header promises more bytes than the stream holds.
  void require(std::uint64_t bytes, const char* what) const {
    if (remaining_ && bytes > *remaining_) {
      throw FormatError(std::string("model file shorter than its header declares (") + what + ")");
    }
  }
  bool at_end() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::istream& in_;
  std::optional<std::uint64_t> remaining_;
};

void write_header(Writer& w, std::uint32_t version, const Model& model) {
  w.put_raw(kMagic, sizeof kMagic);
  w.put(version);
  w.put(static_cast<std::uint64_t>(model.num_entities()));
  w.put(static_cast<std::uint64_t>(model.num_relations()));
  w.put(static_cast<std::uint64_t>(model.dim()));
}

void write_vocab(Writer& w, const Model& model, const Vocabulary& vocab) {
  if (vocab.empty()) {
    w.put(std::uint8_t{0});
    return;
  }
  if (vocab.num_entities() != model.num_entities() || vocab.num_relations() != model.num_relations()) {
    throw std::invalid_argument("vocabulary size does not match model shape");
  }
  w.put(std::uint8_t{1});
  for (const auto& s : vocab.entity_names()) w.put_string(s);
  for (const auto& s : vocab.relation_names()) w.put_string(s);
}

void write_block(Writer& w, const FactorBlock& b) {
  w.put_doubles(b.values.data(), static_cast<std::size_t>(b.values.size()));
  w.put_matrix(b.left);
  w.put_matrix(b.right);
}

void read_block(Reader& r, FactorBlock& b, std::size_t k, std::size_t d) {
  const auto K = static_cast<Eigen::Index>(k);
  const auto D = static_cast<Eigen::Index>(d);
  b.values.resize(K);
  b.left.resize(K, D);
  b.right.resize(K, D);
  r.get_doubles(b.values.data(), k, "factor values");
  r.get_matrix(b.left, "left factors");
  r.get_matrix(b.right, "right factors");
}

constexpr std::uint64_t kMaxDim = 1u << 20;

}  // namespace

void save_model(std::ostream& out, const Model& model, const Vocabulary& vocab) {
  Writer w(out);
  write_header(w, kModelFormatDense, model);
  w.put_matrix(model.entities());
  for (const auto& rel : model.relations()) {
    w.put_matrix(rel.r1);
    w.put_matrix(rel.r2);
  }
  write_vocab(w, model, vocab);
  if (!out) throw std::runtime_error("failed writing model");
}

void save_compressed_model(std::ostream& out, const Model& model, const CompressedModel& compressed,
                           const Vocabulary& vocab) {
  if (compressed.relations.size() != model.num_relations()) {
    throw std::invalid_argument("compressed relation count does not match model");
  }
  Writer w(out);
  write_header(w, kModelFormatCompressed, model);
  w.put(static_cast<std::uint64_t>(compressed.rank));
  w.put(static_cast<std::uint8_t>(compressed.mode));
  w.put_matrix(model.entities());
  for (const auto& rel : compressed.relations) {
    write_block(w, rel.r1);
    write_block(w, rel.r2);
  }
  write_vocab(w, model, vocab);
  if (!out) throw std::runtime_error("failed writing model");
}

LoadedModel load_model(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.read(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a model file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kModelFormatDense && version != kModelFormatCompressed) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  const auto n = r.get<std::uint64_t>("n");
  const auto m = r.get<std::uint64_t>("m");
  const auto d = r.get<std::uint64_t>("d");
  if (d == 0 || d > kMaxDim || n > (std::uint64_t{1} << 40) / d || m > (std::uint64_t{1} << 32)) {
    throw FormatError("implausible model dimensions in header");
  }
  LoadedModel loaded;
  loaded.version = version;
  std::uint64_t rank = 0;
  FactorMode mode = FactorMode::svd;
  if (version == kModelFormatCompressed) {
    rank = r.get<std::uint64_t>("rank");
    const auto mode_byte = r.get<std::uint8_t>("mode");
    if (rank > d) throw FormatError("compressed rank exceeds dimension");
    if (mode_byte > 1) throw FormatError("unknown factor mode");
    mode = static_cast<FactorMode>(mode_byte);
    r.require(8 * (n * d + m * 2 * rank * (1 + 2 * d)), "parameters");
  } else {
    r.require(8 * (n * d + m * 2 * d * d), "parameters");
  }
  Model model(n, m, d);
  r.get_matrix(model.entities(), "entities");
  if (version == kModelFormatDense) {
    for (auto& rel : model.relations()) {
      r.get_matrix(rel.r1, "R1");
      r.get_matrix(rel.r2, "R2");
    }
  } else {
    CompressedModel cm;
    cm.rank = rank;
    cm.mode = mode;
    cm.relations.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      read_block(r, cm.relations[i].r1, rank, d);
      read_block(r, cm.relations[i].r2, rank, d);
      model.relation(i).r1 = reconstruct(cm.relations[i].r1, d);
      model.relation(i).r2 = reconstruct(cm.relations[i].r2, d);
    }
    loaded.compressed = std::move(cm);
  }
  const auto has_vocab = r.get<std::uint8_t>("vocabulary flag");
  if (has_vocab > 1) throw FormatError("bad vocabulary flag");
  if (has_vocab) {
    std::vector<std::string> ents, rels;
    ents.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) ents.push_back(r.get_string("entity name"));
    for (std::uint64_t i = 0; i < m; ++i) rels.push_back(r.get_string("relation name"));
    try {
      loaded.vocab = Vocabulary::from_names(std::move(ents), std::move(rels));
    } catch (const VocabularyError& e) {
      throw FormatError(std::string("bad vocabulary: ") + e.what());
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after model payload");
  if (!model.all_finite()) throw FormatError("model contains non-finite values");
  loaded.model = std::move(model);
  return loaded;
}

std::filesystem::path sidecar_path(const std::filesystem::path& model_path) {
  auto p = model_path;
  p += ".json";
  return p;
}

namespace {

void write_sidecar(const std::filesystem::path& path, const Model& model, std::uint32_t version,
                   const nlohmann::json* sidecar) {
  nlohmann::json j = sidecar ? *sidecar : nlohmann::json::object();
  j["format_version"] = version;
  j["num_entities"] = model.num_entities();
  j["num_relations"] = model.num_relations();
  j["dim"] = model.dim();
  std::ofstream out(sidecar_path(path));
  if (!out) throw std::runtime_error("cannot write '" + sidecar_path(path).string() + "'");
  out << j.dump(2) << '\n';
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void save_model(const std::filesystem::path& path, const Model& model, const Vocabulary& vocab,
                const nlohmann::json* sidecar) {
  auto out = open_output(path);
  save_model(out, model, vocab);
  write_sidecar(path, model, kModelFormatDense, sidecar);
}

void save_compressed_model(const std::filesystem::path& path, const Model& model, const CompressedModel& compressed,
                           const Vocabulary& vocab, const nlohmann::json* sidecar) {
  auto out = open_output(path);
  save_compressed_model(out, model, compressed, vocab);
  nlohmann::json j = sidecar ? *sidecar : nlohmann::json::object();
  j["rank"] = compressed.rank;
  j["factor_mode"] = compressed.mode == FactorMode::svd ? "svd" : "symmetric_eigen";
  write_sidecar(path, model, kModelFormatCompressed, &j);
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return load_model(in);
}

}  // namespace relwalk
