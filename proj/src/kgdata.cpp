#include "relwalk/kgdata.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

namespace relwalk {

std::size_t TripleHash::operator()(const Triple& t) const noexcept {
  std::uint64_t h = t.head * 0x9e3779b97f4a7c15ULL;
  h ^= (t.relation + 0x7f4a7c15ULL) * 0xbf58476d1ce4e5b9ULL + (h << 6) + (h >> 2);
  h ^= (t.tail + 0x94d049bbULL) * 0x94d049bb133111ebULL + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

// Vocabulary

std::optional<EntityId> Vocabulary::find_entity(std::string_view name) const {
  auto it = entity_ids_.find(std::string(name));
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Vocabulary::find_relation(std::string_view name) const {
  auto it = relation_ids_.find(std::string(name));
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

EntityId Vocabulary::add_entity(std::string_view name) {
  auto [it, inserted] = entity_ids_.try_emplace(std::string(name), entities_.size());
  if (inserted) entities_.emplace_back(name);
  return it->second;
}

RelationId Vocabulary::add_relation(std::string_view name) {
  auto [it, inserted] = relation_ids_.try_emplace(std::string(name), relations_.size());
  if (inserted) relations_.emplace_back(name);
  return it->second;
}

Vocabulary Vocabulary::from_names(std::vector<std::string> entities, std::vector<std::string> relations) {
  Vocabulary v;
  for (const auto& e : entities) {
    const auto before = v.num_entities();
    v.add_entity(e);
    if (v.num_entities() == before) throw VocabularyError("duplicate entity name '" + e + "'");
  }
  for (const auto& r : relations) {
    const auto before = v.num_relations();
    v.add_relation(r);
    if (v.num_relations() == before) throw VocabularyError("duplicate relation name '" + r + "'");
  }
  return v;
}

// Parsing

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

template <typename OnFields>
void for_each_record(std::istream& in, OnFields&& on_fields) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    on_fields(lineno, split_tabs(line));
  }
}

Triple resolve(std::size_t lineno, std::span<const std::string_view> f, Vocabulary& vocab, VocabMode mode) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (f[i].empty()) throw ParseError(lineno, "empty field " + std::to_string(i + 1));
  }
  if (mode == VocabMode::build) {
    const EntityId h = vocab.add_entity(f[0]);
    const RelationId r = vocab.add_relation(f[1]);
    const EntityId t = vocab.add_entity(f[2]);
    return {h, r, t};
  }
  auto h = vocab.find_entity(f[0]);
  auto r = vocab.find_relation(f[1]);
  auto t = vocab.find_entity(f[2]);
  auto where = "line " + std::to_string(lineno) + ": ";
  if (!h) throw VocabularyError(where + "unknown entity '" + std::string(f[0]) + "'");
  if (!r) throw VocabularyError(where + "unknown relation '" + std::string(f[1]) + "'");
  if (!t) throw VocabularyError(where + "unknown entity '" + std::string(f[2]) + "'");
  return {*h, *r, *t};
}

}  // namespace

std::vector<Triple> parse_triples(std::istream& in, Vocabulary& vocab, VocabMode mode) {
  std::vector<Triple> out;
  for_each_record(in, [&](std::size_t lineno, const std::vector<std::string_view>& f) {
    if (f.size() != 3) {
      throw ParseError(lineno, "expected 3 tab-separated fields, got " + std::to_string(f.size()));
    }
    out.push_back(resolve(lineno, f, vocab, mode));
  });
  return out;
}

std::vector<LabeledTriple> parse_labeled_triples(std::istream& in, Vocabulary& vocab, VocabMode mode) {
  std::vector<LabeledTriple> out;
  for_each_record(in, [&](std::size_t lineno, const std::vector<std::string_view>& f) {
    if (f.size() != 4) {
      throw ParseError(lineno, "expected 4 tab-separated fields, got " + std::to_string(f.size()));
    }
    bool positive = false;
    if (f[3] == "1") {
      positive = true;
    } else if (f[3] != "-1") {
      throw ParseError(lineno, "label must be 1 or -1, got '" + std::string(f[3]) + "'");
    }
    out.push_back({resolve(lineno, f, vocab, mode), positive});
  });
  return out;
}

void write_triples(std::ostream& out, std::span<const Triple> triples, const Vocabulary& vocab) {
  for (const auto& t : triples) {
    out << vocab.entity_name(t.head) << '\t' << vocab.relation_name(t.relation) << '\t'
        << vocab.entity_name(t.tail) << '\n';
  }
}

// KnownIndex

std::uint64_t KnownIndex::key(std::size_t a, std::size_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b & 0xffffffffu);
}

void KnownIndex::insert_sorted(std::vector<EntityId>& v, EntityId x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

KnownIndex::KnownIndex(std::span<const std::span<const Triple>> splits) {
  for (auto split : splits) add(split);
}

void KnownIndex::add(std::span<const Triple> triples) {
  for (const auto& t : triples) {
    if (!all_.insert(t).second) continue;
    insert_sorted(tails_[key(t.head, t.relation)], t.tail);
    insert_sorted(heads_[key(t.relation, t.tail)], t.head);
  }
}

std::span<const EntityId> KnownIndex::tails(EntityId head, RelationId relation) const {
  auto it = tails_.find(key(head, relation));
  if (it == tails_.end()) return {};
  return it->second;
}

std::span<const EntityId> KnownIndex::heads(RelationId relation, EntityId tail) const {
  auto it = heads_.find(key(relation, tail));
  if (it == heads_.end()) return {};
  return it->second;
}

KnownIndex build_known_index(std::span<const std::span<const Triple>> splits) { return KnownIndex(splits); }

// Dataset

void Dataset::reindex() {
  const std::span<const Triple> splits[] = {train, valid, test};
  known = KnownIndex(splits);
}

namespace {

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
  return in;
}

template <typename Parse>
auto parse_file(const std::filesystem::path& p, Parse&& parse) {
  auto in = open_input(p);
  try {
    return parse(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), p.string() + ": " + std::string(e.what()));
  } catch (const VocabularyError& e) {
    throw VocabularyError(p.string() + ": " + e.what());
  }
}

}  // namespace

Dataset load_dataset(const DatasetPaths& paths, const Vocabulary* frozen) {
  Dataset ds;
  const VocabMode mode = frozen ? VocabMode::frozen : VocabMode::build;
  if (frozen) ds.vocab = *frozen;
  auto triples = [&](std::istream& in) { return parse_triples(in, ds.vocab, mode); };
  auto labeled = [&](std::istream& in) { return parse_labeled_triples(in, ds.vocab, mode); };
  ds.train = parse_file(paths.train, triples);
  ds.valid = parse_file(paths.valid, triples);
  ds.test = parse_file(paths.test, triples);
  if (paths.valid_labeled) ds.valid_labeled = parse_file(*paths.valid_labeled, labeled);
  if (paths.test_labeled) ds.test_labeled = parse_file(*paths.test_labeled, labeled);
  ds.reindex();
  return ds;
}

// Negative sampling

void sample_negatives_into(const Triple& pos, std::size_t k, std::size_t num_entities, Rng& rng,
                           std::vector<Triple>& out) {
  if (num_entities < 2) throw std::invalid_argument("sample_negatives: need at least 2 entities to corrupt");
  for (std::size_t i = 0; i < k; ++i) {
    Triple neg = pos;
    const bool corrupt_head = rng.coin();
    EntityId& slot = corrupt_head ? neg.head : neg.tail;
    EntityId repl = rng.uniform_index(num_entities - 1);
    if (repl >= slot) ++repl;
    slot = repl;
    out.push_back(neg);
  }
}

std::vector<Triple> sample_negatives(const Triple& pos, std::size_t k, std::size_t num_entities, Rng& rng) {
  std::vector<Triple> out;
  out.reserve(k);
  sample_negatives_into(pos, k, num_entities, rng, out);
  return out;
}

std::vector<LabeledTriple> corrupt_labeled_split(std::span<const Triple> positives, std::size_t num_entities,
                                                 Rng& rng) {
  std::vector<LabeledTriple> out;
  out.reserve(2 * positives.size());
  std::vector<Triple> neg;
  for (const auto& p : positives) {
    neg.clear();
    sample_negatives_into(p, 1, num_entities, rng, neg);
    out.push_back({p, true});
    out.push_back({neg.front(), false});
  }
  return out;
}

}  // namespace relwalk
