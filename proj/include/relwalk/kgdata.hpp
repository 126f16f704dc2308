#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "relwalk/rng.hpp"

namespace relwalk {

using EntityId = std::size_t;
using RelationId = std::size_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept;
};

struct LabeledTriple {
  Triple triple;
  bool positive = true;

  friend bool operator==(const LabeledTriple&, const LabeledTriple&) = default;
};

/// Malformed input line. `line()` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense name<->id maps for entities and relations. Ids are assigned in
/// first-appearance order.
class Vocabulary {
 public:
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  const std::string& entity_name(EntityId id) const { return entities_.at(id); }
  const std::string& relation_name(RelationId id) const { return relations_.at(id); }
  const std::vector<std::string>& entity_names() const { return entities_; }
  const std::vector<std::string>& relation_names() const { return relations_; }

  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  EntityId add_entity(std::string_view name);
  RelationId add_relation(std::string_view name);

  bool empty() const { return entities_.empty() && relations_.empty(); }

  /// Rebuilds a vocabulary from ordered name lists; names must be unique.
  static Vocabulary from_names(std::vector<std::string> entities, std::vector<std::string> relations);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.entities_ == b.entities_ && a.relations_ == b.relations_;
  }

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::string, RelationId> relation_ids_;
};

enum class VocabMode { build, frozen };

/// Reads `head\trelation\ttail` lines. In build mode unseen names are appended
/// to `vocab`; in frozen mode they raise VocabularyError.
std::vector<Triple> parse_triples(std::istream& in, Vocabulary& vocab, VocabMode mode);

/// Same as parse_triples but with a fourth `1` / `-1` label column.
std::vector<LabeledTriple> parse_labeled_triples(std::istream& in, Vocabulary& vocab, VocabMode mode);

void write_triples(std::ostream& out, std::span<const Triple> triples, const Vocabulary& vocab);

/// Every triple seen in any split, with per-(head, relation) and
/// per-(relation, tail) lookups for filtered ranking.
class KnownIndex {
 public:
  KnownIndex() = default;
  explicit KnownIndex(std::span<const std::span<const Triple>> splits);

  void add(std::span<const Triple> triples);

  bool contains(const Triple& t) const { return all_.contains(t); }
  std::size_t size() const { return all_.size(); }

  /// Sorted known tails of (head, relation, ?).
  std::span<const EntityId> tails(EntityId head, RelationId relation) const;
  /// Sorted known heads of (?, relation, tail).
  std::span<const EntityId> heads(RelationId relation, EntityId tail) const;

 private:
  static std::uint64_t key(std::size_t a, std::size_t b);
  static void insert_sorted(std::vector<EntityId>& v, EntityId x);

  std::unordered_set<Triple, TripleHash> all_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> heads_;
};

KnownIndex build_known_index(std::span<const std::span<const Triple>> splits);

struct Dataset {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  Vocabulary vocab;
  KnownIndex known;
  std::optional<std::vector<LabeledTriple>> valid_labeled;
  std::optional<std::vector<LabeledTriple>> test_labeled;

  /// Rebuilds `known` from the three splits.
  void reindex();
};

struct DatasetPaths {
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
  std::optional<std::filesystem::path> valid_labeled;
  std::optional<std::filesystem::path> test_labeled;
};

/// Loads all splits over one shared vocabulary (union of splits, first
/// appearance order train -> valid -> test -> labeled files). With `frozen`
/// set, that vocabulary is used as-is and unknown names are errors.
Dataset load_dataset(const DatasetPaths& paths, const Vocabulary* frozen = nullptr);

/// Corrupts exactly one slot of `pos` per negative: head or tail with
/// probability 1/2, replacement uniform over the other num_entities - 1 ids.
/// Known triples are not excluded.
std::vector<Triple> sample_negatives(const Triple& pos, std::size_t k, std::size_t num_entities, Rng& rng);
void sample_negatives_into(const Triple& pos, std::size_t k, std::size_t num_entities, Rng& rng,
                           std::vector<Triple>& out);

/// Pairs every positive with one corrupted negative (classification splits
/// for datasets that ship without labeled files).
std::vector<LabeledTriple> corrupt_labeled_split(std::span<const Triple> positives, std::size_t num_entities,
                                                 Rng& rng);

}  // namespace relwalk
