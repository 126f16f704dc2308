#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "relwalk/kgdata.hpp"
#include "relwalk/model.hpp"

namespace relwalk {

/// Which argument of the test triple is hidden.
enum class OpenSlot { head, tail };

/// Filtered rank of `target`'s entity in its open slot among all n
/// candidates. Candidates forming another known triple are dropped; ties
/// count half: rank = 1 + #greater + #equal / 2.
double rank_candidates(const Model& model, const Triple& target, OpenSlot open, const KnownIndex& known);

struct RankingSummary {
  std::size_t queries = 0;
  double mrr = 0.0;
  double mr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;

  friend bool operator==(const RankingSummary&, const RankingSummary&) = default;
};

RankingSummary summarize_ranks(std::span<const double> ranks);

struct RankingReport {
  RankingSummary overall;
  std::vector<RankingSummary> per_relation;  // indexed by relation id
  /// Query 2i is the head query of split[i], 2i+1 its tail query.
  std::vector<double> ranks;

  friend bool operator==(const RankingReport&, const RankingReport&) = default;
};

/// Head and tail query for every triple of `split`, filtered against `known`.
RankingReport link_prediction(const Model& model, std::span<const Triple> split, const KnownIndex& known,
                              unsigned threads = 1);

nlohmann::json to_json(const RankingSummary& s);
nlohmann::json to_json(const RankingReport& r, const Vocabulary& vocab);
std::string ranking_text(const RankingReport& r, const Vocabulary& vocab);
/// `relation, queries, MRR, MR, H@1, H@3, H@10`; relations without queries are skipped.
void write_per_relation_tsv(const std::filesystem::path& path, const RankingReport& r, const Vocabulary& vocab);

// Triple classification

struct Thresholds {
  std::vector<double> per_relation;
  std::vector<bool> learned;  // false -> falls back to `global`
  double global = 0.0;

  double at(RelationId r) const { return r < per_relation.size() && learned[r] ? per_relation[r] : global; }
};

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};

/// Sweeps the midpoints between adjacent distinct scores (plus one point
/// below and above the range) and returns the smallest threshold achieving
/// the best accuracy of "positive iff score >= threshold".
ThresholdChoice best_threshold(std::span<const double> scores, std::span<const bool> labels);

Thresholds learn_thresholds(const Model& model, std::span<const LabeledTriple> validation);

struct ClassificationReport {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::size_t> relation_correct;
  std::vector<std::size_t> relation_total;
  Thresholds thresholds;
};

ClassificationReport classify(const Model& model, const Thresholds& thresholds, std::span<const LabeledTriple> split);

nlohmann::json to_json(const ClassificationReport& r, const Vocabulary& vocab);
void write_thresholds_tsv(const std::filesystem::path& path, const Thresholds& t, const Vocabulary& vocab);

}  // namespace relwalk
