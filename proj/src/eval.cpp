#include "relwalk/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <numeric>
#include <sstream>

#include "relwalk/parallel.hpp"
#include "relwalk/textio.hpp"

namespace relwalk {

namespace {

std::string relation_label(const Vocabulary& vocab, RelationId r) {
  return r < vocab.num_relations() ? vocab.relation_name(r) : std::to_string(r);
}

/// rank = 1 + #greater + #ties / 2 over unfiltered candidates other than the target.
template <typename ScoreOf>
double filtered_rank(std::size_t n, EntityId target, std::span<const EntityId> filtered, ScoreOf&& score_of) {
  const double target_score = score_of(target);
  std::size_t greater = 0;
  std::size_t ties = 0;
  auto next_filtered = filtered.begin();
  for (EntityId c = 0; c < n; ++c) {
    while (next_filtered != filtered.end() && *next_filtered < c) ++next_filtered;
    if (next_filtered != filtered.end() && *next_filtered == c) continue;
    if (c == target) continue;
    const double s = score_of(c);
    if (s > target_score) {
      ++greater;
    } else if (s == target_score) {
      ++ties;
    }
  }
  return 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(ties);
}

/// Rows R^T e_i for every entity, computed with the shared scoring kernel.
Matrix transformed_entities(const Model& model, const Matrix& r, unsigned threads) {
  const std::size_t n = model.num_entities();
  const std::size_t d = model.dim();
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  parallel_for(n, threads, [&](std::size_t i) {
    transform_transposed(r, model.entity(i), std::span<double>(out.data() + i * d, d));
  });
  return out;
}

}  // namespace

double rank_candidates(const Model& model, const Triple& target, OpenSlot open, const KnownIndex& known) {
  model.check_triple(target);
  const std::size_t d = model.dim();
  const auto& rel = model.relation(target.relation);
  std::vector<double> fixed(d), cand(d);
  if (open == OpenSlot::tail) {
    transform_transposed(rel.r1, model.entity(target.head), fixed);
    return filtered_rank(model.num_entities(), target.tail, known.tails(target.head, target.relation),
                         [&](EntityId t) {
                           transform_transposed(rel.r2, model.entity(t), cand);
                           return squared_norm_of_sum(fixed, cand);
                         });
  }
  transform_transposed(rel.r2, model.entity(target.tail), fixed);
  return filtered_rank(model.num_entities(), target.head, known.heads(target.relation, target.tail),
                       [&](EntityId h) {
                         transform_transposed(rel.r1, model.entity(h), cand);
                         return squared_norm_of_sum(cand, fixed);
                       });
}

RankingSummary summarize_ranks(std::span<const double> ranks) {
  RankingSummary s;
  s.queries = ranks.size();
  if (ranks.empty()) return s;
  for (double r : ranks) {
    s.mrr += 1.0 / r;
    s.mr += r;
    s.hits1 += r <= 1.0 ? 1.0 : 0.0;
    s.hits3 += r <= 3.0 ? 1.0 : 0.0;
    s.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double q = static_cast<double>(ranks.size());
  s.mrr /= q;
  s.mr /= q;
  s.hits1 /= q;
  s.hits3 /= q;
  s.hits10 /= q;
  return s;
}

RankingReport link_prediction(const Model& model, std::span<const Triple> split, const KnownIndex& known,
                              unsigned threads) {
  const std::size_t n = model.num_entities();
  const std::size_t d = model.dim();
  const std::size_t m = model.num_relations();
  for (const auto& t : split) model.check_triple(t);

  std::vector<std::vector<std::size_t>> by_relation(m);
  for (std::size_t i = 0; i < split.size(); ++i) by_relation[split[i].relation].push_back(i);

  RankingReport report;
  report.ranks.assign(2 * split.size(), 0.0);
  for (RelationId r = 0; r < m; ++r) {
    const auto& idx = by_relation[r];
    if (idx.empty()) continue;
    const Matrix heads = transformed_entities(model, model.relation(r).r1, threads);
    const Matrix tails = transformed_entities(model, model.relation(r).r2, threads);
    auto head_row = [&](EntityId e) { return std::span<const double>(heads.data() + e * d, d); };
    auto tail_row = [&](EntityId e) { return std::span<const double>(tails.data() + e * d, d); };
    parallel_for(2 * idx.size(), threads, [&](std::size_t q) {
      const std::size_t i = idx[q / 2];
      const Triple& t = split[i];
      if (q % 2 == 0) {
        const auto fixed = tail_row(t.tail);
        report.ranks[2 * i] = filtered_rank(n, t.head, known.heads(r, t.tail),
                                            [&](EntityId h) { return squared_norm_of_sum(head_row(h), fixed); });
      } else {
        const auto fixed = head_row(t.head);
        report.ranks[2 * i + 1] = filtered_rank(
            n, t.tail, known.tails(t.head, r), [&](EntityId c) { return squared_norm_of_sum(fixed, tail_row(c)); });
      }
    });
  }

  report.overall = summarize_ranks(report.ranks);
  report.per_relation.resize(m);
  std::vector<double> buf;
  for (RelationId r = 0; r < m; ++r) {
    buf.clear();
    for (std::size_t i : by_relation[r]) {
      buf.push_back(report.ranks[2 * i]);
      buf.push_back(report.ranks[2 * i + 1]);
    }
    report.per_relation[r] = summarize_ranks(buf);
  }
  return report;
}

nlohmann::json to_json(const RankingSummary& s) {
  return {{"queries", s.queries}, {"MRR", s.mrr},       {"MR", s.mr},
          {"H@1", s.hits1},       {"H@3", s.hits3},     {"H@10", s.hits10}};
}

nlohmann::json to_json(const RankingReport& r, const Vocabulary& vocab) {
  nlohmann::json j;
  j["overall"] = to_json(r.overall);
  j["tie_rule"] = "mid";
  j["queries_per_triple"] = 2;
  auto& per = j["per_relation"] = nlohmann::json::array();
  for (RelationId i = 0; i < r.per_relation.size(); ++i) {
    if (r.per_relation[i].queries == 0) continue;
    auto row = to_json(r.per_relation[i]);
    row["relation"] = relation_label(vocab, i);
    per.push_back(std::move(row));
  }
  return j;
}

std::string ranking_text(const RankingReport& r, const Vocabulary& vocab) {
  std::ostringstream out;
  char line[256];
  std::size_t width = 8;
  for (RelationId i = 0; i < r.per_relation.size(); ++i) width = std::max(width, relation_label(vocab, i).size());
  auto row = [&](const std::string& name, const RankingSummary& s) {
    std::snprintf(line, sizeof line, "%-*s %8zu %8.4f %10.2f %7.4f %7.4f %7.4f\n", static_cast<int>(width),
                  name.c_str(), s.queries, s.mrr, s.mr, s.hits1, s.hits3, s.hits10);
    out << line;
  };
  std::snprintf(line, sizeof line, "%-*s %8s %8s %10s %7s %7s %7s\n", static_cast<int>(width), "relation", "queries",
                "MRR", "MR", "H@1", "H@3", "H@10");
  out << line;
  for (RelationId i = 0; i < r.per_relation.size(); ++i) {
    if (r.per_relation[i].queries) row(relation_label(vocab, i), r.per_relation[i]);
  }
  row("ALL", r.overall);
  return out.str();
}

void write_per_relation_tsv(const std::filesystem::path& path, const RankingReport& r, const Vocabulary& vocab) {
  auto out = open_for_write(path);
  out << "relation\tqueries\tMRR\tMR\tH@1\tH@3\tH@10\n";
  for (RelationId i = 0; i < r.per_relation.size(); ++i) {
    const auto& s = r.per_relation[i];
    if (s.queries == 0) continue;
    out << relation_label(vocab, i) << '\t' << s.queries << '\t' << format_double(s.mrr) << '\t'
        << format_double(s.mr) << '\t' << format_double(s.hits1) << '\t' << format_double(s.hits3) << '\t'
        << format_double(s.hits10) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Classification

ThresholdChoice best_threshold(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("best_threshold: size mismatch");
  if (scores.empty()) return {};
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Start with the threshold below every score: everything predicted positive.
  std::size_t correct = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  ThresholdChoice best{scores[order.front()] - 1.0, static_cast<double>(correct) / scores.size()};
  std::size_t i = 0;
  while (i < order.size()) {
    // Move the threshold past every score equal to scores[order[i]].
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      correct += labels[order[i]] ? -1 : 1;
      ++i;
    }
    const double threshold = i < order.size() ? 0.5 * (v + scores[order[i]]) : v + 1.0;
    const double acc = static_cast<double>(correct) / scores.size();
    if (acc > best.accuracy) best = {threshold, acc};
  }
  return best;
}

Thresholds learn_thresholds(const Model& model, std::span<const LabeledTriple> validation) {
  const std::size_t m = model.num_relations();
  std::vector<std::vector<double>> scores(m);
  std::vector<std::vector<bool>> labels(m);
  std::vector<double> all_scores;
  std::vector<bool> all_labels;
  for (const auto& lt : validation) {
    const double s = score(model, lt.triple);
    scores[lt.triple.relation].push_back(s);
    labels[lt.triple.relation].push_back(lt.positive);
    all_scores.push_back(s);
    all_labels.push_back(lt.positive);
  }
  Thresholds t;
  t.per_relation.assign(m, 0.0);
  t.learned.assign(m, false);
  auto choose = [](const std::vector<double>& s, const std::vector<bool>& l) {
    std::unique_ptr<bool[]> flags(new bool[l.size()]);
    for (std::size_t i = 0; i < l.size(); ++i) flags[i] = l[i];
    return best_threshold(s, std::span<const bool>(flags.get(), l.size()));
  };
  t.global = choose(all_scores, all_labels).threshold;
  for (RelationId r = 0; r < m; ++r) {
    if (scores[r].empty()) continue;
    t.per_relation[r] = choose(scores[r], labels[r]).threshold;
    t.learned[r] = true;
  }
  return t;
}

ClassificationReport classify(const Model& model, const Thresholds& thresholds, std::span<const LabeledTriple> split) {
  ClassificationReport rep;
  rep.thresholds = thresholds;
  rep.relation_correct.assign(model.num_relations(), 0);
  rep.relation_total.assign(model.num_relations(), 0);
  for (const auto& lt : split) {
    const bool predicted = score(model, lt.triple) >= thresholds.at(lt.triple.relation);
    const bool ok = predicted == lt.positive;
    rep.correct += ok;
    rep.relation_correct[lt.triple.relation] += ok;
    ++rep.relation_total[lt.triple.relation];
  }
  rep.total = split.size();
  rep.accuracy = rep.total ? static_cast<double>(rep.correct) / static_cast<double>(rep.total) : 0.0;
  return rep;
}

nlohmann::json to_json(const ClassificationReport& r, const Vocabulary& vocab) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["correct"] = r.correct;
  j["total"] = r.total;
  j["global_threshold"] = r.thresholds.global;
  auto& per = j["per_relation"] = nlohmann::json::array();
  for (RelationId i = 0; i < r.relation_total.size(); ++i) {
    if (r.relation_total[i] == 0) continue;
    per.push_back({{"relation", relation_label(vocab, i)},
                   {"threshold", r.thresholds.at(i)},
                   {"learned", static_cast<bool>(i < r.thresholds.learned.size() && r.thresholds.learned[i])},
                   {"correct", r.relation_correct[i]},
                   {"total", r.relation_total[i]},
                   {"accuracy", static_cast<double>(r.relation_correct[i]) / static_cast<double>(r.relation_total[i])}});
  }
  return j;
}

void write_thresholds_tsv(const std::filesystem::path& path, const Thresholds& t, const Vocabulary& vocab) {
  auto out = open_for_write(path);
  out << "relation\tthreshold\tsource\n";
  for (RelationId i = 0; i < t.per_relation.size(); ++i) {
    out << relation_label(vocab, i) << '\t' << format_double(t.at(i)) << '\t' << (t.learned[i] ? "relation" : "global")
        << '\n';
  }
  out << "*\t" << format_double(t.global) << "\tglobal\n";
}

}  // namespace relwalk
