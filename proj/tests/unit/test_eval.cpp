#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "relwalk/eval.hpp"

using namespace relwalk;
using testutil::random_model;

namespace {

// Sort-and-filter reference: score every candidate, drop known ones other
// than the target, sort descending and take the mid position of the
// target's tie group.
double oracle_rank(const Model& m, const Triple& target, OpenSlot open, const std::vector<Triple>& known) {
  std::vector<std::pair<double, bool>> scored;  // (score, is_target)
  for (EntityId e = 0; e < m.num_entities(); ++e) {
    Triple c = target;
    (open == OpenSlot::head ? c.head : c.tail) = e;
    const bool is_target = c == target;
    if (!is_target && std::find(known.begin(), known.end(), c) != known.end()) continue;
    scored.emplace_back(score(m, c), is_target);
  }
  std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
  const double ts = score(m, target);
  std::size_t first = 0, last = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].first > ts) first = i + 1;
    if (scored[i].first >= ts) last = i + 1;
  }
  // positions first+1 .. last share the target's score
  return (static_cast<double>(first + 1) + static_cast<double>(last)) / 2.0;
}

}  // namespace

TEST_CASE("top-scoring target has rank 1") {
  Model m(3, 1, 2);
  m.entity(0)[0] = 1.0;
  m.entity(1)[0] = 5.0;
  m.entity(2)[0] = 0.5;
  const KnownIndex none;
  CHECK(rank_candidates(m, {0, 0, 1}, OpenSlot::tail, none) == 1.0);
  CHECK(rank_candidates(m, {0, 0, 2}, OpenSlot::tail, none) == 3.0);
}

TEST_CASE("all-equal scores give the mid rank") {
  Model m(9, 1, 2);  // all-zero entities: every score is 0
  const std::vector<Triple> known{{0, 0, 3}, {0, 0, 4}};
  const std::vector<std::span<const Triple>> splits{known};
  const KnownIndex k = build_known_index(splits);
  // 9 candidates, 2 filtered (3 and 4) except the target 3 itself -> f = 8
  CHECK(rank_candidates(m, {0, 0, 3}, OpenSlot::tail, k) == 1.0 + 7.0 / 2.0);
  // target not known: only 3 and 4 are filtered -> f = 7
  CHECK(rank_candidates(m, {0, 0, 5}, OpenSlot::tail, k) == 1.0 + 6.0 / 2.0);
}

TEST_CASE("summary arithmetic") {
  const std::vector<double> ones{1, 1, 1};
  const auto a = summarize_ranks(ones);
  CHECK(a.mrr == 1.0);
  CHECK(a.mr == 1.0);
  CHECK(a.hits1 == 1.0);
  CHECK(a.hits10 == 1.0);
  const std::vector<double> two{1, 4};
  const auto b = summarize_ranks(two);
  CHECK(b.queries == 2);
  CHECK(b.mrr == doctest::Approx(0.625));
  CHECK(b.mr == 2.5);
  CHECK(b.hits1 == 0.5);
  CHECK(b.hits3 == 0.5);
  CHECK(b.hits10 == 1.0);
  const std::vector<double> mid{1.5, 10.5};
  CHECK(summarize_ranks(mid).hits1 == 0.0);
  CHECK(summarize_ranks(mid).hits10 == 0.5);
}

TEST_CASE("filtered ranks equal the sort-and-filter oracle") {
  Rng rng(2024);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 20, m = 3;
    const Model model = random_model(n, m, 4, rng);
    const auto train = testutil::random_triples(40, n, m, rng);
    const auto test = testutil::random_triples(15, n, m, rng);
    const std::vector<std::span<const Triple>> splits{train, test};
    const KnownIndex k = build_known_index(splits);
    std::vector<Triple> known(train);
    known.insert(known.end(), test.begin(), test.end());
    const RankingReport rep_all = link_prediction(model, test, k);
    REQUIRE(rep_all.ranks.size() == 2 * test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      CHECK(rep_all.ranks[2 * i] == oracle_rank(model, test[i], OpenSlot::head, known));
      CHECK(rep_all.ranks[2 * i + 1] == oracle_rank(model, test[i], OpenSlot::tail, known));
    }
    CHECK(rep_all.overall == summarize_ranks(rep_all.ranks));
    CHECK(rep_all.overall.hits1 <= rep_all.overall.hits3);
    CHECK(rep_all.overall.hits3 <= rep_all.overall.hits10);
    CHECK(rep_all.overall.mrr > 0.0);
    CHECK(rep_all.overall.mrr <= 1.0);
    CHECK(rep_all.overall.mr >= 1.0);
    CHECK(link_prediction(model, test, k, 3) == rep_all);
  }
}

TEST_CASE("tie-heavy models match the oracle too") {
  Rng rng(6);
  Model model(12, 2, 2);
  for (std::size_t e = 0; e < 12; ++e) {
    model.entity(e)[0] = double(rng.uniform_index(3));
    model.entity(e)[1] = double(rng.uniform_index(2));
  }
  const auto test = testutil::random_triples(20, 12, 2, rng);
  const std::vector<std::span<const Triple>> splits{test};
  const KnownIndex k = build_known_index(splits);
  const std::vector<Triple> known(test);
  const auto rep = link_prediction(model, test, k);
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(rep.ranks[2 * i] == oracle_rank(model, test[i], OpenSlot::head, known));
    CHECK(rep.ranks[2 * i + 1] == oracle_rank(model, test[i], OpenSlot::tail, known));
  }
}

TEST_CASE("filtering only lowers ranks and per-relation aggregation is consistent") {
  Rng rng(9);
  const Model model = random_model(15, 2, 3, rng);
  const auto train = testutil::random_triples(60, 15, 2, rng);
  const auto test = testutil::random_triples(10, 15, 2, rng);
  const std::vector<std::span<const Triple>> splits{train, test};
  const KnownIndex k = build_known_index(splits);
  const KnownIndex none;
  const auto filtered = link_prediction(model, test, k);
  const auto raw = link_prediction(model, test, none);
  for (std::size_t q = 0; q < filtered.ranks.size(); ++q) CHECK(raw.ranks[q] >= filtered.ranks[q]);
  for (RelationId r = 0; r < 2; ++r) {
    std::vector<double> mine;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (test[i].relation != r) continue;
      mine.push_back(filtered.ranks[2 * i]);
      mine.push_back(filtered.ranks[2 * i + 1]);
    }
    CHECK(filtered.per_relation[r] == summarize_ranks(mine));
  }
}

TEST_CASE("ranks are invariant under a monotone score transform") {
  // scaling every entity by sqrt(2) doubles every score; the ordering is unchanged
  Rng rng(10);
  const Model model = random_model(15, 1, 3, rng);
  Model scaled = model;
  scaled.entities() *= std::sqrt(2.0);
  const auto test = testutil::random_triples(10, 15, 1, rng);
  const std::vector<std::span<const Triple>> splits{test};
  const KnownIndex k = build_known_index(splits);
  CHECK(link_prediction(model, test, k).ranks == link_prediction(scaled, test, k).ranks);
}

namespace {

double accuracy_at(const std::vector<double>& s, const std::vector<bool>& y, double th) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < s.size(); ++i) ok += ((s[i] >= th) == y[i]);
  return double(ok) / double(s.size());
}

}  // namespace

TEST_CASE("threshold sweep on hand examples") {
  {
    const std::vector<double> s{3, 5, 1, 4};
    const bool y[] = {true, true, false, false};
    const auto c = best_threshold(s, y);
    CHECK(c.accuracy == 0.75);
    CHECK(((c.threshold > 1 && c.threshold < 3) || (c.threshold > 4 && c.threshold < 5)));
  }
  {
    const std::vector<double> s{10, 11, 1, 2};
    const bool y[] = {true, true, false, false};
    const auto c = best_threshold(s, y);
    CHECK(c.accuracy == 1.0);
    CHECK(c.threshold > 2);
    CHECK(c.threshold < 10);
  }
}

TEST_CASE("threshold sweep matches an exhaustive search") {
  Rng rng(55);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t len = 1 + rng.uniform_index(12);
    std::vector<double> s(len);
    std::vector<bool> y(len);
    auto yb = std::make_unique<bool[]>(len);
    for (std::size_t i = 0; i < len; ++i) {
      s[i] = double(rng.uniform_index(6));  // plenty of ties
      y[i] = rng.coin();
      yb[i] = y[i];
    }
    double best = 0.0;
    std::vector<double> cands{-1e9, 1e9};
    for (double a : s) {
      for (double b : s) cands.push_back((a + b) / 2);
      cands.push_back(a);
    }
    for (double t : cands) best = std::max(best, accuracy_at(s, y, t));
    const auto c = best_threshold(s, std::span<const bool>(yb.get(), len));
    CHECK(c.accuracy == doctest::Approx(best));
    CHECK(accuracy_at(s, y, c.threshold) == doctest::Approx(best));
  }
}

TEST_CASE("classification with extreme thresholds and hand counts") {
  Rng rng(1);
  const Model model = random_model(6, 2, 3, rng);
  std::vector<LabeledTriple> allpos;
  for (int i = 0; i < 5; ++i) allpos.push_back({{rng.uniform_index(6), rng.uniform_index(2), rng.uniform_index(6)}, true});
  Thresholds low{{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()},
                 {true, true},
                 0.0};
  CHECK(classify(model, low, allpos).accuracy == 1.0);
  Thresholds high{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()}, {true, true}, 0.0};
  CHECK(classify(model, high, allpos).accuracy == 0.0);

  // hand-counted mix: threshold between the two scores of relation 0
  const double s_a = score(model, {0, 0, 1});
  const double s_b = score(model, {2, 0, 3});
  const double th = (s_a + s_b) / 2;
  const std::vector<LabeledTriple> mix{{{0, 0, 1}, true}, {{2, 0, 3}, false}, {{0, 0, 1}, false}, {{4, 1, 5}, true}};
  Thresholds t{{th, 0.0}, {true, false}, -std::numeric_limits<double>::infinity()};
  const auto rep = classify(model, t, mix);
  const bool a_pos = s_a >= th, b_pos = s_b >= th;
  const std::size_t expect = (a_pos == true) + (b_pos == false) + (a_pos == false) + 1;
  CHECK(rep.correct == expect);
  CHECK(rep.total == 4);
  CHECK(rep.accuracy == double(expect) / 4);
  CHECK(rep.relation_total[0] == 3);
  CHECK(rep.relation_total[1] == 1);
}

TEST_CASE("learned thresholds fall back to the global one for unseen relations") {
  Rng rng(14);
  const Model model = random_model(10, 3, 3, rng);
  std::vector<LabeledTriple> valid;
  for (int i = 0; i < 20; ++i) {
    const Triple t{rng.uniform_index(10), rng.uniform_index(2), rng.uniform_index(10)};
    valid.push_back({t, rng.coin()});
  }
  const Thresholds th = learn_thresholds(model, valid);
  CHECK(!th.learned[2]);
  CHECK(th.at(2) == th.global);
  // the per-relation choice is optimal on that relation's validation data
  for (RelationId r = 0; r < 2; ++r) {
    std::vector<double> s;
    std::vector<bool> y;
    for (const auto& l : valid) {
      if (l.triple.relation != r) continue;
      s.push_back(score(model, l.triple));
      y.push_back(l.positive);
    }
    if (s.empty()) continue;
    double best = 0.0;
    for (double a : s) {
      best = std::max(best, accuracy_at(s, y, a));
      best = std::max(best, accuracy_at(s, y, a + 1e-12 * std::abs(a) + 1e-300));
    }
    best = std::max(best, accuracy_at(s, y, 1e300));
    CHECK(accuracy_at(s, y, th.at(r)) == doctest::Approx(best));
  }
}

TEST_CASE("report writers") {
  Rng rng(3);
  const Model model = random_model(5, 1, 2, rng);
  const Vocabulary v = Vocabulary::from_names({"a", "b", "c", "d", "e"}, {"likes"});
  const std::vector<Triple> test{{0, 0, 1}, {2, 0, 3}};
  const std::vector<std::span<const Triple>> splits{test};
  const auto rep = link_prediction(model, test, build_known_index(splits));
  const auto j = to_json(rep, v);
  CHECK(j["overall"]["queries"] == 4);
  CHECK(ranking_text(rep, v).find("likes") != std::string::npos);
  const auto dir = testutil::scratch_dir("eval_writers");
  write_per_relation_tsv(dir / "per.tsv", rep, v);
  const std::string tsv = testutil::read_bytes(dir / "per.tsv");
  CHECK(tsv.rfind("relation\tqueries\tMRR\tMR\tH@1\tH@3\tH@10\n", 0) == 0);
  CHECK(tsv.find("likes\t4\t") != std::string::npos);
}
