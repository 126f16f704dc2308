#include <cstdlib>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "relwalk/kgdata.hpp"

using namespace relwalk;

TEST_CASE("parse assigns ids in first-appearance order") {
  std::istringstream in("a\tr\tb\n");
  Vocabulary v;
  const auto t = parse_triples(in, v, VocabMode::build);
  REQUIRE(t.size() == 1);
  CHECK(t[0] == Triple{0, 0, 1});
  CHECK(v.entity_names() == std::vector<std::string>{"a", "b"});
  CHECK(v.relation_names() == std::vector<std::string>{"r"});
}

TEST_CASE("empty stream gives nothing") {
  std::istringstream in("");
  Vocabulary v;
  CHECK(parse_triples(in, v, VocabMode::build).empty());
  CHECK(v.empty());
}

TEST_CASE("CRLF and blank lines are accepted") {
  std::istringstream in("x\tp\ty\r\n\r\n\ny\tq\tz\r\n");
  Vocabulary v;
  const auto t = parse_triples(in, v, VocabMode::build);
  REQUIRE(t.size() == 2);
  CHECK(t[1] == Triple{1, 1, 2});
  CHECK(v.entity_name(2) == "z");
}

TEST_CASE("malformed line reports its line number") {
  std::istringstream in("a\tr\tb\n\nbroken line\n");
  Vocabulary v;
  try {
    parse_triples(in, v, VocabMode::build);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream four("a\tr\tb\tc\n");
  CHECK_THROWS_AS(parse_triples(four, v, VocabMode::build), ParseError);
}

TEST_CASE("frozen vocabulary rejects unknown names") {
  Vocabulary v = Vocabulary::from_names({"a", "b"}, {"r"});
  std::istringstream ok("b\tr\ta\n");
  CHECK(parse_triples(ok, v, VocabMode::frozen)[0] == Triple{1, 0, 0});
  std::istringstream bad("a\tr\tc\n");
  CHECK_THROWS_AS(parse_triples(bad, v, VocabMode::frozen), VocabularyError);
  std::istringstream badrel("a\ts\tb\n");
  CHECK_THROWS_AS(parse_triples(badrel, v, VocabMode::frozen), VocabularyError);
  CHECK(v.num_entities() == 2);
  CHECK_THROWS_AS(Vocabulary::from_names({"a", "a"}, {}), VocabularyError);
}

TEST_CASE("labeled triples") {
  std::istringstream in("a\tr\tb\t1\nb\tr\ta\t-1\n");
  Vocabulary v;
  const auto t = parse_labeled_triples(in, v, VocabMode::build);
  REQUIRE(t.size() == 2);
  CHECK(t[0].positive);
  CHECK(!t[1].positive);
  CHECK(t[1].triple == Triple{1, 0, 0});
  std::istringstream bad("a\tr\tb\t0\n");
  CHECK_THROWS_AS(parse_labeled_triples(bad, v, VocabMode::build), ParseError);
}

TEST_CASE("parse, write, parse round-trips") {
  Rng rng(2);
  Vocabulary v;
  for (int i = 0; i < 30; ++i) v.add_entity("ent_" + std::to_string(i * 7 % 30));
  for (int i = 0; i < 4; ++i) v.add_relation("/rel/" + std::to_string(i));
  const auto triples = testutil::random_triples(100, 30, 4, rng);
  std::ostringstream out;
  write_triples(out, triples, v);
  std::istringstream in(out.str());
  Vocabulary v2 = v;
  CHECK(parse_triples(in, v2, VocabMode::frozen) == triples);
  // a fresh vocabulary gets the same triples back up to renaming
  std::istringstream in2(out.str());
  Vocabulary fresh;
  const auto again = parse_triples(in2, fresh, VocabMode::build);
  std::ostringstream out2;
  write_triples(out2, again, fresh);
  CHECK(out2.str() == out.str());
}

TEST_CASE("known index membership and per-key lists") {
  const std::vector<Triple> train{{0, 0, 1}};
  const std::vector<Triple> test{{0, 0, 2}};
  const std::vector<std::span<const Triple>> splits{train, test};
  const KnownIndex k = build_known_index(splits);
  CHECK(k.contains({0, 0, 1}));
  CHECK(k.contains({0, 0, 2}));
  CHECK(!k.contains({0, 1, 2}));
  const auto tails = k.tails(0, 0);
  CHECK(std::vector<EntityId>(tails.begin(), tails.end()) == std::vector<EntityId>{1, 2});
  CHECK(k.tails(0, 1).empty());
  CHECK(k.heads(0, 2).size() == 1);
}

TEST_CASE("known index agrees with a brute-force scan") {
  Rng rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    const auto a = testutil::random_triples(10, 6, 3, rng);
    const auto b = testutil::random_triples(5, 6, 3, rng);
    const std::vector<std::span<const Triple>> splits{a, b};
    const KnownIndex k = build_known_index(splits);
    std::set<Triple> all(a.begin(), a.end());
    all.insert(b.begin(), b.end());
    CHECK(k.size() == all.size());
    for (EntityId x = 0; x < 6; ++x) {
      for (RelationId r = 0; r < 3; ++r) {
        std::vector<EntityId> tails, heads;
        for (const auto& t : all) {
          if (t.head == x && t.relation == r) tails.push_back(t.tail);
          if (t.tail == x && t.relation == r) heads.push_back(t.head);
        }
        std::sort(heads.begin(), heads.end());
        const auto kt = k.tails(x, r);
        const auto kh = k.heads(r, x);
        CHECK(std::vector<EntityId>(kt.begin(), kt.end()) == tails);
        CHECK(std::vector<EntityId>(kh.begin(), kh.end()) == heads);
        for (EntityId y = 0; y < 6; ++y) CHECK(k.contains({x, r, y}) == all.contains({x, r, y}));
      }
    }
  }
}

TEST_CASE("negatives with two entities have one alternative per slot") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto neg = sample_negatives({0, 0, 1}, 1, 2, rng);
    REQUIRE(neg.size() == 1);
    CHECK((neg[0] == Triple{1, 0, 1} || neg[0] == Triple{0, 0, 0}));
  }
  CHECK_THROWS(sample_negatives({0, 0, 0}, 1, 1, rng));
}

TEST_CASE("every negative differs from the positive in exactly one slot") {
  Rng rng(9);
  const Triple pos{3, 1, 7};
  const auto negs = sample_negatives(pos, 100, 10, rng);
  CHECK(negs.size() == 100);
  for (const auto& n : negs) {
    CHECK(n.relation == pos.relation);
    CHECK(((n.head != pos.head) + (n.tail != pos.tail)) == 1);
    CHECK(n != pos);
  }
}

TEST_CASE("slot choice and replacement are uniform") {
  Rng rng(123);
  const std::size_t n = 50;
  const Triple pos{10, 0, 20};
  std::size_t heads = 0;
  std::vector<std::size_t> counts(n, 0);
  const std::size_t total = 100000;
  const auto negs = sample_negatives(pos, total, n, rng);
  for (const auto& t : negs) {
    if (t.head != pos.head) {
      ++heads;
      ++counts[t.head];
    }
  }
  CHECK(std::abs(double(heads) / total - 0.5) < 0.01);
  CHECK(counts[pos.head] == 0);
  // each of the 49 replacements expects heads/49; allow 5 sigma
  const double expect = double(heads) / (n - 1);
  for (std::size_t e = 0; e < n; ++e) {
    if (e != pos.head) CHECK(std::abs(counts[e] - expect) < 5 * std::sqrt(expect));
  }
}

TEST_CASE("labeled corruption pairs every positive with a negative") {
  Rng rng(4);
  const std::vector<Triple> pos{{0, 0, 1}, {2, 1, 3}};
  const auto out = corrupt_labeled_split(pos, 5, rng);
  REQUIRE(out.size() == 4);
  std::size_t positives = 0;
  for (const auto& l : out) positives += l.positive;
  CHECK(positives == 2);
}

TEST_CASE("load_dataset shares one vocabulary across splits") {
  const auto dir = testutil::scratch_dir("kgdata_load");
  testutil::write_text(dir / "train.txt", "a\tr\tb\nb\tr\tc\n");
  testutil::write_text(dir / "valid.txt", "c\ts\td\n");
  testutil::write_text(dir / "test.txt", "d\tr\te\n");
  const Dataset ds = load_dataset({dir / "train.txt", dir / "valid.txt", dir / "test.txt", {}, {}});
  CHECK(ds.vocab.num_entities() == 5);
  CHECK(ds.vocab.num_relations() == 2);
  CHECK(ds.test[0] == Triple{3, 0, 4});
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& t : *split) CHECK(ds.known.contains(t));
  }
  const Vocabulary frozen = Vocabulary::from_names({"a", "b", "c"}, {"r", "s"});
  CHECK_THROWS_AS(load_dataset({dir / "train.txt", dir / "valid.txt", dir / "test.txt", {}, {}}, &frozen),
                  VocabularyError);
  CHECK_THROWS(load_dataset({dir / "train.txt", dir / "valid.txt", dir / "missing.txt", {}, {}}));
}

TEST_CASE("WN18RR statistics (needs RELWALK_WN18RR_DIR)") {
  const char* dir = std::getenv("RELWALK_WN18RR_DIR");
  if (!dir) {
    MESSAGE("RELWALK_WN18RR_DIR not set, skipping");
    return;
  }
  const std::filesystem::path p(dir);
  const Dataset ds = load_dataset({p / "train.txt", p / "valid.txt", p / "test.txt", {}, {}});
  CHECK(ds.train.size() == 86835);
  CHECK(ds.vocab.num_entities() == 40943);
  CHECK(ds.vocab.num_relations() == 11);
}
