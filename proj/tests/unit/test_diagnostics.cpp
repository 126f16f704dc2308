#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "relwalk/diagnostics.hpp"
#include "relwalk/textio.hpp"

using namespace relwalk;

TEST_CASE("nu_R on hand examples") {
  const Matrix I = Matrix::Identity(2, 2);
  CHECK(nu_r({I, I}) == 0.0);
  Matrix r1(2, 2);
  r1 << 1, 1, 0, 1;
  // R1^T R1 = [[1,1],[1,2]]
  CHECK(nu_r({r1, I}) == 2.0);
  CHECK(nu_r({I, r1}) == 2.0);
  Rng rng(1);
  CHECK(nu_r({random_orthogonal(8, rng), random_orthogonal(8, rng)}) < 1e-8);
}

TEST_CASE("nu_R matches a direct off-diagonal sum and is rotation invariant") {
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix a = Matrix::Random(5, 5), b = Matrix::Random(5, 5);
    const Matrix ga = a.transpose() * a, gb = b.transpose() * b;
    double expect = 0.0;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (i != j) expect += std::abs(ga(i, j)) + std::abs(gb(i, j));
      }
    }
    CHECK(nu_r({a, b}) == doctest::Approx(expect).epsilon(1e-12));
    const Matrix q = random_orthogonal(5, rng);
    CHECK(nu_r({q * a, q * b}) == doctest::Approx(expect).epsilon(1e-10));
    CHECK(nu_r({a, b}) >= 0.0);
  }
}

TEST_CASE("zero entities give Z equal to the subset size") {
  const Model m(30, 2, 4);
  Rng rng(3);
  const auto row = concentration_stats(m, 1, 10, 12, rng);
  CHECK(row.mean_c == 12.0);
  CHECK(row.mean_c_prime == 12.0);
  CHECK(row.sigma_c == 0.0);
  CHECK(row.combined == 0.0);
  CHECK(row.subset_size == 12);
  Rng rng2(3);
  CHECK(concentration_stats(m, 0, 10, 100, rng2).subset_size == 30);
  CHECK_THROWS(concentration_stats(m, 0, 1, 10, rng2));
}

TEST_CASE("concentration statistics match a naive recomputation") {
  Rng rng(4);
  const Model m = testutil::random_model(40, 1, 3, rng, 0.5);
  Rng a(9);
  const auto row = concentration_stats(m, 0, 50, 40, a);
  CHECK(row.combined * row.combined == doctest::Approx(row.sigma_c * row.sigma_c + row.sigma_c_prime * row.sigma_c_prime));
  CHECK(row.cv_c == doctest::Approx(row.sigma_c / row.mean_c));
  CHECK(row.sigma_c > 0.0);
  // with the full entity set the subset choice does not matter; redo the sampling by hand
  Rng b(9);
  const auto again = concentration_stats(m, 0, 50, 40, b);
  CHECK(again.sigma_c == row.sigma_c);
  CHECK(again.mean_c_prime == row.mean_c_prime);
}

TEST_CASE("Gaussian-prior entities concentrate") {
  Rng rng(5);
  const std::size_t n = 10000, d = 50;
  Model m(n, 1, d);
  for (Eigen::Index i = 0; i < m.entities().size(); ++i) m.entities().data()[i] = rng.normal() / std::sqrt(double(d));
  m.relation(0).r1 = random_orthogonal(d, rng);
  m.relation(0).r2 = random_orthogonal(d, rng);
  const auto row = concentration_stats(m, 0, 500, 10000, rng);
  CHECK(row.cv_c <= 0.05);
  CHECK(row.cv_c_prime <= 0.05);
}

TEST_CASE("concentration report is deterministic and thread independent") {
  Rng rng(6);
  const Model m = testutil::random_model(50, 3, 4, rng, 0.3);
  const ConcentrationConfig cfg{20, 30, 77};
  const auto a = concentration_report(m, cfg);
  const auto b = concentration_report(m, cfg, 3);
  REQUIRE(a.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(a[r].sigma_c == b[r].sigma_c);
    CHECK(a[r].mean_c_prime == b[r].mean_c_prime);
    CHECK(a[r].relation == r);
  }
}

TEST_CASE("correlate") {
  const std::vector<double> a{1, 2, 3, 5, 8};
  std::vector<double> b, c;
  for (double x : a) {
    b.push_back(2 * x + 3);
    c.push_back(-x);
  }
  CHECK(*correlate(a, b) == doctest::Approx(1.0));
  CHECK(*correlate(a, c) == doctest::Approx(-1.0));
  CHECK(*correlate(a, a) == doctest::Approx(1.0));
  const std::vector<double> d{2, 1, 4, 3, 3};
  CHECK(*correlate(a, d) == doctest::Approx(*correlate(d, a)));
  const std::vector<double> flat{1, 1, 1, 1, 1};
  CHECK(!correlate(a, flat));
  const std::vector<double> two{1, 2};
  CHECK_THROWS(correlate(two, two));
  CHECK_THROWS(correlate(a, two));
}

TEST_CASE("Gram dumps round-trip") {
  const auto dir = testutil::scratch_dir("gram");
  const Matrix I = Matrix::Identity(3, 3);
  dump_gram(dir / "id.tsv", {I, I}, WhichMatrix::r1);
  CHECK(testutil::read_bytes(dir / "id.tsv") == "1\t0\t0\n0\t1\t0\n0\t0\t1\n");
  Rng rng(7);
  const Matrix r = Matrix::Random(100, 100);
  dump_gram(dir / "g.tsv", {I, r}, WhichMatrix::r2);
  const Matrix back = read_matrix_tsv(dir / "g.tsv");
  REQUIRE(back.rows() == 100);
  REQUIRE(back.cols() == 100);
  CHECK(back == gram({I, r}, WhichMatrix::r2));
}

TEST_CASE("diagnostics TSV has one row per relation and a correlation footer") {
  const auto dir = testutil::scratch_dir("diag_tsv");
  const Vocabulary v = Vocabulary::from_names({"a"}, {"p", "q", "r"});
  std::vector<DiagnosticsRow> rows;
  for (RelationId r = 0; r < 3; ++r) {
    DiagnosticsRow row;
    row.relation = r;
    row.hits10 = 0.1 * double(r + 1);
    row.nu = 3.0 - double(r);
    row.concentration.sigma_c = 1.0;
    row.concentration.combined = double(r);
    rows.push_back(row);
  }
  write_diagnostics_tsv(dir / "d.tsv", rows, v);
  const std::string s = testutil::read_bytes(dir / "d.tsv");
  CHECK(s.find("relation\tH@10\tnu_R\t") == 0);
  CHECK(s.find("\nq\t") != std::string::npos);
  CHECK(s.find("pearson_vs_H@10") != std::string::npos);
  const std::string footer = s.substr(s.find("pearson_vs_H@10"));
  const auto fields = split(footer.substr(0, footer.size() - 1), '\t');
  REQUIRE(fields.size() == 8);
  CHECK(parse_double(fields[1]) == doctest::Approx(1.0));
  CHECK(parse_double(fields[2]) == doctest::Approx(-1.0));  // nu falls as H@10 rises
  CHECK(fields[3] == "NA");                                 // constant sigma_c
}
