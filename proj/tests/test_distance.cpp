#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "treenas/distance.hpp"
#include "treenas/error.hpp"

using namespace treenas;

namespace {

OutputMatrix rows(const std::vector<std::vector<double>>& r) {
  OutputMatrix m(r.size(), r.front().size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) m(i, j) = r[i][j];
  return m;
}

OutputMatrix random_outputs(std::mt19937_64& gen, std::size_t b, std::size_t c) {
  std::gamma_distribution<double> g(0.7, 1.0);
  OutputMatrix m(b, c);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += m(i, j) = g(gen) + 1e-6;
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= s;
  }
  return m;
}

std::vector<double> row_of(const OutputMatrix& m, std::size_t r) { return {m.row(r).begin(), m.row(r).end()}; }

}  // namespace

TEST_CASE("hand-computed distances") {
  const auto p = rows({{0.5, 0.5}});
  const auto q = rows({{0.9, 0.1}});
  CHECK(output_distance(p, q, Measure::l2) == doctest::Approx(std::sqrt(0.32)));
  CHECK(output_distance(p, q, Measure::kl) == doctest::Approx(0.4394449).epsilon(1e-6));
  CHECK(output_distance(p, p, Measure::kl) == 0.0);
  // two rows: the mean of per-row distances
  const auto pp = rows({{0.5, 0.5}, {1.0, 0.0}});
  const auto qq = rows({{0.9, 0.1}, {1.0, 0.0}});
  CHECK(output_distance(pp, qq, Measure::l2) == doctest::Approx(std::sqrt(0.32) / 2));
  CHECK_THROWS_AS(output_distance(p, pp, Measure::l2), ShapeMismatch);
  CHECK(parse_measure("cross_entropy") == Measure::cross_entropy);
  CHECK_THROWS_AS(parse_measure("cosine"), InvalidConfig);
}

TEST_CASE("property: measures agree with brute-force formulas") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = 1 + trial % 5, c = 2 + trial % 9;
    const auto a = random_outputs(gen, b, c);
    const auto z = random_outputs(gen, b, c);
    double l2 = 0.0, skl = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
      const auto x = row_of(a, r), y = row_of(z, r);
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      l2 += std::sqrt(s);
      skl += 0.5 * (oracle::kl(x, y) + oracle::kl(y, x));
    }
    REQUIRE(output_distance(a, z, Measure::l2) == doctest::Approx(l2 / b).epsilon(1e-9));
    REQUIRE(output_distance(a, z, Measure::kl) == doctest::Approx(skl / b).epsilon(1e-6));
    // symmetrized cross-entropy minus entropies is the symmetric KL
    REQUIRE(output_distance(a, z, Measure::cross_entropy) == doctest::Approx(skl / b).epsilon(1e-6));
  }
}

TEST_CASE("property: KL is nonnegative and zero exactly on equal inputs") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_outputs(gen, 3, 4);
    const auto z = random_outputs(gen, 3, 4);
    REQUIRE(output_distance(a, z, Measure::kl) > 0.0);
    REQUIRE(output_distance(a, a, Measure::kl) == 0.0);
    REQUIRE(output_distance(z, z, Measure::cross_entropy) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("zero probabilities are floored") {
  const auto p = rows({{1.0, 0.0}});
  const auto q = rows({{0.0, 1.0}});
  const double d = output_distance(p, q, Measure::kl);
  CHECK(std::isfinite(d));
  CHECK(d > 10.0);
  auto bad = p;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(output_distance(bad, q, Measure::kl), NonFinite);
}

TEST_CASE("property: built matrices are symmetric, zero-diagonal, nonnegative, finite") {
  std::mt19937_64 gen(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + trial % 6;
    std::vector<OutputMatrix> outs;
    for (std::size_t i = 0; i < n; ++i) outs.push_back(random_outputs(gen, 2, 3));
    const auto measure = static_cast<Measure>(trial % 3);
    const auto d = build_matrix(outs, measure, 1);
    REQUIRE(d.size() == n);
    d.validate();
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(d(i, i) == 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        REQUIRE(d(i, j) == d(j, i));
        REQUIRE(d(i, j) >= 0.0);
        REQUIRE(std::isfinite(d(i, j)));
        if (i != j) REQUIRE(d(i, j) == output_distance(outs[i], outs[j], measure));
      }
    }
  }
}

TEST_CASE("thread count does not change the matrix") {
  std::mt19937_64 gen(1);
  std::vector<OutputMatrix> outs;
  for (int i = 0; i < 40; ++i) outs.push_back(random_outputs(gen, 4, 5));
  const auto one = build_matrix(outs, Measure::kl, 1);
  const auto four = build_matrix(outs, Measure::kl, 4);
  CHECK(std::equal(one.condensed().begin(), one.condensed().end(), four.condensed().begin()));
}

TEST_CASE("encoding and random matrices") {
  const auto s = product_space("p", 3, 2);
  const auto d = encoding_matrix(s, EncodingKind::vector, true);
  // "000" vs "100": first node differs by 1 at weight 1; "000" vs "001": weight 1/4
  CHECK(d(0, 4) == doctest::Approx(1.0));
  CHECK(d(0, 1) == doctest::Approx(0.25));
  const auto oh = encoding_matrix(s, EncodingKind::one_hot, false);
  CHECK(oh(0, 7) == doctest::Approx(std::sqrt(6.0)));

  const auto r = random_matrix(50, 3);
  r.validate();
  for (double v : r.condensed()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  const auto r2 = random_matrix(50, 3);
  CHECK(std::equal(r.condensed().begin(), r.condensed().end(), r2.condensed().begin()));
  CHECK_THROWS_AS(random_matrix(1, 0), InvalidConfig);
}

TEST_CASE("matrix validation and persistence") {
  CHECK_THROWS_AS(DistanceMatrix(1).validate(), DegenerateMatrix);
  auto m = DistanceMatrix::from_dense({{0, 1, 2}, {1, 0, 3}, {2, 3, 0}}, "l2");
  CHECK(m(2, 1) == 3.0);
  CHECK_THROWS_AS(DistanceMatrix::from_dense({{0, 1}, {2, 0}}), DegenerateMatrix);
  CHECK_THROWS_AS(DistanceMatrix::from_dense({{1, 1}, {1, 0}}), DegenerateMatrix);
  auto neg = m;
  neg.set(0, 1, -1.0);
  CHECK_THROWS_AS(neg.validate(), DegenerateMatrix);

  const auto dir = std::filesystem::temp_directory_path() / "treenas_test_distance";
  std::filesystem::create_directories(dir);
  for (const char* name : {"m.json", "m.bin"}) {
    const auto path = (dir / name).string();
    m.save(path);
    const auto back = DistanceMatrix::load(path);
    CHECK(back.size() == 3);
    CHECK(back.measure() == "l2");
    CHECK(std::equal(m.condensed().begin(), m.condensed().end(), back.condensed().begin()));
  }
  {
    std::ofstream junk(dir / "junk.bin");
    junk << "nope";
  }
  CHECK_THROWS_AS(DistanceMatrix::load((dir / "junk.bin").string()), SchemaError);
  std::filesystem::remove_all(dir);
}
