#include <algorithm>
#include <map>

#include "doctest.h"
#include "igar/errors.hpp"
#include "igar/metrics.hpp"
#include "oracles.hpp"

using namespace igar;

TEST_CASE("head average") {
  const Matrix a = Matrix::from_rows({{1, 0}, {0.25, 0.75}});
  CHECK(head_average(AttentionTensor({a})) == a);
  const Matrix avg =
      head_average(AttentionTensor({Matrix::from_rows({{1, 0}, {1, 0}}), Matrix::from_rows({{0, 1}, {0.5, 0.5}})}));
  CHECK(avg == Matrix::from_rows({{0.5, 0.5}, {0.75, 0.25}}));
  CHECK(head_average(AttentionTensor({a, a, a})) == a);
}

TEST_CASE("head average is order independent and stochastic") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6), heads = 1 + rng.below(5);
    std::vector<Matrix> hs;
    for (std::size_t h = 0; h < heads; ++h) {
      Matrix m(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = oracle::random_row(n, rng);
        std::copy(row.begin(), row.end(), m.row(i).begin());
      }
      hs.push_back(m);
    }
    const Matrix a = head_average(AttentionTensor(hs));
    std::reverse(hs.begin(), hs.end());
    const Matrix b = head_average(AttentionTensor(hs));
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(std::abs(a(i, j) - b(i, j)) <= 1e-15);
        total += a(i, j);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("ivar examples") {
  const ModalityMap m({Modality::Visual, Modality::Text, Modality::Other, Modality::ActionQuery});
  CHECK(ivar(Matrix::from_rows({{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 1, 0, 0}}), 3, m) == 1.0);
  CHECK(ivar(Matrix::from_rows({{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 0}}), 3, m) == 0.0);
  CHECK(ivar(Matrix::from_rows({{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0.6, 0.3, 0.1, 0}}), 3, m) ==
        doctest::Approx(0.3 / 0.9).epsilon(1e-12));
  CHECK_THROWS_AS(ivar(Matrix::from_rows({{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0.5, 0.5}}), 3, m),
                  UndefinedResult);
}

TEST_CASE("ivar properties") {
  Rng rng(31);
  const ModalityMap m({Modality::Visual, Modality::Visual, Modality::Text, Modality::Text, Modality::ActionQuery,
                       Modality::ActionQuery});
  for (int trial = 0; trial < 200; ++trial) {
    Matrix a(6, 6);
    for (std::size_t i = 0; i < 6; ++i) {
      const auto row = oracle::random_row(6, rng);
      std::copy(row.begin(), row.end(), a.row(i).begin());
      a(i, 0) += 0.01;
    }
    Matrix scaled = a;
    const double c = rng.uniform(0.1, 10);
    for (double& v : scaled.row(4)) v *= c;
    const double v4 = ivar(a, 4, m), v5 = ivar(a, 5, m);
    CHECK(v4 >= 0.0);
    CHECK(v4 <= 1.0);
    CHECK(ivar(scaled, 4, m) == doctest::Approx(v4).epsilon(1e-12));
    const double mean = ivar_over_queries(a, m);
    CHECK(mean == doctest::Approx((v4 + v5) / 2).epsilon(1e-12));
    CHECK(mean >= std::min(v4, v5) - 1e-15);
    CHECK(mean <= std::max(v4, v5) + 1e-15);
  }
}

TEST_CASE("lgs and success rate") {
  CHECK(lgs(96.8, 90.4) == 6.4);
  CHECK(lgs(95.8, 36.4) == 59.4);
  CHECK(lgs(50.0, 50.0) == 0.0);
  CHECK(success_rate(45, 50) == 90.0);
  CHECK(success_rate(1, 3) == 33.3);
  CHECK_THROWS(success_rate(1, 0));
}

TEST_CASE("aggregate") {
  std::vector<SuccessRecord> recs;
  for (std::uint64_t i = 0; i < 50; ++i) recs.push_back({i, Variant::Normal, i < 45, 2, 0.5});
  SuiteReport r = aggregate(recs);
  CHECK(r.at(Variant::Normal).sr == 90.0);
  CHECK(r.at(Variant::Normal).lgs == 0.0);
  CHECK_FALSE(r.has(Variant::V1));
  CHECK_THROWS_AS(r.at(Variant::V1), LookupError);

  std::vector<SuccessRecord> same;
  for (Variant v : kAllVariants)
    for (std::uint64_t i = 0; i < 4; ++i) same.push_back({same.size(), v, i % 2 == 0, 1, 0.25});
  const SuiteReport s = aggregate(same);
  for (Variant v : kAllVariants) CHECK(s.at(v).lgs == 0.0);

  CHECK_THROWS_AS(aggregate({{0, Variant::V1, true, 1, 0.5}}), InvalidInput);
}

TEST_CASE("aggregate matches a hand tally and ignores order") {
  const std::vector<SuccessRecord> fixture{
      {0, Variant::Normal, true, 2, 0.4},  {1, Variant::Normal, true, 2, 0.6}, {2, Variant::Normal, false, 6, 0.5},
      {3, Variant::Normal, true, 2, 0.5},  {4, Variant::V1, true, 2, 0.2},     {5, Variant::V1, false, 1, 0.9},
      {6, Variant::V1, false, 1, 0.8},     {7, Variant::V4, true, 2, 0.3},     {8, Variant::V4, true, 2, 0.3},
      {9, Variant::V4, false, 1, 0.6}};
  const SuiteReport r = aggregate(fixture);
  CHECK(r.at(Variant::Normal).sr == 75.0);
  CHECK(r.at(Variant::V1).sr == 33.3);
  CHECK(r.at(Variant::V4).sr == 66.7);
  CHECK(r.at(Variant::V1).lgs == 41.7);
  CHECK(r.at(Variant::V4).lgs == 8.3);
  CHECK(r.at(Variant::Normal).ivar_mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.at(Variant::V1).rollouts == 3);

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto shuffled = fixture;
    rng.shuffle(std::span<SuccessRecord>(shuffled));
    const SuiteReport s = aggregate(shuffled);
    for (Variant v : {Variant::Normal, Variant::V1, Variant::V4}) {
      CHECK(s.at(v).sr == r.at(v).sr);
      CHECK(s.at(v).lgs == r.at(v).lgs);
      CHECK(s.at(v).ivar_mean == r.at(v).ivar_mean);
    }
  }
}
