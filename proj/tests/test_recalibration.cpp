#include <cmath>
#include <cstring>

#include "doctest.h"
#include "igar/errors.hpp"
#include "igar/recalibration.hpp"
#include "oracles.hpp"

using namespace igar;

namespace {

double mass(const std::vector<double>& row, const IndexSet& s) {
  double t = 0.0;
  for (std::size_t j : s) t += row[j];
  return t;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// Four tokens: visual, text sink, text, action query. Token 1 carries a
// 40-unit spike on dimension 0.
struct Fixture {
  ModalityMap modality{{Modality::Visual, Modality::Text, Modality::Text, Modality::ActionQuery}};
  Matrix hidden = Matrix::from_rows({{0.1, 1, 1}, {40, 1, 1}, {0.1, 1, 1}, {0.1, 1, 1}});
  AttentionTensor attention{{Matrix::from_rows({{1, 0, 0, 0}, {0.5, 0.5, 0, 0}, {0.2, 0.4, 0.4, 0}, {0.3, 0.5, 0.1, 0.1}}),
                             Matrix::from_rows({{1, 0, 0, 0},
                                                {0.005, 0.995, 0, 0},
                                                {0.001, 0.5, 0.499, 0},
                                                {0.005, 0.7, 0.2, 0.095}})}};
};

}  // namespace

TEST_CASE("visual sink fraction") {
  const std::vector<double> row{0.1, 0.3, 0.6};
  CHECK(visual_sink_fraction(row, {}, {0, 1}, 1e-6) == 0.0);
  const std::vector<double> r2{0.2, 0.2, 0.6};
  CHECK(visual_sink_fraction(r2, {0}, {0, 1}, 1e-12) == doctest::Approx(0.5).epsilon(1e-9));
  const std::vector<double> r3{0.4, 0.0, 0.6};
  CHECK(visual_sink_fraction(r3, {0}, {0, 1}, 1e-6) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("head selection conditions") {
  const ModalityMap m({Modality::Visual, Modality::Visual, Modality::Text, Modality::ActionQuery});
  SinkReport sinks;
  RecalConfig cfg;
  SUBCASE("c2 fails on tiny visual mass") {
    const AttentionTensor a({Matrix::from_rows({{1, 0, 0, 0}, {0.5, 0.5, 0, 0}, {0, 0, 1, 0}, {0.003, 0.002, 0.9, 0.095}})});
    CHECK(select_head_queries(a, sinks, m, cfg, 1e-6).empty());
  }
  SUBCASE("no visual sinks: c2 alone") {
    const AttentionTensor a({Matrix::from_rows({{1, 0, 0, 0}, {0.5, 0.5, 0, 0}, {0, 0, 1, 0}, {0.25, 0.25, 0.4, 0.1}})});
    CHECK(select_head_queries(a, sinks, m, cfg, 1e-6) == SelectionSet{{0, 3}});
  }
  SUBCASE("c1 fails when sinks dominate the visual mass") {
    sinks.sinks = sinks.visual_sinks = {0};
    const AttentionTensor a({Matrix::from_rows({{1, 0, 0, 0}, {0.5, 0.5, 0, 0}, {0, 0, 1, 0}, {0.2, 0.2, 0.5, 0.1}})});
    CHECK(select_head_queries(a, sinks, m, cfg, 1e-6).empty());
  }
}

TEST_CASE("redistribution budget") {
  const std::vector<double> row{0.2, 0.5, 0.3};
  CHECK(redistribution_budget(row, {1}, 1.0) == 0.0);
  CHECK(redistribution_budget(row, {}, 0.6) == 0.0);
  CHECK(redistribution_budget(row, {1}, 0.6) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("redistribute_row examples") {
  const std::vector<double> row{0.2, 0.5, 0.3};
  const auto out = redistribute_row(row, {1}, {2}, 0.6);
  CHECK(out.row[0] == 0.2);
  CHECK(out.row[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(out.row[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.row[0] + out.row[1] + out.row[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(redistribute_row(row, {1}, {2}, 1.0).row == row);
  CHECK(redistribute_row(row, {}, {2}, 0.6).row == row);
}

TEST_CASE("starved rows are returned unchanged and flagged") {
  const std::vector<double> row{0.5, 0.5, 0.0};
  const auto out = redistribute_row(row, {1}, {2}, 0.6);
  CHECK(out.starved);
  CHECK(out.row == row);
  const auto none = redistribute_row(row, {1}, {}, 0.6);
  CHECK(none.starved);
  CHECK(none.row == row);
}

TEST_CASE("redistribution properties on random rows") {
  Rng rng(77);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(14);
    const auto row = oracle::random_row(n, rng);
    const auto [sinks, text] = oracle::random_partition(n, rng);
    const double p = rng.uniform();
    const auto out = redistribute_row(row, sinks, text, p).row;
    IndexSet all_text = sinks;
    all_text.insert(all_text.end(), text.begin(), text.end());
    std::sort(all_text.begin(), all_text.end());
    double in_sum = 0.0, out_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      in_sum += row[j];
      out_sum += out[j];
      CHECK(out[j] >= 0.0);
      if (!contains(all_text, j)) CHECK(bit_equal(out[j], row[j]));
    }
    CHECK(std::abs(in_sum - out_sum) <= 1e-9);
    CHECK(std::abs(mass(out, all_text) - mass(row, all_text)) <= 1e-9);
    CHECK(mass(out, text) >= mass(row, text) - 1e-15);
    for (std::size_t a : text)
      for (std::size_t b : text)
        if (row[a] > 0 && row[b] > 0) CHECK(std::abs(out[a] / out[b] - row[a] / row[b]) <= 1e-9 * row[a] / row[b]);
  }
}

TEST_CASE("igar_layer on a hand-checked fixture") {
  const Fixture f;
  const LayerRecalibration r = igar_layer(f.attention, f.hidden, f.modality, SinkDetectConfig{}, RecalConfig{});
  CHECK(r.sinks.text_sinks == IndexSet{1});
  CHECK(r.sinks.visual_sinks.empty());
  CHECK(r.selection == SelectionSet{{0, 1}, {0, 2}, {0, 3}});
  const Matrix& h0 = r.attention.head(0);
  CHECK(h0.row(1)[0] == 0.5);
  CHECK(h0.row(1)[1] == 0.5);  // starved: no receiver mass
  CHECK(h0(2, 0) == 0.2);
  CHECK(h0(2, 1) == doctest::Approx(0.24).epsilon(1e-12));
  CHECK(h0(2, 2) == doctest::Approx(0.56).epsilon(1e-12));
  CHECK(h0(3, 0) == 0.3);
  CHECK(h0(3, 1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(h0(3, 2) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(h0(3, 3) == 0.1);
  CHECK(r.attention.head(1) == f.attention.head(1));
  bool flagged = false;
  for (const auto& d : r.rows)
    if (d.head == 0 && d.query == 1) flagged = d.starved;
  CHECK(flagged);
  r.attention.validate();
}

TEST_CASE("igar_layer identities") {
  const Fixture f;
  RecalConfig cfg;
  cfg.p = 1.0;
  CHECK(igar_layer(f.attention, f.hidden, f.modality, SinkDetectConfig{}, cfg).attention == f.attention);
  const Matrix flat(4, 3, 1.0);
  CHECK(igar_layer(f.attention, flat, f.modality, SinkDetectConfig{}, RecalConfig{}).attention == f.attention);
}

TEST_CASE("drain_visual_sinks extension") {
  const ModalityMap m({Modality::Visual, Modality::Visual, Modality::Text, Modality::ActionQuery});
  const Matrix hidden = Matrix::from_rows({{40, 1}, {0.1, 1}, {0.1, 1}, {0.1, 1}});
  const AttentionTensor a({Matrix::from_rows({{1, 0, 0, 0}, {0.5, 0.5, 0, 0}, {0.3, 0.3, 0.4, 0}, {0.1, 0.4, 0.4, 0.1}})});
  RecalConfig cfg;
  cfg.rho = 1.0;
  const auto literal = igar_layer(a, hidden, m, SinkDetectConfig{}, cfg);
  CHECK(literal.attention == a);  // no text sinks: nothing to drain
  cfg.drain_visual_sinks = true;
  const auto drained = igar_layer(a, hidden, m, SinkDetectConfig{}, cfg);
  CHECK(drained.attention.head(0)(3, 0) == doctest::Approx(0.06).epsilon(1e-12));
  CHECK(drained.attention.head(0)(3, 2) == doctest::Approx(0.44).epsilon(1e-12));
  CHECK(drained.attention.head(0)(3, 1) == 0.4);
  drained.attention.validate();
}

TEST_CASE("recal config validation") {
  RecalConfig c;
  c.p = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.rho = -0.1;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  CHECK_THROWS_AS(AttentionTensor({Matrix::from_rows({{0.5, 0.4}})}).validate(), InvalidInput);
}
