#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "igar/errors.hpp"
#include "igar/mini_vla.hpp"
#include "igar/sink_policy.hpp"
#include "igar/tokenizer.hpp"

using namespace igar;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Vec rmsnorm(const Vec& x, const Matrix& gain) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double r = std::sqrt(ss / static_cast<double>(x.size()) + 1e-6);
  Vec y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = gain(0, k) * x[k] / r;
  return y;
}

Vec vecmat(const Vec& x, const Matrix& w) {
  Vec y(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t i = 0; i < w.rows(); ++i) y[j] += x[i] * w(i, j);
  return y;
}

double gelu_ref(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
}

// Straight-line forward pass written independently of the library kernels.
Vec naive_logits(const PolicySpec& s, const TokenSequence& t) {
  const auto& sh = s.shape;
  const std::size_t n = t.size(), d = sh.d_model, dh = d / sh.heads;
  Mat x(n, Vec(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      x[i][c] = s.tok_emb(t.ids[i], c) + s.pos_emb(i, c);
      for (std::size_t f = 0; f < sh.features; ++f) x[i][c] += t.features(i, f) * s.feat_proj(f, c);
    }
  for (const auto& L : s.layers) {
    Mat q(n), k(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec y = rmsnorm(x[i], L.attn_gain);
      q[i] = vecmat(y, L.wq);
      k[i] = vecmat(y, L.wk);
      v[i] = vecmat(y, L.wv);
    }
    Mat z(n, Vec(d, 0.0));
    for (std::size_t h = 0; h < sh.heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        Vec sc(i + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (std::size_t e = 0; e < dh; ++e) dot += q[i][h * dh + e] * k[j][h * dh + e];
          sc[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, sc[j]);
        }
        double tot = 0.0;
        for (double& a : sc) tot += (a = std::exp(a - mx));
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t e = 0; e < dh; ++e) z[i][h * dh + e] += sc[j] / tot * v[j][h * dh + e];
      }
    for (std::size_t i = 0; i < n; ++i) {
      const Vec o = vecmat(z[i], L.wo);
      for (std::size_t c = 0; c < d; ++c) x[i][c] += o[c];
      Vec u = vecmat(rmsnorm(x[i], L.ff_gain), L.w1);
      for (std::size_t f = 0; f < u.size(); ++f) u[f] = gelu_ref(u[f] + L.b1(0, f));
      const Vec ff = vecmat(u, L.w2);
      for (std::size_t c = 0; c < d; ++c) x[i][c] += ff[c] + L.b2(0, c);
    }
  }
  Vec logits(sh.actions, 0.0);
  const auto& aq = t.modality.action_queries();
  for (std::size_t qi : aq) {
    const Vec r = vecmat(rmsnorm(x[qi], s.final_gain), s.w_out);
    for (std::size_t a = 0; a < sh.actions; ++a) logits[a] += r[a] / static_cast<double>(aq.size());
  }
  for (std::size_t a = 0; a < sh.actions; ++a) logits[a] += s.b_out(0, a);
  return logits;
}

PolicySpec random_spec(std::uint64_t seed, std::size_t layers = 2, std::size_t aq = 1) {
  PolicyShape sh;
  sh.layers = layers;
  sh.action_queries = aq;
  Rng rng(seed);
  PolicySpec s = PolicySpec::random(sh, rng, 0.3);
  for (auto& L : s.layers) {
    for (double& g : L.attn_gain.data()) g = rng.uniform(0.5, 1.5);
    for (double& b : L.b1.data()) b = rng.normal(0, 0.1);
  }
  return s;
}

TokenSequence sample_tokens(std::uint64_t seed, std::size_t aq = 1) {
  Rng rng(seed);
  const SceneTask t = generate_scene(SuiteKind::Object, rng);
  return tokenize(WorldState(t.scene), t.instruction, aq);
}

bool attention_rows_ok(const ForwardTrace& tr) {
  for (const auto& l : tr.layers) {
    l.pre.validate(1e-9);
    l.post.validate(1e-9);
  }
  return true;
}

}  // namespace

TEST_CASE("forward matches the straight-line oracle") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const PolicySpec s = random_spec(seed, 1 + seed % 3, 1 + seed % 2);
    const TokenSequence t = sample_tokens(seed * 13, s.shape.action_queries);
    const ForwardTrace tr = forward(s, t);
    const Vec ref = naive_logits(s, t);
    REQUIRE(tr.logits.size() == ref.size());
    for (std::size_t a = 0; a < ref.size(); ++a) CHECK(std::abs(tr.logits[a] - ref[a]) <= 1e-12);
    CHECK(tr.layers.size() == s.shape.layers);
  }
}

TEST_CASE("gelu") {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    CHECK(gelu(x) == doctest::Approx(gelu_ref(x)).epsilon(1e-14));
    const double h = 1e-6;
    CHECK(gelu_derivative(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("trace invariants without intervention") {
  const PolicySpec s = random_spec(3);
  const TokenSequence t = sample_tokens(3);
  const ForwardTrace a = forward(s, t), b = forward(s, t);
  CHECK(a.logits == b.logits);
  for (const auto& l : a.layers) {
    CHECK(l.pre == l.post);
    CHECK_FALSE(l.recalibration.has_value());
  }
  CHECK(attention_rows_ok(a));
}

TEST_CASE("identity interventions are bit-identical") {
  const PolicySpec s = build_sink_policy(1);
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const SceneTask task = generate_scene(static_cast<SuiteKind>(i % 3), rng);
    const TokenSequence t = tokenize(WorldState(task.scene), task.instruction);
    const ForwardTrace off = forward(s, t);
    Intervention p1;
    p1.recal.p = 1.0;
    CHECK(forward(s, t, p1).logits == off.logits);
    Intervention l0;
    l0.recal.layers = 0;
    const ForwardTrace z = forward(s, t, l0);
    CHECK(z.logits == off.logits);
    for (const auto& l : z.layers) CHECK(l.pre == l.post);
  }
}

TEST_CASE("intervention locality and row sums") {
  const PolicySpec s = build_sink_policy(1);
  Rng rng(10);
  const SceneTask task = generate_scene(SuiteKind::Goal, rng);
  const TokenSequence t = tokenize(WorldState(task.scene), task.instruction);
  Intervention one;
  one.recal.layers = 1;
  const ForwardTrace tr = forward(s, t, one);
  CHECK(tr.layers[0].recalibration.has_value());
  for (std::size_t l = 1; l < tr.layers.size(); ++l) {
    CHECK(tr.layers[l].pre == tr.layers[l].post);
    CHECK_FALSE(tr.layers[l].recalibration.has_value());
  }
  CHECK(attention_rows_ok(tr));
  CHECK(attention_rows_ok(forward(s, t, Intervention{})));
}

TEST_CASE("layer clamp") {
  const PolicySpec s = build_sink_policy(1);
  RecalConfig r;
  CHECK(intervened_layers(s, r) == s.shape.layers);
  r.layers = 1;
  CHECK(intervened_layers(s, r) == 1);
}

TEST_CASE("weights round trip") {
  const PolicySpec s = random_spec(4);
  std::stringstream ss;
  write_weights(s, ss);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 8) == std::string("IGARVLA\0", 8));
  std::stringstream in(bytes);
  const PolicySpec back = read_weights(in);
  CHECK(back.shape.d_model == s.shape.d_model);
  std::stringstream again;
  write_weights(back, again);
  CHECK(again.str() == bytes);
  std::stringstream bad("NOTAVLA!rest");
  CHECK_THROWS_AS(read_weights(bad), InvalidInput);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_weights(truncated), InvalidInput);
}

TEST_CASE("input validation") {
  const PolicySpec s = random_spec(5);
  TokenSequence t = sample_tokens(5);
  t.ids[0] = 999;
  CHECK_THROWS_AS(forward(s, t), InvalidInput);
  PolicyShape bad;
  bad.heads = 5;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = {};
  bad.actions = 1;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("sink policy contract examples") {
  const auto spec = std::make_shared<const PolicySpec>(build_sink_policy(7));
  const VlaPolicy plain(spec, std::nullopt), igar(spec, Intervention{});
  const Scene scene = probe_scene_bank().front();
  const std::size_t salient = scene.most_salient_object();
  const SceneObject& top = scene.objects[salient];

  Instruction same;
  same.verb = Verb::Pick;
  same.operand = {top.category, top.color};
  const WorldState w(scene);
  CHECK(plain.decide(w, same).action == Action{ActionKind::Pick, salient, Relation::On});
  const Action chosen = igar.decide(w, same).action;
  CHECK(chosen.kind == ActionKind::Pick);
  CHECK(same.operand.matches(scene.objects[chosen.slot]));

  Instruction absent = same;
  for (std::size_t c = 0; c < kNumColors; ++c) {
    const auto col = static_cast<Color>(c);
    bool used = false;
    for (const auto& o : scene.objects) used |= o.category == top.category && o.color == col;
    if (!used) absent.operand.color = col;
  }
  REQUIRE_FALSE(feasible(scene, absent));
  CHECK(plain.decide(w, absent).action == Action{ActionKind::Pick, salient, Relation::On});
  CHECK(igar.decide(w, absent).action.kind == ActionKind::Abstain);

  const ForwardTrace tr = plain.trace(w, same);
  const SinkReport sinks = detect_sinks(tr.layers[0].input, tr.modality, SinkDetectConfig{});
  CHECK(contains(sinks.sinks, layout::kBos));
  CHECK(contains(sinks.text_sinks, layout::kBos));
}

TEST_CASE("sink policy passes the sampled probe and ignores its seed") {
  const PolicySpec a = build_sink_policy(1), b = build_sink_policy(2);
  CHECK(verify_sink_contract(a, ProbeDepth::Sampled).ok());
  const TokenSequence t = sample_tokens(17);
  CHECK(forward(a, t).logits == forward(b, t).logits);
  CHECK(probe_scene_bank().size() == 20);
  CHECK(probe_grammar().size() == 4632);
}
