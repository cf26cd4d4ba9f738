// Acceptance checks 1-11. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "gradcheck.hpp"
#include "igar/harness.hpp"
#include "igar/sink_policy.hpp"
#include "oracles.hpp"

using namespace igar;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void fail(const std::string& why) {
    if (pass) detail << why;
    pass = false;
  }
};

RunConfig sink_config(bool intervention) {
  RunConfig cfg = RunConfig::defaults();
  cfg.rollouts = 50;
  cfg.intervention = intervention;
  return cfg;
}

std::string body(const std::string& csv) { return csv.substr(csv.find('\n') + 1); }

AttentionTensor random_attention(std::size_t heads, std::size_t n, Rng& rng) {
  std::vector<Matrix> hs;
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix logits(n, n);
    for (double& v : logits.data()) v = rng.normal(0.0, 2.0);
    hs.push_back(softmax_rows(logits));
  }
  return AttentionTensor(std::move(hs));
}

void criterion1(Outcome& o) {
  const double a = lgs(96.8, 90.4), b = lgs(95.8, 36.4);
  o.detail << "lgs(96.8,90.4)=" << a << " lgs(95.8,36.4)=" << b;
  if (a != 6.4 || b != 59.4) o.pass = false;
}

void criterion2(Outcome& o) {
  Rng rng(20251);
  std::size_t rows = 0;
  for (; rows < 10000 && o.pass; ++rows) {
    const std::size_t n = 2 + rng.below(30);
    const std::vector<double> row = oracle::random_row(n, rng);
    const auto [sinks, text] = oracle::random_partition(n, rng);
    const double p = rows % 50 == 0 ? (rows % 100 == 0 ? 0.0 : 1.0) : rng.uniform();
    const RedistributedRow r = redistribute_row(row, sinks, text, p);
    double sum_in = 0, sum_out = 0, text_in = 0, text_out = 0, ns_in = 0, ns_out = 0;
    for (std::size_t j = 0; j < n; ++j) {
      sum_in += row[j];
      sum_out += r.row[j];
      const bool s = contains(sinks, j), t = contains(text, j);
      if (s || t) {
        text_in += row[j];
        text_out += r.row[j];
      } else if (r.row[j] != row[j]) {
        o.fail("entry outside sinks and text changed");
      }
      if (t) {
        ns_in += row[j];
        ns_out += r.row[j];
      }
    }
    if (std::abs(sum_in - sum_out) > 1e-9) o.fail("row sum drift");
    if (std::abs(text_in - text_out) > 1e-9) o.fail("text mass drift");
    if (ns_out < ns_in) o.fail("non-sink text mass fell");
  }
  o.detail << rows << " rows";
}

void criterion3(Outcome& o) {
  Rng rng(33);
  std::size_t p1 = 0, empty = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 3 + rng.below(10), d = 2 + rng.below(7);
    const AttentionTensor att = random_attention(1 + rng.below(3), n, rng);
    const ModalityMap mod(oracle::random_labels(n, rng));
    Matrix hidden = oracle::random_hidden(n, d, rng);
    hidden(rng.below(n), rng.below(d)) = 80.0;
    RecalConfig rc;
    rc.p = 1.0;
    if (!(igar_layer(att, hidden, mod, SinkDetectConfig{}, rc).attention == att)) o.fail("p=1 changed attention");
    ++p1;
    Matrix flat(n, d);
    for (double& v : flat.data()) v = rng.uniform(-1.0, 1.0);
    const LayerRecalibration r = igar_layer(att, flat, mod, SinkDetectConfig{}, RecalConfig{});
    if (!r.sinks.sinks.empty()) o.fail("flat hidden state produced sinks");
    if (!(r.attention == att)) o.fail("empty sink set changed attention");
    ++empty;
  }

  const RunConfig off = sink_config(false);
  const auto policy = make_policy(off);
  const auto suites = load_suites(off);
  const RunResult base = run(off, policy, suites);
  const auto same = [&](RunConfig cfg, const char* what) {
    cfg.intervention = true;
    const RunResult r = run(cfg, policy, suites);
    if (body(format_episodes(r)) != body(format_episodes(base))) o.fail(std::string(what) + " run differs from off");
    for (std::size_t i = 0; i < r.reports.size(); ++i)
      for (Variant v : kAllVariants)
        if (r.reports[i].at(v).sr != base.reports[i].at(v).sr || r.reports[i].at(v).lgs != base.reports[i].at(v).lgs)
          o.fail(std::string(what) + " report differs from off");
  };
  RunConfig c = off;
  c.recal.layers = 0;
  same(c, "L=0");
  c = off;
  c.recal.p = 1.0;
  same(c, "p=1");
  c = off;
  c.sink.tau = 1e9;
  same(c, "no-sink");
  o.detail << p1 << " p=1 layers, " << empty << " sink-free layers, 3 full runs";
}

void criterion4(Outcome& o) {
  Rng rng(44);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(16), d = 1 + rng.below(8);
    const Matrix h = oracle::random_hidden(n, d, rng);
    const auto labels = oracle::random_labels(n, rng);
    SinkDetectConfig cfg;
    cfg.gamma = rng.uniform(1.0, 4.0);
    cfg.k = 1 + rng.below(5);
    cfg.tau = rng.uniform(2.0, 30.0);
    const SinkReport got = detect_sinks(h, ModalityMap(labels), cfg);
    const oracle::Sinks want = oracle::brute_force_sinks(h, labels, cfg.gamma, cfg.k, cfg.tau, cfg.epsilon);
    const auto as_set = [](const IndexSet& s) { return std::set<std::size_t>(s.begin(), s.end()); };
    if (got.spike_dims != want.dims || as_set(got.sinks) != want.sinks || as_set(got.visual_sinks) != want.visual ||
        as_set(got.text_sinks) != want.text)
      ++mismatches;
  }
  o.detail << "1000 matrices, " << mismatches << " mismatches";
  if (mismatches) o.pass = false;
}

void criterion5(Outcome& o) {
  Rng rng(55);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int i = 0; i < 50; ++i) {
    const gradcheck::Config c = gradcheck::random_config(rng);
    const gradcheck::Result r = gradcheck::check(c.spec, c.tokens, c.target, 1e-5);
    worst = std::max(worst, r.worst);
    checked += r.checked;
  }
  o.detail << "50 configs, " << checked << " parameters, worst relative error " << worst;
  if (!(worst <= 1e-4)) o.pass = false;
}

void criteria6to8(Outcome& c6, Outcome& c7, Outcome& c8) {
  const RunConfig off = sink_config(false), on = sink_config(true);
  const auto policy = make_policy(off);
  const auto suites = load_suites(off);
  const RunResult a = run(off, policy, suites);
  const RunResult b = run(on, policy, suites);
  if (a.failures || b.failures) {
    c6.fail("episode failures");
    c7.fail("episode failures");
  }
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    const SuiteReport& ra = a.reports[i];
    const SuiteReport& rb = b.reports[i];
    c6.detail << ra.suite << " N=" << ra.at(Variant::Normal).sr;
    c7.detail << rb.suite << " N=" << rb.at(Variant::Normal).sr;
    if (ra.at(Variant::Normal).sr < 95.0) c6.pass = false;
    for (Variant v : kContradictionVariants) {
      const VariantStats& sa = ra.at(v);
      const VariantStats& sb = rb.at(v);
      c6.detail << " " << to_string(v) << "=" << sa.sr;
      c7.detail << " " << to_string(v) << "=" << sb.sr << "/" << sb.lgs;
      if (sa.sr < 90.0 || sa.lgs > 10.0) c6.pass = false;
      if (sb.sr > 10.0 || sb.lgs < 85.0) c7.pass = false;
    }
    const double gap = std::abs(rb.at(Variant::Normal).sr - ra.at(Variant::Normal).sr);
    c8.detail << ra.suite << " off=" << ra.at(Variant::Normal).sr << " on=" << rb.at(Variant::Normal).sr << "; ";
    if (gap > 2.0) c8.pass = false;
    c6.detail << "; ";
    c7.detail << "; ";
  }
  if (!c8.pass) c7.pass = false;
}

void criterion9(Outcome& o) {
  const TrainResult trained = train_shortcut_policy(ShortcutRecipe{});
  RunConfig cfg = RunConfig::defaults();
  cfg.policy = PolicySource::Train;
  cfg.rollouts = 50;
  for (auto& s : cfg.suites) s.generate->variants = {Variant::V1};
  const auto policy = std::make_shared<const PolicySpec>(trained.spec);
  const RunResult r = run(cfg, policy, load_suites(cfg));
  o.detail << "final loss " << trained.epoch_loss.back() << "; ";
  for (const SuiteReport& rep : r.reports) {
    const double n = rep.at(Variant::Normal).sr, v1 = rep.at(Variant::V1).sr;
    const double ratio = n > 0 ? v1 / n : 0.0;
    o.detail << rep.suite << " N=" << n << " V1=" << v1 << " ratio=" << ratio << "; ";
    if (n < 95.0 || ratio < 0.8) o.pass = false;
  }
}

void criterion10(Outcome& o) {
  const std::vector<Variant> all{kContradictionVariants.begin(), kContradictionVariants.end()};
  std::size_t cases = 0, bad = 0;
  for (const char* name : {"spatial", "object", "goal"}) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 1234ull}) {
      const BenchmarkSuite s = build_suite(name, 10, all, seed);
      for (const auto& c : s.cases) {
        if (!feasible(c.scene, c.normal)) ++bad;
        for (const auto& [v, ins] : c.contra) {
          ++cases;
          if (!check_case(c.scene, c.normal, ins, v).ok()) ++bad;
        }
      }
      const std::string text = dump_suite(s);
      if (text != dump_suite(build_suite(name, 10, all, seed))) o.fail("suite not byte-reproducible");
      if (dump_suite(suite_from_json(Json::parse(text))) != text) o.fail("suite does not survive a reload");
    }
  }
  o.detail << cases << " contradiction cases, " << bad << " invalid";
  if (bad) o.pass = false;
}

void criterion11(Outcome& o) {
  const RunConfig off = sink_config(false);
  const auto policy = make_policy(off);
  const auto suites = load_suites(off);
  const RunResult base = run(off, policy, suites);
  const SweepSpec spec{SweepAxis::P, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}};
  const SweepResult r = sweep(spec, off, policy, suites);
  const std::size_t expected = spec.values.size() * suites.size() * kAllVariants.size();
  if (r.rows.size() != expected || !r.errors.empty()) o.fail("incomplete grid");
  std::map<std::tuple<double, std::string, Variant>, double> lgs_at;
  for (const SweepRow& row : r.rows) lgs_at[{row.value, row.suite, row.variant}] = row.lgs;
  for (const SuiteReport& rep : base.reports) {
    for (Variant v : kContradictionVariants) {
      const double off_lgs = rep.at(v).lgs;
      const double at1 = lgs_at[{1.0, rep.suite, v}], at06 = lgs_at[{0.6, rep.suite, v}];
      if (at1 != off_lgs) o.fail("p=1 row differs from off");
      if (at06 < at1) o.fail("p=0.6 LGS below p=1");
      if (v == Variant::V1) o.detail << rep.suite << " V1 LGS p=1 " << at1 << " p=0.6 " << at06 << "; ";
    }
  }
  o.detail << r.rows.size() << "/" << expected << " rows";
}

}  // namespace

int main() {
  std::vector<Outcome> outcomes(12);
  const std::vector<std::pair<std::vector<int>, std::function<void()>>> plan = {
      {{1}, [&] { criterion1(outcomes[1]); }},
      {{2}, [&] { criterion2(outcomes[2]); }},
      {{3}, [&] { criterion3(outcomes[3]); }},
      {{4}, [&] { criterion4(outcomes[4]); }},
      {{5}, [&] { criterion5(outcomes[5]); }},
      {{6, 7, 8}, [&] { criteria6to8(outcomes[6], outcomes[7], outcomes[8]); }},
      {{9}, [&] { criterion9(outcomes[9]); }},
      {{10}, [&] { criterion10(outcomes[10]); }},
      {{11}, [&] { criterion11(outcomes[11]); }},
  };
  bool all = true;
  for (const auto& [ids, fn] : plan) {
    const auto start = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      for (int id : ids) outcomes[id].fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (int id : ids) {
      std::cout << "criterion " << id << ": " << (outcomes[id].pass ? "PASS" : "FAIL") << " (" << secs << " s) "
                << outcomes[id].detail.str() << std::endl;
      all = all && outcomes[id].pass;
    }
  }
  return all ? 0 : 1;
}
