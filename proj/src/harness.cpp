#include "igar/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "igar/errors.hpp"
#include "igar/sink_policy.hpp"
#include "igar/tokenizer.hpp"

namespace igar {

namespace fs = std::filesystem;

std::string_view to_string(PolicySource s) {
  switch (s) {
    case PolicySource::Sink: return "sink";
    case PolicySource::Weights: return "weights";
    case PolicySource::Train: return "train";
  }
  return "sink";
}

PolicySource parse_policy_source(std::string_view name) {
  for (auto s : {PolicySource::Sink, PolicySource::Weights, PolicySource::Train})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown policy source '" + std::string(name) + "' (expected sink, weights or train)");
}

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

void check_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_into(const Json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

Json variants_json(const std::vector<Variant>& vs) {
  Json a = Json::array();
  for (Variant v : vs) a.push_back(to_string(v));
  return a;
}

Json recipe_json(const ShortcutRecipe& r) {
  return {{"seed", r.seed},
          {"scenes", r.scenes},
          {"dropout", r.dropout},
          {"init_scale", r.init_scale},
          {"lr", r.options.lr},
          {"epochs", r.options.epochs},
          {"batch_size", r.options.batch_size},
          {"shape",
           {{"layers", r.shape.layers},
            {"heads", r.shape.heads},
            {"d_model", r.shape.d_model},
            {"ff_hidden", r.shape.ff_hidden}}}};
}

ShortcutRecipe recipe_from(const Json& j, ShortcutRecipe r) {
  check_keys(j, {"seed", "scenes", "dropout", "init_scale", "lr", "epochs", "batch_size", "shape"}, "policy.train");
  read_into(j, "seed", r.seed);
  read_into(j, "scenes", r.scenes);
  read_into(j, "dropout", r.dropout);
  read_into(j, "init_scale", r.init_scale);
  read_into(j, "lr", r.options.lr);
  read_into(j, "epochs", r.options.epochs);
  read_into(j, "batch_size", r.options.batch_size);
  if (j.contains("shape")) {
    const Json& s = j.at("shape");
    check_keys(s, {"layers", "heads", "d_model", "ff_hidden"}, "policy.train.shape");
    read_into(s, "layers", r.shape.layers);
    read_into(s, "heads", r.shape.heads);
    read_into(s, "d_model", r.shape.d_model);
    read_into(s, "ff_hidden", r.shape.ff_hidden);
  }
  return r;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  const char* names[] = {"spatial", "object", "goal"};
  for (std::uint64_t i = 0; i < 3; ++i) {
    GenerateSpec g;
    g.suite = names[i];
    g.seed = i + 1;
    cfg.suites.push_back({"", g});
  }
  return cfg;
}

void RunConfig::validate() const {
  if (rollouts == 0) throw ConfigError("rollouts must be >= 1");
  if (step_limit == 0) throw ConfigError("step_limit must be >= 1");
  if (suites.empty()) throw ConfigError("no suites configured");
  try {
    sink.validate();
    recal.validate();
    train.shape.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (policy == PolicySource::Weights) {
    if (weights_path.empty()) throw ConfigError("policy source 'weights' needs a weights path");
    if (!fs::exists(weights_path)) throw ConfigError("weights file not found: " + weights_path);
  }
  for (const auto& s : suites) {
    if (s.generate) {
      if (s.generate->cases == 0) throw ConfigError("suite '" + s.generate->suite + "': cases must be >= 1");
      try {
        parse_suite_kind(s.generate->suite);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    } else if (!fs::exists(s.path)) {
      throw ConfigError("suite file not found: " + s.path);
    }
  }
}

Json to_json(const RunConfig& cfg) {
  Json suites = Json::array();
  for (const auto& s : cfg.suites) {
    if (s.generate) {
      suites.push_back({{"generate",
                         {{"suite", s.generate->suite},
                          {"seed", s.generate->seed},
                          {"cases", s.generate->cases},
                          {"variants", variants_json(s.generate->variants)}}}});
    } else {
      suites.push_back(s.path);
    }
  }
  Json policy = {{"source", to_string(cfg.policy)}};
  if (cfg.policy == PolicySource::Weights) policy["weights"] = cfg.weights_path;
  if (cfg.policy == PolicySource::Train) policy["train"] = recipe_json(cfg.train);
  return {{"policy", policy},
          {"suites", suites},
          {"rollouts", cfg.rollouts},
          {"step_limit", cfg.step_limit},
          {"intervention", cfg.intervention},
          {"sink", {{"gamma", cfg.sink.gamma}, {"k", cfg.sink.k}, {"tau", cfg.sink.tau}, {"epsilon", cfg.sink.epsilon}}},
          {"recal",
           {{"rho", cfg.recal.rho},
            {"alpha", cfg.recal.alpha},
            {"p", cfg.recal.p},
            {"layers", cfg.recal.layers},
            {"drain_visual_sinks", cfg.recal.drain_visual_sinks}}},
          {"seed", cfg.seed}};
}

RunConfig config_from_json(const Json& j, RunConfig cfg) {
  try {
    check_keys(j, {"policy", "suites", "rollouts", "step_limit", "intervention", "sink", "recal", "seed", "output_dir",
                   "workers"},
               "config");
    if (j.contains("policy")) {
      const Json& p = j.at("policy");
      check_keys(p, {"source", "weights", "train"}, "policy");
      if (p.contains("source")) cfg.policy = parse_policy_source(p.at("source").get<std::string>());
      read_into(p, "weights", cfg.weights_path);
      if (p.contains("train")) cfg.train = recipe_from(p.at("train"), cfg.train);
    }
    if (j.contains("suites")) {
      cfg.suites.clear();
      for (const auto& s : j.at("suites")) {
        if (s.is_string()) {
          cfg.suites.push_back({s.get<std::string>(), std::nullopt});
          continue;
        }
        check_keys(s, {"generate"}, "suites[]");
        const Json& g = s.at("generate");
        check_keys(g, {"suite", "seed", "cases", "variants"}, "suites[].generate");
        GenerateSpec spec;
        read_into(g, "suite", spec.suite);
        read_into(g, "seed", spec.seed);
        read_into(g, "cases", spec.cases);
        if (g.contains("variants")) {
          spec.variants.clear();
          for (const auto& v : g.at("variants")) spec.variants.push_back(parse_variant(v.get<std::string>()));
        }
        cfg.suites.push_back({"", spec});
      }
    }
    read_into(j, "rollouts", cfg.rollouts);
    read_into(j, "step_limit", cfg.step_limit);
    read_into(j, "intervention", cfg.intervention);
    if (j.contains("sink")) {
      const Json& s = j.at("sink");
      check_keys(s, {"gamma", "k", "tau", "epsilon"}, "sink");
      read_into(s, "gamma", cfg.sink.gamma);
      read_into(s, "k", cfg.sink.k);
      read_into(s, "tau", cfg.sink.tau);
      read_into(s, "epsilon", cfg.sink.epsilon);
    }
    if (j.contains("recal")) {
      const Json& r = j.at("recal");
      check_keys(r, {"rho", "alpha", "p", "layers", "drain_visual_sinks"}, "recal");
      read_into(r, "rho", cfg.recal.rho);
      read_into(r, "alpha", cfg.recal.alpha);
      read_into(r, "p", cfg.recal.p);
      read_into(r, "layers", cfg.recal.layers);
      read_into(r, "drain_visual_sinks", cfg.recal.drain_visual_sinks);
    }
    read_into(j, "seed", cfg.seed);
    read_into(j, "output_dir", cfg.output_dir);
    read_into(j, "workers", cfg.workers);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const LookupError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  // A run manifest carries its config verbatim.
  if (j.is_object() && j.contains("tool_version") && j.contains("config")) return config_from_json(j.at("config"), base);
  return config_from_json(j, base);
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(canonical_dump(to_json(cfg)))); }

std::uint64_t episode_seed(std::uint64_t suite_seed, std::size_t case_id, Variant variant, std::size_t rollout) {
  unsigned char bytes[25];
  auto put = [&](std::size_t off, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes[off + i] = static_cast<unsigned char>(v >> (8 * i));
  };
  put(0, suite_seed);
  put(8, case_id);
  bytes[16] = static_cast<unsigned char>(variant);
  put(17, rollout);
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes), sizeof bytes));
}

std::shared_ptr<const PolicySpec> make_policy(const RunConfig& cfg) {
  switch (cfg.policy) {
    case PolicySource::Sink: return std::make_shared<const PolicySpec>(build_sink_policy(cfg.seed));
    case PolicySource::Weights:
      try {
        return std::make_shared<const PolicySpec>(load_weights(cfg.weights_path));
      } catch (const std::exception& e) {
        throw ConfigError("cannot load weights " + cfg.weights_path + ": " + e.what());
      }
    case PolicySource::Train: return std::make_shared<const PolicySpec>(train_shortcut_policy(cfg.train).spec);
  }
  throw ConfigError("unknown policy source");
}

std::vector<BenchmarkSuite> load_suites(const RunConfig& cfg) {
  std::vector<BenchmarkSuite> out;
  for (const auto& s : cfg.suites) {
    if (s.generate) {
      out.push_back(build_suite(s.generate->suite, s.generate->cases, s.generate->variants, s.generate->seed));
    } else {
      try {
        out.push_back(load_suite(s.path));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError("suite file " + s.path + ": " + e.what());
      }
    }
  }
  return out;
}

namespace {

struct Job {
  std::size_t suite;
  std::size_t case_index;
  Variant variant;
  std::size_t rollout;
};

EpisodeRecord run_episode(const Policy& policy, const BenchmarkSuite& suite, const BenchmarkCase& c, Variant v,
                          std::size_t index, std::size_t step_limit) {
  EpisodeRecord rec;
  rec.suite = suite.name;
  rec.case_id = c.id;
  rec.variant = v;
  rec.rollout = index;
  rec.seed = episode_seed(suite.seed, c.id, v, index);
  try {
    Rng rng(rec.seed);
    const Scene scene = shuffle_layout(c.scene, rng);
    const Instruction& executed = v == Variant::Normal ? c.normal : c.contra.at(v);
    const EpisodeOutcome out = rollout(policy, scene, executed, c.normal, step_limit);
    rec.success = out.success;
    rec.steps = out.actions.size();
    rec.termination = std::string(to_string(out.reason));
    rec.ivar_mean = out.ivar_mean;
    std::string acts;
    for (const auto& a : out.actions) {
      if (!acts.empty()) acts += ' ';
      acts += std::to_string(action_index(a));
    }
    rec.actions = acts;
  } catch (const std::exception& e) {
    rec.success = false;
    rec.termination = "error";
    rec.error = e.what();
  }
  return rec;
}

std::string weights_hash(const PolicySpec& spec) {
  std::ostringstream ss;
  write_weights(spec, ss);
  return hex64(fnv1a64(ss.str()));
}

std::string header_comment(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed) + " version=" + std::string(kToolVersion) + "\n";
}

}  // namespace

RunResult run(const RunConfig& cfg, const std::shared_ptr<const PolicySpec>& spec,
              const std::vector<BenchmarkSuite>& suites) {
  cfg.validate();
  if (!spec) throw ConfigError("run: no policy");
  std::optional<Intervention> intervention;
  if (cfg.intervention) intervention = Intervention{cfg.sink, cfg.recal};
  const VlaPolicy policy(spec, intervention);

  std::vector<Job> jobs;
  for (std::size_t s = 0; s < suites.size(); ++s) {
    std::vector<Variant> variants{Variant::Normal};
    variants.insert(variants.end(), suites[s].variants.begin(), suites[s].variants.end());
    for (std::size_t c = 0; c < suites[s].cases.size(); ++c)
      for (Variant v : variants)
        for (std::size_t r = 0; r < cfg.rollouts; ++r) jobs.push_back({s, c, v, r});
  }

  std::vector<EpisodeRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      records[i] = run_episode(policy, suites[j.suite], suites[j.suite].cases[j.case_index], j.variant, j.rollout,
                               cfg.step_limit);
    }
  };
  std::size_t workers = cfg.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.workers;
  workers = std::min(workers, std::max<std::size_t>(1, jobs.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  RunResult result;
  result.config_hash = config_hash(cfg);
  result.policy_hash = weights_hash(*spec);
  result.seed = cfg.seed;
  for (std::size_t s = 0; s < suites.size(); ++s) {
    std::vector<SuccessRecord> recs;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].suite != s) continue;
      const EpisodeRecord& e = records[i];
      recs.push_back({i, e.variant, e.success, e.steps, e.ivar_mean});
    }
    SuiteReport rep = aggregate(std::move(recs));
    rep.suite = suites[s].name;
    rep.seed = suites[s].seed;
    rep.config_hash = result.config_hash;
    result.reports.push_back(std::move(rep));
  }
  for (const auto& e : records)
    if (e.termination == "error") ++result.failures;
  result.episodes = std::move(records);
  return result;
}

RunResult run(const RunConfig& cfg) {
  cfg.validate();
  const auto suites = load_suites(cfg);
  return run(cfg, make_policy(cfg), suites);
}

std::string format_report(const RunResult& r) {
  std::string out = header_comment(r.config_hash, r.seed);
  out += "suite,variant,sr,lgs,ivar_mean,rollouts,seed\n";
  for (const auto& rep : r.reports) {
    for (Variant v : kAllVariants) {
      if (!rep.has(v)) continue;
      const VariantStats& st = rep.at(v);
      out += rep.suite + "," + std::string(to_string(v)) + "," + fixed(st.sr, 1) + "," + fixed(st.lgs, 1) + "," +
             fixed(st.ivar_mean, 6) + "," + std::to_string(st.rollouts) + "," + std::to_string(rep.seed) + "\n";
    }
  }
  return out;
}

std::string format_episodes(const RunResult& r) {
  std::string out = header_comment(r.config_hash, r.seed);
  out += "suite,case,variant,rollout,episode_seed,success,steps,termination,ivar_mean,actions\n";
  for (const auto& e : r.episodes) {
    out += e.suite + "," + std::to_string(e.case_id) + "," + std::string(to_string(e.variant)) + "," +
           std::to_string(e.rollout) + "," + hex64(e.seed) + "," + (e.success ? "1" : "0") + "," +
           std::to_string(e.steps) + "," + e.termination + "," + format_number(e.ivar_mean) + "," + e.actions + "\n";
  }
  return out;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_run(const RunConfig& cfg, const std::vector<BenchmarkSuite>& suites, const RunResult& r) {
  if (cfg.output_dir.empty()) throw ConfigError("no output directory configured");
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());

  write_file(dir / "report.csv", format_report(r));
  write_file(dir / "episodes.csv", format_episodes(r));

  Json suite_list = Json::array();
  for (const auto& s : suites) {
    suite_list.push_back({{"name", s.name},
                          {"seed", s.seed},
                          {"generator_version", s.generator_version},
                          {"cases", s.cases.size()},
                          {"hash", hex64(fnv1a64(dump_suite(s)))}});
  }
  Json errors = Json::array();
  for (const auto& e : r.episodes) {
    if (e.termination != "error") continue;
    errors.push_back(e.suite + " case " + std::to_string(e.case_id) + " " + std::string(to_string(e.variant)) +
                     " rollout " + std::to_string(e.rollout) + ": " + e.error);
    if (errors.size() >= 20) break;
  }
  const AuditResult a = audit(r);
  Json manifest = {{"tool_version", kToolVersion},
                   {"config_hash", r.config_hash},
                   {"seed", r.seed},
                   {"config", to_json(cfg)},
                   {"policy_hash", r.policy_hash},
                   {"suites", suite_list},
                   {"episodes", r.episodes.size()},
                   {"episode_failures", r.failures},
                   {"errors", errors},
                   {"audit", a.ok ? "passed" : "failed"}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

AuditResult audit(const RunResult& r) {
  AuditResult a;
  for (const auto& rep : r.reports) {
    std::map<Variant, std::pair<std::size_t, std::size_t>> tally;  // successes, rollouts
    for (const auto& e : r.episodes) {
      if (e.suite != rep.suite) continue;
      auto& t = tally[e.variant];
      t.first += e.success ? 1 : 0;
      t.second += 1;
    }
    if (!tally.count(Variant::Normal)) {
      a.ok = false;
      a.problems.push_back(rep.suite + ": no Normal episodes");
      continue;
    }
    const double sr_normal = success_rate(tally[Variant::Normal].first, tally[Variant::Normal].second);
    for (Variant v : kAllVariants) {
      if (!rep.has(v)) continue;
      const auto& st = rep.at(v);
      const auto& t = tally[v];
      const double sr = t.second ? success_rate(t.first, t.second) : -1.0;
      if (sr != st.sr || t.second != st.rollouts) {
        a.ok = false;
        a.problems.push_back(rep.suite + " " + std::string(to_string(v)) + ": SR " + fixed(st.sr, 1) +
                             " disagrees with episodes (" + fixed(sr, 1) + ")");
      }
      if (lgs(sr_normal, sr) != st.lgs) {
        a.ok = false;
        a.problems.push_back(rep.suite + " " + std::string(to_string(v)) + ": LGS " + fixed(st.lgs, 1) +
                             " disagrees with episodes");
      }
    }
  }
  return a;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::string& comment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.starts_with("#")) {
      comment = line;
      continue;
    }
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.ends_with(",")) cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

AuditResult audit_files(const std::string& run_dir) {
  const fs::path dir(run_dir);
  std::string report_comment, episode_comment;
  const auto report = read_csv(dir / "report.csv", report_comment);
  const auto episodes = read_csv(dir / "episodes.csv", episode_comment);
  AuditResult a;
  if (report_comment != episode_comment) {
    a.ok = false;
    a.problems.push_back("report.csv and episodes.csv carry different config headers");
  }
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& e : episodes) {
    if (e.size() != 10) throw ConfigError("episodes.csv: malformed row");
    auto& t = tally[{e[0], e[2]}];
    t.first += e[5] == "1" ? 1 : 0;
    t.second += 1;
  }
  for (const auto& row : report) {
    if (row.size() != 7) throw ConfigError("report.csv: malformed row");
    const auto normal = tally.find({row[0], "Normal"});
    const auto mine = tally.find({row[0], row[1]});
    if (normal == tally.end() || mine == tally.end()) {
      a.ok = false;
      a.problems.push_back(row[0] + " " + row[1] + ": no matching episodes");
      continue;
    }
    const double sr_n = success_rate(normal->second.first, normal->second.second);
    const double sr = success_rate(mine->second.first, mine->second.second);
    if (fixed(sr, 1) != row[2] || std::to_string(mine->second.second) != row[5]) {
      a.ok = false;
      a.problems.push_back(row[0] + " " + row[1] + ": SR " + row[2] + " but episodes give " + fixed(sr, 1));
    }
    if (fixed(lgs(sr_n, sr), 1) != row[3]) {
      a.ok = false;
      a.problems.push_back(row[0] + " " + row[1] + ": LGS " + row[3] + " but episodes give " + fixed(lgs(sr_n, sr), 1));
    }
  }
  return a;
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::P: return "p";
    case SweepAxis::Rho: return "rho";
    case SweepAxis::Layers: return "layers";
  }
  return "p";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  for (auto a : {SweepAxis::P, SweepAxis::Rho, SweepAxis::Layers})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "' (expected p, rho or layers)");
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep: empty grid");
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("sweep: non-finite grid value");
    if ((axis == SweepAxis::P || axis == SweepAxis::Rho) && (v < 0.0 || v > 1.0)) {
      throw ConfigError("sweep: " + std::string(to_string(axis)) + " value " + format_number(v) + " outside [0,1]");
    }
    if (axis == SweepAxis::Layers && (v < 0.0 || v != std::floor(v))) {
      throw ConfigError("sweep: layers value " + format_number(v) + " is not a non-negative integer");
    }
  }
}

SweepResult sweep(const SweepSpec& spec, const RunConfig& base, const std::shared_ptr<const PolicySpec>& policy,
                  const std::vector<BenchmarkSuite>& suites) {
  spec.validate();
  SweepResult out;
  out.config_hash = config_hash(base);
  for (double v : spec.values) {
    RunConfig cfg = base;
    cfg.intervention = true;
    switch (spec.axis) {
      case SweepAxis::P: cfg.recal.p = v; break;
      case SweepAxis::Rho: cfg.recal.rho = v; break;
      case SweepAxis::Layers: cfg.recal.layers = static_cast<std::size_t>(v); break;
    }
    try {
      const RunResult r = run(cfg, policy, suites);
      out.episode_failures += r.failures;
      for (const auto& rep : r.reports)
        for (Variant var : kAllVariants)
          if (rep.has(var)) out.rows.push_back({v, rep.suite, var, rep.at(var).sr, rep.at(var).lgs});
    } catch (const std::exception& e) {
      out.errors.push_back(std::string(to_string(spec.axis)) + "=" + format_number(v) + ": " + e.what());
    }
  }
  return out;
}

std::string format_sweep(const SweepSpec& spec, const SweepResult& r) {
  std::string out = "# config_hash=" + r.config_hash + " axis=" + std::string(to_string(spec.axis)) +
                    " version=" + std::string(kToolVersion) + "\n";
  out += "axis,value,suite,variant,sr,lgs\n";
  for (const auto& row : r.rows) {
    out += std::string(to_string(spec.axis)) + "," + format_number(row.value) + "," + row.suite + "," +
           std::string(to_string(row.variant)) + "," + fixed(row.sr, 1) + "," + fixed(row.lgs, 1) + "\n";
  }
  return out;
}

namespace {

Json attention_json(const AttentionTensor& t) {
  Json heads = Json::array();
  for (const Matrix& m : t.heads()) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    heads.push_back(std::move(rows));
  }
  return heads;
}

}  // namespace

std::vector<std::string> dump_heatmaps(const RunConfig& cfg, const std::shared_ptr<const PolicySpec>& policy,
                                       const BenchmarkSuite& suite, std::size_t case_id,
                                       const std::string& out_dir) {
  const BenchmarkCase& c = suite.find(case_id);
  std::optional<Intervention> intervention;
  if (cfg.intervention) intervention = Intervention{cfg.sink, cfg.recal};
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create " + out_dir + ": " + ec.message());

  std::vector<Variant> variants{Variant::Normal};
  variants.insert(variants.end(), suite.variants.begin(), suite.variants.end());
  std::vector<std::string> paths;
  const std::string hash = config_hash(cfg);
  for (Variant v : variants) {
    const Instruction& ins = v == Variant::Normal ? c.normal : c.contra.at(v);
    const WorldState state(c.scene);
    const TokenSequence tokens = tokenize(state, ins, policy->shape.action_queries);
    const ForwardTrace trace = forward(*policy, tokens, intervention);

    const Json header = {{"config_hash", hash},
                         {"seed", cfg.seed},
                         {"tool_version", kToolVersion},
                         {"suite", suite.name},
                         {"case", c.id},
                         {"variant", to_string(v)},
                         {"instruction", ins.render()}};
    Json pre = header, post = header;
    pre["layers"] = Json::array();
    post["layers"] = Json::array();
    for (const auto& layer : trace.layers) {
      pre["layers"].push_back(attention_json(layer.pre));
      post["layers"].push_back(attention_json(layer.post));
    }
    Json tok = header;
    tok["labels"] = tokens.labels();
    Json mods = Json::array();
    for (Modality m : trace.modality.labels()) mods.push_back(to_string(m));
    tok["modality"] = mods;

    const std::string stem = (fs::path(out_dir) / (suite.name + "_case" + std::to_string(c.id) + "_" +
                                                    std::string(to_string(v))))
                                 .string();
    for (const auto& [suffix, doc] : {std::pair{"_pre.json", &pre}, {"_post.json", &post}, {"_tokens.json", &tok}}) {
      write_file(stem + suffix, doc->dump(1) + "\n");
      paths.push_back(stem + suffix);
    }
  }
  return paths;
}

}  // namespace igar
