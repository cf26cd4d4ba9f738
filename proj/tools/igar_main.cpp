#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "igar/errors.hpp"
#include "igar/harness.hpp"
#include "igar/icbench.hpp"
#include "igar/trainer.hpp"

using namespace igar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitEpisodes = 2;
constexpr int kExitAudit = 3;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<Variant> parse_variants(const std::string& text) {
  std::vector<Variant> out;
  for (const auto& v : split(text, ',')) out.push_back(parse_variant(v));
  return out;
}

// name:seed[:cases]
GenerateSpec parse_generate(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() < 2 || parts.size() > 3) throw ConfigError("--generate expects name:seed[:cases], got " + text);
  GenerateSpec g;
  g.suite = parts[0];
  g.seed = std::stoull(parts[1]);
  if (parts.size() == 3) g.cases = std::stoul(parts[2]);
  return g;
}

struct Overrides {
  std::string config;
  std::optional<std::string> policy, weights, out, intervention;
  std::vector<std::string> suite_paths, generate;
  std::optional<std::size_t> rollouts, step_limit, layers, k, workers, train_scenes, epochs;
  std::optional<double> p, rho, alpha, tau, gamma, lr;
  std::optional<std::uint64_t> seed, train_seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file or a run manifest");
    app->add_option("--policy", policy, "sink | weights | train");
    app->add_option("--weights", weights, "weights file for --policy weights");
    app->add_option("--suite", suite_paths, "suite file (repeatable, replaces configured suites)");
    app->add_option("--generate", generate, "inline suite name:seed[:cases] (repeatable)");
    app->add_option("--rollouts", rollouts);
    app->add_option("--step-limit", step_limit);
    app->add_option("--intervention", intervention, "on | off");
    app->add_option("--p", p, "text-sink decay factor");
    app->add_option("--rho", rho, "visual-sink share bound");
    app->add_option("--alpha", alpha, "minimum visual mass");
    app->add_option("--layers", layers, "number of intervened layers");
    app->add_option("--tau", tau, "sink activation threshold");
    app->add_option("--gamma", gamma, "spike-ratio threshold");
    app->add_option("--k", k, "spike dimensions kept");
    app->add_option("--seed", seed);
    app->add_option("--train-seed", train_seed);
    app->add_option("--train-scenes", train_scenes);
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr);
    app->add_option("--out", out, "output directory");
    app->add_option("--workers", workers, "worker threads, 0 = all cores");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig::defaults() : load_config(config);
    if (policy) cfg.policy = parse_policy_source(*policy);
    if (weights) {
      cfg.weights_path = *weights;
      if (!policy) cfg.policy = PolicySource::Weights;
    }
    if (!suite_paths.empty() || !generate.empty()) {
      cfg.suites.clear();
      for (const auto& p : suite_paths) cfg.suites.push_back({p, std::nullopt});
      for (const auto& g : generate) cfg.suites.push_back({"", parse_generate(g)});
    }
    if (rollouts) cfg.rollouts = *rollouts;
    if (step_limit) cfg.step_limit = *step_limit;
    if (intervention) {
      if (*intervention != "on" && *intervention != "off") throw ConfigError("--intervention expects on or off");
      cfg.intervention = *intervention == "on";
    }
    if (p) cfg.recal.p = *p;
    if (rho) cfg.recal.rho = *rho;
    if (alpha) cfg.recal.alpha = *alpha;
    if (layers) cfg.recal.layers = *layers;
    if (tau) cfg.sink.tau = *tau;
    if (gamma) cfg.sink.gamma = *gamma;
    if (k) cfg.sink.k = *k;
    if (seed) cfg.seed = *seed;
    if (train_seed) cfg.train.seed = *train_seed;
    if (train_scenes) cfg.train.scenes = *train_scenes;
    if (epochs) cfg.train.options.epochs = *epochs;
    if (lr) cfg.train.options.lr = *lr;
    if (workers) cfg.workers = *workers;
    if (out) {
      cfg.output_dir = *out;
    } else if (cfg.output_dir.empty()) {
      const char* env = std::getenv(kOutputDirEnv);
      cfg.output_dir = env && *env ? env : "igar_out";
    }
    cfg.validate();
    return cfg;
  }
};

int cmd_generate(const std::string& suite, std::uint64_t seed, std::size_t cases, const std::string& variants,
                 const std::string& out) {
  const BenchmarkSuite s = build_suite(suite, cases, parse_variants(variants), seed);
  revalidate(s);
  save_suite(s, out);
  std::cout << "wrote " << out << ": " << s.cases.size() << " cases x " << s.variants.size()
            << " variants, skipped " << s.skipped.size() << " candidates, validation passed\n";
  return kExitOk;
}

int cmd_run(const Overrides& o) {
  const RunConfig cfg = o.resolve();
  const auto suites = load_suites(cfg);
  const auto policy = make_policy(cfg);
  const RunResult r = run(cfg, policy, suites);
  write_run(cfg, suites, r);
  std::cout << format_report(r);
  const AuditResult a = audit(r);
  for (const auto& p : a.problems) std::cerr << "audit: " << p << "\n";
  if (r.failures) std::cerr << r.failures << " episode(s) failed; see " << cfg.output_dir << "/manifest.json\n";
  if (r.failures) return kExitEpisodes;
  return a.ok ? kExitOk : kExitAudit;
}

int cmd_sweep(const Overrides& o, const std::string& axis, const std::string& values) {
  const RunConfig cfg = o.resolve();
  SweepSpec spec;
  spec.axis = parse_sweep_axis(axis);
  for (const auto& v : split(values, ',')) spec.values.push_back(std::stod(v));
  spec.validate();
  const auto suites = load_suites(cfg);
  const auto policy = make_policy(cfg);
  const SweepResult r = sweep(spec, cfg, policy, suites);
  std::filesystem::create_directories(cfg.output_dir);
  const std::string table = format_sweep(spec, r);
  std::ofstream(std::filesystem::path(cfg.output_dir) / "sweep.csv", std::ios::binary) << table;
  Json manifest = {{"tool_version", kToolVersion},
                   {"config_hash", r.config_hash},
                   {"seed", cfg.seed},
                   {"config", to_json(cfg)},
                   {"axis", to_string(spec.axis)},
                   {"values", spec.values},
                   {"errors", r.errors},
                   {"episode_failures", r.episode_failures}};
  std::ofstream(std::filesystem::path(cfg.output_dir) / "sweep_manifest.json", std::ios::binary)
      << manifest.dump(2) << "\n";
  std::cout << table;
  for (const auto& e : r.errors) std::cerr << "sweep: " << e << "\n";
  return r.errors.empty() && r.episode_failures == 0 ? kExitOk : kExitEpisodes;
}

int cmd_train(const Overrides& o, const std::string& weights_out) {
  RunConfig cfg = o.resolve();
  const TrainResult r = train_shortcut_policy(cfg.train);
  save_weights(r.spec, weights_out);
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
    std::cout << "epoch " << e + 1 << " loss " << format_number(r.epoch_loss[e]) << "\n";
  std::cout << "wrote " << weights_out << "\n";
  return kExitOk;
}

int cmd_heatmap(const Overrides& o, const std::string& suite_name, std::size_t case_id) {
  const RunConfig cfg = o.resolve();
  const auto suites = load_suites(cfg);
  const BenchmarkSuite* suite = nullptr;
  for (const auto& s : suites)
    if (suite_name.empty() || s.name == suite_name) {
      suite = &s;
      break;
    }
  if (!suite) throw LookupError("no suite named '" + suite_name + "'");
  const auto policy = make_policy(cfg);
  for (const auto& p : dump_heatmaps(cfg, policy, *suite, case_id, cfg.output_dir)) std::cout << p << "\n";
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  const AuditResult a = audit_files(dir);
  std::ifstream in(std::filesystem::path(dir) / "report.csv");
  std::cout << in.rdbuf();
  for (const auto& p : a.problems) std::cerr << "audit: " << p << "\n";
  std::cerr << "audit " << (a.ok ? "passed" : "FAILED") << "\n";
  return a.ok ? kExitOk : kExitAudit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IGAR toy harness: contradiction benchmarks, sink policies and attention recalibration"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "benchmark suites");
  bench->require_subcommand(1);
  auto* gen = bench->add_subcommand("generate", "build a contradiction suite");
  std::string gen_suite, gen_out, gen_variants = "V1,V2,V3,V4";
  std::uint64_t gen_seed = 1;
  std::size_t gen_cases = 10;
  gen->add_option("--suite", gen_suite, "spatial | object | goal")->required();
  gen->add_option("--seed", gen_seed);
  gen->add_option("--cases", gen_cases);
  gen->add_option("--variants", gen_variants, "comma separated subset of V1..V4");
  gen->add_option("--out", gen_out)->required();

  Overrides run_o, sweep_o, train_o, heat_o;
  auto* run_cmd = app.add_subcommand("run", "evaluate a policy on suites");
  run_o.attach(run_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "one run per grid value of p, rho or layers");
  sweep_o.attach(sweep_cmd);
  std::string axis = "p", values;
  sweep_cmd->add_option("--axis", axis, "p | rho | layers");
  sweep_cmd->add_option("--values", values, "comma separated grid")->required();

  auto* train_cmd = app.add_subcommand("train", "train the shortcut policy and save its weights");
  train_o.attach(train_cmd);
  std::string weights_out;
  train_cmd->add_option("--weights-out", weights_out, "destination weights file")->required();

  auto* heat_cmd = app.add_subcommand("heatmap", "dump pre/post attention maps for one case");
  heat_o.attach(heat_cmd);
  std::string heat_suite;
  std::size_t heat_case = 0;
  heat_cmd->add_option("--suite-name", heat_suite, "suite to read the case from (default: first)");
  heat_cmd->add_option("--case", heat_case);

  auto* report_cmd = app.add_subcommand("report", "audit a run directory and print its report");
  std::string report_dir;
  report_cmd->add_option("--dir", report_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_suite, gen_seed, gen_cases, gen_variants, gen_out);
    if (run_cmd->parsed()) return cmd_run(run_o);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_o, axis, values);
    if (train_cmd->parsed()) return cmd_train(train_o, weights_out);
    if (heat_cmd->parsed()) return cmd_heatmap(heat_o, heat_suite, heat_case);
    if (report_cmd->parsed()) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LookupError& e) {
    std::cerr << "lookup error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEpisodes;
  }
  return kExitConfig;
}
