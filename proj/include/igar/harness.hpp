#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "igar/icbench.hpp"
#include "igar/metrics.hpp"
#include "igar/mini_vla.hpp"
#include "igar/serialization.hpp"
#include "igar/trainer.hpp"

namespace igar {

inline constexpr std::string_view kToolVersion = "igar 0.1.0";
inline constexpr const char* kOutputDirEnv = "IGAR_OUTPUT_DIR";

enum class PolicySource { Sink, Weights, Train };
std::string_view to_string(PolicySource s);
PolicySource parse_policy_source(std::string_view name);

struct GenerateSpec {
  std::string suite = "spatial";
  std::uint64_t seed = 1;
  std::size_t cases = 10;
  std::vector<Variant> variants{kContradictionVariants.begin(), kContradictionVariants.end()};
};

/// A suite comes either from a file or from an inline generation request.
struct SuiteSource {
  std::string path;
  std::optional<GenerateSpec> generate;
};

struct RunConfig {
  PolicySource policy = PolicySource::Sink;
  std::string weights_path;
  ShortcutRecipe train;  ///< used when policy == Train
  std::vector<SuiteSource> suites;
  std::size_t rollouts = 50;
  std::size_t step_limit = 6;
  bool intervention = false;
  SinkDetectConfig sink;
  RecalConfig recal;
  /// Seeds the hand-built policy; the trained policy uses train.seed.
  std::uint64_t seed = 0;
  std::string output_dir;
  std::size_t workers = 1;  ///< 0 = hardware concurrency

  /// Throws ConfigError.
  void validate() const;
  static RunConfig defaults();  ///< sink policy on spatial/object/goal suites
};

/// Every field except output_dir and workers, which cannot change results.
Json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const Json& j, RunConfig base = RunConfig::defaults());
RunConfig load_config(const std::string& path, RunConfig base = RunConfig::defaults());
std::string config_hash(const RunConfig& cfg);

/// FNV-1a over (suite seed, case id, variant, rollout) as little-endian
/// u64, u64, u8, u64. Frozen: changing it changes every report.
std::uint64_t episode_seed(std::uint64_t suite_seed, std::size_t case_id, Variant variant, std::size_t rollout);

struct EpisodeRecord {
  std::string suite;
  std::size_t case_id = 0;
  Variant variant = Variant::Normal;
  std::size_t rollout = 0;
  std::uint64_t seed = 0;
  bool success = false;
  std::size_t steps = 0;
  std::string termination;  ///< completed, abstained, step_limit or error
  double ivar_mean = 0.0;
  std::string actions;  ///< space separated action indices
  std::string error;
};

struct RunResult {
  std::string config_hash;
  std::string policy_hash;  ///< FNV-1a of the serialized weights
  std::uint64_t seed = 0;
  std::vector<SuiteReport> reports;
  std::vector<EpisodeRecord> episodes;
  std::size_t failures = 0;  ///< episodes that threw
};

std::shared_ptr<const PolicySpec> make_policy(const RunConfig& cfg);
std::vector<BenchmarkSuite> load_suites(const RunConfig& cfg);

/// Runs every case x variant x rollout; executed = variant instruction,
/// judged = normal instruction. Episodes are spread over cfg.workers threads
/// and gathered in a fixed order, so the result does not depend on it.
RunResult run(const RunConfig& cfg, const std::shared_ptr<const PolicySpec>& policy,
              const std::vector<BenchmarkSuite>& suites);
RunResult run(const RunConfig& cfg);

std::string format_report(const RunResult& r);    ///< report.csv contents
std::string format_episodes(const RunResult& r);  ///< episodes.csv contents

/// Writes report.csv, episodes.csv and manifest.json into cfg.output_dir.
void write_run(const RunConfig& cfg, const std::vector<BenchmarkSuite>& suites, const RunResult& r);

struct AuditResult {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Recomputes SR and LGS from the episode records and compares them with
/// the reports.
AuditResult audit(const RunResult& r);
/// Same check on the files written by write_run.
AuditResult audit_files(const std::string& run_dir);

enum class SweepAxis { P, Rho, Layers };
std::string_view to_string(SweepAxis a);
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::P;
  std::vector<double> values;
  void validate() const;  ///< throws ConfigError
};

struct SweepRow {
  double value = 0.0;
  std::string suite;
  Variant variant = Variant::Normal;
  double sr = 0.0;
  double lgs = 0.0;
};

struct SweepResult {
  std::string config_hash;
  std::vector<SweepRow> rows;
  std::vector<std::string> errors;  ///< one per failed grid point
  std::size_t episode_failures = 0;
};

/// One run per grid value with the intervention on and the axis overridden.
SweepResult sweep(const SweepSpec& spec, const RunConfig& base, const std::shared_ptr<const PolicySpec>& policy,
                  const std::vector<BenchmarkSuite>& suites);
std::string format_sweep(const SweepSpec& spec, const SweepResult& r);

/// Writes per-layer, per-head attention for every variant of one case:
/// <suite>_case<id>_<variant>_pre.json / _post.json and a _tokens.json
/// label sidecar. Post equals pre on layers the intervention does not touch.
/// Throws LookupError when the suite or case is missing. Returns the paths.
std::vector<std::string> dump_heatmaps(const RunConfig& cfg, const std::shared_ptr<const PolicySpec>& policy,
                                       const BenchmarkSuite& suite, std::size_t case_id,
                                       const std::string& out_dir);

/// Shortest round-trip text for a double.
std::string format_number(double v);

}  // namespace igar
