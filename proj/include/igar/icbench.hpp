#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "igar/metrics.hpp"
#include "igar/scene_world.hpp"
#include "igar/serialization.hpp"

namespace igar {

inline constexpr std::string_view kGeneratorVersion = "icbench-toy/1";

/// V1 swaps the operand colour for one no object of that category carries,
/// V2 inserts a target colour no matching location carries, V3 applies V1
/// then V2 with the same rng, V4 swaps the relation for one the target
/// category never allows ("under" whenever it qualifies).
///
/// Throws InapplicableCase when the variant has nothing to act on or no
/// unsatisfiable replacement exists; InvalidInput for Normal or an
/// infeasible input instruction.
Instruction perturb(const Scene& scene, const Instruction& instruction, Variant variant, Rng& rng);

/// Word-level Levenshtein distance.
std::size_t word_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct CaseValidation {
  bool normal_feasible = false;
  bool contra_infeasible = false;
  bool minimal_edit = false;
  std::size_t edit_distance = 0;
  bool ok() const { return normal_feasible && contra_infeasible && minimal_edit; }
};

/// Evaluates the three checks without throwing.
CaseValidation check_case(const Scene& scene, const Instruction& normal, const Instruction& contra, Variant variant);

/// Like check_case but throws InvalidCase naming the first failed check.
CaseValidation validate(const Scene& scene, const Instruction& normal, const Instruction& contra, Variant variant);

struct BenchmarkCase {
  std::size_t id = 0;
  Scene scene;
  Instruction normal;
  std::map<Variant, Instruction> contra;
};

struct BenchmarkSuite {
  std::string name;
  std::uint64_t seed = 0;
  std::string generator_version{kGeneratorVersion};
  std::vector<Variant> variants;
  std::vector<BenchmarkCase> cases;
  std::vector<std::string> skipped;  ///< one note per discarded candidate scene
  bool validated = false;

  const BenchmarkCase& find(std::size_t case_id) const;  ///< throws LookupError
};

inline constexpr std::size_t kRetryBudget = 64;

/// `name` must be a suite kind (spatial, object, goal). Candidates on which
/// some requested variant is inapplicable are skipped and noted; a case slot
/// that exhausts kRetryBudget candidates throws GenerationExhausted.
BenchmarkSuite build_suite(const std::string& name, std::size_t cases, const std::vector<Variant>& variants,
                           std::uint64_t seed);

/// Re-runs validate() on every case; throws InvalidCase on the first failure.
void revalidate(const BenchmarkSuite& suite);

Json to_json(const BenchmarkSuite& suite);
BenchmarkSuite suite_from_json(const Json& j);

/// Pretty-printed document with a trailing newline; identical bytes for
/// identical suites.
std::string dump_suite(const BenchmarkSuite& suite);
BenchmarkSuite load_suite(const std::string& path);
void save_suite(const BenchmarkSuite& suite, const std::string& path);

}  // namespace igar
