#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "igar/mini_vla.hpp"

namespace igar {

/// Builds a 3-layer, 2-head, D=64 MiniVLA whose weights are set by hand.
///
/// BOS carries a 40-unit activation on channel 0 and is labeled Text, so it
/// is the text sink. Two layer-2 heads read the instruction from the action
/// query but park about 96% of their mass on BOS, which leaves the
/// instruction too faint to matter; the layer-3 head then picks the most
/// salient object (or location, once holding). Draining BOS moves that mass
/// onto the instruction words, and the layer-3 head instead matches the
/// instructed object/location, falling back to Abstain when none matches.
///
/// The feed-forward blocks are inert; `seed` only fills their (unused)
/// output weights, so behaviour does not depend on it. The result is checked
/// with verify_sink_contract(spec, ProbeDepth::Sampled) and ConstructionError is thrown on any violation.
PolicySpec build_sink_policy(std::uint64_t seed);

/// Twenty fixed scenes used to check the contract.
std::vector<Scene> probe_scene_bank();

/// Every instruction the template grammar can express with a coloured or
/// uncoloured operand and target (4632 instructions).
std::vector<Instruction> probe_grammar();

enum class ProbeDepth { Sampled, Exhaustive };

struct ProbeReport {
  std::size_t checks = 0;
  std::vector<std::string> failures;  ///< first few violations, human readable
  std::size_t failure_count = 0;
  bool ok() const { return failure_count == 0; }
};

/// Contract over the probe bank:
///   (a) BOS is a detected sink on the layer-1 input;
///   (b) without intervention the policy picks the most salient object and,
///       once holding it, places it at the most salient location with that
///       location's canonical relation;
///   (c) with the default intervention it picks an object matching the
///       operand when one exists (else Abstains) and, once holding, places
///       at a location matching the target with the instructed relation when
///       one exists (else Abstains).
ProbeReport verify_sink_contract(const PolicySpec& spec, ProbeDepth depth);

}  // namespace igar
