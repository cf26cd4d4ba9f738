#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "igar/scene_world.hpp"

namespace igar {

using Json = nlohmann::json;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

Json to_json(const Scene& scene);
Scene scene_from_json(const Json& j);

/// Instructions are stored as their rendered text.
Json to_json(const Instruction& instruction);
Instruction instruction_from_json(const Json& j);

/// Canonical text: sorted keys, no whitespace.
std::string canonical_dump(const Json& j);

/// FNV-1a of the canonical scene serialization, as 16 hex digits.
std::string content_hash(const Scene& scene);

}  // namespace igar
