#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "igar/scene_world.hpp"
#include "igar/sink_detection.hpp"
#include "igar/tensor.hpp"

namespace igar {

/// Token id space shared by every policy.
///
///   0 PAD, 1 BOS, 2 UNK, 3 AQ, 4 EMPTY_OBJ, 5 EMPTY_LOC, 6 GRIP_FREE, 7 GRIP_HOLD
///   8..27   object tokens, 8 + 5*category + color
///   28..47  location tokens, 28 + 5*category + color
///   48..71  instruction words (see kWords)
namespace vocab {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kUnk = 2;
inline constexpr int kActionQuery = 3;
inline constexpr int kEmptyObject = 4;
inline constexpr int kEmptyLocation = 5;
inline constexpr int kGripFree = 6;
inline constexpr int kGripHold = 7;
inline constexpr int kObjectBase = 8;
inline constexpr int kLocationBase = 28;
inline constexpr int kWordBase = 48;

inline constexpr std::array<std::string_view, 24> kWords{
    "pick",  "up",     "the",   "put",  "and",   "place", "it",     "black",
    "white", "red",    "blue",  "yellow", "bowl", "bottle", "block", "mug",
    "plate", "table",  "drawer", "cabinet", "on", "in",    "under",  "next-to"};

inline constexpr std::size_t kSize = kWordBase + kWords.size();

int object_token(ObjectCategory c, Color col);
int location_token(LocationCategory c, Color col);
/// UNK for anything outside kWords.
int word_token(std::string_view word);
std::string label(int id);

}  // namespace vocab

/// Fixed positions of the visual block.
namespace layout {
inline constexpr std::size_t kBos = 0;
inline constexpr std::size_t kFirstObject = 1;
inline constexpr std::size_t kFirstLocation = kFirstObject + kMaxObjects;
inline constexpr std::size_t kGripper = kFirstLocation + kMaxLocations;
inline constexpr std::size_t kFirstText = kGripper + 1;
}  // namespace layout

inline constexpr std::size_t kNumTokenFeatures = 2;  ///< saliency, held

struct TokenSequence {
  std::vector<int> ids;
  Matrix features;  ///< ids.size() x kNumTokenFeatures
  ModalityMap modality;

  std::size_t size() const noexcept { return ids.size(); }
  std::vector<std::string> labels() const;
};

/// [BOS][5 object slots][3 location slots][gripper][words...][action queries].
TokenSequence tokenize(const Scene& scene, std::optional<std::size_t> held,
                       const std::vector<std::string>& words, std::size_t action_queries = 1);
TokenSequence tokenize(const WorldState& state, const Instruction& instruction, std::size_t action_queries = 1);
/// Free text, split on whitespace.
TokenSequence tokenize(const WorldState& state, std::string_view text, std::size_t action_queries = 1);

}  // namespace igar
