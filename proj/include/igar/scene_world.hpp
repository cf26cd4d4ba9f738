#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "igar/tensor.hpp"

namespace igar {

enum class Color : std::uint8_t { Black, White, Red, Blue, Yellow };
enum class ObjectCategory : std::uint8_t { Bowl, Bottle, Block, Mug };
enum class LocationCategory : std::uint8_t { Plate, Table, Drawer, Cabinet };
enum class Relation : std::uint8_t { On, In, Under, NextTo };

inline constexpr std::size_t kNumColors = 5;
inline constexpr std::size_t kNumObjectCategories = 4;
inline constexpr std::size_t kNumLocationCategories = 4;
inline constexpr std::size_t kNumRelations = 4;

inline constexpr std::size_t kMaxObjects = 5;
inline constexpr std::size_t kMaxLocations = 3;

std::string_view to_string(Color c);
std::string_view to_string(ObjectCategory c);
std::string_view to_string(LocationCategory c);
std::string_view to_string(Relation r);
std::optional<Color> parse_color(std::string_view word);
std::optional<ObjectCategory> parse_object_category(std::string_view word);
std::optional<LocationCategory> parse_location_category(std::string_view word);
std::optional<Relation> parse_relation(std::string_view word);

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct SceneObject {
  int id = 0;
  ObjectCategory category = ObjectCategory::Bowl;
  Color color = Color::Black;
  Cell cell;
  double saliency = 0.0;
  bool operator==(const SceneObject&) const = default;
};

struct SceneLocation {
  int id = 0;
  LocationCategory category = LocationCategory::Plate;
  Color color = Color::Black;
  Cell cell;
  double saliency = 0.0;
  bool operator==(const SceneLocation&) const = default;
};

/// Which (location category, relation) pairs are physically satisfiable.
class RelationTable {
 public:
  /// plate/table: on, next-to; drawer: in, next-to; cabinet: on, in,
  /// next-to. "under" is never satisfiable.
  static RelationTable standard();

  bool allows(LocationCategory c, Relation r) const;
  void set(LocationCategory c, Relation r, bool allowed);
  bool operator==(const RelationTable&) const = default;

 private:
  std::array<std::array<bool, kNumRelations>, kNumLocationCategories> table_{};
};

/// The relation a location invites visually (the placement prior).
Relation canonical_relation(LocationCategory c);

struct Scene {
  int grid_width = 6;
  int grid_height = 6;
  std::vector<SceneObject> objects;
  std::vector<SceneLocation> locations;
  RelationTable relations = RelationTable::standard();

  /// Throws InvalidInput on overlapping cells, non-strict saliency maxima,
  /// too many objects/locations or out-of-grid cells.
  void validate() const;
  std::size_t most_salient_object() const;
  std::size_t most_salient_location() const;
  bool operator==(const Scene&) const = default;
};

struct ObjectDescriptor {
  ObjectCategory category = ObjectCategory::Bowl;
  std::optional<Color> color;
  bool matches(const SceneObject& o) const;
  bool operator==(const ObjectDescriptor&) const = default;
};

struct TargetDescriptor {
  LocationCategory category = LocationCategory::Plate;
  std::optional<Color> color;
  bool matches(const SceneLocation& l) const;
  bool operator==(const TargetDescriptor&) const = default;
};

enum class Verb : std::uint8_t { Pick, Put };

/// Surface template for put instructions:
///   Short: "put the [color] <object> <relation> the [color] <location>"
///   Long:  "pick up the [color] <object> and place it <relation> the [color] <location>"
/// Pick instructions always read "pick up the [color] <object>".
enum class Phrasing : std::uint8_t { Short, Long };

struct Instruction {
  Verb verb = Verb::Pick;
  ObjectDescriptor operand;
  std::optional<TargetDescriptor> target;
  std::optional<Relation> relation;
  Phrasing phrasing = Phrasing::Short;

  std::vector<std::string> words() const;
  std::string render() const;
  /// Inverse of render(); throws InvalidInput on text outside the template grammar.
  static Instruction parse(std::string_view text);
  /// Throws InvalidInput when the structured form is not renderable.
  void validate() const;

  bool operator==(const Instruction&) const = default;
};

bool feasible(const Scene& scene, const Instruction& instruction);

enum class ActionKind : std::uint8_t { Pick, Place, Abstain };

struct Action {
  ActionKind kind = ActionKind::Abstain;
  std::size_t slot = 0;  ///< object slot for Pick, location slot for Place
  Relation relation = Relation::On;
  bool operator==(const Action&) const = default;
};

inline constexpr std::size_t kNumActions = kMaxObjects + kMaxLocations * kNumRelations + 1;
std::size_t action_index(const Action& a);
Action action_from_index(std::size_t index);
std::string describe(const Action& a);

struct Placement {
  std::size_t object = 0;
  std::size_t location = 0;
  Relation relation = Relation::On;
  bool operator==(const Placement&) const = default;
};

/// Mutable world for one episode. Object and location slots are indices
/// into scene.objects / scene.locations.
class WorldState {
 public:
  explicit WorldState(Scene scene);

  const Scene& scene() const noexcept { return scene_; }
  std::optional<std::size_t> held() const noexcept { return held_; }
  const std::vector<Placement>& placements() const noexcept { return placements_; }
  bool is_placed(std::size_t object) const;

  /// Applies the action if it is physically valid; returns false (and leaves
  /// the world unchanged) otherwise. Abstain is never "applied".
  bool apply(const Action& a);

 private:
  Scene scene_;
  std::optional<std::size_t> held_;
  std::vector<Placement> placements_;
};

/// Pure function of the final world state and the judged instruction.
bool judge(const WorldState& state, const Instruction& judged);

struct Decision {
  Action action;
  std::optional<double> ivar;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Decision decide(const WorldState& state, const Instruction& instruction) const = 0;
};

enum class Termination : std::uint8_t { Completed, Abstained, StepLimit };
std::string_view to_string(Termination t);

struct EpisodeOutcome {
  bool success = false;
  std::vector<Action> actions;
  Termination reason = Termination::StepLimit;
  double ivar_mean = 0.0;  ///< over decisions that reported an IVAR; 0 when none did
};

/// Queries the policy with `executed`, applies its actions, and judges the
/// final state against `judged`.
EpisodeOutcome rollout(const Policy& policy, const Scene& scene, const Instruction& executed,
                       const Instruction& judged, std::size_t step_limit);

/// Replays a recorded action sequence and judges it.
bool replay_judgement(const Scene& scene, const std::vector<Action>& actions, const Instruction& judged);

enum class SuiteKind : std::uint8_t { Spatial, Object, Goal };
std::string_view to_string(SuiteKind s);
SuiteKind parse_suite_kind(std::string_view name);

struct SceneTask {
  Scene scene;
  Instruction instruction;
};

/// Random scene (2-5 objects, 1-3 locations) and its Normal instruction.
/// The instructed object and target are the most salient ones, and the
/// relation is the target's canonical relation.
SceneTask generate_scene(SuiteKind suite, Rng& rng);

/// Same content with slot order and cells re-drawn; used per rollout.
Scene shuffle_layout(const Scene& scene, Rng& rng);

}  // namespace igar
