#include "doctest.h"
#include "igar/tokenizer.hpp"

using namespace igar;

namespace {

Scene fixture_scene() {
  Scene s;
  s.objects = {{1, ObjectCategory::Bowl, Color::Black, {0, 0}, 0.9}, {2, ObjectCategory::Mug, Color::Red, {1, 0}, 0.3}};
  s.locations = {{101, LocationCategory::Plate, Color::White, {3, 3}, 0.85}};
  return s;
}

}  // namespace

TEST_CASE("golden token ids") {
  const WorldState state(fixture_scene());
  const TokenSequence t = tokenize(state, Instruction::parse("put the black bowl on the plate"));
  const std::vector<int> golden{1, 8, 25, 4, 4, 4, 29, 5, 5, 6, 51, 50, 55, 60, 68, 50, 64, 3};
  CHECK(t.ids == golden);
  CHECK(t.modality.label(0) == Modality::Other);
  for (std::size_t i = 1; i < 10; ++i) CHECK(t.modality.label(i) == Modality::Visual);
  for (std::size_t i = 10; i < 17; ++i) CHECK(t.modality.label(i) == Modality::Text);
  CHECK(t.modality.label(17) == Modality::ActionQuery);
  CHECK(t.features(1, 0) == 0.9);
  CHECK(t.features(6, 0) == 0.85);
  CHECK(t.features(3, 0) == 0.0);
  CHECK(t.features(9, 1) == 0.0);
  CHECK(t.labels().size() == t.size());
}

TEST_CASE("held object changes the gripper token and held flag") {
  const TokenSequence t = tokenize(fixture_scene(), std::size_t{1}, {"put"});
  CHECK(t.ids[layout::kGripper] == vocab::kGripHold);
  CHECK(t.features(2, 1) == 1.0);
  CHECK(t.features(1, 1) == 0.0);
}

TEST_CASE("counts, empty instructions and unknown words") {
  const TokenSequence empty = tokenize(fixture_scene(), std::nullopt, {});
  CHECK(empty.modality.text().empty());
  CHECK(empty.modality.visual().size() == 9);
  CHECK(empty.modality.action_queries() == IndexSet{10});

  const TokenSequence five = tokenize(fixture_scene(), std::nullopt, {"pick", "up", "the", "red", "mug"});
  CHECK(five.modality.text().size() == 5);
  CHECK(five.modality.visual().size() == 9);

  const TokenSequence unk = tokenize(WorldState(fixture_scene()), "grab the zebra");
  CHECK(unk.ids[layout::kFirstText] == vocab::kUnk);
  CHECK(unk.ids[layout::kFirstText + 2] == vocab::kUnk);

  const TokenSequence chunk = tokenize(fixture_scene(), std::nullopt, {"pick"}, 3);
  CHECK(chunk.modality.action_queries().size() == 3);
}

TEST_CASE("vocabulary") {
  CHECK(vocab::kSize == 72);
  CHECK(vocab::object_token(ObjectCategory::Mug, Color::Yellow) == 27);
  CHECK(vocab::location_token(LocationCategory::Cabinet, Color::Yellow) == 47);
  CHECK(vocab::word_token("next-to") == 71);
  CHECK(vocab::label(vocab::kBos) == "<bos>");
}
