#include "igar/tokenizer.hpp"

#include <sstream>

#include "igar/errors.hpp"

namespace igar {

namespace vocab {

int object_token(ObjectCategory c, Color col) {
  return kObjectBase + static_cast<int>(c) * static_cast<int>(kNumColors) + static_cast<int>(col);
}

int location_token(LocationCategory c, Color col) {
  return kLocationBase + static_cast<int>(c) * static_cast<int>(kNumColors) + static_cast<int>(col);
}

int word_token(std::string_view word) {
  for (std::size_t i = 0; i < kWords.size(); ++i)
    if (kWords[i] == word) return kWordBase + static_cast<int>(i);
  return kUnk;
}

std::string label(int id) {
  switch (id) {
    case kPad: return "<pad>";
    case kBos: return "<bos>";
    case kUnk: return "<unk>";
    case kActionQuery: return "<aq>";
    case kEmptyObject: return "<empty-obj>";
    case kEmptyLocation: return "<empty-loc>";
    case kGripFree: return "<grip-free>";
    case kGripHold: return "<grip-hold>";
    default: break;
  }
  const int n = static_cast<int>(kNumColors);
  if (id >= kObjectBase && id < kLocationBase) {
    const int k = id - kObjectBase;
    return "obj:" + std::string(to_string(static_cast<Color>(k % n))) + "-" +
           std::string(to_string(static_cast<ObjectCategory>(k / n)));
  }
  if (id >= kLocationBase && id < kWordBase) {
    const int k = id - kLocationBase;
    return "loc:" + std::string(to_string(static_cast<Color>(k % n))) + "-" +
           std::string(to_string(static_cast<LocationCategory>(k / n)));
  }
  if (id >= kWordBase && id < static_cast<int>(kSize)) return std::string(kWords[id - kWordBase]);
  throw InvalidInput("vocab::label: unknown token id " + std::to_string(id));
}

}  // namespace vocab

std::vector<std::string> TokenSequence::labels() const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab::label(id));
  return out;
}

TokenSequence tokenize(const Scene& scene, std::optional<std::size_t> held,
                       const std::vector<std::string>& words, std::size_t action_queries) {
  if (scene.objects.size() > kMaxObjects || scene.locations.size() > kMaxLocations) {
    throw InvalidInput("tokenize: scene exceeds the slot layout");
  }
  if (action_queries == 0) throw InvalidInput("tokenize: at least one action query required");
  const std::size_t n = layout::kFirstText + words.size() + action_queries;
  TokenSequence seq;
  seq.ids.assign(n, vocab::kPad);
  seq.features = Matrix(n, kNumTokenFeatures);
  std::vector<Modality> labels(n, Modality::Visual);

  seq.ids[layout::kBos] = vocab::kBos;
  labels[layout::kBos] = Modality::Other;
  for (std::size_t i = 0; i < kMaxObjects; ++i) {
    const std::size_t pos = layout::kFirstObject + i;
    if (i < scene.objects.size()) {
      const auto& o = scene.objects[i];
      seq.ids[pos] = vocab::object_token(o.category, o.color);
      seq.features(pos, 0) = o.saliency;
      seq.features(pos, 1) = held && *held == i ? 1.0 : 0.0;
    } else {
      seq.ids[pos] = vocab::kEmptyObject;
    }
  }
  for (std::size_t j = 0; j < kMaxLocations; ++j) {
    const std::size_t pos = layout::kFirstLocation + j;
    if (j < scene.locations.size()) {
      const auto& l = scene.locations[j];
      seq.ids[pos] = vocab::location_token(l.category, l.color);
      seq.features(pos, 0) = l.saliency;
    } else {
      seq.ids[pos] = vocab::kEmptyLocation;
    }
  }
  seq.ids[layout::kGripper] = held ? vocab::kGripHold : vocab::kGripFree;

  for (std::size_t w = 0; w < words.size(); ++w) {
    seq.ids[layout::kFirstText + w] = vocab::word_token(words[w]);
    labels[layout::kFirstText + w] = Modality::Text;
  }
  for (std::size_t q = 0; q < action_queries; ++q) {
    const std::size_t pos = layout::kFirstText + words.size() + q;
    seq.ids[pos] = vocab::kActionQuery;
    labels[pos] = Modality::ActionQuery;
  }
  seq.modality = ModalityMap(std::move(labels));
  return seq;
}

TokenSequence tokenize(const WorldState& state, const Instruction& instruction, std::size_t action_queries) {
  return tokenize(state.scene(), state.held(), instruction.words(), action_queries);
}

TokenSequence tokenize(const WorldState& state, std::string_view text, std::size_t action_queries) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return tokenize(state.scene(), state.held(), words, action_queries);
}

}  // namespace igar
