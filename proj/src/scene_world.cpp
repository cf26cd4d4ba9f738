#include "igar/scene_world.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "igar/errors.hpp"

namespace igar {

namespace {

constexpr std::array<std::string_view, kNumColors> kColorNames{"black", "white", "red", "blue", "yellow"};
constexpr std::array<std::string_view, kNumObjectCategories> kObjectNames{"bowl", "bottle", "block", "mug"};
constexpr std::array<std::string_view, kNumLocationCategories> kLocationNames{"plate", "table", "drawer",
                                                                              "cabinet"};
constexpr std::array<std::string_view, kNumRelations> kRelationNames{"on", "in", "under", "next-to"};

template <typename E, std::size_t N>
std::optional<E> parse_name(const std::array<std::string_view, N>& names, std::string_view word) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == word) return static_cast<E>(i);
  return std::nullopt;
}

template <typename E>
std::size_t idx(E e) {
  return static_cast<std::size_t>(e);
}

}  // namespace

std::string_view to_string(Color c) { return kColorNames[idx(c)]; }
std::string_view to_string(ObjectCategory c) { return kObjectNames[idx(c)]; }
std::string_view to_string(LocationCategory c) { return kLocationNames[idx(c)]; }
std::string_view to_string(Relation r) { return kRelationNames[idx(r)]; }
std::optional<Color> parse_color(std::string_view w) { return parse_name<Color>(kColorNames, w); }
std::optional<ObjectCategory> parse_object_category(std::string_view w) {
  return parse_name<ObjectCategory>(kObjectNames, w);
}
std::optional<LocationCategory> parse_location_category(std::string_view w) {
  return parse_name<LocationCategory>(kLocationNames, w);
}
std::optional<Relation> parse_relation(std::string_view w) { return parse_name<Relation>(kRelationNames, w); }

RelationTable RelationTable::standard() {
  RelationTable t;
  t.set(LocationCategory::Plate, Relation::On, true);
  t.set(LocationCategory::Plate, Relation::NextTo, true);
  t.set(LocationCategory::Table, Relation::On, true);
  t.set(LocationCategory::Table, Relation::NextTo, true);
  t.set(LocationCategory::Drawer, Relation::In, true);
  t.set(LocationCategory::Drawer, Relation::NextTo, true);
  t.set(LocationCategory::Cabinet, Relation::On, true);
  t.set(LocationCategory::Cabinet, Relation::In, true);
  t.set(LocationCategory::Cabinet, Relation::NextTo, true);
  return t;
}

bool RelationTable::allows(LocationCategory c, Relation r) const { return table_[idx(c)][idx(r)]; }
void RelationTable::set(LocationCategory c, Relation r, bool allowed) { table_[idx(c)][idx(r)] = allowed; }

Relation canonical_relation(LocationCategory c) {
  switch (c) {
    case LocationCategory::Plate:
    case LocationCategory::Table: return Relation::On;
    case LocationCategory::Drawer:
    case LocationCategory::Cabinet: return Relation::In;
  }
  return Relation::On;
}

void Scene::validate() const {
  if (objects.empty() || objects.size() > kMaxObjects) throw InvalidInput("Scene: need 1-5 objects");
  if (locations.size() > kMaxLocations) throw InvalidInput("Scene: at most 3 locations");
  std::vector<Cell> cells;
  auto check_cell = [&](const Cell& c) {
    if (c.x < 0 || c.y < 0 || c.x >= grid_width || c.y >= grid_height) {
      throw InvalidInput("Scene: cell outside grid");
    }
    if (std::find(cells.begin(), cells.end(), c) != cells.end()) throw InvalidInput("Scene: shared cell");
    cells.push_back(c);
  };
  for (const auto& o : objects) {
    check_cell(o.cell);
    if (o.saliency < 0.0 || o.saliency > 1.0) throw InvalidInput("Scene: saliency outside [0,1]");
  }
  for (const auto& l : locations) {
    check_cell(l.cell);
    if (l.saliency < 0.0 || l.saliency > 1.0) throw InvalidInput("Scene: saliency outside [0,1]");
  }
  auto strict_max = [](const auto& items) {
    if (items.size() < 2) return true;
    std::vector<double> s;
    for (const auto& it : items) s.push_back(it.saliency);
    std::sort(s.begin(), s.end(), std::greater<>());
    return s[0] > s[1];
  };
  if (!strict_max(objects)) throw InvalidInput("Scene: most salient object is not unique");
  if (!strict_max(locations)) throw InvalidInput("Scene: most salient location is not unique");
}

std::size_t Scene::most_salient_object() const {
  auto it = std::max_element(objects.begin(), objects.end(),
                             [](const auto& a, const auto& b) { return a.saliency < b.saliency; });
  return static_cast<std::size_t>(it - objects.begin());
}

std::size_t Scene::most_salient_location() const {
  if (locations.empty()) throw LookupError("Scene: no locations");
  auto it = std::max_element(locations.begin(), locations.end(),
                             [](const auto& a, const auto& b) { return a.saliency < b.saliency; });
  return static_cast<std::size_t>(it - locations.begin());
}

bool ObjectDescriptor::matches(const SceneObject& o) const {
  return o.category == category && (!color || *color == o.color);
}

bool TargetDescriptor::matches(const SceneLocation& l) const {
  return l.category == category && (!color || *color == l.color);
}

std::vector<std::string> Instruction::words() const {
  std::vector<std::string> w;
  auto push = [&](std::string_view s) { w.emplace_back(s); };
  auto operand_words = [&] {
    push("the");
    if (operand.color) push(to_string(*operand.color));
    push(to_string(operand.category));
  };
  auto target_words = [&] {
    push(to_string(*relation));
    push("the");
    if (target->color) push(to_string(*target->color));
    push(to_string(target->category));
  };
  if (verb == Verb::Pick) {
    push("pick");
    push("up");
    operand_words();
  } else if (phrasing == Phrasing::Short) {
    push("put");
    operand_words();
    target_words();
  } else {
    push("pick");
    push("up");
    operand_words();
    push("and");
    push("place");
    push("it");
    target_words();
  }
  return w;
}

void Instruction::validate() const {
  if (verb == Verb::Pick) {
    if (target || relation) throw InvalidInput("Instruction: pick takes no target or relation");
    if (phrasing != Phrasing::Short) throw InvalidInput("Instruction: pick uses the short phrasing");
  } else if (!target || !relation) {
    throw InvalidInput("Instruction: put requires a target and a relation");
  }
}

std::string Instruction::render() const {
  validate();
  std::string out;
  for (const auto& w : words()) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

namespace {

class WordCursor {
 public:
  explicit WordCursor(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string w;
    while (in >> w) words_.push_back(w);
  }
  bool done() const { return pos_ == words_.size(); }
  std::string_view peek() const { return done() ? std::string_view{} : std::string_view{words_[pos_]}; }
  std::string_view take() {
    if (done()) fail("unexpected end of instruction");
    return words_[pos_++];
  }
  void expect(std::string_view w) {
    if (take() != w) fail("expected '" + std::string(w) + "'");
  }
  [[noreturn]] void fail(const std::string& why) const {
    throw InvalidInput("Instruction::parse: " + why + " at word " + std::to_string(pos_));
  }

 private:
  std::vector<std::string> words_;
  std::size_t pos_ = 0;
};

ObjectDescriptor parse_operand(WordCursor& c) {
  c.expect("the");
  ObjectDescriptor d;
  if (auto col = parse_color(c.peek())) {
    d.color = col;
    c.take();
  }
  auto cat = parse_object_category(c.take());
  if (!cat) c.fail("expected an object category");
  d.category = *cat;
  return d;
}

void parse_target(WordCursor& c, Instruction& ins) {
  auto rel = parse_relation(c.take());
  if (!rel) c.fail("expected a relation");
  ins.relation = rel;
  c.expect("the");
  TargetDescriptor t;
  if (auto col = parse_color(c.peek())) {
    t.color = col;
    c.take();
  }
  auto cat = parse_location_category(c.take());
  if (!cat) c.fail("expected a location category");
  t.category = *cat;
  ins.target = t;
}

}  // namespace

Instruction Instruction::parse(std::string_view text) {
  WordCursor c(text);
  Instruction ins;
  const std::string_view first = c.take();
  if (first == "put") {
    ins.verb = Verb::Put;
    ins.phrasing = Phrasing::Short;
    ins.operand = parse_operand(c);
    parse_target(c, ins);
  } else if (first == "pick") {
    c.expect("up");
    ins.operand = parse_operand(c);
    if (c.done()) {
      ins.verb = Verb::Pick;
    } else {
      ins.verb = Verb::Put;
      ins.phrasing = Phrasing::Long;
      c.expect("and");
      c.expect("place");
      c.expect("it");
      parse_target(c, ins);
    }
  } else {
    c.fail("expected 'put' or 'pick'");
  }
  if (!c.done()) c.fail("trailing words");
  return ins;
}

bool feasible(const Scene& scene, const Instruction& ins) {
  const bool operand_ok = std::any_of(scene.objects.begin(), scene.objects.end(),
                                      [&](const SceneObject& o) { return ins.operand.matches(o); });
  if (!operand_ok) return false;
  if (ins.target) {
    const bool target_ok = std::any_of(scene.locations.begin(), scene.locations.end(),
                                       [&](const SceneLocation& l) { return ins.target->matches(l); });
    if (!target_ok) return false;
    if (ins.relation && !scene.relations.allows(ins.target->category, *ins.relation)) return false;
  }
  return true;
}

std::size_t action_index(const Action& a) {
  switch (a.kind) {
    case ActionKind::Pick:
      if (a.slot >= kMaxObjects) throw InvalidInput("action_index: object slot out of range");
      return a.slot;
    case ActionKind::Place:
      if (a.slot >= kMaxLocations) throw InvalidInput("action_index: location slot out of range");
      return kMaxObjects + a.slot * kNumRelations + idx(a.relation);
    case ActionKind::Abstain: return kNumActions - 1;
  }
  return kNumActions - 1;
}

Action action_from_index(std::size_t index) {
  if (index >= kNumActions) throw InvalidInput("action_from_index: out of range");
  if (index < kMaxObjects) return {ActionKind::Pick, index, Relation::On};
  if (index == kNumActions - 1) return {ActionKind::Abstain, 0, Relation::On};
  const std::size_t k = index - kMaxObjects;
  return {ActionKind::Place, k / kNumRelations, static_cast<Relation>(k % kNumRelations)};
}

std::string describe(const Action& a) {
  switch (a.kind) {
    case ActionKind::Pick: return "Pick(" + std::to_string(a.slot) + ")";
    case ActionKind::Place:
      return "Place(" + std::to_string(a.slot) + "," + std::string(to_string(a.relation)) + ")";
    case ActionKind::Abstain: return "Abstain";
  }
  return "Abstain";
}

WorldState::WorldState(Scene scene) : scene_(std::move(scene)) {}

bool WorldState::is_placed(std::size_t object) const {
  return std::any_of(placements_.begin(), placements_.end(),
                     [&](const Placement& p) { return p.object == object; });
}

bool WorldState::apply(const Action& a) {
  switch (a.kind) {
    case ActionKind::Pick:
      if (held_ || a.slot >= scene_.objects.size() || is_placed(a.slot)) return false;
      held_ = a.slot;
      return true;
    case ActionKind::Place: {
      if (!held_ || a.slot >= scene_.locations.size()) return false;
      if (!scene_.relations.allows(scene_.locations[a.slot].category, a.relation)) return false;
      placements_.push_back({*held_, a.slot, a.relation});
      held_.reset();
      return true;
    }
    case ActionKind::Abstain: return false;
  }
  return false;
}

bool judge(const WorldState& state, const Instruction& judged) {
  const Scene& s = state.scene();
  if (judged.verb == Verb::Pick) {
    return state.held() && judged.operand.matches(s.objects[*state.held()]);
  }
  for (const Placement& p : state.placements()) {
    if (judged.operand.matches(s.objects[p.object]) && judged.target &&
        judged.target->matches(s.locations[p.location]) && judged.relation &&
        *judged.relation == p.relation) {
      return true;
    }
  }
  return false;
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Completed: return "completed";
    case Termination::Abstained: return "abstained";
    case Termination::StepLimit: return "step_limit";
  }
  return "step_limit";
}

EpisodeOutcome rollout(const Policy& policy, const Scene& scene, const Instruction& executed,
                       const Instruction& judged, std::size_t step_limit) {
  if (step_limit < 1) throw InvalidInput("rollout: step limit must be >= 1");
  WorldState state(scene);
  EpisodeOutcome out;
  double ivar_sum = 0.0;
  std::size_t ivar_count = 0;
  for (std::size_t step = 0; step < step_limit; ++step) {
    const Decision d = policy.decide(state, executed);
    out.actions.push_back(d.action);
    if (d.ivar) {
      ivar_sum += *d.ivar;
      ++ivar_count;
    }
    if (d.action.kind == ActionKind::Abstain) {
      out.reason = Termination::Abstained;
      break;
    }
    if (!state.apply(d.action)) continue;
    const bool done = (executed.verb == Verb::Pick && d.action.kind == ActionKind::Pick) ||
                      (executed.verb == Verb::Put && d.action.kind == ActionKind::Place);
    if (done) {
      out.reason = Termination::Completed;
      break;
    }
  }
  out.success = out.reason == Termination::Completed && judge(state, judged);
  out.ivar_mean = ivar_count ? ivar_sum / static_cast<double>(ivar_count) : 0.0;
  return out;
}

bool replay_judgement(const Scene& scene, const std::vector<Action>& actions, const Instruction& judged) {
  WorldState state(scene);
  for (const Action& a : actions) {
    if (a.kind == ActionKind::Abstain) break;
    state.apply(a);
  }
  return judge(state, judged);
}

std::string_view to_string(SuiteKind s) {
  switch (s) {
    case SuiteKind::Spatial: return "spatial";
    case SuiteKind::Object: return "object";
    case SuiteKind::Goal: return "goal";
  }
  return "spatial";
}

SuiteKind parse_suite_kind(std::string_view name) {
  for (SuiteKind s : {SuiteKind::Spatial, SuiteKind::Object, SuiteKind::Goal})
    if (to_string(s) == name) return s;
  throw InvalidInput("unknown suite '" + std::string(name) + "'");
}

namespace {

std::vector<Cell> draw_cells(std::size_t count, int w, int h, Rng& rng) {
  std::vector<Cell> all;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) all.push_back({x, y});
  rng.shuffle(std::span<Cell>(all));
  all.resize(count);
  return all;
}

// Exactly one salient item in [0.8, 1.0]; the rest in [0.05, 0.5].
std::vector<double> draw_saliencies(std::size_t count, Rng& rng) {
  std::vector<double> s(count);
  const std::size_t top = rng.below(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = i == top ? rng.uniform(0.8, 1.0) : rng.uniform(0.05, 0.5);
  return s;
}

}  // namespace

SceneTask generate_scene(SuiteKind suite, Rng& rng) {
  std::size_t n_obj = 0, n_loc = 0;
  Phrasing phrasing = Phrasing::Short;
  switch (suite) {
    case SuiteKind::Spatial:
      n_obj = 2 + rng.below(3);
      n_loc = 2 + rng.below(2);
      break;
    case SuiteKind::Object:
      n_obj = 3 + rng.below(3);
      n_loc = 1 + rng.below(2);
      phrasing = Phrasing::Long;
      break;
    case SuiteKind::Goal:
      n_obj = 2 + rng.below(2);
      n_loc = 2 + rng.below(2);
      break;
  }

  Scene scene;
  const auto cells = draw_cells(n_obj + n_loc, scene.grid_width, scene.grid_height, rng);
  const auto obj_sal = draw_saliencies(n_obj, rng);
  const auto loc_sal = draw_saliencies(n_loc, rng);
  for (std::size_t i = 0; i < n_obj; ++i) {
    SceneObject o;
    o.id = static_cast<int>(i + 1);
    o.category = static_cast<ObjectCategory>(rng.below(kNumObjectCategories));
    o.color = static_cast<Color>(rng.below(kNumColors));
    o.cell = cells[i];
    o.saliency = obj_sal[i];
    scene.objects.push_back(o);
  }
  for (std::size_t j = 0; j < n_loc; ++j) {
    SceneLocation l;
    l.id = static_cast<int>(100 + j + 1);
    if (suite == SuiteKind::Goal && j > 0 && rng.uniform() < 0.5) {
      // Goal scenes often repeat a target category in a different colour.
      l.category = scene.locations.front().category;
    } else {
      l.category = static_cast<LocationCategory>(rng.below(kNumLocationCategories));
    }
    l.color = static_cast<Color>(rng.below(kNumColors));
    l.cell = cells[n_obj + j];
    l.saliency = loc_sal[j];
    scene.locations.push_back(l);
  }

  const SceneObject& operand = scene.objects[scene.most_salient_object()];
  const SceneLocation& target = scene.locations[scene.most_salient_location()];
  Instruction ins;
  ins.verb = Verb::Put;
  ins.phrasing = phrasing;
  ins.operand = {operand.category, operand.color};
  ins.target = TargetDescriptor{target.category, std::nullopt};
  ins.relation = canonical_relation(target.category);
  scene.validate();
  return {std::move(scene), ins};
}

Scene shuffle_layout(const Scene& scene, Rng& rng) {
  Scene out = scene;
  rng.shuffle(std::span<SceneObject>(out.objects));
  rng.shuffle(std::span<SceneLocation>(out.locations));
  const auto cells = draw_cells(out.objects.size() + out.locations.size(), out.grid_width, out.grid_height, rng);
  for (std::size_t i = 0; i < out.objects.size(); ++i) out.objects[i].cell = cells[i];
  for (std::size_t j = 0; j < out.locations.size(); ++j) out.locations[j].cell = cells[out.objects.size() + j];
  return out;
}

}  // namespace igar
