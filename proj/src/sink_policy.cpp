#include "igar/sink_policy.hpp"

#include <cmath>
#include <sstream>

#include "igar/errors.hpp"

namespace igar {

namespace {

// Residual-stream channel map. Channels marked "AQ:" are reused at the
// action-query row for values that only it ever carries.
constexpr std::size_t kSink = 0;
constexpr std::size_t kConst = 1;
constexpr std::size_t kObjCat = 2;    // 4
constexpr std::size_t kObjCol = 6;    // 5
constexpr std::size_t kLocCat = 11;   // 4
constexpr std::size_t kLocCol = 15;   // 5
constexpr std::size_t kSaliency = 20;
constexpr std::size_t kHeld = 21;     // AQ: abstain / null weight
constexpr std::size_t kIsObj = 22;
constexpr std::size_t kIsLoc = 23;
constexpr std::size_t kIsGrip = 24;
constexpr std::size_t kHolding = 25;
constexpr std::size_t kIsVisual = 26;
constexpr std::size_t kSlot = 27;     // 8, AQ: chosen slot weights
constexpr std::size_t kCanon = 35;    // 4, AQ: canonical relation of the chosen location
constexpr std::size_t kIsColor = 39;  // AQ: target colour 0
constexpr std::size_t kColorWord = 40;  // 5, AQ: operand colour
constexpr std::size_t kObjNoun = 45;    // 4, AQ: operand category
constexpr std::size_t kLocNoun = 49;    // 4, AQ: target category
constexpr std::size_t kRelWord = 53;    // 4, AQ: instructed relation
constexpr std::size_t kIsRel = 57;      // AQ: target colour 1
constexpr std::size_t kColorFlag = 58;  // AQ: target colour 2
constexpr std::size_t kIsObjNoun = 59;  // AQ: target colour 3
constexpr std::size_t kIsLocNoun = 60;  // AQ: target colour 4
constexpr std::size_t kAq = 61;
constexpr std::array<std::size_t, 5> kTargetColor{kIsColor, kIsRel, kColorFlag, kIsObjNoun, kIsLocNoun};

constexpr std::size_t kD = 64;
constexpr std::size_t kHeads = 2;
constexpr std::size_t kDh = kD / kHeads;

constexpr double kBosActivation = 40.0;
constexpr double kConstValue = 10.0;

struct Params {
  // Layer 2: action-query scores relative to BOS (BOS scores 20).
  double visual_score = 14.33;
  double content_score = 13.82;
  // Layer 3 matching head.
  double phase = 60.0;     // objects before grasp, locations after
  double saliency = 12.0;
  double null_offset = 5.0;
  double obj_bonus = 25.0;
  double obj_penalty = 100.0;
  double loc_bonus = 40.0;
  double loc_penalty = 160.0;
  // Action head.
  double slot_gain = 50.0;
  double phase_mask = 100.0;
  double relation_word = 30.0;
  double relation_canonical = 2.0;
};

double gain_value() { return std::sqrt(104.0 / 64.0); }

// Normalised BOS activation on the sink channel.
double bos_hat() { return kBosActivation * gain_value() / std::sqrt(kBosActivation * kBosActivation / kD); }

std::size_t word(std::string_view w) { return static_cast<std::size_t>(vocab::word_token(w)); }

void set_embeddings(PolicySpec& s) {
  Matrix& e = s.tok_emb;
  for (std::size_t id = 0; id < s.shape.vocab; ++id) e(id, kConst) = kConstValue;
  for (std::size_t k = 0; k < kD; ++k) e(vocab::kBos, k) = 0.0;
  e(vocab::kBos, kSink) = kBosActivation;

  for (std::size_t c = 0; c < kNumObjectCategories; ++c) {
    for (std::size_t col = 0; col < kNumColors; ++col) {
      const auto id = static_cast<std::size_t>(
          vocab::object_token(static_cast<ObjectCategory>(c), static_cast<Color>(col)));
      e(id, kIsObj) = 1.0;
      e(id, kIsVisual) = 1.0;
      e(id, kObjCat + c) = 1.0;
      e(id, kObjCol + col) = 1.0;
    }
  }
  for (std::size_t c = 0; c < kNumLocationCategories; ++c) {
    const auto canon = static_cast<std::size_t>(canonical_relation(static_cast<LocationCategory>(c)));
    for (std::size_t col = 0; col < kNumColors; ++col) {
      const auto id = static_cast<std::size_t>(
          vocab::location_token(static_cast<LocationCategory>(c), static_cast<Color>(col)));
      e(id, kIsLoc) = 1.0;
      e(id, kIsVisual) = 1.0;
      e(id, kLocCat + c) = 1.0;
      e(id, kLocCol + col) = 1.0;
      e(id, kCanon + canon) = 1.0;
    }
  }
  e(vocab::kEmptyObject, kIsVisual) = 1.0;
  e(vocab::kEmptyLocation, kIsVisual) = 1.0;
  e(vocab::kGripFree, kIsVisual) = 1.0;
  e(vocab::kGripFree, kIsGrip) = 1.0;
  e(vocab::kGripHold, kIsVisual) = 1.0;
  e(vocab::kGripHold, kIsGrip) = 1.0;
  e(vocab::kGripHold, kHolding) = 1.0;
  e(vocab::kActionQuery, kAq) = 1.0;

  for (std::size_t c = 0; c < kNumColors; ++c) {
    const std::size_t id = word(to_string(static_cast<Color>(c)));
    e(id, kIsColor) = 1.0;
    e(id, kColorWord + c) = 1.0;
  }
  for (std::size_t c = 0; c < kNumObjectCategories; ++c) {
    const std::size_t id = word(to_string(static_cast<ObjectCategory>(c)));
    e(id, kIsObjNoun) = 1.0;
    e(id, kObjNoun + c) = 1.0;
  }
  for (std::size_t c = 0; c < kNumLocationCategories; ++c) {
    const std::size_t id = word(to_string(static_cast<LocationCategory>(c)));
    e(id, kIsLocNoun) = 1.0;
    e(id, kLocNoun + c) = 1.0;
  }
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    const std::size_t id = word(to_string(static_cast<Relation>(r)));
    e(id, kIsRel) = 1.0;
    e(id, kRelWord + r) = 1.0;
  }

  for (std::size_t slot = 0; slot < kMaxObjects + kMaxLocations; ++slot) {
    s.pos_emb(layout::kFirstObject + slot, kSlot + slot) = 1.0;
  }
  s.feat_proj(0, kSaliency) = 1.0;
  s.feat_proj(1, kHeld) = 1.0;
}

// Query/key entries are pre-multiplied by sqrt(dh) so that the scaled dot
// product equals the intended score.
struct HeadWriter {
  LayerWeights& w;
  std::size_t head;
  double qscale = std::sqrt(static_cast<double>(kDh));

  void qk(std::size_t dim, std::size_t q_channel, double q_weight, std::size_t k_channel, double k_weight) {
    w.wq(q_channel, head * kDh + dim) += qscale * q_weight;
    w.wk(k_channel, head * kDh + dim) += k_weight;
  }
  void q(std::size_t dim, std::size_t channel, double weight) {
    w.wq(channel, head * kDh + dim) += qscale * weight;
  }
  void k(std::size_t dim, std::size_t channel, double weight) { w.wk(channel, head * kDh + dim) += weight; }
  void value(std::size_t dim, std::size_t from, std::size_t to) {
    w.wv(from, head * kDh + dim) = 1.0;
    w.wo(head * kDh + dim, to) = 1.0;
  }
  // Every query except BOS (and the action query when `except_aq`) puts
  // score `score` on BOS.
  void park(std::size_t dim, double score, bool except_aq) {
    q(dim, kConst, score / kConstValue);
    if (except_aq) q(dim, kAq, -score);
    k(dim, kSink, 1.0 / bos_hat());
  }
};

void set_layers(PolicySpec& s, const Params& p) {
  // Layer 1: colour-role flag and gripper state.
  {
    HeadWriter h0{s.layers[0], 0};
    h0.qk(0, kIsColor, 20.0, kIsRel, 1.0);
    h0.park(1, 10.0, false);
    h0.value(0, kIsRel, kColorFlag);

    HeadWriter h1{s.layers[0], 1};
    h1.qk(0, kAq, 20.0, kIsGrip, 1.0);
    h1.park(1, 10.0, false);
    h1.value(0, kHolding, kHolding);
  }
  // Layer 2: operand head and target head at the action query.
  {
    HeadWriter a{s.layers[1], 0};
    a.q(0, kAq, 1.0);
    a.k(0, kSink, 20.0 / bos_hat());
    a.k(0, kIsVisual, p.visual_score);
    a.k(0, kIsObjNoun, p.content_score);
    a.k(0, kIsColor, p.content_score);
    a.k(0, kColorFlag, -p.content_score);
    a.park(1, 20.0, true);
    for (std::size_t c = 0; c < kNumObjectCategories; ++c) a.value(2 + c, kObjNoun + c, kObjNoun + c);
    for (std::size_t c = 0; c < kNumColors; ++c) a.value(6 + c, kColorWord + c, kColorWord + c);

    HeadWriter b{s.layers[1], 1};
    b.q(0, kAq, 1.0);
    b.k(0, kSink, 20.0 / bos_hat());
    b.k(0, kIsVisual, p.visual_score);
    b.k(0, kIsLocNoun, p.content_score);
    b.k(0, kIsRel, p.content_score);
    b.k(0, kColorFlag, p.content_score);
    b.park(1, 20.0, true);
    for (std::size_t c = 0; c < kNumLocationCategories; ++c) b.value(2 + c, kLocNoun + c, kLocNoun + c);
    for (std::size_t r = 0; r < kNumRelations; ++r) b.value(6 + r, kRelWord + r, kRelWord + r);
    for (std::size_t c = 0; c < kNumColors; ++c) b.value(10 + c, kColorWord + c, kTargetColor[c]);
  }
  // Layer 3: slot matching head.
  {
    HeadWriter m{s.layers[2], 0};
    m.q(0, kAq, 1.0);
    m.k(0, kIsObj, p.phase);
    m.k(0, kSaliency, p.saliency);
    m.k(0, kAq, p.phase + p.null_offset);
    m.qk(1, kHolding, p.phase, kIsLoc, 1.0);
    m.k(1, kIsObj, -1.0);
    std::size_t dim = 2;
    for (std::size_t c = 0; c < kNumObjectCategories; ++c, ++dim) {
      m.qk(dim, kObjNoun + c, 1.0, kObjCat + c, p.obj_bonus + p.obj_penalty);
      m.k(dim, kIsObj, -p.obj_penalty);
    }
    for (std::size_t c = 0; c < kNumColors; ++c, ++dim) {
      m.qk(dim, kColorWord + c, 1.0, kObjCol + c, p.obj_bonus + p.obj_penalty);
      m.k(dim, kIsObj, -p.obj_penalty);
    }
    for (std::size_t c = 0; c < kNumLocationCategories; ++c, ++dim) {
      m.qk(dim, kLocNoun + c, 1.0, kLocCat + c, p.loc_bonus + p.loc_penalty);
      m.k(dim, kIsLoc, -p.loc_penalty);
    }
    for (std::size_t c = 0; c < kNumColors; ++c, ++dim) {
      m.qk(dim, kTargetColor[c], 1.0, kLocCol + c, p.loc_bonus + p.loc_penalty);
      m.k(dim, kIsLoc, -p.loc_penalty);
    }
    for (std::size_t slot = 0; slot < kMaxObjects + kMaxLocations; ++slot) m.value(slot, kSlot + slot, kSlot + slot);
    m.value(8, kAq, kHeld);
    for (std::size_t r = 0; r < kNumRelations; ++r) m.value(9 + r, kCanon + r, kCanon + r);

    HeadWriter idle{s.layers[2], 1};
    idle.park(0, 10.0, false);
  }
  // Action head.
  for (std::size_t j = 0; j < kMaxObjects; ++j) {
    const std::size_t a = action_index({ActionKind::Pick, j, Relation::On});
    s.w_out(kSlot + j, a) = p.slot_gain;
    s.w_out(kHolding, a) = -p.phase_mask;
  }
  for (std::size_t k = 0; k < kMaxLocations; ++k) {
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      const std::size_t a = action_index({ActionKind::Place, k, static_cast<Relation>(r)});
      s.w_out(kSlot + kMaxObjects + k, a) = p.slot_gain;
      s.w_out(kRelWord + r, a) = p.relation_word;
      s.w_out(kCanon + r, a) = p.relation_canonical;
      s.w_out(kHolding, a) = p.phase_mask;
      s.w_out(kConst, a) = -p.phase_mask / kConstValue;
    }
  }
  s.w_out(kHeld, action_index({ActionKind::Abstain, 0, Relation::On})) = p.slot_gain;
}

std::string describe_case(std::size_t scene, const Instruction& ins, const char* phase, bool igar,
                          const Action& got) {
  std::ostringstream os;
  os << "scene " << scene << " [" << phase << (igar ? ", igar" : ", plain") << "] '" << ins.render()
     << "' -> " << describe(got);
  return os.str();
}

}  // namespace

PolicySpec build_sink_policy(std::uint64_t seed) {
  PolicyShape shape;
  shape.layers = 3;
  shape.heads = kHeads;
  shape.d_model = kD;
  shape.ff_hidden = 2 * kD;
  shape.bos_text_sink = true;
  PolicySpec s = PolicySpec::zeros(shape);
  const double g = gain_value();
  for (auto& l : s.layers) {
    l.attn_gain.fill(g);
    l.ff_gain.fill(g);
  }
  s.final_gain.fill(g);

  // Feed-forward blocks are inert: w1 and b1 are zero, so GELU(0) = 0 and
  // the seeded w2 never reaches the residual stream.
  Rng rng(seed);
  for (auto& l : s.layers)
    for (double& v : l.w2.data()) v = rng.normal(0.0, 1e-3);
  set_embeddings(s);
  set_layers(s, Params{});
  s.validate();

  const ProbeReport report = verify_sink_contract(s, ProbeDepth::Sampled);
  if (!report.ok()) {
    std::string msg = "build_sink_policy: contract violated in " + std::to_string(report.failure_count) +
                      " of " + std::to_string(report.checks) + " checks";
    for (const auto& f : report.failures) msg += "\n  " + f;
    throw ConstructionError(msg);
  }
  return s;
}

std::vector<Scene> probe_scene_bank() {
  Rng rng(0x5EEDBA4CULL);
  std::vector<Scene> bank;
  const SuiteKind kinds[] = {SuiteKind::Spatial, SuiteKind::Object, SuiteKind::Goal};
  for (std::size_t i = 0; i < 20; ++i) bank.push_back(generate_scene(kinds[i % 3], rng).scene);
  return bank;
}

std::vector<Instruction> probe_grammar() {
  std::vector<ObjectDescriptor> operands;
  std::vector<TargetDescriptor> targets;
  for (std::size_t c = 0; c < kNumObjectCategories; ++c) {
    operands.push_back({static_cast<ObjectCategory>(c), std::nullopt});
    for (std::size_t col = 0; col < kNumColors; ++col)
      operands.push_back({static_cast<ObjectCategory>(c), static_cast<Color>(col)});
  }
  for (std::size_t c = 0; c < kNumLocationCategories; ++c) {
    targets.push_back({static_cast<LocationCategory>(c), std::nullopt});
    for (std::size_t col = 0; col < kNumColors; ++col)
      targets.push_back({static_cast<LocationCategory>(c), static_cast<Color>(col)});
  }
  std::vector<Instruction> out;
  for (const auto& op : operands) {
    Instruction pick;
    pick.verb = Verb::Pick;
    pick.operand = op;
    out.push_back(pick);
  }
  for (Phrasing ph : {Phrasing::Short, Phrasing::Long}) {
    for (const auto& op : operands) {
      for (const auto& tg : targets) {
        for (std::size_t r = 0; r < kNumRelations; ++r) {
          Instruction put;
          put.verb = Verb::Put;
          put.phrasing = ph;
          put.operand = op;
          put.target = tg;
          put.relation = static_cast<Relation>(r);
          out.push_back(put);
        }
      }
    }
  }
  return out;
}

ProbeReport verify_sink_contract(const PolicySpec& spec, ProbeDepth depth) {
  ProbeReport report;
  auto fail = [&](std::string msg) {
    ++report.failure_count;
    if (report.failures.size() < 8) report.failures.push_back(std::move(msg));
  };
  const Intervention igar{};
  const std::vector<Scene> bank = probe_scene_bank();
  const std::vector<Instruction> grammar = probe_grammar();

  Rng pick_rng(0xC0FFEEULL);
  for (std::size_t si = 0; si < bank.size(); ++si) {
    const Scene& scene = bank[si];
    std::vector<const Instruction*> subset;
    if (depth == ProbeDepth::Exhaustive) {
      for (const auto& ins : grammar) subset.push_back(&ins);
    } else {
      for (int i = 0; i < 24; ++i) subset.push_back(&grammar[pick_rng.below(grammar.size())]);
    }

    const std::size_t top_obj = scene.most_salient_object();
    const std::size_t top_loc = scene.most_salient_location();
    const WorldState fresh(scene);
    WorldState holding(scene);
    holding.apply({ActionKind::Pick, top_obj, Relation::On});

    {
      // (a) on the first probe instruction of each scene.
      const TokenSequence tokens = tokenize(fresh, *subset.front(), spec.shape.action_queries);
      const ForwardTrace t = forward(spec, tokens, igar);
      ++report.checks;
      if (!t.layers.front().recalibration || !contains(t.layers.front().recalibration->sinks.sinks, layout::kBos)) {
        fail("scene " + std::to_string(si) + ": BOS not detected as a sink");
      }
    }

    for (const Instruction* ins : subset) {
      const auto plain_pick = action_from_index(forward(spec, tokenize(fresh, *ins), std::nullopt).action);
      ++report.checks;
      if (plain_pick != Action{ActionKind::Pick, top_obj, Relation::On}) {
        fail(describe_case(si, *ins, "pick", false, plain_pick));
      }
      const auto igar_pick = action_from_index(forward(spec, tokenize(fresh, *ins), igar).action);
      ++report.checks;
      bool operand_exists = false;
      for (const auto& o : scene.objects) operand_exists = operand_exists || ins->operand.matches(o);
      const bool pick_ok = operand_exists ? igar_pick.kind == ActionKind::Pick &&
                                                igar_pick.slot < scene.objects.size() &&
                                                ins->operand.matches(scene.objects[igar_pick.slot])
                                          : igar_pick.kind == ActionKind::Abstain;
      if (!pick_ok) fail(describe_case(si, *ins, "pick", true, igar_pick));

      if (ins->verb != Verb::Put) continue;
      const Relation canon = canonical_relation(scene.locations[top_loc].category);
      const auto plain_place = action_from_index(forward(spec, tokenize(holding, *ins), std::nullopt).action);
      ++report.checks;
      if (plain_place != Action{ActionKind::Place, top_loc, canon}) {
        fail(describe_case(si, *ins, "place", false, plain_place));
      }
      const auto igar_place = action_from_index(forward(spec, tokenize(holding, *ins), igar).action);
      ++report.checks;
      bool target_exists = false;
      for (const auto& l : scene.locations) target_exists = target_exists || ins->target->matches(l);
      const bool place_ok = target_exists ? igar_place.kind == ActionKind::Place &&
                                                igar_place.slot < scene.locations.size() &&
                                                ins->target->matches(scene.locations[igar_place.slot]) &&
                                                igar_place.relation == *ins->relation
                                          : igar_place.kind == ActionKind::Abstain;
      if (!place_ok) fail(describe_case(si, *ins, "place", true, igar_place));
    }
  }
  return report;
}

}  // namespace igar
