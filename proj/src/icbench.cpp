#include "igar/icbench.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "igar/errors.hpp"

namespace igar {

namespace {

std::vector<Color> absent_object_colors(const Scene& scene, ObjectCategory cat, std::optional<Color> current) {
  std::vector<Color> out;
  for (std::size_t c = 0; c < kNumColors; ++c) {
    const auto color = static_cast<Color>(c);
    if (current && color == *current) continue;
    const bool used = std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
      return o.category == cat && o.color == color;
    });
    if (!used) out.push_back(color);
  }
  return out;
}

std::vector<Color> absent_location_colors(const Scene& scene, LocationCategory cat) {
  std::vector<Color> out;
  for (std::size_t c = 0; c < kNumColors; ++c) {
    const auto color = static_cast<Color>(c);
    const bool used = std::any_of(scene.locations.begin(), scene.locations.end(), [&](const SceneLocation& l) {
      return l.category == cat && l.color == color;
    });
    if (!used) out.push_back(color);
  }
  return out;
}

Instruction apply_v1(const Scene& scene, Instruction ins, Rng& rng) {
  if (!ins.operand.color) throw InapplicableCase("V1: operand carries no colour to substitute");
  const auto options = absent_object_colors(scene, ins.operand.category, ins.operand.color);
  if (options.empty()) throw InapplicableCase("V1: every colour is present for the operand category");
  ins.operand.color = options[rng.below(options.size())];
  return ins;
}

Instruction apply_v2(const Scene& scene, Instruction ins, Rng& rng) {
  if (!ins.target) throw InapplicableCase("V2: instruction has no target clause");
  if (ins.target->color) throw InapplicableCase("V2: target already carries a colour");
  const auto options = absent_location_colors(scene, ins.target->category);
  if (options.empty()) throw InapplicableCase("V2: every colour is present for the target category");
  ins.target->color = options[rng.below(options.size())];
  return ins;
}

Instruction apply_v4(const Scene& scene, Instruction ins, Rng& rng) {
  if (!ins.target || !ins.relation) throw InapplicableCase("V4: instruction has no target clause");
  std::vector<Relation> options;
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    const auto rel = static_cast<Relation>(r);
    if (rel != *ins.relation && !scene.relations.allows(ins.target->category, rel)) options.push_back(rel);
  }
  if (options.empty()) throw InapplicableCase("V4: every relation is satisfiable for the target category");
  if (std::find(options.begin(), options.end(), Relation::Under) != options.end()) {
    ins.relation = Relation::Under;
  } else {
    ins.relation = options[rng.below(options.size())];
  }
  return ins;
}

}  // namespace

Instruction perturb(const Scene& scene, const Instruction& instruction, Variant variant, Rng& rng) {
  if (!feasible(scene, instruction)) throw InvalidInput("perturb: instruction is not feasible in the scene");
  switch (variant) {
    case Variant::V1: return apply_v1(scene, instruction, rng);
    case Variant::V2: return apply_v2(scene, instruction, rng);
    case Variant::V3: return apply_v2(scene, apply_v1(scene, instruction, rng), rng);
    case Variant::V4: return apply_v4(scene, instruction, rng);
    case Variant::Normal: break;
  }
  throw InvalidInput("perturb: Normal is not a contradiction variant");
}

std::size_t word_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

CaseValidation check_case(const Scene& scene, const Instruction& normal, const Instruction& contra, Variant variant) {
  CaseValidation v;
  v.normal_feasible = feasible(scene, normal);
  v.contra_infeasible = !feasible(scene, contra);
  const auto a = normal.words();
  const auto b = contra.words();
  v.edit_distance = word_edit_distance(a, b);
  switch (variant) {
    case Variant::V1:
    case Variant::V4: v.minimal_edit = v.edit_distance == 1 && a.size() == b.size(); break;
    case Variant::V2: v.minimal_edit = v.edit_distance == 1 && b.size() == a.size() + 1; break;
    case Variant::V3: v.minimal_edit = v.edit_distance >= 1 && v.edit_distance <= 2; break;
    case Variant::Normal: v.minimal_edit = v.edit_distance == 0; break;
  }
  return v;
}

CaseValidation validate(const Scene& scene, const Instruction& normal, const Instruction& contra, Variant variant) {
  const CaseValidation v = check_case(scene, normal, contra, variant);
  const std::string tag = std::string(to_string(variant)) + ": ";
  if (!v.normal_feasible) throw InvalidCase(tag + "check 1 (normal instruction feasible) failed");
  if (!v.contra_infeasible) throw InvalidCase(tag + "check 2 (contradiction infeasible) failed");
  if (!v.minimal_edit) {
    throw InvalidCase(tag + "check 3 (minimal edit) failed: distance " + std::to_string(v.edit_distance));
  }
  return v;
}

const BenchmarkCase& BenchmarkSuite::find(std::size_t case_id) const {
  for (const auto& c : cases)
    if (c.id == case_id) return c;
  throw LookupError("suite '" + name + "' has no case " + std::to_string(case_id));
}

BenchmarkSuite build_suite(const std::string& name, std::size_t cases, const std::vector<Variant>& variants,
                           std::uint64_t seed) {
  if (cases == 0) throw InvalidInput("build_suite: scene count must be >= 1");
  const SuiteKind kind = parse_suite_kind(name);
  for (Variant v : variants)
    if (v == Variant::Normal) throw InvalidInput("build_suite: Normal is implied, not a variant");

  BenchmarkSuite suite;
  suite.name = std::string(to_string(kind));
  suite.seed = seed;
  suite.variants = variants;
  std::sort(suite.variants.begin(), suite.variants.end());
  suite.variants.erase(std::unique(suite.variants.begin(), suite.variants.end()), suite.variants.end());

  Rng rng(seed);
  for (std::size_t id = 0; id < cases; ++id) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < kRetryBudget && !done; ++attempt) {
      SceneTask task = generate_scene(kind, rng);
      BenchmarkCase c{id, task.scene, task.instruction, {}};
      try {
        for (Variant v : suite.variants) {
          Instruction contra = perturb(c.scene, c.normal, v, rng);
          validate(c.scene, c.normal, contra, v);
          c.contra.emplace(v, std::move(contra));
        }
        suite.cases.push_back(std::move(c));
        done = true;
      } catch (const InapplicableCase& e) {
        suite.skipped.push_back("case " + std::to_string(id) + " attempt " + std::to_string(attempt) + ": " + e.what());
      }
    }
    if (!done) {
      throw GenerationExhausted("build_suite: no valid case " + std::to_string(id) + " after " +
                                std::to_string(kRetryBudget) + " attempts");
    }
  }
  suite.validated = true;
  return suite;
}

void revalidate(const BenchmarkSuite& suite) {
  for (const auto& c : suite.cases)
    for (const auto& [v, contra] : c.contra) validate(c.scene, c.normal, contra, v);
}

Json to_json(const BenchmarkSuite& suite) {
  Json variants = Json::array();
  for (Variant v : suite.variants) variants.push_back(to_string(v));
  Json doc;
  doc["manifest"] = {{"suite", suite.name},
                     {"seed", suite.seed},
                     {"generator_version", suite.generator_version},
                     {"cases", suite.cases.size()},
                     {"variants", variants},
                     {"skipped", suite.skipped},
                     {"validation", suite.validated ? "passed" : "unchecked"}};
  Json scenes = Json::object();
  Json cases = Json::array();
  for (const auto& c : suite.cases) {
    const std::string hash = content_hash(c.scene);
    scenes[hash] = to_json(c.scene);
    Json contra = Json::object();
    for (const auto& [v, ins] : c.contra) contra[std::string(to_string(v))] = to_json(ins);
    cases.push_back({{"id", c.id}, {"scene", hash}, {"normal", to_json(c.normal)}, {"contra", contra}});
  }
  doc["scenes"] = scenes;
  doc["cases"] = cases;
  return doc;
}

BenchmarkSuite suite_from_json(const Json& j) {
  try {
    BenchmarkSuite s;
    const Json& m = j.at("manifest");
    s.name = m.at("suite").get<std::string>();
    s.seed = m.at("seed").get<std::uint64_t>();
    s.generator_version = m.at("generator_version").get<std::string>();
    for (const auto& v : m.at("variants")) s.variants.push_back(parse_variant(v.get<std::string>()));
    s.skipped = m.at("skipped").get<std::vector<std::string>>();
    s.validated = m.at("validation").get<std::string>() == "passed";
    for (const auto& c : j.at("cases")) {
      const std::string hash = c.at("scene").get<std::string>();
      if (!j.at("scenes").contains(hash)) throw InvalidInput("suite: case references unknown scene " + hash);
      BenchmarkCase bc{c.at("id").get<std::size_t>(), scene_from_json(j.at("scenes").at(hash)),
                       instruction_from_json(c.at("normal")), {}};
      if (content_hash(bc.scene) != hash) throw InvalidInput("suite: scene " + hash + " does not match its hash");
      for (const auto& [name, ins] : c.at("contra").items()) bc.contra.emplace(parse_variant(name), instruction_from_json(ins));
      s.cases.push_back(std::move(bc));
    }
    if (m.at("cases").get<std::size_t>() != s.cases.size()) throw InvalidInput("suite: manifest case count mismatch");
    return s;
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("suite: malformed document: ") + e.what());
  }
}

std::string dump_suite(const BenchmarkSuite& suite) { return to_json(suite).dump(2) + "\n"; }

BenchmarkSuite load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open suite file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const Json::exception& e) {
    throw ConfigError("suite file " + path + ": " + e.what());
  }
  return suite_from_json(j);
}

void save_suite(const BenchmarkSuite& suite, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write suite file " + path);
  out << dump_suite(suite);
}

}  // namespace igar
