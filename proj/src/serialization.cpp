#include "igar/serialization.hpp"

#include <cstdio>

#include "igar/errors.hpp"

namespace igar {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace {

template <typename T, typename Parse>
T parse_name(const Json& j, Parse parse, const char* what) {
  const auto v = parse(j.get<std::string>());
  if (!v) throw InvalidInput(std::string("scene: unknown ") + what + " '" + j.get<std::string>() + "'");
  return *v;
}

Json cell_json(const Cell& c) { return Json::array({c.x, c.y}); }

Cell cell_from(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidInput("scene: cell must be [x, y]");
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

Json to_json(const Scene& scene) {
  Json j;
  j["grid"] = Json::array({scene.grid_width, scene.grid_height});
  j["objects"] = Json::array();
  for (const auto& o : scene.objects) {
    j["objects"].push_back({{"id", o.id},
                            {"category", to_string(o.category)},
                            {"color", to_string(o.color)},
                            {"cell", cell_json(o.cell)},
                            {"saliency", o.saliency}});
  }
  j["locations"] = Json::array();
  for (const auto& l : scene.locations) {
    j["locations"].push_back({{"id", l.id},
                              {"category", to_string(l.category)},
                              {"color", to_string(l.color)},
                              {"cell", cell_json(l.cell)},
                              {"saliency", l.saliency}});
  }
  Json rel = Json::object();
  for (std::size_t c = 0; c < kNumLocationCategories; ++c) {
    const auto cat = static_cast<LocationCategory>(c);
    Json allowed = Json::array();
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      if (scene.relations.allows(cat, static_cast<Relation>(r))) allowed.push_back(to_string(static_cast<Relation>(r)));
    }
    rel[std::string(to_string(cat))] = allowed;
  }
  j["relations"] = rel;
  return j;
}

Scene scene_from_json(const Json& j) {
  try {
    Scene s;
    s.grid_width = j.at("grid").at(0).get<int>();
    s.grid_height = j.at("grid").at(1).get<int>();
    for (const auto& o : j.at("objects")) {
      s.objects.push_back({o.at("id").get<int>(),
                           parse_name<ObjectCategory>(o.at("category"), parse_object_category, "object category"),
                           parse_name<Color>(o.at("color"), parse_color, "color"), cell_from(o.at("cell")),
                           o.at("saliency").get<double>()});
    }
    for (const auto& l : j.at("locations")) {
      s.locations.push_back(
          {l.at("id").get<int>(),
           parse_name<LocationCategory>(l.at("category"), parse_location_category, "location category"),
           parse_name<Color>(l.at("color"), parse_color, "color"), cell_from(l.at("cell")),
           l.at("saliency").get<double>()});
    }
    if (j.contains("relations")) {
      RelationTable table;
      for (const auto& [name, allowed] : j.at("relations").items()) {
        const auto cat = parse_location_category(name);
        if (!cat) throw InvalidInput("scene: unknown location category '" + name + "' in relations");
        for (const auto& r : allowed) table.set(*cat, parse_name<Relation>(r, parse_relation, "relation"), true);
      }
      s.relations = table;
    }
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("scene: malformed document: ") + e.what());
  }
}

Json to_json(const Instruction& instruction) { return instruction.render(); }

Instruction instruction_from_json(const Json& j) {
  if (!j.is_string()) throw InvalidInput("instruction: expected a string");
  return Instruction::parse(j.get<std::string>());
}

std::string canonical_dump(const Json& j) { return j.dump(); }

std::string content_hash(const Scene& scene) { return hex64(fnv1a64(canonical_dump(to_json(scene)))); }

}  // namespace igar
