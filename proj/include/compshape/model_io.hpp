#pragma once

// JSON model document. Field names are normative; see docs/formats.md.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "compshape/error.hpp"
#include "compshape/shapemodel.hpp"

namespace compshape {

inline constexpr int kModelVersion = 1;

using Json = nlohmann::json;

namespace detail {

// Typed field access that reports the JSON location on failure.
template <typename T>
T field(const Json& object, const char* key, const std::string& where) {
  if (!object.is_object() || !object.contains(key)) {
    throw SchemaError(where + ": missing field '" + key + "'");
  }
  try {
    return object.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw SchemaError(where + "/" + key + ": " + e.what());
  }
}

inline bool present(const Json& object, const char* key) {
  return object.contains(key) && !object.at(key).is_null();
}

inline Json vecToJson(Vec2 v) { return Json::array({v.x, v.y}); }

inline Vec2 vecFromJson(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw SchemaError(where + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

inline Json weightsToJson(const WeightVector& w) {
  return Json{{"wDef", Json::array({w.wDef[0], w.wDef[1]})},
              {"wEdge", w.wEdge},
              {"wApp", w.wApp},
              {"wPart", w.wPart}};
}

inline WeightVector weightsFromJson(const Json& j, const std::string& where) {
  WeightVector w;
  const auto def = detail::field<std::vector<double>>(j, "wDef", where);
  if (def.size() != 2) throw SchemaError(where + "/wDef: expected 2 entries");
  w.wDef = {def[0], def[1]};
  w.wEdge = detail::field<double>(j, "wEdge", where);
  w.wApp = detail::field<std::vector<double>>(j, "wApp", where);
  w.wPart = detail::field<double>(j, "wPart", where);
  return w;
}

inline Json treeToJson(const CompTree& tree) {
  Json nodes = Json::array();
  for (const CompNode& n : tree.nodes) {
    Json node{{"id", n.id}, {"level", n.level}, {"children", n.children}};
    if (n.delta) node["delta"] = detail::vecToJson(*n.delta);
    if (n.leafType) {
      node["leafType"] = {{"orientation", n.leafType->orientation},
                          {"polarity", n.leafType->polarity}};
    }
    if (n.partLabel) node["partLabel"] = *n.partLabel;
    if (n.partScoreChannel) node["partScoreChannel"] = *n.partScoreChannel;
    nodes.push_back(std::move(node));
  }
  Json mixture{{"nodes", std::move(nodes)}};
  if (tree.tag) mixture["tag"] = *tree.tag;
  return mixture;
}

inline CompTree treeFromJson(const Json& j, const std::string& where) {
  CompTree tree;
  if (detail::present(j, "tag")) tree.tag = detail::field<std::string>(j, "tag", where);
  const Json& nodes = j.contains("nodes") ? j.at("nodes") : Json();
  if (!nodes.is_array()) throw SchemaError(where + ": missing array 'nodes'");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string at = where + "/nodes/" + std::to_string(i);
    const Json& jn = nodes[i];
    CompNode n;
    n.id = detail::field<int>(jn, "id", at);
    n.level = detail::field<int>(jn, "level", at);
    n.children = detail::field<std::vector<int>>(jn, "children", at);
    if (detail::present(jn, "delta")) n.delta = detail::vecFromJson(jn.at("delta"), at + "/delta");
    if (detail::present(jn, "leafType")) {
      const Json& lt = jn.at("leafType");
      n.leafType = LeafType{detail::field<int>(lt, "orientation", at + "/leafType"),
                            detail::field<int>(lt, "polarity", at + "/leafType")};
    }
    if (detail::present(jn, "partLabel")) {
      n.partLabel = detail::field<std::string>(jn, "partLabel", at);
    }
    if (detail::present(jn, "partScoreChannel")) {
      n.partScoreChannel = detail::field<int>(jn, "partScoreChannel", at);
    }
    tree.nodes.push_back(std::move(n));
  }
  return tree;
}

inline Json modelToJson(const MixtureModel& model, const WeightVector& weights) {
  Json counts = Json::array();
  for (const PartCount& pc : model.landmarkCounts) {
    counts.push_back({{"label", pc.label}, {"count", pc.count}});
  }
  Json mixtures = Json::array();
  for (const CompTree& tree : model.mixtures) mixtures.push_back(treeToJson(tree));
  return Json{{"version", kModelVersion},
              {"gridSize", model.gridSize},
              {"squareSide", model.squareSide},
              {"channels", model.channels},
              {"partChannels", model.partChannels},
              {"landmarkCounts", std::move(counts)},
              {"weights", weightsToJson(weights)},
              {"mixtures", std::move(mixtures)}};
}

struct ModelFile {
  MixtureModel model;
  WeightVector weights;
};

inline ModelFile modelFromJson(const Json& j) {
  if (!j.is_object()) throw SchemaError("model: document is not an object");
  const int version = detail::field<int>(j, "version", "model");
  if (version != kModelVersion) {
    throw SchemaError("model/version: unsupported version " + std::to_string(version));
  }
  ModelFile file;
  MixtureModel& m = file.model;
  m.gridSize = detail::field<int>(j, "gridSize", "model");
  m.channels = detail::field<int>(j, "channels", "model");
  if (detail::present(j, "squareSide")) m.squareSide = detail::field<int>(j, "squareSide", "model");
  if (detail::present(j, "partChannels")) {
    m.partChannels = detail::field<int>(j, "partChannels", "model");
  }
  m.landmarkCounts.clear();
  const Json counts = detail::field<Json>(j, "landmarkCounts", "model");
  if (!counts.is_array()) throw SchemaError("model/landmarkCounts: expected array");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::string at = "model/landmarkCounts/" + std::to_string(i);
    m.landmarkCounts.push_back({detail::field<std::string>(counts[i], "label", at),
                                detail::field<int>(counts[i], "count", at)});
  }
  file.weights = weightsFromJson(detail::field<Json>(j, "weights", "model"), "model/weights");
  if (static_cast<int>(file.weights.wApp.size()) != 2 * m.channels) {
    throw SchemaError("model/weights/wApp: expected " + std::to_string(2 * m.channels) +
                      " entries (2 x channels)");
  }
  const Json mixtures = detail::field<Json>(j, "mixtures", "model");
  if (!mixtures.is_array() || mixtures.empty()) {
    throw SchemaError("model/mixtures: at least one mixture required");
  }
  for (std::size_t i = 0; i < mixtures.size(); ++i) {
    m.mixtures.push_back(treeFromJson(mixtures[i], "model/mixtures/" + std::to_string(i)));
  }
  validateModel(m);
  return file;
}

inline std::string serializeModel(const MixtureModel& model, const WeightVector& weights) {
  return modelToJson(model, weights).dump(1) + "\n";
}

// Parses a model document; syntax errors name the byte offset.
inline ModelFile deserializeModel(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SchemaError("model: parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return modelFromJson(j);
}

inline std::string readTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void writeTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

inline Json readJsonFile(const std::string& path) {
  const std::string text = readTextFile(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SchemaError(path + ": parse error at byte " + std::to_string(e.byte));
  }
}

inline ModelFile loadModel(const std::string& path) {
  try {
    return deserializeModel(readTextFile(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline void saveModel(const std::string& path, const MixtureModel& model,
                      const WeightVector& weights) {
  writeTextFile(path, serializeModel(model, weights));
}

}  // namespace compshape
