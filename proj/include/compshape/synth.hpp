#pragma once

// Synthetic evidence: renders a mixture's mean shape into a feature stack,
// plus a family of horse-like demo poses to seed the pipeline.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/featurestack.hpp"
#include "compshape/geometry.hpp"
#include "compshape/inference.hpp"
#include "compshape/shapemodel.hpp"
#include "compshape/structlearn.hpp"

namespace compshape {

struct SynthInstance {
  FeatureStack stack;
  std::vector<Vec2> landmarks;  // leaf order
  std::vector<std::string> landmarkParts;
  std::vector<AnnotatedPart> parts;
};

namespace detail {

inline void addNoise(FeatureStack& stack, double noise, std::uint64_t seed) {
  if (noise <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  for (auto* group : {&stack.edge, &stack.app, &stack.part}) {
    for (Grid<float>& g : *group) {
      for (float& v : g.values()) v = static_cast<float>(v + normal(rng));
    }
  }
}

inline void drawSegment(Grid<float>& channel, Vec2 a, Vec2 b) {
  const double len = distance(a, b);
  const int steps = static_cast<int>(std::ceil(4.0 * len)) + 1;
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = a + (static_cast<double>(i) / steps) * (b - a);
    const Point q{static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
    if (channel.contains(q)) channel[q] = 1.0f;
  }
}

// Unit edges along each closed part outline in the segment's orientation
// channel; appearance 0 is the object mask, appearance 1 its complement.
inline FeatureStack renderParts(const std::vector<AnnotatedPart>& parts, int size, int channels,
                                int partChannels) {
  FeatureStack stack = FeatureStack::zeros(size, size, channels, partChannels);
  Grid<std::uint8_t> object(size, size, 0);
  for (const AnnotatedPart& part : parts) {
    if (part.polygon.size() >= 3) fillPolygon<std::uint8_t>(part.polygon, object, 1);
    const std::size_t n = part.polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = part.polygon[i];
      const Vec2 b = part.polygon[(i + 1) % n];
      const int bin = quantizeOrientation(std::atan2(b.y - a.y, b.x - a.x));
      drawSegment(stack.edge[static_cast<std::size_t>(bin)], a, b);
    }
  }
  for (std::size_t i = 0; i < object.size(); ++i) {
    if (channels >= 1) stack.app[0].values()[i] = static_cast<float>(object.values()[i]);
    if (channels >= 2) stack.app[1].values()[i] = 1.0f - object.values()[i];
  }
  return stack;
}

}  // namespace detail

// Integer configuration honouring S1 + S2 = 2S at every composition, placed
// top-down from `root` with S1 = round(S - delta/2 + wobble). Positions are in
// tree.nodes order.
inline std::vector<Point> gridConfiguration(const CompTree& tree, const TreeIndex& ix, Point root,
                                            std::mt19937_64* rng = nullptr,
                                            double wobble = 0.0) {
  std::normal_distribution<double> jitter(0.0, wobble > 0.0 ? wobble : 1.0);
  auto noise = [&] { return rng != nullptr && wobble > 0.0 ? jitter(*rng) : 0.0; };
  std::vector<Point> placed(ix.size());
  placed[ix.root] = root;
  for (auto it = ix.postOrder.rbegin(); it != ix.postOrder.rend(); ++it) {
    const std::size_t v = *it;
    if (ix.isLeaf[v]) continue;
    const Vec2 d = *tree.nodes[v].delta;
    const Point s = placed[v];
    const double nx = noise();
    const double ny = noise();
    const Point s1{static_cast<int>(std::lround(s.x - d.x / 2.0 + nx)),
                   static_cast<int>(std::lround(s.y - d.y / 2.0 + ny))};
    placed[ix.children[v][0]] = s1;
    placed[ix.children[v][1]] = {2 * s.x - s1.x, 2 * s.y - s1.y};
  }
  return placed;
}

// Renders the mixture's grid configuration at `root`: edges (1.0 on boundary
// pixels in the segment's orientation channel), object/background appearance
// (channels 0 and 1) and a unit-peak Gaussian blob per part-scored node, then
// adds N(0, noise) to every value.
inline SynthInstance synthStack(const MixtureModel& model, int mixtureIndex, Point root,
                                double noise, std::uint64_t seed) {
  if (mixtureIndex < 0 || mixtureIndex >= static_cast<int>(model.mixtures.size())) {
    throw InvalidArgument("synthStack: mixture index out of range");
  }
  if (noise < 0.0) throw InvalidArgument("synthStack: noise must be >= 0");
  const CompTree& tree = model.mixtures[static_cast<std::size_t>(mixtureIndex)];
  const TreeIndex ix = indexTree(tree);
  const std::vector<Point> nodes = gridConfiguration(tree, ix, root);
  const int g = model.gridSize;
  const int margin = model.squareSide / 2;

  SynthInstance out;
  for (std::size_t k = 0; k < ix.leafOrder.size(); ++k) {
    const Vec2 p = toVec(nodes[ix.leafOrder[k]]);
    if (p.x < margin || p.y < margin || p.x > g - 1 - margin || p.y > g - 1 - margin) {
      throw InvalidArgument("synthStack: shape exceeds the grid at root (" +
                            std::to_string(root.x) + ", " + std::to_string(root.y) + ")");
    }
    out.landmarks.push_back(p);
    out.landmarkParts.push_back(ix.leafPart[k]);
  }
  for (std::size_t k = 0; k < out.landmarks.size(); ++k) {
    auto it = std::find_if(out.parts.begin(), out.parts.end(), [&](const AnnotatedPart& p) {
      return p.label == out.landmarkParts[k];
    });
    if (it == out.parts.end()) {
      out.parts.push_back({out.landmarkParts[k], {}});
      it = out.parts.end() - 1;
    }
    it->polygon.push_back(out.landmarks[k]);
  }

  out.stack = detail::renderParts(out.parts, g, model.channels, model.partChannels);
  constexpr double kSigma = 2.0;
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    const auto& channel = tree.nodes[v].partScoreChannel;
    if (!channel || *channel >= model.partChannels) continue;
    Grid<float>& target = out.stack.part[static_cast<std::size_t>(*channel)];
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) {
        const double d2 = std::pow(x - nodes[v].x, 2) + std::pow(y - nodes[v].y, 2);
        const float value = static_cast<float>(std::exp(-d2 / (2 * kSigma * kSigma)));
        target(x, y) = std::max(target(x, y), value);
      }
    }
  }
  detail::addNoise(out.stack, noise, seed);
  return out;
}

// Non-object stack: background class everywhere plus noise.
inline FeatureStack synthNegative(int width, int height, int channels, int partChannels,
                                  double noise, std::uint64_t seed) {
  FeatureStack stack = FeatureStack::zeros(width, height, channels, partChannels);
  if (channels >= 2) std::fill(stack.app[1].values().begin(), stack.app[1].values().end(), 1.0f);
  detail::addNoise(stack, noise, seed);
  return stack;
}

// Non-target stack: `shapes` random star-shaped outlines rendered like
// synthStack (edges and object/background appearance), no part response,
// plus noise.
inline FeatureStack synthClutter(int size, int channels, int partChannels, int shapes,
                                 double noise, std::uint64_t seed) {
  if (size < 8) throw InvalidArgument("synthClutter: grid too small");
  if (shapes < 0) throw InvalidArgument("synthClutter: shapes must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(0.2 * size, 0.8 * size);
  std::uniform_real_distribution<double> radius(0.08 * size, 0.25 * size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> vertices(5, 10);
  std::vector<AnnotatedPart> parts;
  for (int s = 0; s < shapes; ++s) {
    const Vec2 c{centre(rng), centre(rng)};
    const double r = radius(rng);
    const int n = vertices(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    Polygon poly;
    for (int k = 0; k < n; ++k) {
      const double a = phase + 2.0 * std::numbers::pi * (k + 0.4 * unit(rng)) / n;
      const double rk = r * (0.6 + 0.6 * unit(rng));
      poly.push_back(Vec2{std::clamp(c.x + rk * std::cos(a), 1.0, size - 2.0),
                          std::clamp(c.y + rk * std::sin(a), 1.0, size - 2.0)});
    }
    parts.push_back({"clutter", std::move(poly)});
  }
  FeatureStack stack = detail::renderParts(parts, size, channels, partChannels);
  detail::addNoise(stack, noise, rng());
  return stack;
}

// Small parse problem: a random balanced tree whose leaves form one closed
// part. A grid-realizable configuration (S1 + S2 = 2S everywhere) is placed
// top-down with Gaussian wobble, rendered like synthStack, and the leaf types
// are matched to the rendered outline. N(0, noise) is added to every channel.
struct ParseInstance {
  CompTree tree;
  FeatureStack stack;
  WeightVector weights;
  int squareSide = 3;
  std::vector<Vec2> planted;  // leaf order, integer positions
};

inline ParseInstance randomParseInstance(std::uint64_t seed, int gridSize = 12, int levels = 3,
                                         double noise = 0.3, int squareSide = 3) {
  if (levels < 2) throw InvalidArgument("randomParseInstance: levels must be >= 2");
  if (gridSize < squareSide + 2) throw InvalidArgument("randomParseInstance: grid too small");
  std::mt19937_64 rng(seed);
  const double reach = std::max(1.0, gridSize / 4.0);
  std::uniform_real_distribution<double> offset(-reach, reach);
  std::uniform_real_distribution<double> stiffness(0.05, 0.5);

  ParseInstance inst;
  inst.squareSide = squareSide;
  const int leaves = 1 << (levels - 1);
  std::vector<int> frontier;
  for (int i = 0; i < leaves; ++i) {
    CompNode leaf;
    leaf.id = i;
    leaf.leafType = LeafType{0, 0};
    leaf.partLabel = "part";
    inst.tree.nodes.push_back(leaf);
    frontier.push_back(i);
  }
  int next = leaves;
  for (int l = 2; l <= levels; ++l) {
    std::vector<int> up;
    for (std::size_t i = 0; i + 1 < frontier.size(); i += 2) {
      CompNode node;
      node.id = next++;
      node.level = l;
      node.children = {frontier[i], frontier[i + 1]};
      node.delta = Vec2{std::round(2.0 * offset(rng)) / 2.0, std::round(2.0 * offset(rng)) / 2.0};
      inst.tree.nodes.push_back(node);
      up.push_back(node.id);
    }
    frontier = std::move(up);
  }

  inst.weights = WeightVector::initial(2);
  inst.weights.wDef = {stiffness(rng), stiffness(rng)};
  inst.weights.wEdge = -1.0;
  inst.weights.wApp = {-0.5, 0.5, 0.5, -0.5};
  inst.weights.wPart = 0.0;

  const TreeIndex ix = indexTree(inst.tree);
  const int margin = squareSide / 2;
  std::uniform_int_distribution<int> rootPos(margin, gridSize - 1 - margin);
  std::vector<Point> placed;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw InvalidArgument("randomParseInstance: tree does not fit the grid");
    placed = gridConfiguration(inst.tree, ix, {rootPos(rng), rootPos(rng)}, &rng, 0.5);
    bool fits = true;
    for (std::size_t leaf : ix.leafOrder) {
      const Point q = placed[leaf];
      fits = fits && q.x >= margin && q.y >= margin && q.x < gridSize - margin &&
             q.y < gridSize - margin;
    }
    if (!fits) continue;
    Polygon outline;
    for (std::size_t leaf : ix.leafOrder) outline.push_back(toVec(placed[leaf]));
    if (polygonArea(outline) < 1.0) continue;
    Grid<std::uint8_t> object(gridSize, gridSize, 0);
    fillPolygon<std::uint8_t>(outline, object, 1);
    std::vector<Vec2> tangents;
    for (std::size_t k = 0; k < outline.size(); ++k) {
      const Vec2 t = outline[(k + 1) % outline.size()] - outline[k];
      const double len = std::hypot(t.x, t.y);
      tangents.push_back(len > 0.0 ? (1.0 / len) * t : Vec2{1.0, 0.0});
    }
    std::vector<LeafType> types;
    try {
      types = matchLeafTypes(outline, tangents, object);
    } catch (const InvalidArgument&) {
      continue;
    }
    for (std::size_t k = 0; k < ix.leafOrder.size(); ++k) {
      inst.tree.nodes[ix.leafOrder[k]].leafType = types[k];
    }
    inst.planted = outline;
    inst.stack = detail::renderParts({{"part", outline}}, gridSize, 2, 0);
    break;
  }
  detail::addNoise(inst.stack, noise, rng());
  return inst;
}

// Horse-like head / neck / torso outlines with equal edge lengths, so that
// uniform landmark sampling returns the vertices. Poses vary the neck and head
// directions.
inline std::vector<PartAnnotation> demoAnnotations(int poses, int gridSize) {
  if (poses < 1) throw InvalidArgument("demoAnnotations: at least one pose");
  if (gridSize < 64) throw InvalidArgument("demoAnnotations: gridSize must be >= 64");
  // Edge directions in tenths of the unit length; Pythagorean so every
  // vertex stays on the integer grid.
  static constexpr std::array<std::array<int, 4>, 6> kPoses{{
      {6, -8, 8, -6},
      {0, -10, 6, -8},
      {-6, -8, 0, -10},
      {8, -6, 0, -10},
      {0, -10, -6, -8},
      {6, -8, 6, -8},
  }};
  const int unit = 10 * std::max(1, static_cast<int>(std::lround(gridSize / 128.0)));
  const double L = unit;
  std::vector<PartAnnotation> out;
  for (int i = 0; i < poses; ++i) {
    const auto& p = kPoses[static_cast<std::size_t>(i) % kPoses.size()];
    const Vec2 v{p[0] * L / 10.0, p[1] * L / 10.0};
    const Vec2 w{p[2] * L / 10.0, p[3] * L / 10.0};
    Polygon torso;
    for (int k = 0; k <= 6; ++k) torso.push_back({k * L, 0.0});
    torso.push_back({6 * L, L});
    for (int k = 6; k >= 0; --k) torso.push_back({k * L, 2 * L});
    torso.push_back({0.0, L});
    const Vec2 b0{5 * L, 0.0};
    const Vec2 b1{6 * L, 0.0};
    const Vec2 e{L, 0.0};
    const Polygon neck{b0,           b0 + v,       b0 + 2.0 * v, b0 + 3.0 * v,
                       b1 + 3.0 * v, b1 + 2.0 * v, b1 + v,       b1};
    const Vec2 p0 = b0 + 3.0 * v;
    const Polygon head{p0,
                       p0 + w,
                       p0 + 2.0 * w,
                       p0 + 2.0 * w + e,
                       p0 + 2.0 * w + 2.0 * e,
                       p0 + w + 2.0 * e,
                       p0 + 2.0 * e,
                       p0 + e};
    // Centre the figure on the canvas, snapped to integers.
    double minX = 0, minY = 0, maxX = 0, maxY = 0;
    bool firstPoint = true;
    for (const Polygon* poly : std::array<const Polygon*, 3>{&head, &neck, &torso}) {
      for (const Vec2& q : *poly) {
        if (firstPoint) {
          minX = maxX = q.x;
          minY = maxY = q.y;
          firstPoint = false;
        }
        minX = std::min(minX, q.x);
        maxX = std::max(maxX, q.x);
        minY = std::min(minY, q.y);
        maxY = std::max(maxY, q.y);
      }
    }
    const Vec2 shift{std::round((gridSize - (maxX - minX)) / 2.0 - minX),
                     std::round((gridSize - (maxY - minY)) / 2.0 - minY)};
    auto place = [&](const Polygon& poly) {
      Polygon placed;
      for (const Vec2& q : poly) placed.push_back(q + shift);
      return placed;
    };
    PartAnnotation ann;
    ann.id = "pose-" + std::to_string(i);
    ann.tag = ann.id;
    ann.width = gridSize;
    ann.height = gridSize;
    ann.parts = {{"head", place(head)}, {"neck", place(neck)}, {"torso", place(torso)}};
    out.push_back(std::move(ann));
  }
  return out;
}

// One mixture per demo pose, in pose order.
inline MixtureModel demoModel(int poses, int gridSize, int channels = 2, int squareSide = 11) {
  StructureOptions options;
  options.gridSize = gridSize;
  options.channels = channels;
  options.squareSide = squareSide;
  MixtureModel model;
  model.gridSize = gridSize;
  model.channels = channels;
  model.squareSide = squareSide;
  model.partChannels = 1;
  model.landmarkCounts = options.counts;
  for (const PartAnnotation& ann : demoAnnotations(poses, gridSize)) {
    model.mixtures.push_back(treeFromAnnotation(normalizeAnnotation(ann, gridSize), options));
  }
  validateModel(model);
  return model;
}

}  // namespace compshape
