#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/geometry.hpp"

namespace compshape {

inline constexpr int kOrientationCount = 8;
inline constexpr int kPolarityCount = 3;
inline constexpr int kLeafTypeCount = kOrientationCount * kPolarityCount;

// Polarity relative to the normal n = (-sin t, cos t) of orientation t.
inline constexpr int kObjectOnNormalSide = 0;
inline constexpr int kObjectOnOppositeSide = 1;
inline constexpr int kObjectBothSides = 2;

// Oriented edgelet type of a leaf node.
struct LeafType {
  int orientation = 0;  // bin center orientation * pi / 8
  int polarity = 0;

  int index() const noexcept { return orientation * kPolarityCount + polarity; }
  static LeafType fromIndex(int index) {
    return {index / kPolarityCount, index % kPolarityCount};
  }
  bool valid() const noexcept {
    return orientation >= 0 && orientation < kOrientationCount && polarity >= 0 &&
           polarity < kPolarityCount;
  }

  friend bool operator==(const LeafType&, const LeafType&) = default;
};

inline double orientationAngle(int orientation) {
  return orientation * std::numbers::pi / kOrientationCount;
}

// Nearest of the eight bin centers for an undirected angle; an angle exactly
// halfway between two centers goes to the lower bin index.
inline int quantizeOrientation(double angle) {
  const double binWidth = std::numbers::pi / kOrientationCount;
  double a = std::fmod(angle, std::numbers::pi);
  if (a < 0) a += std::numbers::pi;
  const double position = a / binWidth;
  int bin = static_cast<int>(std::ceil(position - 0.5));
  return ((bin % kOrientationCount) + kOrientationCount) % kOrientationCount;
}

struct CompNode {
  int id = 0;
  int level = 1;
  std::vector<int> children;        // node ids, empty for leaves
  std::optional<Vec2> delta;        // second child minus first child
  std::optional<LeafType> leafType; // leaves only
  std::optional<std::string> partLabel;
  std::optional<int> partScoreChannel;
};

// One mixture: a binary composition hierarchy.
struct CompTree {
  std::vector<CompNode> nodes;
  // Free-form provenance, e.g. the annotation a medoid came from.
  std::optional<std::string> tag;
};

struct Violation {
  int nodeId = -1;
  std::string rule;
  std::string message;
};

namespace detail {

inline std::map<int, std::size_t> idIndex(const CompTree& tree, std::vector<Violation>* out) {
  std::map<int, std::size_t> index;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto [it, inserted] = index.emplace(tree.nodes[i].id, i);
    if (!inserted && out != nullptr) {
      out->push_back({tree.nodes[i].id, "unique-id", "duplicate node id"});
    }
  }
  return index;
}

}  // namespace detail

inline std::vector<Violation> validateTree(const CompTree& tree) {
  std::vector<Violation> out;
  if (tree.nodes.empty()) {
    out.push_back({-1, "non-empty", "tree has no nodes"});
    return out;
  }
  const auto index = detail::idIndex(tree, &out);
  std::map<int, int> parentCount;
  for (const CompNode& node : tree.nodes) {
    if (node.level < 1) {
      out.push_back({node.id, "level", "level must be >= 1"});
    }
    if (node.children.empty()) {
      if (node.level != 1) {
        out.push_back({node.id, "level",
                       "childless node at level " + std::to_string(node.level) +
                           "; leaves must be at level 1"});
      }
      if (!node.leafType) {
        out.push_back({node.id, "leaf-type", "leaf has no leaf type"});
      } else if (!node.leafType->valid()) {
        out.push_back({node.id, "leaf-type", "leaf type out of range"});
      }
      continue;
    }
    if (node.children.size() != 2) {
      out.push_back({node.id, "arity",
                     "node has " + std::to_string(node.children.size()) +
                         " children; exactly two required"});
    }
    if (node.level == 1) {
      out.push_back({node.id, "level", "level-1 node has children"});
    }
    if (!node.delta) {
      out.push_back({node.id, "delta", "non-leaf node has no delta"});
    } else if (!std::isfinite(node.delta->x) || !std::isfinite(node.delta->y)) {
      out.push_back({node.id, "delta", "delta is not finite"});
    }
    for (int child : node.children) {
      const auto it = index.find(child);
      if (it == index.end()) {
        out.push_back({node.id, "child-exists", "child id " + std::to_string(child) + " missing"});
        continue;
      }
      ++parentCount[child];
      const CompNode& c = tree.nodes[it->second];
      if (c.level != node.level - 1) {
        out.push_back({node.id, "level",
                       "child " + std::to_string(child) + " at level " +
                           std::to_string(c.level) + ", expected " +
                           std::to_string(node.level - 1)});
      }
    }
  }
  if (!out.empty()) return out;

  std::vector<int> roots;
  for (const CompNode& node : tree.nodes) {
    const int parents = parentCount.count(node.id) ? parentCount[node.id] : 0;
    if (parents == 0) roots.push_back(node.id);
    if (parents > 1) out.push_back({node.id, "single-parent", "node has several parents"});
  }
  if (roots.size() != 1) {
    out.push_back({roots.empty() ? -1 : roots.front(), "single-root",
                   std::to_string(roots.size()) + " root candidates"});
    return out;
  }
  const CompNode& root = tree.nodes[index.at(roots.front())];
  const int levels = root.level;
  if (levels >= 31) {
    out.push_back({root.id, "node-count", "too many levels"});
    return out;
  }
  std::size_t leaves = 0;
  for (const CompNode& node : tree.nodes) leaves += node.children.empty() ? 1 : 0;
  const std::size_t expectedLeaves = std::size_t{1} << (levels - 1);
  if (leaves != expectedLeaves || tree.nodes.size() != 2 * expectedLeaves - 1) {
    out.push_back({root.id, "node-count",
                   std::to_string(levels) + " levels require " + std::to_string(expectedLeaves) +
                       " leaves and " + std::to_string(2 * expectedLeaves - 1) + " nodes, found " +
                       std::to_string(leaves) + " and " + std::to_string(tree.nodes.size())});
  }
  return out;
}

inline std::string describe(const std::vector<Violation>& violations) {
  std::string text;
  for (const Violation& v : violations) {
    if (!text.empty()) text += "; ";
    text += "node " + std::to_string(v.nodeId) + " [" + v.rule + "]: " + v.message;
  }
  return text;
}

// Index-based view of a validated tree, used by every traversal.
struct TreeIndex {
  std::size_t root = 0;
  int levels = 0;
  std::vector<std::array<std::size_t, 2>> children;  // valid for non-leaves
  std::vector<bool> isLeaf;
  std::vector<std::size_t> postOrder;
  std::vector<std::size_t> leafOrder;  // depth-first, first child first
  std::vector<std::string> leafPart;   // label inherited from nearest labeled ancestor

  std::size_t size() const noexcept { return isLeaf.size(); }
};

inline TreeIndex indexTree(const CompTree& tree) {
  const auto violations = validateTree(tree);
  if (!violations.empty()) throw SchemaError("invalid tree: " + describe(violations));
  const auto ids = detail::idIndex(tree, nullptr);
  TreeIndex ix;
  const std::size_t n = tree.nodes.size();
  ix.children.resize(n);
  ix.isLeaf.resize(n);
  std::vector<bool> hasParent(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const CompNode& node = tree.nodes[i];
    ix.isLeaf[i] = node.children.empty();
    if (!ix.isLeaf[i]) {
      ix.children[i] = {ids.at(node.children[0]), ids.at(node.children[1])};
      hasParent[ix.children[i][0]] = true;
      hasParent[ix.children[i][1]] = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!hasParent[i]) ix.root = i;
  }
  ix.levels = tree.nodes[ix.root].level;

  // Iterative DFS producing post-order and left-to-right leaf order.
  struct Frame {
    std::size_t node;
    std::string label;
    bool expanded;
  };
  std::vector<Frame> stack{{ix.root, tree.nodes[ix.root].partLabel.value_or(""), false}};
  while (!stack.empty()) {
    Frame frame = stack.back();
    stack.pop_back();
    if (ix.isLeaf[frame.node]) {
      ix.postOrder.push_back(frame.node);
      ix.leafOrder.push_back(frame.node);
      ix.leafPart.push_back(frame.label);
      continue;
    }
    if (frame.expanded) {
      ix.postOrder.push_back(frame.node);
      continue;
    }
    stack.push_back({frame.node, frame.label, true});
    for (int c = 1; c >= 0; --c) {
      const std::size_t child = ix.children[frame.node][static_cast<std::size_t>(c)];
      stack.push_back({child, tree.nodes[child].partLabel.value_or(frame.label), false});
    }
  }
  return ix;
}

// Zero-deformation placement of every node given the root position: the
// first child sits at S - delta/2, the second at S + delta/2.
inline std::vector<Vec2> nodePositions(const CompTree& tree, const TreeIndex& ix, Vec2 root) {
  std::vector<Vec2> pos(ix.size());
  pos[ix.root] = root;
  for (auto it = ix.postOrder.rbegin(); it != ix.postOrder.rend(); ++it) {
    const std::size_t v = *it;
    if (ix.isLeaf[v]) continue;
    const Vec2 half = 0.5 * *tree.nodes[v].delta;
    pos[ix.children[v][0]] = pos[v] - half;
    pos[ix.children[v][1]] = pos[v] + half;
  }
  return pos;
}

// Leaf coordinates in depth-first leaf order.
inline std::vector<Vec2> meanShape(const CompTree& tree, Vec2 root = {}) {
  const TreeIndex ix = indexTree(tree);
  const auto pos = nodePositions(tree, ix, root);
  std::vector<Vec2> leaves;
  leaves.reserve(ix.leafOrder.size());
  for (std::size_t leaf : ix.leafOrder) leaves.push_back(pos[leaf]);
  return leaves;
}

// Averages leaf positions (in leaf order) upward and returns the root.
inline Vec2 recompose(const CompTree& tree, const std::vector<Vec2>& leaves) {
  const TreeIndex ix = indexTree(tree);
  if (leaves.size() != ix.leafOrder.size()) {
    throw InvalidArgument("recompose: leaf count mismatch");
  }
  std::vector<Vec2> pos(ix.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) pos[ix.leafOrder[i]] = leaves[i];
  for (std::size_t v : ix.postOrder) {
    if (ix.isLeaf[v]) continue;
    pos[v] = 0.5 * (pos[ix.children[v][0]] + pos[ix.children[v][1]]);
  }
  return pos[ix.root];
}

struct PartCount {
  std::string label;
  int count = 0;

  friend bool operator==(const PartCount&, const PartCount&) = default;
};

inline std::vector<PartCount> defaultLandmarkCounts() {
  return {{"head", 8}, {"neck", 8}, {"torso", 16}};
}

struct MixtureModel {
  std::vector<CompTree> mixtures;
  std::vector<PartCount> landmarkCounts = defaultLandmarkCounts();
  int gridSize = 160;
  int squareSide = 11;  // appearance window, odd
  int channels = 2;     // appearance channels C
  int partChannels = 1;
};

// Shared parameters, flattened as [wDef.x, wDef.y, wEdge, wApp[0..2C), wPart].
struct WeightVector {
  std::array<double, 2> wDef{0.01, 0.01};
  double wEdge = -1.0;
  std::vector<double> wApp;
  double wPart = 0.0;

  static WeightVector initial(int channels) {
    WeightVector w;
    w.wApp.assign(static_cast<std::size_t>(2 * channels), 0.0);
    return w;
  }

  int channels() const noexcept { return static_cast<int>(wApp.size() / 2); }
  std::size_t dimension() const noexcept { return 4 + wApp.size(); }

  std::vector<double> flatten() const {
    std::vector<double> flat{wDef[0], wDef[1], wEdge};
    flat.insert(flat.end(), wApp.begin(), wApp.end());
    flat.push_back(wPart);
    return flat;
  }

  static WeightVector unflatten(const std::vector<double>& flat) {
    if (flat.size() < 4 || flat.size() % 2 != 0) {
      throw InvalidArgument("weight vector must have 4 + 2C entries");
    }
    WeightVector w;
    w.wDef = {flat[0], flat[1]};
    w.wEdge = flat[2];
    w.wApp.assign(flat.begin() + 3, flat.end() - 1);
    w.wPart = flat.back();
    return w;
  }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

inline void validateModel(const MixtureModel& model) {
  if (model.mixtures.empty()) throw SchemaError("model has no mixtures");
  if (model.squareSide < 1 || model.squareSide % 2 == 0) {
    throw SchemaError("squareSide must be a positive odd integer");
  }
  if (model.channels < 1 || model.partChannels < 0) {
    throw SchemaError("channel counts out of range");
  }
  std::size_t nodeCount = 0;
  for (std::size_t m = 0; m < model.mixtures.size(); ++m) {
    const auto violations = validateTree(model.mixtures[m]);
    if (!violations.empty()) {
      throw SchemaError("mixture " + std::to_string(m) + ": " + describe(violations));
    }
    for (const CompNode& node : model.mixtures[m].nodes) {
      if (node.partScoreChannel &&
          (*node.partScoreChannel < 0 || *node.partScoreChannel >= model.partChannels)) {
        throw SchemaError("mixture " + std::to_string(m) + " node " + std::to_string(node.id) +
                          ": partScoreChannel out of range");
      }
    }
    if (m == 0) nodeCount = model.mixtures[m].nodes.size();
    if (model.mixtures[m].nodes.size() != nodeCount) {
      throw SchemaError("mixture " + std::to_string(m) + " node count differs from mixture 0");
    }
  }
}

}  // namespace compshape
