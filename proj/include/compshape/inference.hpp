#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/featurestack.hpp"
#include "compshape/geometry.hpp"
#include "compshape/gridmath.hpp"
#include "compshape/model_io.hpp"
#include "compshape/parallel.hpp"
#include "compshape/shapemodel.hpp"

namespace compshape {

// Minimal energy per position and the first child's position (linear index,
// kNoPosition where infeasible). The second child sits at 2S - S1.
struct EnergyTable {
  Grid<double> energy;
  Grid<std::int32_t> argFirst;
};

namespace detail {

inline void requireSameShape(const Grid<double>& a, const Grid<double>& b, const char* what) {
  if (!a.sameShape(b)) throw InvalidArgument(std::string(what) + ": grid size mismatch");
}

inline double deformation(const WeightVector& w, Vec2 delta, Point first, Point second) {
  const double dx = static_cast<double>(second.x - first.x) - delta.x;
  const double dy = static_cast<double>(second.y - first.y) - delta.y;
  return w.wDef[0] * dx * dx + w.wDef[1] * dy * dy;
}

inline Point mirror(Point parent, Point child) {
  return {2 * parent.x - child.x, 2 * parent.y - child.y};
}

}  // namespace detail

// Two-stage composition: S1* minimizes deformation plus first(S1), then the
// second child is read at 2S - S1*.
inline EnergyTable composeStep(const Grid<double>& first, const Grid<double>& second, Vec2 delta,
                               const WeightVector& weights, const Grid<double>* part = nullptr,
                               gridmath::DtTrace* trace = nullptr) {
  detail::requireSameShape(first, second, "composeStep");
  if (part != nullptr) detail::requireSameShape(first, *part, "composeStep");
  gridmath::PairwiseResult pw =
      gridmath::pairwiseMin2d(first, weights.wDef[0], weights.wDef[1], delta.x, delta.y);
  if (trace != nullptr) *trace += pw.trace;
  EnergyTable table{std::move(pw.energy), std::move(pw.argFirst)};
  for (std::size_t i = 0; i < table.energy.size(); ++i) {
    const std::int32_t arg = table.argFirst.values()[i];
    if (arg == gridmath::kNoPosition) continue;
    const Point s = table.energy.position(i);
    const Point s2 = detail::mirror(s, first.position(static_cast<std::size_t>(arg)));
    double e = table.energy.values()[i] + second[s2];
    if (part != nullptr) e += part->values()[i];
    if (!(e < gridmath::kInf)) {
      e = gridmath::kInf;
      table.argFirst.values()[i] = gridmath::kNoPosition;
    }
    table.energy.values()[i] = e;
  }
  return table;
}

// Joint minimization over all child pairs with S1 + S2 = 2S; O(|D|^2).
inline EnergyTable composeExact(const Grid<double>& first, const Grid<double>& second, Vec2 delta,
                                const WeightVector& weights, const Grid<double>* part = nullptr) {
  detail::requireSameShape(first, second, "composeExact");
  if (part != nullptr) detail::requireSameShape(first, *part, "composeExact");
  const int w = first.width();
  const int h = first.height();
  const double wx = 4.0 * weights.wDef[0];
  const double wy = 4.0 * weights.wDef[1];
  const double hx = delta.x / 2.0;
  const double hy = delta.y / 2.0;
  EnergyTable table{Grid<double>(w, h, gridmath::kInf),
                    Grid<std::int32_t>(w, h, gridmath::kNoPosition)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double best = gridmath::kInf;
      std::int32_t bestArg = gridmath::kNoPosition;
      const int y1Lo = std::max(0, 2 * y - h + 1);
      const int y1Hi = std::min(h - 1, 2 * y);
      const int x1Lo = std::max(0, 2 * x - w + 1);
      const int x1Hi = std::min(w - 1, 2 * x);
      for (int y1 = y1Lo; y1 <= y1Hi; ++y1) {
        // Same arithmetic as the separable path (1-based roots), so the two
        // agree bit for bit when the second child is constant.
        const double ry = static_cast<double>(y + 1) - (static_cast<double>(y1 + 1) + hy);
        const double costY = wy * ry * ry;
        for (int x1 = x1Lo; x1 <= x1Hi; ++x1) {
          const double e1 = first(x1, y1);
          if (!(e1 < gridmath::kInf)) continue;
          const double rx = static_cast<double>(x + 1) - (static_cast<double>(x1 + 1) + hx);
          double e = costY + (wx * rx * rx + e1);
          e += second(2 * x - x1, 2 * y - y1);
          if (e < best) {
            best = e;
            bestArg = static_cast<std::int32_t>(first.index(x1, y1));
          }
        }
      }
      if (bestArg == gridmath::kNoPosition) continue;
      if (part != nullptr) best += (*part)(x, y);
      table.energy(x, y) = best;
      table.argFirst(x, y) = bestArg;
    }
  }
  return table;
}

inline std::vector<bool> usedOrientations(const CompTree& tree) {
  std::vector<bool> used(kOrientationCount, false);
  for (const CompNode& node : tree.nodes) {
    if (node.leafType) used.at(static_cast<std::size_t>(node.leafType->orientation)) = true;
  }
  return used;
}

// Unary grid per node, in tree.nodes order. Leaves point at their leaf-type
// field; non-leaves point at a part unary or are null (also when wPart is 0).
struct NodeUnaries {
  std::vector<const Grid<double>*> byNode;
  std::deque<Grid<double>> owned;
};

inline NodeUnaries nodeUnaries(const CompTree& tree, const LeafUnaryField& field,
                               const FeatureStack& stack, const WeightVector& weights) {
  NodeUnaries u;
  u.byNode.assign(tree.nodes.size(), nullptr);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const CompNode& node = tree.nodes[i];
    if (node.children.empty()) {
      u.byNode[i] = &field[*node.leafType];
    } else if (node.partScoreChannel && weights.wPart != 0.0) {
      u.owned.push_back(partUnary(stack, weights, node));
      u.byNode[i] = &u.owned.back();
    }
  }
  return u;
}

enum class Solver { kSeparable, kExact };

struct ParseResult {
  int mixtureIndex = 0;
  std::optional<std::string> tag;
  Point root;
  std::vector<Point> positions;  // per node, tree.nodes order
  std::vector<Point> landmarks;  // leaves, depth-first order
  std::vector<std::string> landmarkParts;
  double energy = 0.0;
  std::vector<double> perMixtureEnergies;

  double score() const noexcept { return -energy; }
};

// Direct evaluation of the energy at a configuration (positions in
// tree.nodes order).
inline double evaluateEnergy(const CompTree& tree, const TreeIndex& ix, const NodeUnaries& unaries,
                             const WeightVector& weights, const std::vector<Point>& positions) {
  if (positions.size() != tree.nodes.size()) {
    throw InvalidArgument("evaluateEnergy: one position per node required");
  }
  double total = 0.0;
  for (std::size_t v : ix.postOrder) {
    const Grid<double>* unary = unaries.byNode[v];
    if (unary != nullptr) {
      if (!unary->contains(positions[v])) {
        throw InvalidArgument("evaluateEnergy: position outside the grid");
      }
      total += (*unary)[positions[v]];
    }
    if (ix.isLeaf[v]) continue;
    const Point a = positions[ix.children[v][0]];
    const Point b = positions[ix.children[v][1]];
    if (a.x + b.x != 2 * positions[v].x || a.y + b.y != 2 * positions[v].y) {
      throw InvalidArgument("evaluateEnergy: node " + std::to_string(tree.nodes[v].id) +
                            " is not the average of its children");
    }
    total += detail::deformation(weights, *tree.nodes[v].delta, a, b);
  }
  return total;
}

// Bottom-up tables, root selection (smallest y, then x, among ties) and
// top-down recovery.
inline ParseResult parseWithUnaries(const CompTree& tree, const NodeUnaries& unaries,
                                    const WeightVector& weights, Solver solver,
                                    gridmath::DtTrace* trace = nullptr) {
  const TreeIndex ix = indexTree(tree);
  const std::size_t n = ix.size();
  std::vector<const Grid<double>*> energy(n, nullptr);
  std::vector<EnergyTable> tables(n);
  for (std::size_t v : ix.postOrder) {
    if (ix.isLeaf[v]) {
      if (unaries.byNode[v] == nullptr) throw InvalidArgument("leaf without unary grid");
      energy[v] = unaries.byNode[v];
      continue;
    }
    const Grid<double>& e1 = *energy[ix.children[v][0]];
    const Grid<double>& e2 = *energy[ix.children[v][1]];
    const Vec2 delta = *tree.nodes[v].delta;
    tables[v] = solver == Solver::kSeparable
                    ? composeStep(e1, e2, delta, weights, unaries.byNode[v], trace)
                    : composeExact(e1, e2, delta, weights, unaries.byNode[v]);
    energy[v] = &tables[v].energy;
  }

  const Grid<double>& rootEnergy = *energy[ix.root];
  double best = gridmath::kInf;
  std::size_t bestIndex = 0;
  for (std::size_t i = 0; i < rootEnergy.size(); ++i) {
    if (rootEnergy.values()[i] < best) {
      best = rootEnergy.values()[i];
      bestIndex = i;
    }
  }
  if (!(best < gridmath::kInf)) {
    throw InfeasibleError("no feasible placement: the shape does not fit the grid");
  }

  ParseResult result;
  result.tag = tree.tag;
  result.energy = best;
  result.positions.assign(n, Point{});
  result.root = rootEnergy.position(bestIndex);
  result.positions[ix.root] = result.root;
  for (auto it = ix.postOrder.rbegin(); it != ix.postOrder.rend(); ++it) {
    const std::size_t v = *it;
    if (ix.isLeaf[v]) continue;
    const Point s = result.positions[v];
    const std::int32_t arg = tables[v].argFirst[s];
    const Point s1 = rootEnergy.position(static_cast<std::size_t>(arg));
    result.positions[ix.children[v][0]] = s1;
    result.positions[ix.children[v][1]] = detail::mirror(s, s1);
  }
  for (std::size_t k = 0; k < ix.leafOrder.size(); ++k) {
    result.landmarks.push_back(result.positions[ix.leafOrder[k]]);
    result.landmarkParts.push_back(ix.leafPart[k]);
  }
  return result;
}

inline ParseResult parseOneMixture(const CompTree& tree, const FeatureStack& stack,
                                   const WeightVector& weights, int squareSide,
                                   gridmath::DtTrace* trace = nullptr) {
  const LeafUnaryField field =
      buildLeafUnaries(stack, weights, squareSide, usedOrientations(tree));
  const NodeUnaries unaries = nodeUnaries(tree, field, stack, weights);
  return parseWithUnaries(tree, unaries, weights, Solver::kSeparable, trace);
}

inline constexpr std::size_t kDefaultExactCap = 4096;

inline ParseResult exactParse(const CompTree& tree, const FeatureStack& stack,
                              const WeightVector& weights, int squareSide,
                              std::size_t cap = kDefaultExactCap) {
  const std::size_t cells = static_cast<std::size_t>(stack.width) * stack.height;
  if (cells > cap) {
    throw InvalidArgument("exactParse: grid has " + std::to_string(cells) +
                          " positions, cap is " + std::to_string(cap) +
                          "; use parseOneMixture for larger grids");
  }
  const LeafUnaryField field =
      buildLeafUnaries(stack, weights, squareSide, usedOrientations(tree));
  const NodeUnaries unaries = nodeUnaries(tree, field, stack, weights);
  return parseWithUnaries(tree, unaries, weights, Solver::kExact);
}

// Parses every mixture and keeps the lowest energy (lowest index on ties).
inline ParseResult parse(const MixtureModel& model, const FeatureStack& stack,
                         const WeightVector& weights, gridmath::DtTrace* trace = nullptr) {
  if (model.mixtures.empty()) throw InvalidArgument("parse: model has no mixtures");
  const LeafUnaryField field = buildLeafUnaries(stack, weights, model.squareSide);
  const std::size_t m = model.mixtures.size();
  std::vector<std::optional<ParseResult>> results(m);
  std::vector<gridmath::DtTrace> traces(m);
  parallelFor(m, [&](std::size_t i) {
    const NodeUnaries unaries = nodeUnaries(model.mixtures[i], field, stack, weights);
    try {
      results[i] =
          parseWithUnaries(model.mixtures[i], unaries, weights, Solver::kSeparable, &traces[i]);
    } catch (const InfeasibleError&) {
      results[i].reset();
    }
  });
  std::vector<double> energies(m, gridmath::kInf);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < m; ++i) {
    if (trace != nullptr) *trace += traces[i];
    if (!results[i]) continue;
    energies[i] = results[i]->energy;
    if (!best || energies[i] < energies[*best]) best = i;
  }
  if (!best) throw InfeasibleError("no feasible placement for any mixture");
  ParseResult out = std::move(*results[*best]);
  out.mixtureIndex = static_cast<int>(*best);
  out.perMixtureEnergies = std::move(energies);
  return out;
}

struct PartPolygon {
  std::string label;
  Polygon polygon;
  bool degenerate = false;  // zero area
};

// Closed contour per part, landmarks in stored order; parts in order of first
// appearance.
inline std::vector<PartPolygon> landmarksToPolygons(const std::vector<Point>& landmarks,
                                                    const std::vector<std::string>& parts) {
  if (landmarks.size() != parts.size()) {
    throw InvalidArgument("landmarksToPolygons: one part label per landmark required");
  }
  std::vector<PartPolygon> out;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const PartPolygon& p) { return p.label == parts[i]; });
    if (it == out.end()) {
      out.push_back({parts[i], {}, false});
      it = out.end() - 1;
    }
    it->polygon.push_back(toVec(landmarks[i]));
  }
  for (PartPolygon& p : out) {
    if (p.polygon.size() < 3) {
      throw InvalidArgument("part '" + p.label + "' has fewer than 3 landmarks");
    }
    p.degenerate = polygonArea(p.polygon) == 0.0;
  }
  return out;
}

inline std::vector<PartPolygon> landmarksToPolygons(const ParseResult& result) {
  return landmarksToPolygons(result.landmarks, result.landmarkParts);
}

inline Json polygonToJson(const Polygon& polygon) {
  Json out = Json::array();
  for (const Vec2& p : polygon) out.push_back(detail::vecToJson(p));
  return out;
}

inline Polygon polygonFromJson(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of [x, y]");
  Polygon polygon;
  for (std::size_t i = 0; i < j.size(); ++i) {
    polygon.push_back(detail::vecFromJson(j[i], where + "/" + std::to_string(i)));
  }
  return polygon;
}

// Infinite energies (infeasible mixtures) are written as null.
inline Json parseResultToJson(const ParseResult& result) {
  auto finiteOrNull = [](double e) { return e < gridmath::kInf ? Json(e) : Json(nullptr); };
  Json energies = Json::array();
  for (double e : result.perMixtureEnergies) energies.push_back(finiteOrNull(e));
  Json parts = Json::array();
  for (const PartPolygon& p : landmarksToPolygons(result)) {
    Json part{{"label", p.label}, {"polygon", polygonToJson(p.polygon)}};
    if (p.degenerate) part["degenerate"] = true;
    parts.push_back(std::move(part));
  }
  Json landmarks = Json::array();
  for (Point p : result.landmarks) landmarks.push_back(Json::array({p.x, p.y}));
  Json j{{"mixtureIndex", result.mixtureIndex},
         {"energy", result.energy},
         {"score", result.score()},
         {"root", Json::array({result.root.x, result.root.y})},
         {"perMixtureEnergies", std::move(energies)},
         {"parts", std::move(parts)},
         {"landmarks", std::move(landmarks)}};
  if (result.tag) j["tag"] = *result.tag;
  return j;
}

}  // namespace compshape
