#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/geometry.hpp"
#include "compshape/inference.hpp"
#include "compshape/model_io.hpp"
#include "compshape/parallel.hpp"
#include "compshape/shapemodel.hpp"

namespace compshape {

struct AnnotatedPart {
  std::string label;
  Polygon polygon;
};

struct PartAnnotation {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<AnnotatedPart> parts;
  std::optional<std::string> tag;

  const AnnotatedPart* find(const std::string& label) const {
    for (const AnnotatedPart& p : parts) {
      if (p.label == label) return &p;
    }
    return nullptr;
  }
};

// Values: 0 background, k + 1 for the k-th label of the schema.
using LabeledMask = Grid<std::uint8_t>;

inline std::vector<std::string> labelsOf(const std::vector<PartCount>& counts) {
  std::vector<std::string> labels;
  for (const PartCount& c : counts) labels.push_back(c.label);
  return labels;
}

// Scales the annotation so its larger image side equals gridSize and fills
// parts in reverse schema order, so earlier labels win on overlap.
inline LabeledMask rasterizeAnnotation(const PartAnnotation& ann, int gridSize,
                                       const std::vector<std::string>& labels) {
  if (ann.width < 1 || ann.height < 1) {
    throw InvalidArgument("annotation " + ann.id + ": image size must be positive");
  }
  if (gridSize < 1) throw InvalidArgument("gridSize must be positive");
  const double scale = static_cast<double>(gridSize) / std::max(ann.width, ann.height);
  const int w = std::max(1, static_cast<int>(std::ceil(ann.width * scale - 1e-9)));
  const int h = std::max(1, static_cast<int>(std::ceil(ann.height * scale - 1e-9)));
  LabeledMask mask(w, h, 0);
  for (std::size_t k = labels.size(); k-- > 0;) {
    const AnnotatedPart* part = ann.find(labels[k]);
    if (part == nullptr) continue;
    if (part->polygon.size() < 3) {
      throw InvalidArgument("annotation " + ann.id + ": part '" + part->label +
                            "' has fewer than 3 vertices");
    }
    Polygon scaled;
    for (const Vec2& p : part->polygon) scaled.push_back(scale * p);
    fillPolygon<std::uint8_t>(scaled, mask, static_cast<std::uint8_t>(k + 1));
  }
  return mask;
}

// Fraction of pixels whose labels disagree among pixels labeled in either
// mask; masks are compared on their common top-left-aligned extent.
inline double maskDistance(const LabeledMask& a, const LabeledMask& b) {
  const int w = std::max(a.width(), b.width());
  const int h = std::max(a.height(), b.height());
  std::size_t differ = 0;
  std::size_t labeled = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t va = a.contains(x, y) ? a(x, y) : 0;
      const std::uint8_t vb = b.contains(x, y) ? b(x, y) : 0;
      if (va == 0 && vb == 0) continue;
      ++labeled;
      if (va != vb) ++differ;
    }
  }
  return labeled == 0 ? 0.0 : static_cast<double>(differ) / static_cast<double>(labeled);
}

struct MedoidResult {
  std::vector<std::size_t> medoids;      // point index per cluster
  std::vector<std::size_t> assignments;  // cluster per point
  std::vector<double> objectiveTrace;    // after every assignment and update step
  int iterations = 0;
};

inline double medoidObjective(const std::vector<std::vector<double>>& d,
                              const std::vector<std::size_t>& medoids,
                              const std::vector<std::size_t>& assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignments.size(); ++i) total += d[i][medoids[assignments[i]]];
  return total;
}

// PAM-style alternation on a distance matrix. Seeding: a seeded random first
// medoid, then farthest-first.
inline MedoidResult kMedoidsFromDistances(const std::vector<std::vector<double>>& d, int k,
                                          std::uint64_t seed, int maxIterations = 100) {
  const std::size_t n = d.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw InvalidArgument("kMedoids: K must be in [1, " + std::to_string(n) + "], got " +
                          std::to_string(k));
  }
  const auto K = static_cast<std::size_t>(k);
  MedoidResult r;
  std::mt19937_64 rng(seed);
  r.medoids.push_back(static_cast<std::size_t>(rng() % n));
  std::vector<bool> isMedoid(n, false);
  isMedoid[r.medoids[0]] = true;
  auto farthest = [&](const std::vector<bool>& taken) {
    std::size_t pick = n;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t m : r.medoids) nearest = std::min(nearest, d[i][m]);
      if (nearest > far) {
        far = nearest;
        pick = i;
      }
    }
    return pick;
  };
  while (r.medoids.size() < K) {
    const std::size_t pick = farthest(isMedoid);
    r.medoids.push_back(pick);
    isMedoid[pick] = true;
  }

  r.assignments.assign(n, 0);
  auto assign = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bestD = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < K; ++c) {
        if (r.medoids[c] == i) {
          best = c;
          break;
        }
        if (d[i][r.medoids[c]] < bestD) {
          bestD = d[i][r.medoids[c]];
          best = c;
        }
      }
      r.assignments[i] = best;
    }
  };

  assign();
  r.objectiveTrace.push_back(medoidObjective(d, r.medoids, r.assignments));
  for (r.iterations = 0; r.iterations < maxIterations; ++r.iterations) {
    bool changed = false;
    for (std::size_t c = 0; c < K; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (r.assignments[i] == c) members.push_back(i);
      }
      if (members.empty()) {
        // Re-seed from the point farthest from its current medoid.
        std::size_t pick = n;
        double far = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (isMedoid[i]) continue;
          const double di = d[i][r.medoids[r.assignments[i]]];
          if (di > far) {
            far = di;
            pick = i;
          }
        }
        if (pick == n) continue;
        isMedoid[r.medoids[c]] = false;
        r.medoids[c] = pick;
        isMedoid[pick] = true;
        changed = true;
        continue;
      }
      std::size_t best = r.medoids[c];
      double bestSum = 0.0;
      for (std::size_t j : members) bestSum += d[j][best];
      for (std::size_t cand : members) {
        double sum = 0.0;
        for (std::size_t j : members) sum += d[j][cand];
        if (sum < bestSum) {
          bestSum = sum;
          best = cand;
        }
      }
      if (best != r.medoids[c]) {
        isMedoid[r.medoids[c]] = false;
        r.medoids[c] = best;
        isMedoid[best] = true;
        changed = true;
      }
    }
    r.objectiveTrace.push_back(medoidObjective(d, r.medoids, r.assignments));
    if (!changed) break;
    assign();
    r.objectiveTrace.push_back(medoidObjective(d, r.medoids, r.assignments));
  }
  return r;
}

inline std::vector<std::vector<double>> distanceMatrix(const std::vector<LabeledMask>& masks) {
  const std::size_t n = masks.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  parallelFor(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d[i][j] = maskDistance(masks[i], masks[j]);
    }
  });
  return d;
}

inline MedoidResult kMedoids(const std::vector<LabeledMask>& masks, int k, std::uint64_t seed) {
  return kMedoidsFromDistances(distanceMatrix(masks), k, seed);
}

// Moore-neighbour trace of the 8-connected region containing the first
// foreground pixel in raster order (minimal y, then x); clockwise with y down.
inline std::vector<Point> traceBoundary(const Grid<std::uint8_t>& region) {
  std::optional<Point> start;
  for (int y = 0; y < region.height() && !start; ++y) {
    for (int x = 0; x < region.width(); ++x) {
      if (region(x, y) != 0) {
        start = Point{x, y};
        break;
      }
    }
  }
  if (!start) throw InvalidArgument("traceBoundary: empty region");
  static constexpr Point kRing[8] = {{-1, 0}, {-1, -1}, {0, -1}, {1, -1},
                                     {1, 0},  {1, 1},   {0, 1},  {-1, 1}};
  auto inside = [&](Point p) { return region.contains(p) && region[p] != 0; };
  auto ringIndex = [](Point d) {
    for (int i = 0; i < 8; ++i) {
      if (kRing[i] == d) return i;
    }
    return 0;
  };
  // Returns the next boundary pixel and the background neighbour preceding it.
  auto step = [&](Point c, Point back) -> std::optional<std::pair<Point, Point>> {
    const int b = ringIndex({back.x - c.x, back.y - c.y});
    Point prev = back;
    for (int k = 1; k <= 8; ++k) {
      const Point d = kRing[(b + k) % 8];
      const Point q{c.x + d.x, c.y + d.y};
      if (inside(q)) return std::make_pair(q, prev);
      prev = q;
    }
    return std::nullopt;
  };

  std::vector<Point> contour{*start};
  auto first = step(*start, {start->x - 1, start->y});
  if (!first) return contour;
  Point current = first->first;
  Point back = first->second;
  const Point second = current;
  const std::size_t limit = 4 * region.size() + 8;
  while (contour.size() < limit) {
    auto next = step(current, back);
    if (!next || (current == *start && next->first == second)) break;
    contour.push_back(current);
    current = next->first;
    back = next->second;
  }
  return contour;
}

// Points at arc-length spacing perimeter / count along a closed polyline,
// starting at vertex 0. tangents[i] is the direction of the segment holding
// sample i (the outgoing segment at a vertex).
struct CurveSamples {
  std::vector<Vec2> points;
  std::vector<Vec2> tangents;
  std::vector<double> arcPositions;
};

inline CurveSamples sampleClosedCurve(std::span<const Vec2> curve, int count) {
  if (count < 1) throw InvalidArgument("sample count must be positive");
  if (curve.size() < 2) throw InvalidArgument("closed curve needs at least 2 points");
  const std::size_t n = curve.size();
  std::vector<double> cumulative(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cumulative[i + 1] = cumulative[i] + distance(curve[i], curve[(i + 1) % n]);
  }
  const double total = cumulative[n];
  if (total < count) {
    throw InvalidArgument("boundary length " + std::to_string(total) + " is shorter than " +
                          std::to_string(count) + " landmarks");
  }
  CurveSamples out;
  std::size_t seg = 0;
  for (int k = 0; k < count; ++k) {
    const double s = total * k / count;
    while (seg + 1 < n && cumulative[seg + 1] <= s) ++seg;
    while (seg + 1 < n && cumulative[seg + 1] - cumulative[seg] == 0.0) ++seg;
    const Vec2 a = curve[seg];
    const Vec2 b = curve[(seg + 1) % n];
    const double len = cumulative[seg + 1] - cumulative[seg];
    const double t = len > 0 ? (s - cumulative[seg]) / len : 0.0;
    out.points.push_back(a + t * (b - a));
    out.tangents.push_back(len > 0 ? (1.0 / len) * (b - a) : Vec2{1.0, 0.0});
    out.arcPositions.push_back(s);
  }
  return out;
}

// Reorders a polygon clockwise (y down) starting at its minimal-y, then
// minimal-x vertex.
inline Polygon canonicalPolygon(const Polygon& polygon) {
  Polygon p = polygon;
  if (signedArea(p) < 0) std::reverse(p.begin(), p.end());
  const auto start = std::min_element(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) {
    return a.y < b.y || (a.y == b.y && a.x < b.x);
  });
  std::rotate(p.begin(), start, p.end());
  return p;
}

inline CurveSamples sampleLandmarks(const Polygon& polygon, int count) {
  if (polygon.size() < 3) throw InvalidArgument("part polygon needs at least 3 vertices");
  const Polygon p = canonicalPolygon(polygon);
  return sampleClosedCurve(p, count);
}

// Mask variant: traces the region, samples the pixel-centre contour and
// estimates tangents over a +-2 contour-point window.
inline CurveSamples sampleLandmarks(const Grid<std::uint8_t>& region, int count) {
  const std::vector<Point> contour = traceBoundary(region);
  Polygon curve;
  for (Point p : contour) curve.push_back(toVec(p));
  if (curve.size() < 2) throw InvalidArgument("boundary shorter than the landmark count");
  CurveSamples s = sampleClosedCurve(curve, count);
  const std::size_t n = contour.size();
  std::vector<double> cumulative(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cumulative[i + 1] = cumulative[i] + distance(curve[i], curve[(i + 1) % n]);
  }
  for (std::size_t k = 0; k < s.points.size(); ++k) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s.arcPositions[k]);
    std::size_t i = static_cast<std::size_t>(it - cumulative.begin()) - 1;
    if (i < n && s.arcPositions[k] - cumulative[i] > 0.5 * (cumulative[i + 1] - cumulative[i])) {
      i = (i + 1) % n;
    }
    const Vec2 t = curve[(i + 2) % n] - curve[(i + n - 2) % n];
    const double len = std::hypot(t.x, t.y);
    s.tangents[k] = len > 0 ? (1.0 / len) * t : s.tangents[k];
  }
  return s;
}

// Orientation from the tangent; polarity from probing both sides of the
// oriented line inside the whole-object mask. Landmarks must lie within 1 px
// of partOutline when given, otherwise of the object mask's pixel outline.
inline std::vector<LeafType> matchLeafTypes(const std::vector<Vec2>& landmarks,
                                            const std::vector<Vec2>& tangents,
                                            const Grid<std::uint8_t>& objectMask,
                                            const Polygon* partOutline = nullptr) {
  if (landmarks.size() != tangents.size()) {
    throw InvalidArgument("matchLeafTypes: one tangent per landmark required");
  }
  auto inside = [&](Vec2 p) {
    const Point q{static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
    return objectMask.contains(q) && objectMask[q] != 0;
  };
  auto filled = [&](Point q) { return objectMask.contains(q) && objectMask[q] != 0; };
  // Distance to the outline of the union of the object's unit pixel squares.
  auto outlineDistance = [&](Vec2 p) {
    double best = std::numeric_limits<double>::infinity();
    if (partOutline != nullptr) {
      const Polygon& poly = *partOutline;
      for (std::size_t k = 0; k < poly.size(); ++k) {
        best = std::min(best, pointSegmentDistance(p, poly[k], poly[(k + 1) % poly.size()]));
      }
      return best;
    }
    const int cx = static_cast<int>(std::lround(p.x));
    const int cy = static_cast<int>(std::lround(p.y));
    for (int y = cy - 2; y <= cy + 2; ++y) {
      for (int x = cx - 2; x <= cx + 2; ++x) {
        if (!filled({x, y})) continue;
        for (Point d : {Point{1, 0}, Point{-1, 0}, Point{0, 1}, Point{0, -1}}) {
          if (filled({x + d.x, y + d.y})) continue;
          const Vec2 mid{x + 0.5 * d.x, y + 0.5 * d.y};
          const Vec2 half{0.5 * std::abs(d.y), 0.5 * std::abs(d.x)};
          best = std::min(best, pointSegmentDistance(p, mid - half, mid + half));
        }
      }
    }
    return best;
  };
  std::vector<LeafType> types;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    const Vec2 p = landmarks[i];
    if (outlineDistance(p) > 1.0 + 1e-9) {
      throw InvalidArgument("landmark " + std::to_string(i) + " at (" + std::to_string(p.x) +
                            ", " + std::to_string(p.y) + ") is more than 1 px off the boundary");
    }
    const Vec2 t = tangents[i];
    const int orientation = quantizeOrientation(std::atan2(t.y, t.x));
    const double angle = orientationAngle(orientation);
    const Vec2 normal{-std::sin(angle), std::cos(angle)};
    int polarity = kObjectOnNormalSide;
    bool decided = false;
    for (double along : {1.5, 0.0, -1.5}) {
      for (double reach : {2.0, 1.0, 3.0}) {
        const Vec2 q = p + along * t;
        const bool plus = inside(q + reach * normal);
        const bool minus = inside(q - reach * normal);
        if (!plus && !minus) continue;
        polarity = plus && minus ? kObjectBothSides
                   : plus        ? kObjectOnNormalSide
                                 : kObjectOnOppositeSide;
        decided = true;
        break;
      }
      if (decided) break;
    }
    types.push_back({orientation, polarity});
  }
  return types;
}

struct PartLandmarks {
  std::string label;
  std::vector<Vec2> points;
  std::vector<LeafType> types;
};

inline bool isPowerOfTwo(std::size_t v) { return v > 0 && (v & (v - 1)) == 0; }

// Pairs adjacent landmarks level by level inside each part, then merges part
// subtrees: the first two subtrees (schema order) at the lowest level.
inline CompTree composeTree(const std::vector<PartLandmarks>& parts,
                            const std::map<std::string, int>& partScoreChannels = {}) {
  if (parts.empty()) throw InvalidArgument("composeTree: no parts");
  CompTree tree;
  struct Sub {
    int id;
    int level;
    Vec2 pos;
  };
  int nextId = 0;
  std::vector<std::vector<Sub>> perPart;
  for (const PartLandmarks& part : parts) {
    if (!isPowerOfTwo(part.points.size())) {
      throw InvalidArgument("composeTree: part '" + part.label + "' has " +
                            std::to_string(part.points.size()) +
                            " landmarks; counts must be powers of two");
    }
    if (part.types.size() != part.points.size()) {
      throw InvalidArgument("composeTree: part '" + part.label + "' lacks leaf types");
    }
    std::vector<Sub> level;
    for (std::size_t i = 0; i < part.points.size(); ++i) {
      CompNode leaf;
      leaf.id = nextId++;
      leaf.level = 1;
      leaf.leafType = part.types[i];
      tree.nodes.push_back(leaf);
      level.push_back({leaf.id, 1, part.points[i]});
    }
    perPart.push_back(std::move(level));
  }
  auto join = [&](const Sub& a, const Sub& b) {
    CompNode node;
    node.id = nextId++;
    node.level = a.level + 1;
    node.children = {a.id, b.id};
    node.delta = b.pos - a.pos;
    tree.nodes.push_back(node);
    return Sub{node.id, node.level, 0.5 * (a.pos + b.pos)};
  };
  std::vector<Sub> roots;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    std::vector<Sub> level = perPart[p];
    while (level.size() > 1) {
      std::vector<Sub> up;
      for (std::size_t i = 0; i + 1 < level.size(); i += 2) up.push_back(join(level[i], level[i + 1]));
      level = std::move(up);
    }
    CompNode& rootNode = tree.nodes[static_cast<std::size_t>(level[0].id)];
    rootNode.partLabel = parts[p].label;
    if (const auto it = partScoreChannels.find(parts[p].label); it != partScoreChannels.end()) {
      rootNode.partScoreChannel = it->second;
    }
    roots.push_back(level[0]);
  }
  while (roots.size() > 1) {
    int lowest = std::numeric_limits<int>::max();
    for (const Sub& s : roots) lowest = std::min(lowest, s.level);
    std::vector<std::size_t> at;
    for (std::size_t i = 0; i < roots.size(); ++i) {
      if (roots[i].level == lowest) at.push_back(i);
    }
    if (at.size() < 2) {
      throw InvalidArgument("composeTree: part sizes cannot be merged into a balanced binary tree");
    }
    roots[at[0]] = join(roots[at[0]], roots[at[1]]);
    roots.erase(roots.begin() + static_cast<std::ptrdiff_t>(at[1]));
  }
  return tree;
}

// Translates and scales an annotation so its larger image side is gridSize
// and the union of its parts touches the top-left corner.
inline PartAnnotation normalizeAnnotation(const PartAnnotation& ann, int gridSize) {
  if (ann.width < 1 || ann.height < 1) {
    throw InvalidArgument("annotation " + ann.id + ": image size must be positive");
  }
  const double scale = static_cast<double>(gridSize) / std::max(ann.width, ann.height);
  double minX = std::numeric_limits<double>::infinity();
  double minY = minX;
  for (const AnnotatedPart& part : ann.parts) {
    for (const Vec2& p : part.polygon) {
      minX = std::min(minX, p.x);
      minY = std::min(minY, p.y);
    }
  }
  PartAnnotation out = ann;
  out.width = gridSize;
  out.height = gridSize;
  for (AnnotatedPart& part : out.parts) {
    for (Vec2& p : part.polygon) p = Vec2{scale * (p.x - minX), scale * (p.y - minY)};
  }
  return out;
}

struct StructureOptions {
  int k = 1;
  std::vector<PartCount> counts = defaultLandmarkCounts();
  int gridSize = 160;
  std::uint64_t seed = 0;
  int channels = 2;
  int squareSide = 11;
  std::map<std::string, int> partScoreChannels{{"head", 0}};
};

// One mixture per medoid, built from that annotation's sampled landmarks.
inline CompTree treeFromAnnotation(const PartAnnotation& normalized,
                                   const StructureOptions& options) {
  const std::vector<std::string> labels = labelsOf(options.counts);
  const LabeledMask mask = rasterizeAnnotation(normalized, options.gridSize, labels);
  Grid<std::uint8_t> object(mask.width(), mask.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) object.values()[i] = mask.values()[i] != 0;
  std::vector<PartLandmarks> parts;
  for (const PartCount& pc : options.counts) {
    const AnnotatedPart* part = normalized.find(pc.label);
    if (part == nullptr) {
      throw SchemaError("annotation " + normalized.id + ": missing part '" + pc.label + "'");
    }
    const CurveSamples samples = sampleLandmarks(part->polygon, pc.count);
    parts.push_back({pc.label, samples.points,
                     matchLeafTypes(samples.points, samples.tangents, object, &part->polygon)});
  }
  CompTree tree = composeTree(parts, options.partScoreChannels);
  tree.tag = normalized.tag ? normalized.tag : std::optional<std::string>(normalized.id);
  return tree;
}

struct StructureResult {
  MixtureModel model;
  MedoidResult clustering;
};

inline StructureResult learnStructure(const std::vector<PartAnnotation>& annotations,
                                      const StructureOptions& options) {
  if (annotations.empty()) throw InvalidArgument("learnStructure: no annotations");
  const std::vector<std::string> labels = labelsOf(options.counts);
  std::vector<PartAnnotation> normalized(annotations.size());
  std::vector<LabeledMask> masks(annotations.size());
  parallelFor(annotations.size(), [&](std::size_t i) {
    normalized[i] = normalizeAnnotation(annotations[i], options.gridSize);
    masks[i] = rasterizeAnnotation(normalized[i], options.gridSize, labels);
  });
  StructureResult out;
  out.clustering = kMedoids(masks, options.k, options.seed);
  MixtureModel& model = out.model;
  model.landmarkCounts = options.counts;
  model.gridSize = options.gridSize;
  model.squareSide = options.squareSide;
  model.channels = options.channels;
  int partChannels = 0;
  for (const auto& [label, channel] : options.partScoreChannels) {
    partChannels = std::max(partChannels, channel + 1);
  }
  model.partChannels = partChannels;
  model.mixtures.resize(out.clustering.medoids.size());
  parallelFor(model.mixtures.size(), [&](std::size_t c) {
    model.mixtures[c] = treeFromAnnotation(normalized[out.clustering.medoids[c]], options);
  });
  validateModel(model);
  return out;
}

// {images: [{id, width, height, tag?, parts: [{label, polygon}]}]}
inline Json annotationsToJson(const std::vector<PartAnnotation>& annotations) {
  Json images = Json::array();
  for (const PartAnnotation& a : annotations) {
    Json parts = Json::array();
    for (const AnnotatedPart& p : a.parts) {
      parts.push_back({{"label", p.label}, {"polygon", polygonToJson(p.polygon)}});
    }
    Json image{{"id", a.id}, {"width", a.width}, {"height", a.height}, {"parts", std::move(parts)}};
    if (a.tag) image["tag"] = *a.tag;
    images.push_back(std::move(image));
  }
  return Json{{"images", std::move(images)}};
}

inline std::vector<PartAnnotation> annotationsFromJson(const Json& j, const std::string& where) {
  const Json images = detail::field<Json>(j, "images", where);
  if (!images.is_array()) throw SchemaError(where + "/images: expected array");
  std::vector<PartAnnotation> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string at = where + "/images/" + std::to_string(i);
    const Json& im = images[i];
    PartAnnotation a;
    if (!im.is_object() || !im.contains("id")) throw SchemaError(at + ": missing field 'id'");
    a.id = im.at("id").is_string() ? im.at("id").get<std::string>() : im.at("id").dump();
    a.width = detail::field<int>(im, "width", at);
    a.height = detail::field<int>(im, "height", at);
    if (detail::present(im, "tag")) a.tag = detail::field<std::string>(im, "tag", at);
    const Json parts = detail::field<Json>(im, "parts", at);
    if (!parts.is_array()) throw SchemaError(at + "/parts: expected array");
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::string pat = at + "/parts/" + std::to_string(p);
      AnnotatedPart part;
      part.label = detail::field<std::string>(parts[p], "label", pat);
      part.polygon = polygonFromJson(detail::field<Json>(parts[p], "polygon", pat), pat + "/polygon");
      if (part.polygon.size() < 3) throw SchemaError(pat + "/polygon: fewer than 3 vertices");
      a.parts.push_back(std::move(part));
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<PartAnnotation> loadAnnotations(const std::string& path) {
  return annotationsFromJson(readJsonFile(path), path);
}

}  // namespace compshape
