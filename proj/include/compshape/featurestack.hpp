#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/fmap.hpp"
#include "compshape/geometry.hpp"
#include "compshape/gridmath.hpp"
#include "compshape/model_io.hpp"
#include "compshape/shapemodel.hpp"

namespace compshape {

// Evidence grids at working resolution.
struct FeatureStack {
  int width = 0;
  int height = 0;
  std::vector<Grid<float>> edge;  // one per orientation bin
  std::vector<Grid<float>> app;   // C appearance class confidences
  std::vector<Grid<float>> part;  // P part-detector score maps

  int channels() const noexcept { return static_cast<int>(app.size()); }
  int partChannels() const noexcept { return static_cast<int>(part.size()); }
  bool contains(Point p) const noexcept {
    return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height;
  }

  static FeatureStack zeros(int width, int height, int channels, int partChannels) {
    FeatureStack s;
    s.width = width;
    s.height = height;
    s.edge.assign(kOrientationCount, Grid<float>(width, height, 0.0f));
    s.app.assign(static_cast<std::size_t>(channels), Grid<float>(width, height, 0.0f));
    s.part.assign(static_cast<std::size_t>(partChannels), Grid<float>(width, height, 0.0f));
    return s;
  }

  void validate() const {
    if (width < 1 || height < 1) throw SchemaError("feature stack: empty grid");
    if (static_cast<int>(edge.size()) != kOrientationCount) {
      throw SchemaError("feature stack: expected 8 edge channels, found " +
                        std::to_string(edge.size()));
    }
    auto check = [&](const std::vector<Grid<float>>& grids, const char* what) {
      for (const auto& g : grids) {
        if (g.width() != width || g.height() != height) {
          throw SchemaError(std::string("feature stack: ") + what + " channel size mismatch");
        }
        for (float v : g.values()) {
          if (!std::isfinite(v)) {
            throw SchemaError(std::string("feature stack: non-finite ") + what + " value");
          }
        }
      }
    };
    check(edge, "edge");
    check(app, "appearance");
    check(part, "part");
  }

  friend bool operator==(const FeatureStack&, const FeatureStack&) = default;
};

// Manifest {version, width, height, C, P, edge, app, part}; paths relative to
// the manifest's directory.
inline void saveStack(const std::string& manifestPath, const FeatureStack& stack) {
  namespace fs = std::filesystem;
  const fs::path manifest(manifestPath);
  const fs::path dir = manifest.parent_path();
  const std::string stem = manifest.stem().string();
  const std::string edgeName = stem + ".edge.fmap";
  const std::string appName = stem + ".app.fmap";
  const std::string partName = stem + ".part.fmap";
  writeFmap((dir / edgeName).string(), stack.edge);
  writeFmap((dir / appName).string(), stack.app);
  writeFmap((dir / partName).string(), stack.part);
  const Json j{{"version", 1},
               {"width", stack.width},
               {"height", stack.height},
               {"C", stack.channels()},
               {"P", stack.partChannels()},
               {"edge", edgeName},
               {"app", appName},
               {"part", partName}};
  writeTextFile(manifestPath, j.dump(1) + "\n");
}

inline FeatureStack loadStack(const std::string& manifestPath) {
  namespace fs = std::filesystem;
  const Json j = readJsonFile(manifestPath);
  const std::string where = manifestPath;
  if (detail::field<int>(j, "version", where) != 1) {
    throw SchemaError(where + "/version: unsupported stack manifest version");
  }
  const fs::path dir = fs::path(manifestPath).parent_path();
  FeatureStack s;
  s.width = detail::field<int>(j, "width", where);
  s.height = detail::field<int>(j, "height", where);
  s.edge = readFmap((dir / detail::field<std::string>(j, "edge", where)).string());
  s.app = readFmap((dir / detail::field<std::string>(j, "app", where)).string());
  s.part = readFmap((dir / detail::field<std::string>(j, "part", where)).string());
  if (s.channels() != detail::field<int>(j, "C", where)) {
    throw SchemaError(where + "/C: does not match appearance FMAP channel count");
  }
  if (s.partChannels() != detail::field<int>(j, "P", where)) {
    throw SchemaError(where + "/P: does not match part FMAP channel count");
  }
  s.validate();
  return s;
}

inline double edgeFeature(const FeatureStack& stack, LeafType type, Point s) {
  if (!stack.contains(s)) throw InvalidArgument("edgeFeature: position outside the grid");
  return stack.edge[static_cast<std::size_t>(type.orientation)][s];
}

// Offsets of a squareSide x squareSide window split by the oriented line
// through its center. Side A holds offsets d with n . d >= 0 for the normal
// n = (-sin t, cos t), including the line itself; side B the rest.
struct WindowSplit {
  std::vector<Point> sideA;
  std::vector<Point> sideB;
};

inline WindowSplit splitWindow(int orientation, int squareSide) {
  const double t = orientationAngle(orientation);
  const double nx = -std::sin(t);
  const double ny = std::cos(t);
  const int r = squareSide / 2;
  WindowSplit split;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (nx * dx + ny * dy >= -1e-9) {
        split.sideA.push_back({dx, dy});
      } else {
        split.sideB.push_back({dx, dy});
      }
    }
  }
  return split;
}

inline bool windowFits(int width, int height, Point s, int squareSide) {
  const int r = squareSide / 2;
  return s.x - r >= 0 && s.y - r >= 0 && s.x + r < width && s.y + r < height;
}

// Per-channel means on the object side followed by the non-object side
// (length 2C). Returns nullopt when the window leaves the grid.
inline std::optional<std::vector<double>> appearanceFeature(const FeatureStack& stack,
                                                            LeafType type, Point s,
                                                            int squareSide) {
  if (squareSide < 1 || squareSide % 2 == 0) {
    throw InvalidArgument("appearanceFeature: squareSide must be a positive odd integer");
  }
  if (!windowFits(stack.width, stack.height, s, squareSide)) return std::nullopt;
  const int channels = stack.channels();
  std::vector<double> out(static_cast<std::size_t>(2 * channels), 0.0);
  const WindowSplit split = splitWindow(type.orientation, squareSide);

  auto mean = [&](const std::vector<Point>& side, int c) {
    if (side.empty()) return 0.0;
    double sum = 0.0;
    for (Point d : side) sum += stack.app[static_cast<std::size_t>(c)](s.x + d.x, s.y + d.y);
    return sum / static_cast<double>(side.size());
  };

  for (int c = 0; c < channels; ++c) {
    const auto obj = static_cast<std::size_t>(c);
    const auto non = static_cast<std::size_t>(channels + c);
    switch (type.polarity) {
      case kObjectOnNormalSide:
        out[obj] = mean(split.sideA, c);
        out[non] = mean(split.sideB, c);
        break;
      case kObjectOnOppositeSide:
        out[obj] = mean(split.sideB, c);
        out[non] = mean(split.sideA, c);
        break;
      default: {
        const double a = mean(split.sideA, c) * static_cast<double>(split.sideA.size());
        const double b = mean(split.sideB, c) * static_cast<double>(split.sideB.size());
        out[obj] = (a + b) / static_cast<double>(split.sideA.size() + split.sideB.size());
        break;
      }
    }
  }
  return out;
}

// Leaf unary energy per leaf type, +infinity where the window clips.
struct LeafUnaryField {
  std::vector<Grid<double>> byType;  // kLeafTypeCount grids, empty if not built

  const Grid<double>& operator[](LeafType t) const {
    const Grid<double>& g = byType[static_cast<std::size_t>(t.index())];
    if (g.empty()) {
      throw InvalidArgument("leaf unary for orientation " + std::to_string(t.orientation) +
                            " was not built");
    }
    return g;
  }
};

namespace detail {

inline Grid<double> combineChannels(const FeatureStack& stack, const std::vector<double>& weights,
                                    std::size_t offset) {
  Grid<double> out(stack.width, stack.height, 0.0);
  for (int c = 0; c < stack.channels(); ++c) {
    const double w = weights[offset + static_cast<std::size_t>(c)];
    if (w == 0.0) continue;
    const auto& src = stack.app[static_cast<std::size_t>(c)].values();
    auto& dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * static_cast<double>(src[i]);
  }
  return out;
}

// Window sums of `image` over the offsets in `side`, at every fitting position.
inline Grid<double> windowSum(const Grid<double>& image, const std::vector<Point>& side, int r) {
  const int w = image.width();
  const int h = image.height();
  Grid<double> out(w, h, 0.0);
  for (Point d : side) {
    for (int y = r; y < h - r; ++y) {
      const double* src = image.row(y + d.y).data() + d.x;
      double* dst = out.row(y).data();
      for (int x = r; x < w - r; ++x) dst[x] += src[x];
    }
  }
  return out;
}

}  // namespace detail

// phi(S) = wEdge * edge + wApp . appearanceFeature for all 24 leaf types, or
// only for the orientations flagged in `orientations` when it is non-empty.
inline LeafUnaryField buildLeafUnaries(const FeatureStack& stack, const WeightVector& weights,
                                       int squareSide, const std::vector<bool>& orientations = {}) {
  if (weights.channels() != stack.channels() ||
      weights.wApp.size() != static_cast<std::size_t>(2 * stack.channels())) {
    throw InvalidArgument("buildLeafUnaries: weight vector has " +
                          std::to_string(weights.wApp.size()) + " appearance entries, stack has " +
                          std::to_string(stack.channels()) + " channels");
  }
  if (squareSide < 1 || squareSide % 2 == 0) {
    throw InvalidArgument("buildLeafUnaries: squareSide must be a positive odd integer");
  }
  const int w = stack.width;
  const int h = stack.height;
  const int r = squareSide / 2;
  const Grid<double> objectImage = detail::combineChannels(stack, weights.wApp, 0);
  const Grid<double> backgroundImage =
      detail::combineChannels(stack, weights.wApp, static_cast<std::size_t>(stack.channels()));

  LeafUnaryField field;
  field.byType.resize(kLeafTypeCount);
  for (int o = 0; o < kOrientationCount; ++o) {
    if (!orientations.empty() && !orientations.at(static_cast<std::size_t>(o))) continue;
    for (int p = 0; p < kPolarityCount; ++p) {
      field.byType[static_cast<std::size_t>(LeafType{o, p}.index())] =
          Grid<double>(w, h, gridmath::kInf);
    }
    const WindowSplit split = splitWindow(o, squareSide);
    const Grid<double> objA = detail::windowSum(objectImage, split.sideA, r);
    const Grid<double> objB = detail::windowSum(objectImage, split.sideB, r);
    const Grid<double> bgA = detail::windowSum(backgroundImage, split.sideA, r);
    const Grid<double> bgB = detail::windowSum(backgroundImage, split.sideB, r);
    const double nA = static_cast<double>(split.sideA.size());
    const double nB = static_cast<double>(split.sideB.size());
    auto meanOf = [](double sum, double count) { return count > 0 ? sum / count : 0.0; };
    Grid<double>& p0 = field.byType[static_cast<std::size_t>(LeafType{o, 0}.index())];
    Grid<double>& p1 = field.byType[static_cast<std::size_t>(LeafType{o, 1}.index())];
    Grid<double>& p2 = field.byType[static_cast<std::size_t>(LeafType{o, 2}.index())];
    const Grid<float>& edge = stack.edge[static_cast<std::size_t>(o)];
    for (int y = r; y < h - r; ++y) {
      for (int x = r; x < w - r; ++x) {
        const double e = weights.wEdge * static_cast<double>(edge(x, y));
        p0(x, y) = e + meanOf(objA(x, y), nA) + meanOf(bgB(x, y), nB);
        p1(x, y) = e + meanOf(objB(x, y), nB) + meanOf(bgA(x, y), nA);
        p2(x, y) = e + (objA(x, y) + objB(x, y)) / (nA + nB);
      }
    }
  }
  return field;
}

// wPart times the node's part-score channel.
inline Grid<double> partUnary(const FeatureStack& stack, const WeightVector& weights,
                              const CompNode& node) {
  if (!node.partScoreChannel) {
    throw InvalidArgument("partUnary: node " + std::to_string(node.id) +
                          " has no partScoreChannel");
  }
  const int channel = *node.partScoreChannel;
  if (channel < 0 || channel >= stack.partChannels()) {
    throw InvalidArgument("partUnary: part channel " + std::to_string(channel) +
                          " not present in the stack");
  }
  Grid<double> out(stack.width, stack.height);
  const auto& src = stack.part[static_cast<std::size_t>(channel)].values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    out.values()[i] = weights.wPart * static_cast<double>(src[i]);
  }
  return out;
}

}  // namespace compshape
