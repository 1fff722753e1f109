#pragma once

// Segmentation IOU, exact-versus-approximate parse comparison and timing.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/featurestack.hpp"
#include "compshape/geometry.hpp"
#include "compshape/inference.hpp"
#include "compshape/model_io.hpp"
#include "compshape/parallel.hpp"
#include "compshape/shapemodel.hpp"
#include "compshape/structlearn.hpp"
#include "compshape/synth.hpp"

namespace compshape {

inline Grid<std::uint8_t> rasterizeUnion(const std::vector<const Polygon*>& polygons,
                                         int gridSize) {
  if (gridSize < 1) throw InvalidArgument("gridSize must be positive");
  Grid<std::uint8_t> mask(gridSize, gridSize, 0);
  for (const Polygon* p : polygons) {
    if (p->size() >= 3) fillPolygon<std::uint8_t>(*p, mask, 1);
  }
  return mask;
}

inline double maskIou(const Grid<std::uint8_t>& a, const Grid<std::uint8_t>& b) {
  if (!a.sameShape(b)) throw InvalidArgument("maskIou: mask size mismatch");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values()[i] != 0;
    const bool y = b.values()[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  if (uni == 0) throw InvalidArgument("iou: both regions are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Both polygons rasterized on a gridSize x gridSize grid with the shared fill
// rule.
inline double iou(const Polygon& a, const Polygon& b, int gridSize) {
  return maskIou(rasterizeUnion({&a}, gridSize), rasterizeUnion({&b}, gridSize));
}

struct EvalInstance {
  std::string id;
  FeatureStack stack;
  std::vector<AnnotatedPart> truth;
  std::optional<std::string> tag;  // source pose, compared with the mixture tag
  std::vector<Vec2> landmarks;     // optional, leaf order
  std::vector<std::string> landmarkParts;
};

struct EvalOptions {
  std::vector<std::vector<std::string>> merged{{"neck", "torso"}};
};

struct InstanceEval {
  std::string id;
  int mixtureIndex = 0;
  std::optional<std::string> predictedTag;
  std::optional<std::string> truthTag;
  double energy = 0.0;
  std::map<std::string, double> iou;  // row name -> IOU
  std::optional<double> landmarkPx;
};

struct PartRow {
  std::string part;
  double meanIou = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::vector<PartRow> rows;
  std::optional<double> mixtureAccuracy;
  std::optional<double> meanLandmarkPx;
  std::vector<InstanceEval> instances;
};

namespace detail {

inline std::string joinLabels(const std::vector<std::string>& labels) {
  std::string out;
  for (const std::string& l : labels) out += (out.empty() ? "" : "+") + l;
  return out;
}

// Mean distance from each predicted landmark to the nearest ground-truth
// landmark of the same part.
inline std::optional<double> landmarkError(const ParseResult& r, const EvalInstance& inst) {
  if (inst.landmarks.empty() || inst.landmarks.size() != inst.landmarkParts.size()) {
    return std::nullopt;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < r.landmarks.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < inst.landmarks.size(); ++t) {
      if (inst.landmarkParts[t] != r.landmarkParts[k]) continue;
      best = std::min(best, distance(toVec(r.landmarks[k]), inst.landmarks[t]));
    }
    if (!std::isfinite(best)) return std::nullopt;
    total += best;
  }
  return r.landmarks.empty() ? std::nullopt
                             : std::optional<double>(total / static_cast<double>(r.landmarks.size()));
}

}  // namespace detail

// Row label groups: the model's parts in order, then the merged groups whose
// labels all exist.
inline std::vector<std::vector<std::string>> evalRows(const MixtureModel& model,
                                                      const EvalOptions& options = {}) {
  std::vector<std::vector<std::string>> rows;
  for (const PartCount& pc : model.landmarkCounts) rows.push_back({pc.label});
  for (const auto& group : options.merged) {
    const bool known = std::all_of(group.begin(), group.end(), [&](const std::string& l) {
      return std::any_of(model.landmarkCounts.begin(), model.landmarkCounts.end(),
                         [&](const PartCount& pc) { return pc.label == l; });
    });
    if (known && !group.empty()) rows.push_back(group);
  }
  return rows;
}

// Scores one parse against one ground truth. Rows whose parts are not all
// annotated are left out.
inline InstanceEval evaluateInstance(const ParseResult& r, const EvalInstance& inst,
                                     const std::vector<std::vector<std::string>>& rows) {
  InstanceEval out;
  out.id = inst.id;
  out.mixtureIndex = r.mixtureIndex;
  out.predictedTag = r.tag;
  out.truthTag = inst.tag;
  out.energy = r.energy;
  out.landmarkPx = detail::landmarkError(r, inst);
  const std::vector<PartPolygon> predicted = landmarksToPolygons(r);
  const int grid = std::max(inst.stack.width, inst.stack.height);
  for (const auto& labels : rows) {
    std::vector<const Polygon*> mine;
    std::vector<const Polygon*> theirs;
    for (const std::string& l : labels) {
      for (const PartPolygon& p : predicted) {
        if (p.label == l) mine.push_back(&p.polygon);
      }
      for (const AnnotatedPart& p : inst.truth) {
        if (p.label == l) theirs.push_back(&p.polygon);
      }
    }
    if (theirs.size() != labels.size()) continue;
    const Grid<std::uint8_t> a = rasterizeUnion(mine, grid);
    const Grid<std::uint8_t> b = rasterizeUnion(theirs, grid);
    if (std::none_of(b.values().begin(), b.values().end(), [](std::uint8_t v) { return v; })) {
      continue;
    }
    out.iou[detail::joinLabels(labels)] = maskIou(a, b);
  }
  return out;
}

// Parses every instance and scores each row by IOU at the stack resolution.
inline EvalReport evalDataset(const MixtureModel& model, const WeightVector& weights,
                              const std::vector<EvalInstance>& instances,
                              const EvalOptions& options = {}) {
  if (instances.empty()) throw InvalidArgument("evalDataset: empty dataset");
  const std::vector<std::vector<std::string>> rowLabels = evalRows(model, options);
  EvalReport report;
  report.instances.resize(instances.size());
  parallelFor(instances.size(), [&](std::size_t i) {
    report.instances[i] =
        evaluateInstance(parse(model, instances[i].stack, weights), instances[i], rowLabels);
  });

  for (const auto& labels : rowLabels) {
    PartRow row{detail::joinLabels(labels), 0.0, 0};
    for (const InstanceEval& e : report.instances) {
      if (const auto it = e.iou.find(row.part); it != e.iou.end()) {
        row.meanIou += it->second;
        ++row.count;
      }
    }
    if (row.count > 0) row.meanIou /= static_cast<double>(row.count);
    report.rows.push_back(row);
  }
  std::size_t tagged = 0, correct = 0, measured = 0;
  double px = 0.0;
  for (const InstanceEval& e : report.instances) {
    if (e.truthTag) {
      ++tagged;
      correct += e.predictedTag == e.truthTag;
    }
    if (e.landmarkPx) {
      ++measured;
      px += *e.landmarkPx;
    }
  }
  if (tagged > 0) report.mixtureAccuracy = static_cast<double>(correct) / static_cast<double>(tagged);
  if (measured > 0) report.meanLandmarkPx = px / static_cast<double>(measured);
  return report;
}

inline Json instanceEvalToJson(const InstanceEval& e) {
  Json ious = Json::object();
  for (const auto& [k, v] : e.iou) ious[k] = v;
  Json j{{"id", e.id}, {"mixtureIndex", e.mixtureIndex}, {"energy", e.energy}, {"iou", ious}};
  j["predictedTag"] = e.predictedTag ? Json(*e.predictedTag) : Json(nullptr);
  j["truthTag"] = e.truthTag ? Json(*e.truthTag) : Json(nullptr);
  j["landmarkPx"] = e.landmarkPx ? Json(*e.landmarkPx) : Json(nullptr);
  return j;
}

// Truth record {version, id, tag?, mixtureIndex?, landmarks, landmarkParts, parts}.
inline Json truthToJson(const EvalInstance& inst, std::optional<int> mixtureIndex = std::nullopt) {
  Json landmarks = Json::array();
  for (const Vec2& p : inst.landmarks) landmarks.push_back(detail::vecToJson(p));
  Json parts = Json::array();
  for (const AnnotatedPart& p : inst.truth) {
    parts.push_back({{"label", p.label}, {"polygon", polygonToJson(p.polygon)}});
  }
  Json j{{"version", 1},
         {"id", inst.id},
         {"landmarks", landmarks},
         {"landmarkParts", inst.landmarkParts},
         {"parts", parts}};
  if (inst.tag) j["tag"] = *inst.tag;
  if (mixtureIndex) j["mixtureIndex"] = *mixtureIndex;
  return j;
}

// Fills everything but the stack.
inline EvalInstance truthFromJson(const Json& j, const std::string& where) {
  if (detail::field<int>(j, "version", where) != 1) {
    throw SchemaError(where + "/version: unsupported truth record version");
  }
  EvalInstance inst;
  inst.id = detail::field<std::string>(j, "id", where);
  if (detail::present(j, "tag")) inst.tag = detail::field<std::string>(j, "tag", where);
  const Json parts = detail::field<Json>(j, "parts", where);
  if (!parts.is_array()) throw SchemaError(where + "/parts: expected array");
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::string at = where + "/parts/" + std::to_string(p);
    inst.truth.push_back({detail::field<std::string>(parts[p], "label", at),
                          polygonFromJson(detail::field<Json>(parts[p], "polygon", at),
                                          at + "/polygon")});
  }
  if (detail::present(j, "landmarks")) {
    const Json lm = detail::field<Json>(j, "landmarks", where);
    if (!lm.is_array()) throw SchemaError(where + "/landmarks: expected array");
    for (std::size_t k = 0; k < lm.size(); ++k) {
      inst.landmarks.push_back(detail::vecFromJson(lm[k], where + "/landmarks/" + std::to_string(k)));
    }
    inst.landmarkParts =
        detail::field<std::vector<std::string>>(j, "landmarkParts", where);
    if (inst.landmarkParts.size() != inst.landmarks.size()) {
      throw SchemaError(where + "/landmarkParts: one label per landmark required");
    }
  }
  return inst;
}

inline EvalInstance loadTruth(const std::string& path) {
  return truthFromJson(readJsonFile(path), path);
}

// Dataset index {version, instances: [{id, stack, truth}]}; paths relative to
// the index file.
inline std::vector<EvalInstance> loadDataset(const std::string& path) {
  namespace fs = std::filesystem;
  const Json j = readJsonFile(path);
  if (detail::field<int>(j, "version", path) != 1) {
    throw SchemaError(path + "/version: unsupported dataset version");
  }
  const Json list = detail::field<Json>(j, "instances", path);
  if (!list.is_array()) throw SchemaError(path + "/instances: expected array");
  const fs::path dir = fs::path(path).parent_path();
  std::vector<EvalInstance> out(list.size());
  std::vector<std::string> stacks(list.size());
  std::vector<std::string> truths(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string at = path + "/instances/" + std::to_string(i);
    stacks[i] = (dir / detail::field<std::string>(list[i], "stack", at)).string();
    truths[i] = (dir / detail::field<std::string>(list[i], "truth", at)).string();
  }
  parallelFor(out.size(), [&](std::size_t i) {
    out[i] = loadTruth(truths[i]);
    out[i].stack = loadStack(stacks[i]);
  });
  return out;
}

inline Json evalReportToJson(const EvalReport& report) {
  Json rows = Json::array();
  for (const PartRow& r : report.rows) {
    rows.push_back({{"part", r.part}, {"meanIou", r.meanIou}, {"count", r.count}});
  }
  Json instances = Json::array();
  for (const InstanceEval& e : report.instances) instances.push_back(instanceEvalToJson(e));
  Json out{{"rows", rows}, {"instances", instances}};
  out["mixtureAccuracy"] = report.mixtureAccuracy ? Json(*report.mixtureAccuracy) : Json(nullptr);
  out["meanLandmarkPx"] = report.meanLandmarkPx ? Json(*report.meanLandmarkPx) : Json(nullptr);
  return out;
}

inline std::string formatEvalTable(const EvalReport& report) {
  std::ostringstream out;
  std::size_t width = 4;
  for (const PartRow& r : report.rows) width = std::max(width, r.part.size());
  out << std::left;
  out.width(static_cast<std::streamsize>(width + 2));
  out << "part" << "mean IOU   n\n";
  for (const PartRow& r : report.rows) {
    out.width(static_cast<std::streamsize>(width + 2));
    out << r.part;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.4f  %3zu\n", r.meanIou, r.count);
    out << buf;
  }
  if (report.mixtureAccuracy) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "mixture accuracy %.4f\n", *report.mixtureAccuracy);
    out << buf;
  }
  if (report.meanLandmarkPx) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "mean landmark error %.3f px\n", *report.meanLandmarkPx);
    out << buf;
  }
  return out.str();
}

struct SynthDataset {
  std::vector<EvalInstance> instances;  // ids img-0000, img-0001, ...
  std::vector<int> mixtures;
  std::vector<PartAnnotation> annotations;
};

// Instance i renders mixture i mod K at a uniformly random root where the
// shape fits.
inline SynthDataset synthDataset(const MixtureModel& model, int count, double noise,
                                 std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("synthDataset: count must be positive");
  if (model.mixtures.empty()) throw InvalidArgument("synthDataset: model has no mixtures");
  const int g = model.gridSize;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coord(0, g - 1);
  SynthDataset out;
  for (int i = 0; i < count; ++i) {
    const int mixture = i % static_cast<int>(model.mixtures.size());
    const std::uint64_t noiseSeed = rng();
    std::optional<SynthInstance> inst;
    for (int attempt = 0; attempt < 10000 && !inst; ++attempt) {
      const Point root{coord(rng), coord(rng)};
      try {
        inst = synthStack(model, mixture, root, noise, noiseSeed);
      } catch (const InvalidArgument&) {
      }
    }
    if (!inst) {
      throw InfeasibleError("synthDataset: mixture " + std::to_string(mixture) +
                            " does not fit a " + std::to_string(g) + " grid");
    }
    char id[16];
    std::snprintf(id, sizeof id, "img-%04d", i);
    EvalInstance e;
    e.id = id;
    e.tag = model.mixtures[static_cast<std::size_t>(mixture)].tag;
    e.truth = inst->parts;
    e.landmarks = inst->landmarks;
    e.landmarkParts = inst->landmarkParts;
    e.stack = std::move(inst->stack);
    PartAnnotation ann;
    ann.id = e.id;
    ann.width = g;
    ann.height = g;
    ann.tag = e.tag;
    ann.parts = e.truth;
    out.annotations.push_back(std::move(ann));
    out.instances.push_back(std::move(e));
    out.mixtures.push_back(mixture);
  }
  return out;
}

// Negative stacks at the model's size: `shapes` clutter outlines each, or
// plain background when shapes is 0.
inline std::vector<FeatureStack> synthNegatives(const MixtureModel& model, int count, int shapes,
                                                double noise, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x6e6567}};
  std::mt19937_64 rng(seq);
  std::vector<FeatureStack> out;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = rng();
    out.push_back(shapes > 0 ? synthClutter(model.gridSize, model.channels, model.partChannels,
                                            shapes, noise, s)
                             : synthNegative(model.gridSize, model.gridSize, model.channels,
                                             model.partChannels, noise, s));
  }
  return out;
}

// Exact-versus-approximate comparison. The gap is (E~ - E) / |E| with E the
// exact minimum; E~ >= E always.
struct ApproxInstance {
  std::uint64_t seed = 0;
  double approxEnergy = 0.0;
  double exactEnergy = 0.0;
  double relativeGap = 0.0;
  double landmarkPx = 0.0;
};

struct ApproxReport {
  double meanRelEnergyError = 0.0;
  double medianRelEnergyError = 0.0;
  double p95RelEnergyError = 0.0;
  double fractionWithin5Percent = 0.0;
  double meanLandmarkPx = 0.0;
  double meanLandmarkNormalized = 0.0;  // px / max(grid width, grid height)
  std::vector<ApproxInstance> instances;
};

inline double relativeGap(double approx, double exact) {
  const double gap = approx - exact;
  if (gap == 0.0) return 0.0;
  return gap / std::max(std::abs(exact), 1e-12);
}

inline ApproxReport approxErrorReport(const std::vector<ParseInstance>& instances,
                                      const std::vector<std::uint64_t>& seeds = {},
                                      std::size_t cap = kDefaultExactCap) {
  if (instances.empty()) throw InvalidArgument("approxErrorReport: no instances");
  ApproxReport report;
  report.instances.resize(instances.size());
  std::vector<double> normalized(instances.size());
  parallelFor(instances.size(), [&](std::size_t i) {
    const ParseInstance& inst = instances[i];
    const ParseResult a = parseOneMixture(inst.tree, inst.stack, inst.weights, inst.squareSide);
    const ParseResult e = exactParse(inst.tree, inst.stack, inst.weights, inst.squareSide, cap);
    ApproxInstance& out = report.instances[i];
    out.seed = i < seeds.size() ? seeds[i] : i;
    out.approxEnergy = a.energy;
    out.exactEnergy = e.energy;
    out.relativeGap = relativeGap(a.energy, e.energy);
    double d = 0.0;
    for (std::size_t k = 0; k < a.landmarks.size(); ++k) {
      d += distance(toVec(a.landmarks[k]), toVec(e.landmarks[k]));
    }
    out.landmarkPx = a.landmarks.empty() ? 0.0 : d / static_cast<double>(a.landmarks.size());
    normalized[i] = out.landmarkPx / std::max(inst.stack.width, inst.stack.height);
  });
  std::vector<double> gaps;
  for (const ApproxInstance& r : report.instances) gaps.push_back(r.relativeGap);
  const double n = static_cast<double>(gaps.size());
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    report.meanRelEnergyError += gaps[i] / n;
    report.meanLandmarkPx += report.instances[i].landmarkPx / n;
    report.meanLandmarkNormalized += normalized[i] / n;
    report.fractionWithin5Percent += (gaps[i] <= 0.05) / n;
  }
  std::sort(gaps.begin(), gaps.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return gaps[lo] + (pos - static_cast<double>(lo)) * (gaps[hi] - gaps[lo]);
  };
  report.medianRelEnergyError = quantile(0.5);
  report.p95RelEnergyError = quantile(0.95);
  return report;
}

inline ApproxReport oracleCheck(int count, std::uint64_t seed, int gridSize = 12, int levels = 3,
                                double noise = 0.3, int squareSide = 3) {
  if (count < 1) throw InvalidArgument("oracleCheck: count must be positive");
  std::vector<ParseInstance> instances(static_cast<std::size_t>(count));
  std::vector<std::uint64_t> seeds(instances.size());
  parallelFor(instances.size(), [&](std::size_t i) {
    seeds[i] = seed + i;
    instances[i] = randomParseInstance(seeds[i], gridSize, levels, noise, squareSide);
  });
  return approxErrorReport(instances, seeds,
                           static_cast<std::size_t>(gridSize) * static_cast<std::size_t>(gridSize));
}

inline Json approxReportToJson(const ApproxReport& r, bool withInstances = true) {
  Json out{{"meanRelEnergyError", r.meanRelEnergyError},
           {"medianRelEnergyError", r.medianRelEnergyError},
           {"p95RelEnergyError", r.p95RelEnergyError},
           {"fractionWithin5Percent", r.fractionWithin5Percent},
           {"meanLandmarkPx", r.meanLandmarkPx},
           {"meanLandmarkNormalized", r.meanLandmarkNormalized},
           {"count", r.instances.size()}};
  if (withInstances) {
    Json list = Json::array();
    for (const ApproxInstance& i : r.instances) {
      list.push_back({{"seed", i.seed},
                      {"approxEnergy", i.approxEnergy},
                      {"exactEnergy", i.exactEnergy},
                      {"relativeGap", i.relativeGap},
                      {"landmarkPx", i.landmarkPx}});
    }
    out["instances"] = std::move(list);
  }
  return out;
}

struct ComplexityRow {
  std::string path;  // "approx" or "exact"
  int size = 0;
  std::int64_t positions = 0;
  double medianSeconds = 0.0;
  std::int64_t envelopeOps = 0;      // approx path only
  std::int64_t opsBound = 0;         // 4 |D| per non-leaf node
  std::int64_t boundViolations = 0;  // cgdt1d calls above 2n operations
};

struct ComplexityReport {
  std::vector<ComplexityRow> rows;
  double approxSlope = 0.0;
  double exactSlope = 0.0;
};

// Least-squares slope of log(y) against log(x).
inline double logLogSlope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("logLogSlope: need at least two points");
  }
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw InvalidArgument("logLogSlope: x values must differ");
  return sxy / sxx;
}

struct ComplexityOptions {
  std::vector<int> approxSizes{40, 80, 160, 320};
  std::vector<int> exactSizes{8, 12, 16, 20, 24};
  int repetitions = 5;
  int levels = 3;
  double minSeconds = 0.02;  // each timing repeats the parse at least this long
  std::uint64_t seed = 0;
};

namespace detail {

template <typename Fn>
double timeOnce(Fn&& fn, double minSeconds) {
  using Clock = std::chrono::steady_clock;
  int loops = 1;
  for (;;) {
    const auto t0 = Clock::now();
    for (int i = 0; i < loops; ++i) fn();
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    if (elapsed >= minSeconds || loops >= (1 << 20)) return elapsed / loops;
    loops *= 2;
  }
}

}  // namespace detail

// Times parseOneMixture and exactParse (leaf unaries included) on random
// stacks; rows carry the median over repetitions.
inline ComplexityReport complexityBench(const ComplexityOptions& options) {
  if (options.repetitions < 1) throw InvalidArgument("complexityBench: repetitions must be >= 1");
  ComplexityReport report;
  std::mt19937_64 rng(options.seed);
  auto instance = [&](int size) {
    std::uniform_real_distribution<double> offset(-size / 4.0, size / 4.0);
    std::uniform_int_distribution<int> type(0, kLeafTypeCount - 1);
    std::uniform_real_distribution<float> value(0.0f, 1.0f);
    std::uniform_real_distribution<double> weight(0.05, 0.5);
    CompTree tree;
    const int leaves = 1 << (options.levels - 1);
    std::vector<int> level;
    for (int i = 0; i < leaves; ++i) {
      CompNode leaf;
      leaf.id = i;
      leaf.leafType = LeafType::fromIndex(type(rng));
      tree.nodes.push_back(leaf);
      level.push_back(i);
    }
    int next = leaves;
    for (int l = 2; l <= options.levels; ++l) {
      std::vector<int> up;
      for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
        CompNode node;
        node.id = next++;
        node.level = l;
        node.children = {level[i], level[i + 1]};
        node.delta = Vec2{offset(rng), offset(rng)};
        tree.nodes.push_back(node);
        up.push_back(node.id);
      }
      level = std::move(up);
    }
    FeatureStack stack = FeatureStack::zeros(size, size, 2, 0);
    for (auto* group : {&stack.edge, &stack.app}) {
      for (Grid<float>& g : *group) {
        for (float& v : g.values()) v = value(rng);
      }
    }
    WeightVector w = WeightVector::initial(2);
    w.wDef = {weight(rng), weight(rng)};
    w.wApp = {-0.5, 0.5, 0.5, -0.5};
    return std::tuple<CompTree, FeatureStack, WeightVector>{tree, stack, w};
  };
  const int nonLeaf = (1 << (options.levels - 1)) - 1;

  auto run = [&](const std::string& path, const std::vector<int>& sizes) {
    std::vector<double> xs, ys;
    for (int size : sizes) {
      const auto [tree, stack, w] = instance(size);
      ComplexityRow row;
      row.path = path;
      row.size = size;
      row.positions = static_cast<std::int64_t>(size) * size;
      row.opsBound = 4 * row.positions * nonLeaf;
      std::vector<double> times;
      for (int r = 0; r < options.repetitions; ++r) {
        if (path == "approx") {
          gridmath::DtTrace trace;
          parseOneMixture(tree, stack, w, 3, &trace);
          row.envelopeOps = trace.envelopeOps();
          row.boundViolations = trace.boundViolations;
          times.push_back(detail::timeOnce([&] { parseOneMixture(tree, stack, w, 3); },
                                           options.minSeconds));
        } else {
          const auto cap = static_cast<std::size_t>(row.positions);
          times.push_back(detail::timeOnce([&] { exactParse(tree, stack, w, 3, cap); },
                                           options.minSeconds));
        }
      }
      std::sort(times.begin(), times.end());
      row.medianSeconds = times[times.size() / 2];
      xs.push_back(static_cast<double>(row.positions));
      ys.push_back(row.medianSeconds);
      report.rows.push_back(row);
    }
    return sizes.size() >= 2 ? logLogSlope(xs, ys) : 0.0;
  };
  report.approxSlope = run("approx", options.approxSizes);
  report.exactSlope = run("exact", options.exactSizes);
  return report;
}

// Timing fields excluded when withTimings is false.
inline Json complexityReportToJson(const ComplexityReport& r, bool withTimings = true) {
  Json rows = Json::array();
  for (const ComplexityRow& row : r.rows) {
    Json j{{"path", row.path},
           {"size", row.size},
           {"positions", row.positions},
           {"envelopeOps", row.envelopeOps},
           {"opsBound", row.opsBound},
           {"boundViolations", row.boundViolations}};
    if (withTimings) j["medianSeconds"] = row.medianSeconds;
    rows.push_back(std::move(j));
  }
  Json out{{"rows", rows}};
  if (withTimings) {
    out["approxSlope"] = r.approxSlope;
    out["exactSlope"] = r.exactSlope;
  }
  return out;
}

// Binary PPM: gray background from the per-pixel maximum edge response,
// ground truth outlines in green, predictions in red.
inline std::string renderOverlay(const FeatureStack& stack, const std::vector<Polygon>& predicted,
                                 const std::vector<Polygon>& truth = {}) {
  const int w = stack.width;
  const int h = stack.height;
  std::vector<std::array<std::uint8_t, 3>> pixels(static_cast<std::size_t>(w) * h);
  float hi = 0.0f;
  for (const Grid<float>& g : stack.edge) {
    for (float v : g.values()) hi = std::max(hi, v);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float v = 0.0f;
      for (const Grid<float>& g : stack.edge) v = std::max(v, g(x, y));
      const auto gray = static_cast<std::uint8_t>(
          hi > 0.0f ? std::clamp(v / hi, 0.0f, 1.0f) * 160.0f : 0.0f);
      pixels[static_cast<std::size_t>(y) * w + x] = {gray, gray, gray};
    }
  }
  auto draw = [&](const Polygon& p, std::array<std::uint8_t, 3> color) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec2 a = p[i];
      const Vec2 b = p[(i + 1) % p.size()];
      const int steps = std::max(1, static_cast<int>(std::ceil(2 * distance(a, b))));
      for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        const auto x = static_cast<int>(std::lround(a.x + t * (b.x - a.x)));
        const auto y = static_cast<int>(std::lround(a.y + t * (b.y - a.y)));
        if (x >= 0 && y >= 0 && x < w && y < h) pixels[static_cast<std::size_t>(y) * w + x] = color;
      }
    }
  };
  for (const Polygon& p : truth) draw(p, {0, 200, 0});
  for (const Polygon& p : predicted) draw(p, {230, 30, 30});
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (const auto& px : pixels) out.append(reinterpret_cast<const char*>(px.data()), 3);
  return out;
}

}  // namespace compshape
