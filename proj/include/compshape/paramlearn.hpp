#pragma once

// Latent SVM over whole-model parses. Energy is linear in the shared weights,
// E = w . phi, and the score is F = -E.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "compshape/error.hpp"
#include "compshape/featurestack.hpp"
#include "compshape/inference.hpp"
#include "compshape/model_io.hpp"
#include "compshape/parallel.hpp"
#include "compshape/shapemodel.hpp"

namespace compshape {

struct TrainingExample {
  FeatureStack stack;
  int label = 1;  // +1 object, -1 non-object
};

// [sum dx^2, sum dy^2, sum edge, sum appearance (2C), sum part score]
inline std::vector<double> featurize(const CompTree& tree, const FeatureStack& stack,
                                     int squareSide, const std::vector<Point>& positions) {
  if (positions.size() != tree.nodes.size()) {
    throw InvalidArgument("featurize: " + std::to_string(positions.size()) + " positions for " +
                          std::to_string(tree.nodes.size()) + " nodes");
  }
  const TreeIndex ix = indexTree(tree);
  const int channels = stack.channels();
  std::vector<double> phi(static_cast<std::size_t>(4 + 2 * channels), 0.0);
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    const CompNode& node = tree.nodes[v];
    const Point s = positions[v];
    if (!stack.contains(s)) throw InvalidArgument("featurize: position outside the grid");
    if (ix.isLeaf[v]) {
      phi[2] += edgeFeature(stack, *node.leafType, s);
      const auto app = appearanceFeature(stack, *node.leafType, s, squareSide);
      if (!app) throw InvalidArgument("featurize: leaf window leaves the grid");
      for (std::size_t k = 0; k < app->size(); ++k) phi[3 + k] += (*app)[k];
      continue;
    }
    const Point a = positions[ix.children[v][0]];
    const Point b = positions[ix.children[v][1]];
    const double dx = static_cast<double>(b.x - a.x) - node.delta->x;
    const double dy = static_cast<double>(b.y - a.y) - node.delta->y;
    phi[0] += dx * dx;
    phi[1] += dy * dy;
    if (node.partScoreChannel) {
      const int c = *node.partScoreChannel;
      if (c < 0 || c >= stack.partChannels()) {
        throw InvalidArgument("featurize: part channel " + std::to_string(c) + " missing");
      }
      phi.back() += stack.part[static_cast<std::size_t>(c)][s];
    }
  }
  return phi;
}

inline std::vector<double> featurize(const MixtureModel& model, const FeatureStack& stack,
                                     const ParseResult& assignment) {
  if (assignment.mixtureIndex < 0 ||
      assignment.mixtureIndex >= static_cast<int>(model.mixtures.size())) {
    throw InvalidArgument("featurize: mixture index out of range");
  }
  return featurize(model.mixtures[static_cast<std::size_t>(assignment.mixtureIndex)], stack,
                   model.squareSide, assignment.positions);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double scoreExample(const MixtureModel& model, const WeightVector& weights,
                           const FeatureStack& stack) {
  return parse(model, stack, weights).score();
}

enum class SvmSolver { kInteriorPoint, kSubgradient };

struct SvmOptions {
  double c = 0.01;
  int epochs = 5;
  int innerIterations = 200;  // Newton steps or subgradient steps
  SvmSolver solver = SvmSolver::kInteriorPoint;
  std::uint64_t seed = 0;
};

struct SvmRound {
  std::vector<double> convexTrace;  // best objective after each inner iteration
  double objectiveAfterLatent = 0.0;
  double accuracy = 0.0;
  double dualityError = 0.0;  // max |w . phi - E| over the round's assignments
  std::size_t cachedNegatives = 0;
};

struct SvmResult {
  WeightVector weights;
  std::vector<SvmRound> rounds;
  bool degenerate = false;  // all examples carry the same label
  double accuracy = 0.0;    // sign of F under the final weights
};

namespace detail {

// Per example, the feature vectors its hinge is maximized over.
using FeatureGroups = std::vector<std::vector<std::vector<double>>>;

inline void projectWeights(std::vector<double>& w) {
  w[0] = std::max(0.0, w[0]);
  w[1] = std::max(0.0, w[1]);
}

inline double svmObjective(const std::vector<double>& w, const FeatureGroups& groups,
                           const std::vector<int>& labels, double c) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    double worst = 0.0;
    for (const auto& phi : groups[i]) worst = std::max(worst, 1.0 + labels[i] * dot(w, phi));
    hinge += worst;
  }
  return 0.5 * dot(w, w) + c * hinge;
}

struct ConvexStep {
  std::vector<double> weights;
  std::vector<double> trace;  // best objective after each iteration
};

// Full-batch subgradient descent, step 1/t, iterates kept in the ball
// |w|^2 <= 2 C n that contains the optimum; best of iterate and average kept.
inline ConvexStep subgradientStep(const std::vector<double>& start, const FeatureGroups& groups,
                                  const std::vector<int>& labels, double c, int iterations) {
  ConvexStep out{start, {}};
  double bestObjective = svmObjective(start, groups, labels, c);
  const double radius = std::sqrt(2.0 * c * static_cast<double>(groups.size()));
  std::vector<double> iterate = start;
  std::vector<double> average(start.size(), 0.0);
  auto consider = [&](const std::vector<double>& candidate) {
    const double objective = svmObjective(candidate, groups, labels, c);
    if (objective < bestObjective) {
      bestObjective = objective;
      out.weights = candidate;
    }
  };
  for (int t = 1; t <= iterations; ++t) {
    std::vector<double> grad = iterate;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const std::vector<double>* worst = nullptr;
      double value = 0.0;
      for (const auto& phi : groups[i]) {
        const double v = 1.0 + labels[i] * dot(iterate, phi);
        if (v > value) {
          value = v;
          worst = &phi;
        }
      }
      if (worst == nullptr) continue;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += c * labels[i] * (*worst)[k];
    }
    const double step = 1.0 / t;
    for (std::size_t k = 0; k < iterate.size(); ++k) iterate[k] -= step * grad[k];
    projectWeights(iterate);
    const double norm = std::sqrt(dot(iterate, iterate));
    if (norm > radius) {
      for (double& v : iterate) v *= radius / norm;
    }
    for (std::size_t k = 0; k < iterate.size(); ++k) {
      average[k] += (iterate[k] - average[k]) * 2.0 / (t + 1);
    }
    consider(iterate);
    consider(average);
    out.trace.push_back(bestObjective);
  }
  return out;
}

// Solves A x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> solveDense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double sum = b[i];
    for (std::size_t k = i + 1; k < n; ++k) sum -= a[i][k] * x[k];
    x[i] = sum / a[i][i];
  }
  return x;
}

// Log-barrier interior point on the primal with one slack per example:
//   min 0.5|w|^2 + C sum xi_i
//   s.t. xi_i > 0, xi_i > 1 + y_i w.phi for every phi of example i, wDef > 0.
// Newton steps eliminate the slacks, leaving a dim x dim system; one Newton
// step is one iteration.
inline ConvexStep barrierStep(const std::vector<double>& start, const FeatureGroups& groups,
                              const std::vector<int>& labels, double c, int iterations) {
  ConvexStep out{start, {}};
  double bestObjective = svmObjective(start, groups, labels, c);
  const std::size_t dim = start.size();
  const std::size_t n = groups.size();
  if (c == 0.0) {
    out.weights.assign(dim, 0.0);
    out.trace.assign(static_cast<std::size_t>(iterations), 0.0);
    return out;
  }
  constexpr std::size_t kDefDims = 2;
  std::vector<double> w = start;
  for (std::size_t k = 0; k < kDefDims; ++k) w[k] = std::max(w[k], 1e-6);
  std::vector<double> xi(n);
  for (std::size_t i = 0; i < n; ++i) {
    double worst = 0.0;
    for (const auto& phi : groups[i]) worst = std::max(worst, 1.0 + labels[i] * dot(w, phi));
    xi[i] = worst + 1.0;
  }
  std::size_t constraintCount = kDefDims + n;
  for (const auto& g : groups) constraintCount += g.size();

  auto barrier = [&](const std::vector<double>& wv, const std::vector<double>& xv, double t) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double f = t * 0.5 * dot(wv, wv);
    for (std::size_t k = 0; k < kDefDims; ++k) {
      if (!(wv[k] > 0.0)) return kInf;
      f -= std::log(wv[k]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(xv[i] > 0.0)) return kInf;
      f += t * c * xv[i] - std::log(xv[i]);
      for (const auto& phi : groups[i]) {
        const double s = xv[i] - 1.0 - labels[i] * dot(wv, phi);
        if (!(s > 0.0)) return kInf;
        f -= std::log(s);
      }
    }
    return f;
  };

  double t = 1.0;
  int used = 0;
  while (used < iterations) {
    bool centered = false;
    while (!centered && used < iterations) {
      // Gradient and Hessian blocks: H_ww, per-example cross column b_i and
      // diagonal q_i for xi_i.
      std::vector<double> gw(dim), gx(n), q(n);
      std::vector<std::vector<double>> b(n, std::vector<double>(dim, 0.0));
      std::vector<std::vector<double>> h(dim, std::vector<double>(dim, 0.0));
      for (std::size_t k = 0; k < dim; ++k) {
        gw[k] = t * w[k];
        h[k][k] = t;
      }
      for (std::size_t k = 0; k < kDefDims; ++k) {
        gw[k] -= 1.0 / w[k];
        h[k][k] += 1.0 / (w[k] * w[k]);
      }
      for (std::size_t i = 0; i < n; ++i) {
        gx[i] = t * c - 1.0 / xi[i];
        q[i] = 1.0 / (xi[i] * xi[i]);
        for (const auto& phi : groups[i]) {
          const double s = xi[i] - 1.0 - labels[i] * dot(w, phi);
          const double p = 1.0 / (s * s);
          gx[i] -= 1.0 / s;
          q[i] += p;
          for (std::size_t k = 0; k < dim; ++k) {
            gw[k] += labels[i] * phi[k] / s;
            b[i][k] -= labels[i] * p * phi[k];
          }
          for (std::size_t r = 0; r < dim; ++r) {
            for (std::size_t k = 0; k < dim; ++k) h[r][k] += p * phi[r] * phi[k];
          }
        }
      }
      std::vector<double> rhs(dim);
      for (std::size_t k = 0; k < dim; ++k) rhs[k] = -gw[k];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < dim; ++r) {
          rhs[r] += b[i][r] * gx[i] / q[i];
          for (std::size_t k = 0; k < dim; ++k) h[r][k] -= b[i][r] * b[i][k] / q[i];
        }
      }
      const std::vector<double> dw = solveDense(h, rhs);
      std::vector<double> dx(n);
      for (std::size_t i = 0; i < n; ++i) dx[i] = (-gx[i] - dot(b[i], dw)) / q[i];
      double slope = dot(gw, dw);
      for (std::size_t i = 0; i < n; ++i) slope += gx[i] * dx[i];
      ++used;
      if (!(slope < -1e-12) || !std::isfinite(slope)) {
        centered = true;
      } else {
        const double f0 = barrier(w, xi, t);
        double step = 1.0;
        std::vector<double> wn(dim), xn(n);
        double f1 = f0;
        for (int tries = 0; tries < 60; ++tries, step *= 0.5) {
          for (std::size_t k = 0; k < dim; ++k) wn[k] = w[k] + step * dw[k];
          for (std::size_t i = 0; i < n; ++i) xn[i] = xi[i] + step * dx[i];
          f1 = barrier(wn, xn, t);
          if (f1 <= f0 + 0.25 * step * slope) break;
        }
        if (f1 <= f0) {
          w = wn;
          xi = xn;
        }
        centered = -slope / 2.0 < 1e-10;
      }
      const double objective = svmObjective(w, groups, labels, c);
      if (objective < bestObjective) {
        bestObjective = objective;
        out.weights = w;
      }
      out.trace.push_back(bestObjective);
    }
    if (static_cast<double>(constraintCount) / t < 1e-10 * std::max(1.0, bestObjective)) break;
    t *= 10.0;
  }
  while (out.trace.size() < static_cast<std::size_t>(iterations)) out.trace.push_back(bestObjective);
  return out;
}

}  // namespace detail

// Fraction of examples whose score sign matches the label (F > 0 is object).
inline double trainingAccuracy(const MixtureModel& model, const WeightVector& weights,
                               const std::vector<TrainingExample>& examples) {
  if (examples.empty()) throw InvalidArgument("trainingAccuracy: no examples");
  std::vector<int> correct(examples.size(), 0);
  parallelFor(examples.size(), [&](std::size_t i) {
    const double f = scoreExample(model, weights, examples[i].stack);
    correct[i] = (f > 0.0) == (examples[i].label > 0);
  });
  double total = 0.0;
  for (int c : correct) total += c;
  return total / static_cast<double>(examples.size());
}

// Alternates latent parses with a convex step on
//   0.5|w|^2 + C sum max(0, 1 + y w.phi),  wDef >= 0.
// Positives use their latest assignment. A negative's hinge is a maximum over
// every configuration any round has assigned to it, which bounds the true
// hinge (a maximum over all configurations) from below. The convex step keeps
// its best iterate, starting from the current weights.
inline SvmResult trainLatentSvm(const MixtureModel& model,
                                const std::vector<TrainingExample>& examples,
                                const SvmOptions& options, WeightVector initial) {
  if (examples.empty()) throw InvalidArgument("trainLatentSvm: no examples");
  if (options.c < 0.0) throw InvalidArgument("trainLatentSvm: C must be >= 0");
  if (options.epochs < 1 || options.innerIterations < 1) {
    throw InvalidArgument("trainLatentSvm: epochs and inner iterations must be positive");
  }
  if (initial.channels() != model.channels) {
    throw InvalidArgument("trainLatentSvm: weights have " + std::to_string(initial.channels()) +
                          " channels, model has " + std::to_string(model.channels));
  }
  std::vector<int> labels;
  for (const TrainingExample& e : examples) {
    if (e.label != 1 && e.label != -1) throw InvalidArgument("training labels must be +1 or -1");
    labels.push_back(e.label);
  }

  SvmResult result;
  result.degenerate =
      std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels[0]; });
  std::vector<double> w = initial.flatten();
  detail::projectWeights(w);
  const std::size_t n = examples.size();
  std::vector<std::vector<double>> fresh(n);
  std::vector<double> energies(n);
  detail::FeatureGroups groups(n);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const WeightVector current = WeightVector::unflatten(w);
    parallelFor(n, [&](std::size_t i) {
      const ParseResult r = parse(model, examples[i].stack, current);
      fresh[i] = featurize(model, examples[i].stack, r);
      energies[i] = r.energy;
    });
    SvmRound round;
    std::size_t correct = 0;
    detail::FeatureGroups latest(n);
    for (std::size_t i = 0; i < n; ++i) {
      round.dualityError = std::max(round.dualityError, std::abs(dot(w, fresh[i]) - energies[i]));
      correct += (-energies[i] > 0.0) == (labels[i] > 0);
      latest[i] = {fresh[i]};
      if (labels[i] > 0) {
        groups[i] = {fresh[i]};
      } else if (std::find(groups[i].begin(), groups[i].end(), fresh[i]) == groups[i].end()) {
        groups[i].push_back(fresh[i]);
      }
      if (labels[i] < 0) round.cachedNegatives += groups[i].size();
    }
    round.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    round.objectiveAfterLatent = detail::svmObjective(w, latest, labels, options.c);

    detail::ConvexStep step =
        options.solver == SvmSolver::kInteriorPoint
            ? detail::barrierStep(w, groups, labels, options.c, options.innerIterations)
            : detail::subgradientStep(w, groups, labels, options.c, options.innerIterations);
    w = std::move(step.weights);
    round.convexTrace = std::move(step.trace);
    result.rounds.push_back(std::move(round));
  }
  result.weights = WeightVector::unflatten(w);
  result.accuracy = trainingAccuracy(model, result.weights, examples);
  return result;
}

inline SvmResult trainLatentSvm(const MixtureModel& model,
                                const std::vector<TrainingExample>& examples,
                                const SvmOptions& options) {
  return trainLatentSvm(model, examples, options, WeightVector::initial(model.channels));
}

// {examples: [{stack: "path/to/manifest.json", label: 1 | -1}]}, paths
// relative to the training manifest.
inline std::vector<TrainingExample> loadTrainingManifest(const std::string& path) {
  const Json j = readJsonFile(path);
  const Json list = detail::field<Json>(j, "examples", path);
  if (!list.is_array()) throw SchemaError(path + "/examples: expected array");
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string at = path + "/examples/" + std::to_string(i);
    TrainingExample e;
    e.label = detail::field<int>(list[i], "label", at);
    if (e.label != 1 && e.label != -1) throw SchemaError(at + "/label: must be 1 or -1");
    e.stack = loadStack((dir / detail::field<std::string>(list[i], "stack", at)).string());
    out.push_back(std::move(e));
  }
  if (out.empty()) throw SchemaError(path + "/examples: empty");
  return out;
}

}  // namespace compshape
