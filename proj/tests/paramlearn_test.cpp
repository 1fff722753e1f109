#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "compshape/paramlearn.hpp"
#include "test_support.hpp"

namespace compshape {
namespace {

MixtureModel randomModel(int mixtures, int grid, std::mt19937_64& rng) {
  MixtureModel model;
  model.gridSize = grid;
  model.squareSide = 3;
  model.channels = 2;
  model.partChannels = 1;
  for (int m = 0; m < mixtures; ++m) {
    CompTree tree = testing::randomTree(3, rng, 3.0);
    tree.nodes.back().partScoreChannel = 0;
    model.mixtures.push_back(std::move(tree));
  }
  validateModel(model);
  return model;
}

TEST(Featurize, DotProductReproducesParseEnergy) {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const MixtureModel model = randomModel(1 + trial % 3, 14, rng);
    const FeatureStack stack = testing::randomStack(14, 14, 2, 1, rng);
    const WeightVector w = testing::randomWeights(2, rng);
    const ParseResult r = parse(model, stack, w);
    const double e = dot(w.flatten(), featurize(model, stack, r));
    worst = std::max(worst, std::abs(e - r.energy));
    EXPECT_NEAR(e, r.energy, 1e-6);
  }
  RecordProperty("worstDualityError", std::to_string(worst));
}

TEST(Featurize, ZeroDeformationConfigurationHasZeroDeformationFeatures) {
  std::mt19937_64 rng(32);
  CompTree tree = testing::randomTree(3, rng, 2.0, true);
  for (CompNode& n : tree.nodes) {
    if (n.delta) n.delta = Vec2{2 * n.delta->x, 2 * n.delta->y};
  }
  const TreeIndex ix = indexTree(tree);
  const std::vector<Point> positions = gridConfiguration(tree, ix, {12, 12});
  const FeatureStack stack = testing::randomStack(24, 24, 2, 1, rng);
  const std::vector<double> phi = featurize(tree, stack, 3, positions);
  EXPECT_EQ(phi[0], 0.0);
  EXPECT_EQ(phi[1], 0.0);
  EXPECT_EQ(phi.size(), 8u);
}

TEST(Featurize, AppearanceBlockIsLinearInTheChannels) {
  std::mt19937_64 rng(33);
  const MixtureModel model = randomModel(1, 16, rng);
  const FeatureStack stack = testing::randomStack(16, 16, 2, 1, rng);
  const ParseResult r = parse(model, stack, testing::randomWeights(2, rng));
  FeatureStack doubled = stack;
  for (Grid<float>& g : doubled.app) {
    for (float& v : g.values()) v *= 2.0f;
  }
  const auto a = featurize(model, stack, r);
  const auto b = featurize(model, doubled, r);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const bool app = k >= 3 && k < 7;
    EXPECT_NEAR(b[k], app ? 2 * a[k] : a[k], 1e-9) << k;
  }
}

TEST(Featurize, Rejections) {
  std::mt19937_64 rng(34);
  const MixtureModel model = randomModel(1, 12, rng);
  const FeatureStack stack = testing::randomStack(12, 12, 2, 1, rng);
  ParseResult r = parse(model, stack, WeightVector::initial(2));
  ParseResult shortOne = r;
  shortOne.positions.pop_back();
  EXPECT_THROW(featurize(model, stack, shortOne), InvalidArgument);
  ParseResult border = r;
  border.positions.assign(border.positions.size(), Point{0, 0});
  EXPECT_THROW(featurize(model, stack, border), InvalidArgument);
  EXPECT_THROW(dot({1.0, 2.0}, {1.0}), InvalidArgument);
}

TEST(ScoreExample, ZeroWeightsScoreZero) {
  std::mt19937_64 rng(35);
  const MixtureModel model = randomModel(2, 12, rng);
  WeightVector zero = WeightVector::initial(2);
  zero.wDef = {0, 0};
  zero.wEdge = 0;
  EXPECT_EQ(scoreExample(model, zero, testing::randomStack(12, 12, 2, 1, rng)), 0.0);
}

TEST(ScoreExample, ConstantOnObjectChannelShiftsScore) {
  std::mt19937_64 rng(36);
  const MixtureModel model = randomModel(1, 14, rng);
  const FeatureStack stack = testing::randomStack(14, 14, 2, 1, rng);
  WeightVector w = testing::randomWeights(2, rng);
  w.wApp[2] = 0.0;  // non-object side of channel 0
  FeatureStack shifted = stack;
  for (float& v : shifted.app[0].values()) v += 0.25f;
  const double leaves = static_cast<double>(indexTree(model.mixtures[0]).leafOrder.size());
  EXPECT_NEAR(scoreExample(model, w, shifted),
              scoreExample(model, w, stack) - leaves * w.wApp[0] * 0.25, 1e-5);
}

detail::FeatureGroups randomGroups(std::size_t n, std::size_t dim, std::vector<int>& labels,
                                   std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.1, 100.0);
  detail::FeatureGroups groups(n);
  labels.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 2 == 0 ? 1 : -1;
    const std::size_t count = labels[i] > 0 ? 1 : 1 + i % 3;
    for (std::size_t j = 0; j < count; ++j) {
      std::vector<double> phi(dim);
      for (std::size_t k = 0; k < dim; ++k) phi[k] = normal(rng) * (k < 2 ? scale(rng) : 1.0);
      phi[0] = std::abs(phi[0]);
      phi[1] = std::abs(phi[1]);
      groups[i].push_back(std::move(phi));
    }
  }
  return groups;
}

TEST(ConvexStep, InteriorPointReachesTheOptimum) {
  std::mt19937_64 rng(38);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> labels;
    const auto groups = randomGroups(12, 6, labels, rng);
    const double c = trial % 2 == 0 ? 0.1 : 2.0;
    const std::vector<double> start(6, 0.0);
    const detail::ConvexStep step = detail::barrierStep(start, groups, labels, c, 200);
    const double best = detail::svmObjective(step.weights, groups, labels, c);
    EXPECT_GE(step.weights[0], 0.0);
    EXPECT_GE(step.weights[1], 0.0);
    // Convexity: no feasible perturbation may do better.
    for (int probe = 0; probe < 400; ++probe) {
      std::vector<double> w = step.weights;
      const double radius = std::pow(10.0, -1 - probe % 4);
      for (double& v : w) v += radius * normal(rng);
      detail::projectWeights(w);
      EXPECT_GE(detail::svmObjective(w, groups, labels, c), best - 1e-7);
    }
    for (std::size_t t = 1; t < step.trace.size(); ++t) {
      EXPECT_LE(step.trace[t], step.trace[t - 1]);
    }
  }
}

TEST(ConvexStep, SubgradientTraceIsNonIncreasing) {
  std::mt19937_64 rng(39);
  std::vector<int> labels;
  const auto groups = randomGroups(10, 5, labels, rng);
  const detail::ConvexStep step =
      detail::subgradientStep(std::vector<double>(5, 0.5), groups, labels, 0.5, 200);
  ASSERT_EQ(step.trace.size(), 200u);
  EXPECT_LE(step.trace.front(), detail::svmObjective(std::vector<double>(5, 0.5), groups, labels, 0.5));
  for (std::size_t t = 1; t < step.trace.size(); ++t) EXPECT_LE(step.trace[t], step.trace[t - 1]);
  EXPECT_GE(step.weights[0], 0.0);
  EXPECT_GE(step.weights[1], 0.0);
}

struct SmallSet {
  MixtureModel model;
  std::vector<TrainingExample> examples;
};

SmallSet separableSet(int positives, int negatives) {
  SmallSet set{demoModel(1, 128), {}};
  const std::vector<Point> roots{{60, 60}, {64, 70}, {70, 64}, {56, 66}, {66, 58}, {62, 62}};
  for (int i = 0; i < positives; ++i) {
    set.examples.push_back(
        {synthStack(set.model, 0, roots[static_cast<std::size_t>(i) % roots.size()], 0.0, i)
             .stack,
         1});
  }
  for (int i = 0; i < negatives; ++i) {
    set.examples.push_back({synthNegative(128, 128, 2, 1, 0.3, 100 + i), -1});
  }
  return set;
}

const SmallSet& sharedSet() {
  static const SmallSet set = separableSet(3, 3);
  return set;
}

TEST(LatentSvm, ZeroCGivesZeroWeights) {
  SvmOptions options;
  options.c = 0.0;
  options.epochs = 1;
  const SvmResult r = trainLatentSvm(sharedSet().model, sharedSet().examples, options);
  for (double v : r.weights.flatten()) EXPECT_EQ(v, 0.0);
}

TEST(LatentSvm, SeparableSetIsLearnedWithTracesAndDuality) {
  SvmOptions options;
  options.c = 0.01;
  const SvmResult r = trainLatentSvm(sharedSet().model, sharedSet().examples, options);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_FALSE(r.degenerate);
  EXPECT_GE(r.weights.wDef[0], 0.0);
  EXPECT_GE(r.weights.wDef[1], 0.0);
  ASSERT_EQ(r.rounds.size(), 5u);
  for (const SvmRound& round : r.rounds) {
    EXPECT_LE(round.dualityError, 1e-6);
    ASSERT_EQ(round.convexTrace.size(), 200u);
    EXPECT_LE(round.convexTrace.front(), round.objectiveAfterLatent + 1e-12);
    for (std::size_t t = 1; t < round.convexTrace.size(); ++t) {
      EXPECT_LE(round.convexTrace[t], round.convexTrace[t - 1]);
    }
  }
  const double pos = scoreExample(sharedSet().model, r.weights, sharedSet().examples[0].stack);
  const double neg = scoreExample(sharedSet().model, r.weights, sharedSet().examples[3].stack);
  EXPECT_GT(pos, neg);
}

TEST(LatentSvm, DeterministicAndProjected) {
  SvmOptions options;
  options.c = 0.01;
  options.epochs = 2;
  WeightVector start = WeightVector::initial(2);
  start.wDef = {-1.0, 0.5};
  const SvmResult a = trainLatentSvm(sharedSet().model, sharedSet().examples, options, start);
  const SvmResult b = trainLatentSvm(sharedSet().model, sharedSet().examples, options, start);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_GE(a.weights.wDef[0], 0.0);
}

TEST(LatentSvm, OneSidedSetIsFlaggedDegenerate) {
  SvmOptions options;
  options.epochs = 1;
  options.innerIterations = 5;
  std::vector<TrainingExample> positives(sharedSet().examples.begin(),
                                         sharedSet().examples.begin() + 2);
  EXPECT_TRUE(trainLatentSvm(sharedSet().model, positives, options).degenerate);
  EXPECT_THROW(trainLatentSvm(sharedSet().model, {}, options), InvalidArgument);
  options.c = -1.0;
  EXPECT_THROW(trainLatentSvm(sharedSet().model, positives, options), InvalidArgument);
}

TEST(TrainingManifest, LoadsStacksRelativeToTheManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "compshape_manifest_test";
  std::filesystem::create_directories(dir / "stacks");
  std::mt19937_64 rng(37);
  const FeatureStack s = testing::randomStack(8, 8, 2, 1, rng);
  saveStack((dir / "stacks" / "a.json").string(), s);
  writeTextFile((dir / "train.json").string(),
                R"({"examples": [{"stack": "stacks/a.json", "label": -1}]})");
  const auto examples = loadTrainingManifest((dir / "train.json").string());
  ASSERT_EQ(examples.size(), 1u);
  EXPECT_EQ(examples[0].label, -1);
  EXPECT_EQ(examples[0].stack, s);
  writeTextFile((dir / "bad.json").string(),
                R"({"examples": [{"stack": "stacks/a.json", "label": 0}]})");
  EXPECT_THROW(loadTrainingManifest((dir / "bad.json").string()), SchemaError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace compshape
