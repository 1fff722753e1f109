#include <gtest/gtest.h>

#include <cstring>
#include <numbers>
#include <random>
#include <set>

#include "test_support.hpp"

namespace compshape {
namespace {

bool hasRule(const std::vector<Violation>& v, int node, const std::string& rule) {
  for (const Violation& x : v) {
    if (x.nodeId == node && x.rule == rule) return true;
  }
  return false;
}

CompTree pair(Vec2 delta) {
  CompTree t;
  t.nodes.push_back({0, 1, {}, std::nullopt, LeafType{0, 0}, std::nullopt, std::nullopt});
  t.nodes.push_back({1, 1, {}, std::nullopt, LeafType{4, 1}, std::nullopt, std::nullopt});
  t.nodes.push_back({2, 2, {0, 1}, delta, std::nullopt, std::nullopt, std::nullopt});
  return t;
}

TEST(LeafType, TwentyFourDistinctTypes) {
  std::set<int> seen;
  for (int o = 0; o < kOrientationCount; ++o) {
    for (int p = 0; p < kPolarityCount; ++p) {
      const LeafType t{o, p};
      EXPECT_TRUE(t.valid());
      EXPECT_EQ(LeafType::fromIndex(t.index()), t);
      seen.insert(t.index());
    }
  }
  EXPECT_EQ(seen.size(), 24u);
  EXPECT_FALSE((LeafType{8, 0}.valid()));
  EXPECT_FALSE((LeafType{0, 3}.valid()));
}

TEST(LeafType, QuantizationUsesBinCentresAndLowerTie) {
  const double bin = std::numbers::pi / 8;
  EXPECT_EQ(quantizeOrientation(0.0), 0);
  EXPECT_EQ(quantizeOrientation(3 * bin), 3);
  EXPECT_EQ(quantizeOrientation(std::numbers::pi), 0);
  EXPECT_EQ(quantizeOrientation(-bin), 7);
  EXPECT_EQ(quantizeOrientation(bin / 2), 0);
  EXPECT_EQ(quantizeOrientation(bin / 2 + 1e-9), 1);
  EXPECT_EQ(quantizeOrientation(7.5 * bin + 1e-9), 0);
}

TEST(ValidateTree, HorseTopologyIsValid) {
  const CompTree tree = testing::horseTree();
  EXPECT_TRUE(validateTree(tree).empty()) << describe(validateTree(tree));
  EXPECT_EQ(tree.nodes.size(), 63u);
  EXPECT_EQ(indexTree(tree).levels, 6);
}

TEST(ValidateTree, ThreeChildrenNamesTheNode) {
  CompTree tree = pair({1, 0});
  tree.nodes.push_back({3, 1, {}, std::nullopt, LeafType{1, 1}, std::nullopt, std::nullopt});
  tree.nodes[2].children.push_back(3);
  const auto v = validateTree(tree);
  EXPECT_TRUE(hasRule(v, 2, "arity")) << describe(v);
}

TEST(ValidateTree, LeafAtLevelTwoIsALevelMismatch) {
  CompTree tree = testing::horseTree();
  tree.nodes[5].level = 2;
  const auto v = validateTree(tree);
  EXPECT_TRUE(hasRule(v, tree.nodes[5].id, "level")) << describe(v);
}

TEST(ValidateTree, OtherViolations) {
  CompTree missingDelta = pair({1, 0});
  missingDelta.nodes[2].delta.reset();
  EXPECT_TRUE(hasRule(validateTree(missingDelta), 2, "delta"));

  CompTree badType = pair({1, 0});
  badType.nodes[0].leafType = LeafType{9, 0};
  EXPECT_TRUE(hasRule(validateTree(badType), 0, "leaf-type"));

  CompTree dangling = pair({1, 0});
  dangling.nodes[2].children = {0, 7};
  EXPECT_TRUE(hasRule(validateTree(dangling), 2, "child-exists"));

  CompTree twoRoots = pair({1, 0});
  twoRoots.nodes.push_back({9, 1, {}, std::nullopt, LeafType{0, 2}, std::nullopt, std::nullopt});
  EXPECT_FALSE(validateTree(twoRoots).empty());

  CompTree duplicate = pair({1, 0});
  duplicate.nodes[1].id = 0;
  EXPECT_FALSE(validateTree(duplicate).empty());

  EXPECT_THROW(indexTree(twoRoots), SchemaError);
}

TEST(ValidateTree, NodeCountLawOnRandomTrees) {
  std::mt19937_64 rng(11);
  for (int levels = 1; levels <= 7; ++levels) {
    const CompTree tree = testing::randomTree(levels, rng);
    ASSERT_TRUE(validateTree(tree).empty());
    const TreeIndex ix = indexTree(tree);
    EXPECT_EQ(ix.leafOrder.size(), std::size_t{1} << (levels - 1));
    EXPECT_EQ(tree.nodes.size(), 2 * ix.leafOrder.size() - 1);
  }
}

TEST(MeanShape, SingleCompositionIsSymmetric) {
  const auto leaves = meanShape(pair({4, 0}));
  ASSERT_EQ(leaves.size(), 2u);
  EXPECT_EQ(leaves[0], (Vec2{-2, 0}));
  EXPECT_EQ(leaves[1], (Vec2{2, 0}));
}

TEST(MeanShape, RecomposeReturnsTheRoot) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 50; ++trial) {
    const CompTree tree = testing::randomTree(1 + trial % 6, rng, 10.0);
    const Vec2 root{u(rng), u(rng)};
    const Vec2 back = recompose(tree, meanShape(tree, root));
    EXPECT_NEAR(back.x, root.x, 1e-9);
    EXPECT_NEAR(back.y, root.y, 1e-9);
  }
}

TEST(MeanShape, InvalidTreeRejected) {
  CompTree tree = pair({1, 0});
  tree.nodes[2].children = {0};
  EXPECT_THROW(meanShape(tree), SchemaError);
}

TEST(WeightVector, FlattenOrderAndRoundTrip) {
  WeightVector w = WeightVector::initial(3);
  EXPECT_EQ(w.dimension(), 10u);
  w.wDef = {0.5, 0.25};
  w.wEdge = -2;
  w.wApp = {1, 2, 3, 4, 5, 6};
  w.wPart = 7;
  const std::vector<double> flat{0.5, 0.25, -2, 1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(w.flatten(), flat);
  EXPECT_EQ(WeightVector::unflatten(flat), w);
  EXPECT_THROW(WeightVector::unflatten({1, 2, 3}), InvalidArgument);
}

MixtureModel sixtyMixtureModel() {
  std::mt19937_64 rng(60);
  std::uniform_real_distribution<double> u(-1, 1);
  MixtureModel m;
  m.channels = 3;
  const CompTree base = testing::horseTree();
  for (int i = 0; i < 60; ++i) {
    CompTree t = base;
    for (CompNode& n : t.nodes) {
      if (n.delta) n.delta = *n.delta + Vec2{u(rng) / 3.0, u(rng) * 1e-7};
    }
    t.tag = "m" + std::to_string(i);
    m.mixtures.push_back(std::move(t));
  }
  return m;
}

TEST(ModelIo, SixtyMixtureRoundTripIsBitExact) {
  const MixtureModel m = sixtyMixtureModel();
  std::mt19937_64 rng(1);
  const WeightVector w = testing::randomWeights(3, rng);
  const ModelFile back = deserializeModel(serializeModel(m, w));
  ASSERT_EQ(back.model.mixtures.size(), 60u);
  EXPECT_EQ(back.weights, w);
  EXPECT_EQ(back.model.gridSize, m.gridSize);
  EXPECT_EQ(back.model.landmarkCounts, m.landmarkCounts);
  for (std::size_t i = 0; i < 60; ++i) {
    const CompTree& a = m.mixtures[i];
    const CompTree& b = back.model.mixtures[i];
    EXPECT_EQ(a.tag, b.tag);
    ASSERT_EQ(a.nodes.size(), b.nodes.size());
    for (std::size_t k = 0; k < a.nodes.size(); ++k) {
      EXPECT_EQ(a.nodes[k].id, b.nodes[k].id);
      EXPECT_EQ(a.nodes[k].children, b.nodes[k].children);
      EXPECT_EQ(a.nodes[k].leafType, b.nodes[k].leafType);
      EXPECT_EQ(a.nodes[k].partLabel, b.nodes[k].partLabel);
      EXPECT_EQ(a.nodes[k].partScoreChannel, b.nodes[k].partScoreChannel);
      ASSERT_EQ(a.nodes[k].delta.has_value(), b.nodes[k].delta.has_value());
      if (a.nodes[k].delta) {
        EXPECT_EQ(std::memcmp(&*a.nodes[k].delta, &*b.nodes[k].delta, sizeof(Vec2)), 0);
      }
    }
  }
}

TEST(ModelIo, EmptyMixtureListRejected) {
  MixtureModel m;
  Json j = modelToJson(m, WeightVector::initial(m.channels));
  EXPECT_THROW(modelFromJson(j), SchemaError);
}

TEST(ModelIo, TruncatedDocumentNamesByteOffset) {
  const std::string text = serializeModel(sixtyMixtureModel(), WeightVector::initial(3));
  try {
    deserializeModel(text.substr(0, 1000));
    FAIL() << "truncated document accepted";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST(ModelIo, SchemaViolationsNameTheLocation) {
  MixtureModel m;
  m.mixtures.push_back(pair({2, 0}));
  Json j = modelToJson(m, WeightVector::initial(m.channels));
  Json wrongVersion = j;
  wrongVersion["version"] = 99;
  EXPECT_THROW(modelFromJson(wrongVersion), SchemaError);

  Json shortApp = j;
  shortApp["weights"]["wApp"] = Json::array({1.0});
  EXPECT_THROW(modelFromJson(shortApp), SchemaError);

  Json badNode = j;
  badNode["mixtures"][0]["nodes"][2].erase("level");
  try {
    modelFromJson(badNode);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("mixtures/0/nodes/2"), std::string::npos) << e.what();
  }

  Json invalidTree = j;
  invalidTree["mixtures"][0]["nodes"][2]["children"] = Json::array({0, 1, 1});
  EXPECT_THROW(modelFromJson(invalidTree), SchemaError);
}

}  // namespace
}  // namespace compshape
