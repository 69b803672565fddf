#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace prunelab {
namespace {

using testing::random_batch;
using testing::random_mask;

TEST(BuildNetwork, KaimingStdForDenseFanIn50) {
  const std::vector<LayerSpec> specs = {LayerSpec::dense(50, 200), LayerSpec::dense(200, 2, true)};
  const LayeredParams p = build_network(specs, 12);
  ASSERT_EQ(p.weights[0].size(), 10000u);
  double s = 0.0, s2 = 0.0;
  for (double w : p.weights[0]) {
    s += w;
    s2 += w * w;
  }
  const double n = 10000.0;
  const double sd = std::sqrt((s2 - s * s / n) / (n - 1));
  EXPECT_NEAR(sd, std::sqrt(2.0 / 50.0), 0.05 * std::sqrt(2.0 / 50.0));
}

TEST(BuildNetwork, ConvUsesKernelAreaInFanIn) {
  const std::vector<LayerSpec> specs = {LayerSpec::conv(10, 100, 3, 3), LayerSpec::dense(4, 2, true)};
  const LayeredParams p = build_network(specs, 1);
  double s2 = 0.0;
  for (double w : p.weights[0]) s2 += w * w;
  EXPECT_NEAR(std::sqrt(s2 / 9000.0), std::sqrt(2.0 / 90.0), 0.05 * std::sqrt(2.0 / 90.0));
}

TEST(BuildNetwork, DeterministicPerSeedAndSeedSensitive) {
  const auto specs = preset_specs("mlp-4");
  EXPECT_EQ(build_network(specs, 5), build_network(specs, 5));
  EXPECT_NE(build_network(specs, 5).weights, build_network(specs, 6).weights);
}

TEST(BuildNetwork, SpecErrors) {
  try {
    build_network({LayerSpec::dense(0, 3), LayerSpec::dense(3, 2, true)}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::spec);
  }
  try {
    build_network({LayerSpec::dense(3, 2, true)}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::spec);
  }
  try {
    build_network({LayerSpec::dense(3, 2, true), LayerSpec::dense(2, 2, true)}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::spec);
  }
  try {
    build_network({LayerSpec::dense(3, 2), LayerSpec::dense(2, 2)}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::spec);
  }
}

TEST(LayerSizes, WorkedSpecs) {
  const std::vector<LayerSpec> specs = {LayerSpec::conv(1, 4, 3, 3), LayerSpec::dense(64, 16),
                                        LayerSpec::dense(16, 3, true)};
  EXPECT_EQ(layer_sizes(specs), (std::vector<std::size_t>{36, 1024, 48}));
  const LayeredParams p = build_network(specs, 0);
  EXPECT_EQ(layer_sizes(p), (std::vector<std::size_t>{36, 1024, 48}));
  EXPECT_EQ(p.total(), 36u + 1024u + 48u);
  EXPECT_EQ(layer_sizes(std::vector<LayerSpec>{LayerSpec::dense(2, 2, true)}), (std::vector<std::size_t>{4}));
}

TEST(Presets, Shapes) {
  EXPECT_EQ(layer_sizes(preset_specs("mlp-4")), (std::vector<std::size_t>{64 * 64, 64 * 128, 128 * 256, 256 * 10}));
  EXPECT_EQ(layer_sizes(preset_specs("conv-5")),
            (std::vector<std::size_t>{144, 2304, 4608, 32 * 2 * 2 * 32, 320}));
  EXPECT_EQ(preset_specs("conv-5", {64}, 10), preset_specs("conv-5"));
  EXPECT_THROW(preset_specs("resnet-32"), Error);
  EXPECT_THROW(preset_specs("conv-5", {5, 5}, 3), Error);
}

TEST(Predict, ZeroMaskPredictsClassZero) {
  const auto specs = preset_specs("mlp-4", {6}, 4);
  const LayeredParams p = build_network(specs, 2);
  Rng rng(2);
  const Dataset d = random_batch(20, {6}, 4, rng);
  for (std::size_t k : predict_batch(p, Mask::zeros(p.sizes()), d)) EXPECT_EQ(k, 0u);
}

TEST(Predict, IdentityWeightsRecoverOneHotIndex) {
  LayeredParams p;
  p.specs = {LayerSpec::dense(4, 4, true)};
  p.weights = {{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}};
  const Mask m = Mask::ones(p.sizes());
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> e(4, 0.0);
    e[k] = 1.0;
    EXPECT_EQ(predict(p, m, e, {4}), k);
  }
}

TEST(Predict, InvariantUnderOutputScalingAndMasking) {
  Rng rng(3);
  const auto specs = preset_specs("conv-5", {1, 8, 8}, 5);
  const LayeredParams p = build_network(specs, 3);
  LayeredParams doubled = p;
  for (double& w : doubled.weights.back()) w *= 2.0;
  const Mask m = random_mask(p.sizes(), 0.6, rng);
  const Dataset d = random_batch(30, {1, 8, 8}, 5, rng);
  EXPECT_EQ(predict_batch(p, m, d), predict_batch(doubled, m, d));
  EXPECT_EQ(predict_batch(p, m, d), predict_batch(apply_mask(p, m), Mask::ones(p.sizes()), d));
}

TEST(Accuracy, PercentOfCorrectPredictions) {
  LayeredParams p;
  p.specs = {LayerSpec::dense(2, 2, true)};
  p.weights = {{1, 0, 0, 1}};
  Dataset d;
  d.sample_shape = {2};
  d.class_count = 2;
  d.features = {1, 0, 0, 1, 1, 0, 0, 1};
  d.labels = {0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(accuracy(p, Mask::ones(p.sizes()), d), 75.0);
}

}  // namespace
}  // namespace prunelab
