#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"

namespace prunelab {
namespace {

using testing::max_relative_error;
using testing::random_batch;
using testing::random_mask;
using testing::random_params;
using testing::single_sample;

LayeredParams single_unit(double w) {
  LayeredParams p;
  p.specs = {LayerSpec::dense(1, 1, true)};
  p.weights = {{w}};
  return p;
}

LossFn loss_closure(const LayeredParams& params, const Mask& mask, const Dataset& batch,
                    LossHead head = LossHead::softmax_cross_entropy) {
  return [=](const LayerVectors& w) {
    LayeredParams p = params;
    p.weights = w;
    return forward_loss(p, mask, batch, head).loss;
  };
}

TEST(Tensor, RejectsShapeValueMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), Error);
  const Tensor t = Tensor::zeros({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_TRUE(t.all_finite());
}

TEST(ForwardLoss, SquaredErrorUnitHandValue) {
  const auto p = single_unit(1.0);
  const Dataset d = single_sample({2.0}, 0, 1);
  ForwardPass pass = forward_loss(p, Mask::ones(p.sizes()), d, LossHead::half_squared_error);
  EXPECT_DOUBLE_EQ(pass.loss, 2.0);
  const LayerVectors g = backward(pass);
  EXPECT_DOUBLE_EQ(g[0][0], 4.0);
}

TEST(ForwardLoss, ZeroMaskGivesLogOfClassCount) {
  Rng rng(3);
  const std::vector<LayerSpec> specs = {LayerSpec::dense(5, 6), LayerSpec::dense(6, 7, true)};
  const auto p = random_params(specs, rng);
  const Dataset d = random_batch(9, {5}, 7, rng);
  EXPECT_NEAR(forward_loss(p, Mask::zeros(p.sizes()), d).loss, std::log(7.0), 1e-12);
}

TEST(ForwardLoss, BatchLossIsMeanOfSingleSampleLosses) {
  Rng rng(4);
  const std::vector<LayerSpec> specs = {LayerSpec::dense(3, 4), LayerSpec::dense(4, 3, true)};
  const auto p = random_params(specs, rng);
  const Mask m = Mask::ones(p.sizes());
  const Dataset d = random_batch(4, {3}, 3, rng);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::vector<std::size_t> one = {i};
    sum += forward_loss(p, m, d.subset(one)).loss;
  }
  EXPECT_NEAR(forward_loss(p, m, d).loss, sum / 4.0, 1e-14);
}

TEST(ForwardLoss, ErrorsOnMisalignedMaskAndEmptyBatch) {
  Rng rng(5);
  const std::vector<LayerSpec> specs = {LayerSpec::dense(2, 2), LayerSpec::dense(2, 2, true)};
  const auto p = random_params(specs, rng);
  const Dataset d = random_batch(3, {2}, 2, rng);
  try {
    forward_loss(p, Mask::ones({4, 3}), d);
    FAIL() << "expected alignment error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::alignment);
  }
  Dataset empty = d;
  empty.features.clear();
  empty.labels.clear();
  try {
    forward_loss(p, Mask::ones(p.sizes()), empty);
    FAIL() << "expected domain error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
}

TEST(ForwardLoss, MaskLinearityIsExact) {
  Rng rng(6);
  const std::vector<LayerSpec> specs = {LayerSpec::dense(4, 5), LayerSpec::dense(5, 5),
                                        LayerSpec::dense(5, 3, true)};
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(specs, rng);
    const Mask m = random_mask(p.sizes(), 0.5, rng);
    const Dataset d = random_batch(6, {4}, 3, rng);
    EXPECT_EQ(forward_loss(p, m, d).loss, forward_loss(apply_mask(p, m), Mask::ones(p.sizes()), d).loss);
  }
}

TEST(Backward, SingleUseTape) {
  const auto p = single_unit(1.0);
  ForwardPass pass = forward_loss(p, Mask::ones(p.sizes()), single_sample({2.0}, 0, 1),
                                  LossHead::half_squared_error);
  backward(pass);
  try {
    backward(pass);
    FAIL() << "expected single-use error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::single_use);
  }
}

TEST(Backward, MaskedOutLayerHasZeroGradient) {
  Rng rng(7);
  const std::vector<LayerSpec> specs = {LayerSpec::dense(3, 4), LayerSpec::dense(4, 4),
                                        LayerSpec::dense(4, 2, true)};
  const auto p = random_params(specs, rng);
  Mask m = Mask::ones(p.sizes());
  std::fill(m.layers[1].begin(), m.layers[1].end(), 0);
  const LayerVectors g = loss_gradient(p, m, random_batch(5, {3}, 2, rng));
  for (double x : g[1]) EXPECT_EQ(x, 0.0);
}

TEST(Backward, MatchesFiniteDifferencesOnEightWeightMlp) {
  Rng rng(8);
  const std::vector<LayerSpec> specs = {LayerSpec::dense(2, 2), LayerSpec::dense(2, 1),
                                        LayerSpec::dense(1, 2, true)};
  const auto p = random_params(specs, rng);
  ASSERT_EQ(p.total(), 8u);
  const Mask m = Mask::ones(p.sizes());
  const Dataset d = random_batch(5, {2}, 2, rng);
  const LayerVectors g = loss_gradient(p, m, d);
  const LayerVectors fd = finite_diff_gradient(loss_closure(p, m, d), p.weights, 1e-5);
  EXPECT_LE(max_relative_error(g, fd), 1e-4);
}

TEST(Backward, MatchesFiniteDifferencesOnConvNet) {
  Rng rng(9);
  const std::vector<LayerSpec> specs = {LayerSpec::conv(2, 3, 2, 2), LayerSpec::conv(3, 2, 2, 1),
                                        LayerSpec::dense(2 * 3 * 3, 3, true)};
  const auto p = random_params(specs, rng);
  const Mask m = random_mask(p.sizes(), 0.8, rng);
  const Dataset d = random_batch(4, {2, 5, 4}, 3, rng);
  const LayerVectors g = loss_gradient(p, m, d);
  const LayerVectors fd = finite_diff_gradient(loss_closure(p, m, d), p.weights, 1e-5);
  EXPECT_LE(max_relative_error(g, fd), 1e-4);
}

TEST(Backward, DeterministicBitForBit) {
  Rng rng(10);
  const std::vector<LayerSpec> specs = {LayerSpec::dense(4, 6), LayerSpec::dense(6, 3, true)};
  const auto p = random_params(specs, rng);
  const Mask m = random_mask(p.sizes(), 0.7, rng);
  const Dataset d = random_batch(8, {4}, 3, rng);
  EXPECT_EQ(loss_gradient(p, m, d), loss_gradient(p, m, d));
  EXPECT_EQ(forward_loss(p, m, d).loss, forward_loss(p, m, d).loss);
}

TEST(Tape, TopologicalOrderAndBitExactReplay) {
  Rng rng(11);
  const std::vector<LayerSpec> specs = {LayerSpec::conv(1, 2, 3, 3), LayerSpec::dense(2 * 3 * 3, 4),
                                        LayerSpec::dense(4, 2, true)};
  const auto p = random_params(specs, rng);
  ForwardPass pass = forward_loss(p, Mask::ones(p.sizes()), random_batch(3, {1, 5, 5}, 2, rng));
  for (NodeId id = 0; id < pass.tape.size(); ++id)
    for (NodeId in : pass.tape.inputs(id)) EXPECT_LT(in, id);
  EXPECT_TRUE(pass.tape.replay_matches());
}

TEST(FiniteDiff, AnalyticExamples) {
  const auto sq = finite_diff_gradient([](std::span<const double> w) { return w[0] * w[0]; }, {3.0}, 1e-5);
  EXPECT_NEAR(sq[0], 6.0, 1e-8);
  const auto flat = finite_diff_gradient([](std::span<const double>) { return 4.2; }, {1.0, -2.0, 3.0}, 1e-5);
  for (double g : flat) EXPECT_EQ(g, 0.0);
  const auto prod = finite_diff_gradient([](std::span<const double> w) { return w[0] * w[1]; }, {2.0, 5.0}, 1e-5);
  EXPECT_NEAR(prod[0], 5.0, 1e-8);
  EXPECT_NEAR(prod[1], 2.0, 1e-8);
}

TEST(FiniteDiff, NonFiniteLossIsOracleFailure) {
  try {
    finite_diff_gradient([](std::span<const double> w) { return std::log(w[0]); }, {0.0}, 1e-5);
    FAIL() << "expected oracle failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::oracle_failure);
  }
  EXPECT_THROW(finite_diff_gradient([](std::span<const double>) { return 0.0; }, {1.0}, 0.0), Error);
}

TEST(Hvp, DiagonalQuadraticFromClosure) {
  const GradientFn grad = [](const LayerVectors& w) { return LayerVectors{{2.0 * w[0][0], 6.0 * w[0][1]}}; };
  const LayerVectors hv = hessian_vector_product(grad, {{0.3, -1.7}}, {{1.0, 1.0}}, 1e-5);
  EXPECT_NEAR(hv[0][0], 2.0, 1e-6);
  EXPECT_NEAR(hv[0][1], 6.0, 1e-6);
}

TEST(Hvp, QuadraticRealizedByNetwork) {
  // Two samples through a linear 2->1 unit: L = ((2 w1)^2 + (sqrt(12) w2)^2) / 4 = w1^2 + 3 w2^2.
  LayeredParams p;
  p.specs = {LayerSpec::dense(2, 1, true)};
  p.weights = {{0.4, -0.9}};
  Dataset d;
  d.sample_shape = {2};
  d.class_count = 1;
  d.features = {2.0, 0.0, 0.0, std::sqrt(12.0)};
  d.labels = {0, 0};
  const LayerVectors hv = hessian_vector_product(p, Mask::ones(p.sizes()), d, {{1.0, 1.0}}, 1e-5,
                                                 LossHead::half_squared_error);
  EXPECT_NEAR(hv[0][0], 2.0, 1e-6);
  EXPECT_NEAR(hv[0][1], 6.0, 1e-6);
}

TEST(Hvp, HalfSquareHasUnitCurvature) {
  for (double w : {-3.0, 0.25, 11.0}) {
    const auto p = single_unit(w);
    const LayerVectors hv = hessian_vector_product(p, Mask::ones(p.sizes()), single_sample({1.0}, 0, 1),
                                                   {{1.0}}, 1e-5, LossHead::half_squared_error);
    EXPECT_NEAR(hv[0][0], 1.0, 1e-6);
  }
}

TEST(Hvp, RejectsTinyDirectionAndUnderflowingStep) {
  const GradientFn grad = [](const LayerVectors& w) { return w; };
  try {
    hessian_vector_product(grad, {{1.0}}, {{1e-14}}, 1e-5);
    FAIL() << "expected domain error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
  try {
    hessian_vector_product(grad, {{1e20}}, {{1.0}}, 1e-5);
    FAIL() << "expected degenerate step";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_step);
  }
}

}  // namespace
}  // namespace prunelab
