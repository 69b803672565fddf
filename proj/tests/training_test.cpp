#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "prunelab/harness/data_sources.hpp"
#include "test_support.hpp"

namespace prunelab {
namespace {

DataSplit small_blobs(RngSeed seed = 1) {
  return load_synthetic_blobs(SyntheticBlobs{3, 8, 300, seed, 3.0});
}

TrainConfig quick(int epochs = 4) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.initial_lr = 0.02;
  return c;
}

TEST(TrainConfig, StepScheduleAtHalfAndThreeQuarters) {
  TrainConfig c;
  c.epochs = 160;
  for (int e = 0; e < 80; ++e) EXPECT_DOUBLE_EQ(c.lr_at(e), 0.1) << e;
  for (int e = 80; e < 120; ++e) EXPECT_NEAR(c.lr_at(e), 0.01, 1e-15) << e;
  for (int e = 120; e < 160; ++e) EXPECT_NEAR(c.lr_at(e), 0.001, 1e-16) << e;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr_drop_points = {0.75, 0.5};
  EXPECT_THROW(c.validate(), Error);
  c.lr_drop_points = {0.5, 1.0};
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.initial_lr = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, ZeroMaskLeavesWeightsUntouched) {
  const DataSplit data = small_blobs();
  const auto specs = preset_specs("mlp-4", {8}, 3);
  const LayeredParams p = build_network(specs, 2);
  const TrainResult r = train(p, Mask::zeros(p.sizes()), data, quick(3));
  EXPECT_EQ(r.params, p);
}

TEST(Train, MaskedWeightsInertAndDeterministic) {
  const DataSplit data = small_blobs();
  const auto specs = preset_specs("mlp-4", {8}, 3);
  const LayeredParams p = build_network(specs, 3);
  Rng rng(3);
  const Mask m = testing::random_mask(p.sizes(), 0.4, rng);
  const TrainResult a = train(p, m, data, quick());
  const TrainResult b = train(p, m, data, quick());
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.history, b.history);
  bool moved = false;
  for (std::size_t l = 0; l < p.weights.size(); ++l)
    for (std::size_t i = 0; i < p.weights[l].size(); ++i) {
      if (!m.layers[l][i])
        EXPECT_EQ(std::bit_cast<std::uint64_t>(a.params.weights[l][i]), std::bit_cast<std::uint64_t>(p.weights[l][i]));
      else
        moved = moved || a.params.weights[l][i] != p.weights[l][i];
    }
  EXPECT_TRUE(moved);
}

TEST(Train, LearnsSeparableBlobs) {
  const DataSplit data = small_blobs(4);
  const auto specs = preset_specs("mlp-4", {8}, 3);
  const TrainResult r = train(build_network(specs, 4), Mask::ones(layer_sizes(specs)), data, quick(6));
  EXPECT_GT(r.best_test_accuracy(), 90.0);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST(Train, HistoryFollowsScheduleAndOffset) {
  const DataSplit data = small_blobs();
  const auto specs = preset_specs("mlp-4", {8}, 3);
  const LayeredParams p = build_network(specs, 5);
  TrainConfig c = quick(8);
  const TrainResult r = train(p, Mask::ones(p.sizes()), data, c);
  ASSERT_EQ(r.history.size(), 8u);
  for (const auto& e : r.history) EXPECT_DOUBLE_EQ(e.lr, c.lr_at(e.epoch));
  TrainOptions o;
  o.schedule_offset = 5;
  const TrainResult w = train(p, Mask::ones(p.sizes()), data, c, o);
  for (const auto& e : w.history) EXPECT_DOUBLE_EQ(e.lr, c.lr_at(std::min(5 + e.epoch, 8)));
}

TEST(Train, CheckpointsAtRequestedEpochs) {
  const DataSplit data = small_blobs();
  const auto specs = preset_specs("mlp-4", {8}, 3);
  const LayeredParams p = build_network(specs, 6);
  TrainOptions o;
  o.checkpoint_epochs = {0, 2, 4};
  const TrainResult r = train(p, Mask::ones(p.sizes()), data, quick(4), o);
  ASSERT_EQ(r.checkpoints.size(), 3u);
  EXPECT_EQ(r.checkpoint_at(0)->weights, p);
  EXPECT_EQ(r.checkpoint_at(4)->weights, r.params);
  EXPECT_EQ(r.checkpoint_at(3), nullptr);
  o.checkpoint_epochs = {5};
  EXPECT_THROW(train(p, Mask::ones(p.sizes()), data, quick(4), o), Error);
}

TEST(Train, DivergenceCarriesEpoch) {
  const DataSplit data = small_blobs();
  const auto specs = preset_specs("mlp-4", {8}, 3);
  LayeredParams p = build_network(specs, 7);
  TrainConfig c = quick(5);
  c.initial_lr = 1e8;
  c.lr_drop_points = {};
  try {
    train(p, Mask::ones(p.sizes()), data, c);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.kind(), ErrorKind::training_diverged);
    EXPECT_GE(e.epoch(), 0);
    EXPECT_LT(e.epoch(), 5);
  }
}

TEST(Checkpoint, BinaryRoundTripIsBitExact) {
  Checkpoint c;
  c.epoch = 7;
  c.weights = build_network(preset_specs("conv-5"), 8);
  c.weights.weights[0][0] = -0.0;
  c.weights.weights[1][3] = 5e-324;
  Rng rng(8);
  rng.next_u64();
  c.rng_state = rng.state();
  std::stringstream buf;
  write_checkpoint(buf, c);
  const Checkpoint back = read_checkpoint(buf);
  EXPECT_EQ(back.epoch, 7);
  EXPECT_EQ(back.rng_state, c.rng_state);
  EXPECT_EQ(back.weights.specs, c.weights.specs);
  for (std::size_t l = 0; l < c.weights.weights.size(); ++l)
    for (std::size_t i = 0; i < c.weights.weights[l].size(); ++i)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(back.weights.weights[l][i]),
                std::bit_cast<std::uint64_t>(c.weights.weights[l][i]));
  Rng restored = Rng::from_state(back.rng_state);
  EXPECT_TRUE(restored == rng);

  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(dir / "c.bin", c);
  EXPECT_EQ(load_checkpoint(dir / "c.bin").weights, c.weights);
}

TEST(Checkpoint, HeaderIsMagicVersionEpochLittleEndian) {
  Checkpoint c;
  c.epoch = 258;
  c.weights = build_network({LayerSpec::dense(1, 1), LayerSpec::dense(1, 1, true)}, 0);
  std::stringstream buf;
  write_checkpoint(buf, c);
  const std::string s = buf.str();
  EXPECT_EQ(s.substr(0, 4), "PLCK");
  EXPECT_EQ(s[4], 1);
  EXPECT_EQ(s[5], 0);
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(s[9]), 1u);
}

TEST(Checkpoint, MalformedInputReportsOffset) {
  std::stringstream bad("PLCX");
  try {
    read_checkpoint(bad, "bad.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("bad.bin"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("byte 4"), std::string::npos);
  }
  Checkpoint c;
  c.weights = build_network({LayerSpec::dense(2, 2), LayerSpec::dense(2, 2, true)}, 0);
  std::stringstream buf;
  write_checkpoint(buf, c);
  std::stringstream cut(buf.str().substr(0, 40));
  try {
    read_checkpoint(cut);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
  }
  try {
    load_checkpoint("/nonexistent/dir/c.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

}  // namespace
}  // namespace prunelab
