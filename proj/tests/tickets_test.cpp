#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "prunelab/harness/data_sources.hpp"
#include "test_support.hpp"

namespace prunelab {
namespace {

const DataSplit& blobs() {
  static const DataSplit d = load_synthetic_blobs(SyntheticBlobs{4, 16, 240, 3, 2.0});
  return d;
}

const std::vector<LayerSpec>& mlp() {
  static const auto s = preset_specs("mlp-4", {16}, 4);
  return s;
}

TrainConfig short_pretrain(int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.initial_lr = 0.05;
  return c;
}

bool bit_equal(const LayeredParams& a, const LayeredParams& b) {
  if (a.specs != b.specs || a.weights.size() != b.weights.size()) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (a.weights[l].size() != b.weights[l].size()) return false;
    for (std::size_t i = 0; i < a.weights[l].size(); ++i)
      if (std::bit_cast<std::uint64_t>(a.weights[l][i]) != std::bit_cast<std::uint64_t>(b.weights[l][i]))
        return false;
  }
  return true;
}

TEST(InitialTickets, SnipKeepsTheOnlyWeightAtZeroSparsity) {
  const std::vector<LayerSpec> specs = {LayerSpec::dense(1, 1), LayerSpec::dense(1, 1, true)};
  Dataset d;
  d.sample_shape = {1};
  d.class_count = 1;
  d.features = {1.0, -2.0};
  d.labels = {0, 0};
  // A single class zeroes every gradient; p = 0 still keeps everything.
  const Ticket t = make_initial_ticket(Criterion::snip, specs, d, 0.0, 1);
  EXPECT_EQ(t.mask.kept_counts(), (std::vector<std::size_t>{1, 1}));
}

TEST(InitialTickets, SameSeedSameMask) {
  const Ticket a = make_initial_ticket(Criterion::snip, mlp(), blobs().train, 0.9, 7);
  const Ticket b = make_initial_ticket(Criterion::snip, mlp(), blobs().train, 0.9, 7);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.provenance.scoring_batch, b.provenance.scoring_batch);
  EXPECT_EQ(a.provenance.scoring_batch.size(), kScoringBatchSize);
  EXPECT_EQ(a.mask.total_kept(), retained_budget(a.mask.sizes(), 0.9));
  const Ticket c = make_initial_ticket(Criterion::snip, mlp(), blobs().train, 0.9, 8);
  EXPECT_NE(a.mask, c.mask);
}

TEST(InitialTickets, GraspOnConvGivesNonUniformRatios) {
  const DataSplit d = load_synthetic_blobs(SyntheticBlobs{3, 64, 150, 1, 2.0});
  const auto specs = preset_specs("conv-5", {1, 8, 8}, 3);
  const Ticket t = make_initial_ticket(Criterion::grasp, specs, d.train, 0.9, 2);
  EXPECT_EQ(t.mask.total_kept(), retained_budget(t.mask.sizes(), 0.9));
  const auto r = keep_ratios(t.mask);
  EXPECT_GT(*std::max_element(r.begin(), r.end()) - *std::min_element(r.begin(), r.end()), 0.01);
}

TEST(InitialTickets, PreserveOutputKeepsOutputLayerDense) {
  const Ticket t = make_initial_ticket(Criterion::snip, mlp(), blobs().train, 0.95, 3, true);
  EXPECT_EQ(t.mask.kept_counts().back(), t.mask.sizes().back());
}

TEST(LotteryTicket, WeightsAreTheInitializationBitForBit) {
  const Ticket t = make_lt_ticket(mlp(), blobs().train, 0.8, short_pretrain(), 4);
  EXPECT_TRUE(bit_equal(t.weights, build_network(mlp(), 4)));
  ASSERT_EQ(t.provenance.checkpoints.size(), 2u);
  EXPECT_EQ(t.provenance.checkpoints[0].epoch, 0);
  EXPECT_EQ(t.provenance.checkpoints[1].epoch, 3);
  // The mask is the global magnitude mask of the final checkpoint.
  EXPECT_EQ(t.mask, mask_from_scores_global(magnitude_scores(t.provenance.checkpoints[1].weights), 0.8));
}

TEST(LotteryTicket, ZeroEpochsPrunesTheInitialization) {
  const Ticket t = make_lt_ticket(mlp(), blobs().train, 0.8, short_pretrain(0), 5);
  const LayeredParams init = build_network(mlp(), 5);
  EXPECT_EQ(t.mask, mask_from_scores_global(magnitude_scores(init), 0.8));
  EXPECT_TRUE(bit_equal(t.weights, init));
}

TEST(RandomTicket, QuotasEqualSmartRatio) {
  for (ArchFamily f : {ArchFamily::plain_stack, ArchFamily::fast_decay_stack}) {
    const Ticket t = make_random_ticket(mlp(), 0.9, f, 6);
    EXPECT_EQ(t.mask.kept_counts(), smart_ratio(layer_sizes(mlp()), 0.9, f).quotas);
  }
  const auto r = keep_ratios(make_random_ticket(preset_specs("mlp-4"), 0.9, ArchFamily::plain_stack, 6).mask);
  EXPECT_GT(r[0], r[1]);
  EXPECT_GT(r[1], r[2]);
  EXPECT_EQ(make_random_ticket(mlp(), 0.9, ArchFamily::plain_stack, 6).mask,
            make_random_ticket(mlp(), 0.9, ArchFamily::plain_stack, 6).mask);
}

TEST(Rewinding, EpochZeroMatchesLotteryTicket) {
  const Ticket lt = make_lt_ticket(mlp(), blobs().train, 0.8, short_pretrain(), 9);
  const Ticket wr = make_weight_rewind_ticket(mlp(), blobs().train, 0.8, short_pretrain(), 0, 9);
  EXPECT_EQ(wr.mask, lt.mask);
  EXPECT_TRUE(bit_equal(wr.weights, lt.weights));
  EXPECT_EQ(wr.provenance.schedule_offset, 0);
}

TEST(Rewinding, FinalEpochKeepsTrainedWeights) {
  const TrainConfig c = short_pretrain(4);
  const Ticket wr = make_weight_rewind_ticket(mlp(), blobs().train, 0.8, c, 4, 10);
  const Ticket lr = make_lr_rewind_ticket(mlp(), blobs().train, 0.8, c, 10);
  EXPECT_TRUE(bit_equal(wr.weights, lr.weights));
  EXPECT_EQ(wr.provenance.schedule_offset, 4);
  const Ticket mid = make_weight_rewind_ticket(mlp(), blobs().train, 0.8, c, 2, 10);
  EXPECT_EQ(mid.provenance.schedule_offset, 2);
  EXPECT_TRUE(bit_equal(mid.weights, mid.provenance.checkpoints[1].weights));
  EXPECT_EQ(mid.provenance.checkpoints[1].epoch, 2);
  try {
    make_weight_rewind_ticket(mlp(), blobs().train, 0.8, c, 5, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_checkpoint);
  }
}

TEST(Rewinding, LrRewindSharesLtMaskAndRestartsSchedule) {
  const TrainConfig c = short_pretrain(4);
  const Ticket lt = make_lt_ticket(mlp(), blobs().train, 0.8, c, 11);
  const Ticket lr = make_lr_rewind_ticket(mlp(), blobs().train, 0.8, c, 11);
  EXPECT_EQ(lr.mask, lt.mask);
  EXPECT_TRUE(bit_equal(lr.weights, lr.provenance.checkpoints.back().weights));
  TrainConfig rc = short_pretrain(4);
  rc.initial_lr = 0.02;
  const TrainResult run = retrain(lr, blobs(), rc);
  EXPECT_DOUBLE_EQ(run.history.front().lr, 0.02);
  // Weight rewinding resumes partway through the schedule instead.
  const Ticket wr = make_weight_rewind_ticket(mlp(), blobs().train, 0.8, c, 3, 11);
  EXPECT_DOUBLE_EQ(retrain(wr, blobs(), rc).history.front().lr, rc.lr_at(3));
}

TEST(Hybrid, QuotasDominanceAndNoEmptyLayer) {
  for (double p : {0.5, 0.9, 0.98}) {
    const Ticket t = make_hybrid_ticket(mlp(), blobs().train, p, ArchFamily::plain_stack, short_pretrain(), 12);
    EXPECT_EQ(t.mask.kept_counts(), smart_ratio(layer_sizes(mlp()), p, ArchFamily::plain_stack).quotas);
    EXPECT_FALSE(has_empty_layer(t.mask));
    for (std::size_t l = 0; l < t.mask.layers.size(); ++l) {
      double min_kept = INFINITY, max_pruned = 0.0;
      for (std::size_t i = 0; i < t.mask.layers[l].size(); ++i) {
        const double a = std::abs(t.weights.weights[l][i]);
        if (t.mask.layers[l][i])
          min_kept = std::min(min_kept, a);
        else
          max_pruned = std::max(max_pruned, a);
      }
      EXPECT_GE(min_kept, max_pruned) << "p=" << p << " layer " << l;
    }
  }
}

TEST(Imp, ThreeRoundsOfTwentyPercent) {
  const double p = 1.0 - 0.8 * 0.8 * 0.8;
  EXPECT_NEAR(p, 0.488, 1e-12);
  for (ImpMode mode : {ImpMode::reset, ImpMode::lr_rewind, ImpMode::hybrid}) {
    const ImpResult r = iterative_magnitude_prune(mlp(), blobs().train, p, 0.2, short_pretrain(2), mode, 13);
    ASSERT_EQ(r.rounds.size(), 3u);
    const std::size_t total = total_weights(layer_sizes(mlp()));
    for (std::size_t k = 0; k < 3; ++k) {
      const double expect = std::llround(std::pow(0.8, static_cast<double>(k + 1)) * static_cast<double>(total));
      EXPECT_EQ(static_cast<double>(r.rounds[k].total_kept()), expect);
      if (k > 0) {
        EXPECT_TRUE(r.rounds[k].nested_in(r.rounds[k - 1]));
      }
    }
    EXPECT_NEAR(sparsity(r.ticket.mask), 0.488, 1e-3);
    EXPECT_EQ(r.ticket.provenance.round_sparsities.size(), 3u);
    if (mode == ImpMode::reset) {
      EXPECT_TRUE(bit_equal(r.ticket.weights, build_network(mlp(), 13)));
    }
    if (mode == ImpMode::hybrid) {
      EXPECT_EQ(r.ticket.mask.kept_counts(), smart_ratio(layer_sizes(mlp()), p, ArchFamily::plain_stack).quotas);
    }
  }
}

TEST(Imp, SingleRoundResetEqualsLotteryTicket) {
  const ImpResult r =
      iterative_magnitude_prune(mlp(), blobs().train, 0.5, 0.5, short_pretrain(), ImpMode::reset, 14);
  ASSERT_EQ(r.rounds.size(), 1u);
  const Ticket lt = make_lt_ticket(mlp(), blobs().train, 0.5, short_pretrain(), 14);
  EXPECT_EQ(r.ticket.mask, lt.mask);
  EXPECT_TRUE(bit_equal(r.ticket.weights, lt.weights));
}

TEST(Imp, RejectsBadRoundFraction) {
  EXPECT_THROW(iterative_magnitude_prune(mlp(), blobs().train, 0.5, 0.0, short_pretrain(), ImpMode::reset, 1),
               Error);
  EXPECT_THROW(iterative_magnitude_prune(mlp(), blobs().train, 0.5, 1.0, short_pretrain(), ImpMode::reset, 1),
               Error);
}

TEST(Dispatch, EveryKindProducesAnAlignedTicket) {
  for (TicketKind k : {TicketKind::dense, TicketKind::snip, TicketKind::grasp, TicketKind::lt, TicketKind::random,
                       TicketKind::weight_rewind, TicketKind::lr_rewind, TicketKind::hybrid, TicketKind::imp_reset,
                       TicketKind::imp_lr_rewind, TicketKind::imp_hybrid}) {
    TicketRequest r;
    r.kind = k;
    r.specs = mlp();
    r.target_sparsity = 0.7;
    r.seed = 15;
    r.pretrain = short_pretrain(2);
    r.rewind_epoch = 1;
    r.round_fraction = 0.5;
    const Ticket t = make_ticket(r, blobs().train);
    EXPECT_EQ(t.mask.sizes(), layer_sizes(mlp())) << to_string(k);
    EXPECT_EQ(t.provenance.kind, k);
    if (k != TicketKind::dense) {
      EXPECT_EQ(t.mask.total_kept(), retained_budget(t.mask.sizes(), 0.7)) << to_string(k);
    }
    EXPECT_EQ(parse_ticket_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_ticket_kind("oneshot"), Error);
}

TEST(Dispatch, ProvenanceReplaysTheTicket) {
  TicketRequest r;
  r.kind = TicketKind::snip;
  r.specs = mlp();
  r.target_sparsity = 0.85;
  r.seed = 16;
  const Ticket t = make_checked_ticket(r, SanityCheck::rearrange, blobs().train);
  TicketRequest replay;
  replay.kind = t.provenance.kind;
  replay.specs = t.weights.specs;
  replay.target_sparsity = t.provenance.target_sparsity;
  replay.seed = t.provenance.seed;
  Ticket again = make_ticket(replay, blobs().train);
  ASSERT_EQ(t.provenance.check_seeds.size(), 1u);
  again = apply_structural_check(again, parse_check(t.provenance.checks[0]), t.provenance.check_seeds[0]);
  EXPECT_EQ(again.mask, t.mask);
  EXPECT_TRUE(bit_equal(again.weights, t.weights));
}

TEST(Dispatch, StructuralChecksOnly) {
  const Ticket t = make_random_ticket(mlp(), 0.9, ArchFamily::plain_stack, 1);
  EXPECT_THROW(apply_structural_check(t, SanityCheck::random_labels, 1), Error);
  const Ticket r = apply_structural_check(t, SanityCheck::rearrange, 2);
  EXPECT_EQ(r.mask.kept_counts(), t.mask.kept_counts());
  EXPECT_NE(r.mask, t.mask);
  const Ticket s = apply_structural_check(t, SanityCheck::shuffle_weights, 2);
  EXPECT_EQ(s.mask, t.mask);
}

TEST(Suite, RowsPerSparsityAndCheck) {
  SuiteConfig cfg;
  cfg.specs = mlp();
  cfg.sparsities = {0.8, 0.9};
  cfg.seeds = {0, 1};
  cfg.retrain = short_pretrain(2);
  const SanityReport rep =
      run_sanity_suite(TicketKind::random, {SanityCheck::rearrange, SanityCheck::shuffle_weights}, blobs(), cfg);
  ASSERT_EQ(rep.rows.size(), 6u);
  for (double p : cfg.sparsities) {
    const SuiteRow* base = rep.find("none", p);
    const SuiteRow* re = rep.find("rearrange", p);
    ASSERT_NE(base, nullptr);
    ASSERT_NE(re, nullptr);
    EXPECT_EQ(base->keep_counts, re->keep_counts);
    EXPECT_EQ(base->accuracies.size(), 2u);
    EXPECT_NEAR(base->mean, mean_of(base->accuracies), 1e-12);
  }
}

TEST(Suite, SampleStddev) {
  const std::vector<double> xs = {90, 92, 94};
  EXPECT_DOUBLE_EQ(mean_of(xs), 92.0);
  EXPECT_DOUBLE_EQ(sample_stddev(xs), 2.0);
  EXPECT_EQ(sample_stddev(std::vector<double>{5.0}), 0.0);
}

}  // namespace
}  // namespace prunelab
