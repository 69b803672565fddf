#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/pruning.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/sanity.hpp"
#include "prunelab/schedules.hpp"
#include "prunelab/training.hpp"

namespace prunelab {

enum class TicketKind {
  dense,
  snip,
  grasp,
  lt,
  random,
  weight_rewind,
  lr_rewind,
  hybrid,
  imp_reset,
  imp_lr_rewind,
  imp_hybrid,
};

inline TicketKind parse_ticket_kind(std::string_view name) {
  if (name == "dense") return TicketKind::dense;
  if (name == "snip") return TicketKind::snip;
  if (name == "grasp") return TicketKind::grasp;
  if (name == "lt") return TicketKind::lt;
  if (name == "random") return TicketKind::random;
  if (name == "weight-rewind") return TicketKind::weight_rewind;
  if (name == "lr-rewind") return TicketKind::lr_rewind;
  if (name == "hybrid") return TicketKind::hybrid;
  if (name == "imp-reset") return TicketKind::imp_reset;
  if (name == "imp-lr-rewind") return TicketKind::imp_lr_rewind;
  if (name == "imp-hybrid") return TicketKind::imp_hybrid;
  fail(ErrorKind::usage, "unknown ticket kind '" + std::string(name) + "'");
}

constexpr std::string_view to_string(TicketKind k) {
  switch (k) {
    case TicketKind::dense: return "dense";
    case TicketKind::snip: return "snip";
    case TicketKind::grasp: return "grasp";
    case TicketKind::lt: return "lt";
    case TicketKind::random: return "random";
    case TicketKind::weight_rewind: return "weight-rewind";
    case TicketKind::lr_rewind: return "lr-rewind";
    case TicketKind::hybrid: return "hybrid";
    case TicketKind::imp_reset: return "imp-reset";
    case TicketKind::imp_lr_rewind: return "imp-lr-rewind";
    case TicketKind::imp_hybrid: return "imp-hybrid";
  }
  return "dense";
}

constexpr bool uses_data(TicketKind k) {
  return k != TicketKind::dense && k != TicketKind::random;
}

constexpr bool uses_pretraining(TicketKind k) {
  return k != TicketKind::dense && k != TicketKind::random && k != TicketKind::snip &&
         k != TicketKind::grasp;
}

enum class ImpMode { reset, lr_rewind, hybrid };

// Everything needed to rebuild a ticket bit-for-bit.
struct Provenance {
  TicketKind kind = TicketKind::dense;
  std::string criterion;
  std::string schedule;
  ArchFamily family = ArchFamily::plain_stack;
  std::vector<std::string> checks;
  RngSeed seed = 0;
  double target_sparsity = 0.0;
  std::optional<TrainConfig> pretrain;
  bool preserve_output = false;
  std::vector<std::size_t> scoring_batch;
  std::vector<Checkpoint> checkpoints;
  int schedule_offset = 0;
  double round_fraction = 0.0;
  std::vector<double> round_sparsities;
  std::vector<RngSeed> check_seeds;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Ticket {
  Mask mask;
  LayeredParams weights;
  Provenance provenance;
};

inline constexpr std::size_t kScoringBatchSize = 128;

// One fixed batch per pruning call, no class balancing.
inline std::vector<std::size_t> draw_scoring_batch(std::size_t n, RngSeed seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= kScoringBatchSize) return idx;
  Rng rng(derive_seed(seed, "score"));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(kScoringBatchSize);
  return idx;
}

inline std::vector<bool> output_frozen(const std::vector<LayerSpec>& specs, bool preserve_output) {
  std::vector<bool> frozen(specs.size(), false);
  if (preserve_output) frozen.back() = true;
  return frozen;
}

inline void check_sparsity(double p) {
  require(p >= 0.0 && p < 1.0, ErrorKind::domain, "target sparsity must lie in [0, 1)");
}

inline Ticket make_dense_ticket(const std::vector<LayerSpec>& specs, RngSeed seed) {
  Ticket t;
  t.weights = build_network(specs, seed);
  t.mask = Mask::ones(t.weights.sizes());
  t.provenance.kind = TicketKind::dense;
  t.provenance.seed = seed;
  return t;
}

// SNIP or GraSP scores at a fresh initialization, pruned globally.
inline Ticket make_initial_ticket(Criterion criterion, const std::vector<LayerSpec>& specs,
                                  const Dataset& data, double target_sparsity, RngSeed seed,
                                  bool preserve_output = false) {
  require(criterion == Criterion::snip || criterion == Criterion::grasp, ErrorKind::usage,
          "initial tickets use snip or grasp");
  check_sparsity(target_sparsity);
  data.validate();
  Ticket t;
  t.weights = build_network(specs, seed);
  const Mask dense = Mask::ones(t.weights.sizes());
  t.provenance.scoring_batch = draw_scoring_batch(data.size(), seed);
  const Dataset batch = data.subset(t.provenance.scoring_batch);
  const ScoreMap scores = criterion == Criterion::snip ? snip_scores(t.weights, dense, batch)
                                                       : grasp_scores(t.weights, dense, batch);
  t.mask = mask_from_scores_global(scores, target_sparsity, output_frozen(specs, preserve_output));
  t.provenance.kind = criterion == Criterion::snip ? TicketKind::snip : TicketKind::grasp;
  t.provenance.criterion = std::string(to_string(criterion));
  t.provenance.seed = seed;
  t.provenance.target_sparsity = target_sparsity;
  t.provenance.preserve_output = preserve_output;
  return t;
}

inline TrainConfig pretrain_config(TrainConfig cfg, RngSeed seed) {
  cfg.seed = derive_seed(seed, "pretrain", cfg.seed);
  return cfg;
}

struct Pretrained {
  LayeredParams init;
  TrainResult run;
};

inline Pretrained pretrain_dense(const std::vector<LayerSpec>& specs, const Dataset& data,
                                 const TrainConfig& cfg, RngSeed seed, std::set<int> epochs = {}) {
  Pretrained out;
  out.init = build_network(specs, seed);
  TrainOptions opts;
  opts.checkpoint_epochs = std::move(epochs);
  opts.checkpoint_epochs.insert(0);
  opts.checkpoint_epochs.insert(cfg.epochs);
  out.run = train(out.init, Mask::ones(out.init.sizes()), DataSplit{data, {}},
                  pretrain_config(cfg, seed), opts);
  return out;
}

namespace detail {

inline Ticket magnitude_ticket_base(TicketKind kind, const Pretrained& pre,
                                    const TrainConfig& cfg, double target_sparsity,
                                    RngSeed seed, bool preserve_output) {
  Ticket t;
  t.mask = mask_from_scores_global(magnitude_scores(pre.run.params), target_sparsity,
                                   output_frozen(pre.init.specs, preserve_output));
  t.provenance.kind = kind;
  t.provenance.criterion = "magnitude";
  t.provenance.seed = seed;
  t.provenance.target_sparsity = target_sparsity;
  t.provenance.pretrain = cfg;
  t.provenance.preserve_output = preserve_output;
  return t;
}

}  // namespace detail

// Train dense, prune globally by magnitude, reset kept weights to epoch 0.
inline Ticket make_lt_ticket(const std::vector<LayerSpec>& specs, const Dataset& data,
                             double target_sparsity, const TrainConfig& pretrain, RngSeed seed,
                             bool preserve_output = false) {
  check_sparsity(target_sparsity);
  const Pretrained pre = pretrain_dense(specs, data, pretrain, seed);
  Ticket t = detail::magnitude_ticket_base(TicketKind::lt, pre, pretrain, target_sparsity, seed,
                                           preserve_output);
  t.weights = pre.run.checkpoint_at(0)->weights;
  t.provenance.checkpoints = {*pre.run.checkpoint_at(0), *pre.run.checkpoint_at(pretrain.epochs)};
  return t;
}

// Mask and weights replaced by a checkpoint; retraining resumes the schedule there.
inline Ticket rewind_weights(Ticket ticket, const Checkpoint& target) {
  require_aligned(ticket.mask, target.weights.sizes(), "rewind_weights");
  if (ticket.provenance.pretrain)
    require(target.epoch <= ticket.provenance.pretrain->epochs, ErrorKind::domain,
            "rewind epoch beyond pretraining");
  ticket.weights = target.weights;
  ticket.provenance.schedule_offset = target.epoch;
  return ticket;
}

inline Ticket make_weight_rewind_ticket(const std::vector<LayerSpec>& specs, const Dataset& data,
                                        double target_sparsity, const TrainConfig& pretrain,
                                        int rewind_epoch, RngSeed seed,
                                        bool preserve_output = false) {
  check_sparsity(target_sparsity);
  require(rewind_epoch >= 0, ErrorKind::domain, "rewind epoch must be nonnegative");
  std::set<int> epochs;
  if (rewind_epoch <= pretrain.epochs) epochs.insert(rewind_epoch);
  const Pretrained pre = pretrain_dense(specs, data, pretrain, seed, epochs);
  const Checkpoint* target = pre.run.checkpoint_at(rewind_epoch);
  require(target != nullptr, ErrorKind::missing_checkpoint,
          "no checkpoint at epoch " + std::to_string(rewind_epoch));
  Ticket t = detail::magnitude_ticket_base(TicketKind::weight_rewind, pre, pretrain,
                                           target_sparsity, seed, preserve_output);
  t.weights = pre.run.params;
  t.provenance.checkpoints = {*pre.run.checkpoint_at(0), *target,
                              *pre.run.checkpoint_at(pretrain.epochs)};
  return rewind_weights(std::move(t), *target);
}

// Same mask as the LT ticket; keeps the fully trained weights.
inline Ticket make_lr_rewind_ticket(const std::vector<LayerSpec>& specs, const Dataset& data,
                                    double target_sparsity, const TrainConfig& pretrain,
                                    RngSeed seed, bool preserve_output = false) {
  check_sparsity(target_sparsity);
  const Pretrained pre = pretrain_dense(specs, data, pretrain, seed);
  Ticket t = detail::magnitude_ticket_base(TicketKind::lr_rewind, pre, pretrain, target_sparsity,
                                           seed, preserve_output);
  t.weights = pre.run.params;
  t.provenance.checkpoints = {*pre.run.checkpoint_at(0), *pre.run.checkpoint_at(pretrain.epochs)};
  return t;
}

// Data-independent: smart-ratio (or ablation) quotas placed at random.
inline Ticket make_random_ticket(const std::vector<LayerSpec>& specs, double target_sparsity,
                                 ArchFamily family, RngSeed seed,
                                 ScheduleKind schedule = ScheduleKind::smart) {
  Ticket t;
  t.weights = build_network(specs, seed);
  const auto sizes = t.weights.sizes();
  const KeepRatioSchedule s = ablation_schedule(schedule, sizes, target_sparsity, family);
  Rng rng(derive_seed(seed, "random-mask"));
  t.mask = random_mask_from_schedule(s, sizes, rng);
  t.provenance.kind = TicketKind::random;
  t.provenance.criterion = "random";
  t.provenance.schedule = std::string(to_string(schedule));
  t.provenance.family = family;
  t.provenance.seed = seed;
  t.provenance.target_sparsity = target_sparsity;
  return t;
}

// Trained weights pruned by magnitude within each layer to smart-ratio quotas.
inline Ticket make_hybrid_ticket(const std::vector<LayerSpec>& specs, const Dataset& data,
                                 double target_sparsity, ArchFamily family,
                                 const TrainConfig& pretrain, RngSeed seed) {
  const auto sizes = layer_sizes(specs);
  const KeepRatioSchedule s = smart_ratio(sizes, target_sparsity, family);
  const Pretrained pre = pretrain_dense(specs, data, pretrain, seed);
  Ticket t;
  t.mask = mask_from_scores_layerwise(magnitude_scores(pre.run.params), s);
  t.weights = pre.run.params;
  t.provenance.kind = TicketKind::hybrid;
  t.provenance.criterion = "magnitude";
  t.provenance.schedule = "smart";
  t.provenance.family = family;
  t.provenance.seed = seed;
  t.provenance.target_sparsity = target_sparsity;
  t.provenance.pretrain = pretrain;
  t.provenance.checkpoints = {*pre.run.checkpoint_at(0), *pre.run.checkpoint_at(pretrain.epochs)};
  return t;
}

struct ImpResult {
  Ticket ticket;
  std::vector<Mask> rounds;
};

namespace detail {

// Magnitude scores with already-pruned weights ranked below every survivor.
inline ScoreMap surviving_magnitudes(const LayeredParams& params, const Mask& mask) {
  ScoreMap s = magnitude_scores(params);
  for (std::size_t l = 0; l < s.layers.size(); ++l)
    for (std::size_t i = 0; i < s.layers[l].size(); ++i)
      if (!mask.layers[l][i]) s.layers[l][i] = -1.0;
  return s;
}

// Per-layer quotas on the straight line from the dense counts to the final
// smart-ratio quotas, capped by the previous round's counts so masks nest.
inline KeepRatioSchedule interpolated_quotas(const std::vector<std::size_t>& sizes,
                                             const KeepRatioSchedule& final_schedule,
                                             const std::vector<std::size_t>& previous,
                                             std::size_t keep) {
  const double total = static_cast<double>(total_weights(sizes));
  const double final_keep = static_cast<double>(final_schedule.total_quota());
  const double t =
      total == final_keep ? 1.0 : (total - static_cast<double>(keep)) / (total - final_keep);
  std::vector<double> targets;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const double m = static_cast<double>(sizes[l]);
    targets.push_back(m + t * (static_cast<double>(final_schedule.quotas[l]) - m));
  }
  KeepRatioSchedule s;
  s.quotas = apportion(targets, previous, keep);
  for (std::size_t l = 0; l < sizes.size(); ++l)
    s.ratios.push_back(static_cast<double>(s.quotas[l]) / static_cast<double>(sizes[l]));
  s.target_sparsity = 1.0 - static_cast<double>(keep) / total;
  return s;
}

}  // namespace detail

// Rounds of train -> prune a fraction of the survivors -> reset weights per
// mode, until the target sparsity; the last round trims exactly to target.
inline ImpResult iterative_magnitude_prune(const std::vector<LayerSpec>& specs,
                                           const Dataset& data, double target_sparsity,
                                           double round_fraction, const TrainConfig& pretrain,
                                           ImpMode mode, RngSeed seed,
                                           ArchFamily family = ArchFamily::plain_stack) {
  check_sparsity(target_sparsity);
  require(round_fraction > 0.0 && round_fraction < 1.0, ErrorKind::domain,
          "round fraction must lie in (0, 1)");
  const LayeredParams init = build_network(specs, seed);
  const auto sizes = init.sizes();
  const std::size_t total = total_weights(sizes);
  const std::size_t target_keep = retained_budget(sizes, target_sparsity);
  require(target_keep > 0, ErrorKind::empty_network, "target sparsity leaves no weights");
  std::optional<KeepRatioSchedule> final_schedule;
  if (mode == ImpMode::hybrid) final_schedule = smart_ratio(sizes, target_sparsity, family);

  ImpResult out;
  Mask mask = Mask::ones(sizes);
  LayeredParams start = init;
  LayeredParams trained;
  std::vector<double> round_sparsities;
  std::size_t keep = total;
  for (int round = 1; keep > target_keep; ++round) {
    TrainConfig cfg = pretrain_config(pretrain, seed);
    if (round > 1) cfg.seed = derive_seed(cfg.seed, "imp-round", static_cast<std::uint64_t>(round));
    trained = train(start, mask, DataSplit{data, {}}, cfg).params;
    const double surviving = std::pow(1.0 - round_fraction, round);
    std::size_t next = static_cast<std::size_t>(std::llround(surviving * static_cast<double>(total)));
    next = std::max(next, target_keep);
    if (next >= keep) next = keep - 1;
    const ScoreMap scores = detail::surviving_magnitudes(trained, mask);
    Mask pruned = mode == ImpMode::hybrid
                      ? mask_from_scores_layerwise(
                            scores, detail::interpolated_quotas(sizes, *final_schedule,
                                                                mask.kept_counts(), next))
                      : mask_top_k(scores, next);
    require(pruned.nested_in(mask) && pruned.total_kept() < keep, ErrorKind::domain,
            "internal: sparsity failed to increase across rounds");
    mask = std::move(pruned);
    keep = mask.total_kept();
    out.rounds.push_back(mask);
    round_sparsities.push_back(sparsity(mask));
    start = mode == ImpMode::reset ? init : trained;
  }
  Ticket& t = out.ticket;
  t.mask = mask;
  t.weights = mode == ImpMode::reset ? init : trained;
  t.provenance.kind = mode == ImpMode::reset     ? TicketKind::imp_reset
                      : mode == ImpMode::hybrid ? TicketKind::imp_hybrid
                                                : TicketKind::imp_lr_rewind;
  t.provenance.criterion = "magnitude";
  t.provenance.schedule = mode == ImpMode::hybrid ? "smart" : "";
  t.provenance.family = family;
  t.provenance.seed = seed;
  t.provenance.target_sparsity = target_sparsity;
  t.provenance.pretrain = pretrain;
  t.provenance.round_fraction = round_fraction;
  t.provenance.round_sparsities = std::move(round_sparsities);
  return out;
}

// Uniform description of any pipeline, used by the harness and the CLI.
struct TicketRequest {
  TicketKind kind = TicketKind::random;
  std::vector<LayerSpec> specs;
  double target_sparsity = 0.9;
  RngSeed seed = 0;
  ArchFamily family = ArchFamily::plain_stack;
  ScheduleKind schedule = ScheduleKind::smart;
  TrainConfig pretrain;
  int rewind_epoch = 0;
  double round_fraction = 0.2;
  bool preserve_output = false;
};

// `pruning_data` is whatever the pruning step sees (possibly corrupted).
inline Ticket make_ticket(const TicketRequest& r, const Dataset& pruning_data) {
  switch (r.kind) {
    case TicketKind::dense: return make_dense_ticket(r.specs, r.seed);
    case TicketKind::snip:
      return make_initial_ticket(Criterion::snip, r.specs, pruning_data, r.target_sparsity, r.seed,
                                 r.preserve_output);
    case TicketKind::grasp:
      return make_initial_ticket(Criterion::grasp, r.specs, pruning_data, r.target_sparsity, r.seed,
                                 r.preserve_output);
    case TicketKind::lt:
      return make_lt_ticket(r.specs, pruning_data, r.target_sparsity, r.pretrain, r.seed,
                            r.preserve_output);
    case TicketKind::random:
      return make_random_ticket(r.specs, r.target_sparsity, r.family, r.seed, r.schedule);
    case TicketKind::weight_rewind:
      return make_weight_rewind_ticket(r.specs, pruning_data, r.target_sparsity, r.pretrain,
                                       r.rewind_epoch, r.seed, r.preserve_output);
    case TicketKind::lr_rewind:
      return make_lr_rewind_ticket(r.specs, pruning_data, r.target_sparsity, r.pretrain, r.seed,
                                   r.preserve_output);
    case TicketKind::hybrid:
      return make_hybrid_ticket(r.specs, pruning_data, r.target_sparsity, r.family, r.pretrain,
                                r.seed);
    case TicketKind::imp_reset:
      return iterative_magnitude_prune(r.specs, pruning_data, r.target_sparsity, r.round_fraction,
                                       r.pretrain, ImpMode::reset, r.seed, r.family).ticket;
    case TicketKind::imp_lr_rewind:
      return iterative_magnitude_prune(r.specs, pruning_data, r.target_sparsity, r.round_fraction,
                                       r.pretrain, ImpMode::lr_rewind, r.seed, r.family).ticket;
    case TicketKind::imp_hybrid:
      return iterative_magnitude_prune(r.specs, pruning_data, r.target_sparsity, r.round_fraction,
                                       r.pretrain, ImpMode::hybrid, r.seed, r.family).ticket;
  }
  fail(ErrorKind::usage, "unknown ticket kind");
}

// Layerwise rearrange or weight shuffle on a finished ticket.
inline Ticket apply_structural_check(Ticket t, SanityCheck check, RngSeed seed) {
  require(is_structural_check(check), ErrorKind::usage,
          std::string(to_string(check)) + " is not a structural check");
  Rng rng(seed);
  if (check == SanityCheck::rearrange)
    t.mask = rearrange_mask_layerwise(std::move(t.mask), rng);
  else
    t.weights = shuffle_unmasked_weights(std::move(t.weights), t.mask, rng);
  t.provenance.checks.emplace_back(to_string(check));
  t.provenance.check_seeds.push_back(seed);
  return t;
}

inline Ticket make_checked_ticket(const TicketRequest& r, SanityCheck check,
                                  const Dataset& train_data) {
  const RngSeed check_seed = derive_seed(r.seed, "check", static_cast<std::uint64_t>(check));
  if (is_data_check(check)) {
    Rng rng(check_seed);
    Ticket t = make_ticket(r, apply_data_check(check, train_data, rng));
    t.provenance.checks.emplace_back(to_string(check));
    t.provenance.check_seeds.push_back(check_seed);
    return t;
  }
  Ticket t = make_ticket(r, train_data);
  if (is_structural_check(check)) t = apply_structural_check(std::move(t), check, check_seed);
  return t;
}

// Retraining on the true data. Rewound tickets resume their schedule offset.
inline TrainResult retrain(const Ticket& ticket, const DataSplit& data, TrainConfig cfg,
                           bool fresh_seed = true) {
  cfg.seed = fresh_seed ? derive_seed(ticket.provenance.seed, "retrain", cfg.seed)
                        : ticket.provenance.seed;
  TrainOptions opts;
  opts.schedule_offset = ticket.provenance.schedule_offset;
  return train(ticket.weights, ticket.mask, data, cfg, opts);
}

struct SuiteConfig {
  std::vector<LayerSpec> specs;
  std::vector<double> sparsities = {0.9};
  std::vector<RngSeed> seeds = {0, 1, 2};
  TrainConfig pretrain;
  TrainConfig retrain;
  ArchFamily family = ArchFamily::plain_stack;
  ScheduleKind schedule = ScheduleKind::smart;
  int rewind_epoch = 0;
  double round_fraction = 0.2;
  bool preserve_output = false;
  bool fresh_retrain_seed = true;
};

struct SuiteRow {
  std::string check;
  double sparsity = 0.0;
  std::vector<double> accuracies;
  std::vector<std::vector<std::size_t>> keep_counts;
  double mean = 0.0;
  double stddev = 0.0;
};

struct SanityReport {
  TicketKind pipeline = TicketKind::random;
  std::vector<SuiteRow> rows;

  const SuiteRow* find(std::string_view check, double sparsity) const {
    for (const auto& r : rows)
      if (r.check == check && r.sparsity == sparsity) return &r;
    return nullptr;
  }
};

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Sample (n - 1) standard deviation; 0 for fewer than two values.
inline double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

// Baseline plus each check, per sparsity, retrained on the original data.
inline SanityReport run_sanity_suite(TicketKind pipeline, const std::vector<SanityCheck>& checks,
                                     const DataSplit& data, const SuiteConfig& cfg) {
  SanityReport report;
  report.pipeline = pipeline;
  std::vector<SanityCheck> all = {SanityCheck::none};
  for (SanityCheck c : checks)
    if (c != SanityCheck::none) all.push_back(c);
  for (double p : cfg.sparsities)
    for (SanityCheck check : all) {
      SuiteRow row;
      row.check = std::string(to_string(check));
      row.sparsity = p;
      for (RngSeed seed : cfg.seeds) {
        TicketRequest r;
        r.kind = pipeline;
        r.specs = cfg.specs;
        r.target_sparsity = p;
        r.seed = seed;
        r.family = cfg.family;
        r.schedule = cfg.schedule;
        r.pretrain = cfg.pretrain;
        r.rewind_epoch = cfg.rewind_epoch;
        r.round_fraction = cfg.round_fraction;
        r.preserve_output = cfg.preserve_output;
        const Ticket t = make_checked_ticket(r, check, data.train);
        const TrainResult run = retrain(t, data, cfg.retrain, cfg.fresh_retrain_seed);
        row.accuracies.push_back(run.best_test_accuracy());
        row.keep_counts.push_back(t.mask.kept_counts());
      }
      row.mean = mean_of(row.accuracies);
      row.stddev = sample_stddev(row.accuracies);
      report.rows.push_back(std::move(row));
    }
  return report;
}

}  // namespace prunelab
