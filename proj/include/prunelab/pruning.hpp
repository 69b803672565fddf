#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/engine.hpp"
#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/schedules.hpp"

namespace prunelab {

// Per-weight keep priority: higher means more important to keep.
struct ScoreMap {
  LayerVectors layers;

  std::vector<std::size_t> sizes() const { return layer_lengths(layers); }

  void validate() const {
    for (const auto& l : layers)
      for (double s : l)
        require(std::isfinite(s), ErrorKind::domain, "non-finite pruning score");
  }
};

enum class Criterion { magnitude, snip, grasp, random };

inline Criterion parse_criterion(std::string_view name) {
  if (name == "magnitude") return Criterion::magnitude;
  if (name == "snip") return Criterion::snip;
  if (name == "grasp") return Criterion::grasp;
  if (name == "random") return Criterion::random;
  fail(ErrorKind::usage, "unknown criterion '" + std::string(name) + "'");
}

constexpr std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::magnitude: return "magnitude";
    case Criterion::snip: return "snip";
    case Criterion::grasp: return "grasp";
    case Criterion::random: return "random";
  }
  return "magnitude";
}

namespace detail {

struct Slot {
  std::uint32_t layer;
  std::uint32_t pos;
};

// Score descending, then (layer, position) ascending.
inline void rank_slots(std::vector<Slot>& slots, const LayerVectors& scores, std::size_t keep) {
  auto better = [&](const Slot& a, const Slot& b) {
    const double sa = scores[a.layer][a.pos], sb = scores[b.layer][b.pos];
    if (sa != sb) return sa > sb;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.pos < b.pos;
  };
  if (keep < slots.size())
    std::nth_element(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(keep), slots.end(),
                     better);
}

}  // namespace detail

// Keeps the `keep` highest-scoring weights across the whole network.
// `frozen_layers` are kept dense and excluded from the ranking; their weights
// count towards `keep`.
inline Mask mask_top_k(const ScoreMap& scores, std::size_t keep,
                       const std::vector<bool>& frozen_layers = {}) {
  scores.validate();
  const auto sizes = scores.sizes();
  require(keep > 0, ErrorKind::empty_network, "pruning would leave no weights");
  require(keep <= total_weights(sizes), ErrorKind::domain, "cannot keep more weights than exist");
  Mask mask = Mask::zeros(sizes);
  std::size_t frozen_kept = 0;
  std::vector<detail::Slot> slots;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    if (l < frozen_layers.size() && frozen_layers[l]) {
      std::fill(mask.layers[l].begin(), mask.layers[l].end(), std::uint8_t{1});
      frozen_kept += sizes[l];
      continue;
    }
    for (std::size_t i = 0; i < sizes[l]; ++i)
      slots.push_back({static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(i)});
  }
  require(frozen_kept <= keep, ErrorKind::infeasible_sparsity,
          "dense-preserved layers alone exceed the retained budget");
  const std::size_t rest = keep - frozen_kept;
  detail::rank_slots(slots, scores.layers, rest);
  for (std::size_t k = 0; k < rest; ++k) mask.layers[slots[k].layer][slots[k].pos] = 1;
  return mask;
}

// Global top-k with k = round((1 - p) * sum m_l).
inline Mask mask_from_scores_global(const ScoreMap& scores, double target_sparsity,
                                    const std::vector<bool>& frozen_layers = {}) {
  require(target_sparsity >= 0.0 && target_sparsity < 1.0, ErrorKind::domain,
          "target sparsity must lie in [0, 1)");
  const std::size_t keep = retained_budget(scores.sizes(), target_sparsity);
  require(keep > 0, ErrorKind::empty_network, "target sparsity leaves no weights");
  return mask_top_k(scores, keep, frozen_layers);
}

// Keeps quota(l) highest-scoring weights within each layer.
inline Mask mask_from_scores_layerwise(const ScoreMap& scores, const KeepRatioSchedule& schedule) {
  scores.validate();
  const auto sizes = scores.sizes();
  schedule.validate(sizes);
  Mask mask = Mask::zeros(sizes);
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    std::vector<std::size_t> idx(sizes[l]);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto& s = scores.layers[l];
    const std::size_t q = schedule.quotas[l];
    if (q < idx.size())
      std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q), idx.end(),
                       [&](std::size_t a, std::size_t b) {
                         if (s[a] != s[b]) return s[a] > s[b];
                         return a < b;
                       });
    for (std::size_t k = 0; k < q; ++k) mask.layers[l][idx[k]] = 1;
  }
  return mask;
}

inline ScoreMap magnitude_scores(const LayeredParams& params) {
  ScoreMap s;
  for (const auto& layer : params.weights) {
    std::vector<double> a(layer.size());
    std::transform(layer.begin(), layer.end(), a.begin(), [](double w) { return std::fabs(w); });
    s.layers.push_back(std::move(a));
  }
  return s;
}

// Connection sensitivity |g * w| on one batch.
inline ScoreMap snip_scores(const LayeredParams& params, const Mask& mask, const Dataset& batch,
                            LossHead head = LossHead::softmax_cross_entropy) {
  const LayerVectors g = loss_gradient(params, mask, batch, head);
  ScoreMap s;
  for (std::size_t l = 0; l < g.size(); ++l) {
    std::vector<double> v(g[l].size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(g[l][i] * params.weights[l][i]);
    s.layers.push_back(std::move(v));
  }
  s.validate();
  return s;
}

inline constexpr double kHvpStep = 1e-5;

// -w * (H g): the gradient-flow score where the highest values are pruned first.
inline LayerVectors grasp_raw_scores(const LayeredParams& params, const Mask& mask,
                                     const Dataset& batch,
                                     LossHead head = LossHead::softmax_cross_entropy) {
  const LayerVectors g = loss_gradient(params, mask, batch, head);
  require(norm2(g) >= kMinDirectionNorm, ErrorKind::degenerate_flow,
          "gradient vanishes; gradient-flow scores are undefined");
  const LayerVectors hg = hessian_vector_product(params, mask, batch, g, kHvpStep, head);
  LayerVectors raw;
  for (std::size_t l = 0; l < g.size(); ++l) {
    std::vector<double> v(g[l].size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = -params.weights[l][i] * hg[l][i];
    raw.push_back(std::move(v));
  }
  return raw;
}

// Keep priority is the negated raw score, w * (H g).
inline ScoreMap grasp_scores(const LayeredParams& params, const Mask& mask, const Dataset& batch,
                             LossHead head = LossHead::softmax_cross_entropy) {
  ScoreMap s{grasp_raw_scores(params, mask, batch, head)};
  for (auto& l : s.layers)
    for (double& x : l) x = -x;
  s.validate();
  return s;
}

// Uniformly random placement of quota(l) ones in each layer.
inline Mask random_mask_from_schedule(const KeepRatioSchedule& schedule,
                                      const std::vector<std::size_t>& sizes, Rng& rng) {
  schedule.validate(sizes);
  Mask mask = Mask::zeros(sizes);
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    auto& layer = mask.layers[l];
    std::fill(layer.begin(), layer.begin() + static_cast<std::ptrdiff_t>(schedule.quotas[l]),
              std::uint8_t{1});
    rng.shuffle(std::span<std::uint8_t>(layer));
  }
  return mask;
}

}  // namespace prunelab
