#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

enum class SanityCheck {
  none,
  random_labels,
  random_pixels,
  half_data,
  corrupt_both,
  rearrange,
  shuffle_weights,
};

inline SanityCheck parse_check(std::string_view name) {
  if (name == "none") return SanityCheck::none;
  if (name == "random-labels") return SanityCheck::random_labels;
  if (name == "random-pixels") return SanityCheck::random_pixels;
  if (name == "half-data") return SanityCheck::half_data;
  if (name == "corrupt-both") return SanityCheck::corrupt_both;
  if (name == "rearrange") return SanityCheck::rearrange;
  if (name == "shuffle-weights") return SanityCheck::shuffle_weights;
  fail(ErrorKind::usage, "unknown sanity check '" + std::string(name) + "'");
}

constexpr std::string_view to_string(SanityCheck c) {
  switch (c) {
    case SanityCheck::none: return "none";
    case SanityCheck::random_labels: return "random-labels";
    case SanityCheck::random_pixels: return "random-pixels";
    case SanityCheck::half_data: return "half-data";
    case SanityCheck::corrupt_both: return "corrupt-both";
    case SanityCheck::rearrange: return "rearrange";
    case SanityCheck::shuffle_weights: return "shuffle-weights";
  }
  return "none";
}

// Data checks corrupt the pruning-step dataset; structural checks attack the
// pruned subnetwork before retraining.
constexpr bool is_data_check(SanityCheck c) {
  return c == SanityCheck::random_labels || c == SanityCheck::random_pixels ||
         c == SanityCheck::half_data || c == SanityCheck::corrupt_both;
}

constexpr bool is_structural_check(SanityCheck c) {
  return c == SanityCheck::rearrange || c == SanityCheck::shuffle_weights;
}

// Labels replaced by i.i.d. uniform draws over the classes.
inline Dataset corrupt_labels(Dataset data, Rng& rng) {
  require(data.class_count >= 2, ErrorKind::domain, "random labels need at least two classes");
  for (int& y : data.labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(data.class_count)));
  return data;
}

// Each sample's flattened pixels reordered by its own random permutation.
inline Dataset corrupt_pixels(Dataset data, Rng& rng) {
  require(!data.empty(), ErrorKind::domain, "random pixels need a nonempty dataset");
  for (std::size_t i = 0; i < data.size(); ++i) rng.shuffle(data.sample(i));
  return data;
}

// Labels first, then pixels, on independent streams drawn from `rng`.
inline Dataset corrupt_both(Dataset data, Rng& rng) {
  Rng label_rng(rng.next_u64());
  Rng pixel_rng(rng.next_u64());
  return corrupt_pixels(corrupt_labels(std::move(data), label_rng), pixel_rng);
}

// floor(n / 2) (sample, label) pairs drawn uniformly without replacement,
// kept in their original order.
inline Dataset half_dataset(const Dataset& data, Rng& rng) {
  require(data.size() >= 2, ErrorKind::too_small, "half dataset needs at least two samples");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(data.size() / 2);
  std::sort(idx.begin(), idx.end());
  return data.subset(idx);
}

// Every layer's ones re-placed uniformly at random; per-layer counts kept.
inline Mask rearrange_mask_layerwise(Mask mask, Rng& rng) {
  require(mask.is_binary(), ErrorKind::alignment, "mask entries must be 0 or 1");
  for (auto& layer : mask.layers) rng.shuffle(std::span<std::uint8_t>(layer));
  return mask;
}

// Within each layer, the values at mask-1 positions are permuted uniformly
// among those positions. Mask-0 values and the mask are untouched.
inline LayeredParams shuffle_unmasked_weights(LayeredParams params, const Mask& mask, Rng& rng) {
  require_aligned(mask, params.sizes(), "shuffle_unmasked_weights");
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < mask.layers[l].size(); ++i)
      if (mask.layers[l][i]) kept.push_back(i);
    std::vector<double> values;
    for (std::size_t i : kept) values.push_back(params.weights[l][i]);
    rng.shuffle(std::span<double>(values));
    for (std::size_t k = 0; k < kept.size(); ++k) params.weights[l][kept[k]] = values[k];
  }
  return params;
}

inline Dataset apply_data_check(SanityCheck check, const Dataset& data, Rng& rng) {
  switch (check) {
    case SanityCheck::random_labels: return corrupt_labels(data, rng);
    case SanityCheck::random_pixels: return corrupt_pixels(data, rng);
    case SanityCheck::half_data: return half_dataset(data, rng);
    case SanityCheck::corrupt_both: return corrupt_both(data, rng);
    default: return data;
  }
}

}  // namespace prunelab
