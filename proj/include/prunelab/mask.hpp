#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/error.hpp"

namespace prunelab {

// Per-layer float vectors aligned with a network's weights. Gradients,
// scores and update directions all share this layout.
using LayerVectors = std::vector<std::vector<double>>;

inline std::vector<std::size_t> layer_lengths(const LayerVectors& v) {
  std::vector<std::size_t> out;
  out.reserve(v.size());
  for (const auto& layer : v) out.push_back(layer.size());
  return out;
}

// Binary keep-mask c_l per layer; 1 keeps the weight.
struct Mask {
  std::vector<std::vector<std::uint8_t>> layers;

  static Mask ones(const std::vector<std::size_t>& sizes) {
    Mask m;
    for (std::size_t n : sizes) m.layers.emplace_back(n, std::uint8_t{1});
    return m;
  }

  static Mask zeros(const std::vector<std::size_t>& sizes) {
    Mask m;
    for (std::size_t n : sizes) m.layers.emplace_back(n, std::uint8_t{0});
    return m;
  }

  std::size_t layer_count() const { return layers.size(); }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers) out.push_back(l.size());
    return out;
  }

  std::vector<std::size_t> kept_counts() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers) {
      std::size_t k = 0;
      for (auto c : l) k += c;
      out.push_back(k);
    }
    return out;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }

  std::size_t total_kept() const {
    std::size_t n = 0;
    for (std::size_t k : kept_counts()) n += k;
    return n;
  }

  bool is_binary() const {
    for (const auto& l : layers)
      for (auto c : l)
        if (c > 1) return false;
    return true;
  }

  // Elementwise this <= other.
  bool nested_in(const Mask& other) const {
    if (sizes() != other.sizes()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
      for (std::size_t i = 0; i < layers[l].size(); ++i)
        if (layers[l][i] > other.layers[l][i]) return false;
    return true;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline void require_aligned(const Mask& mask, const std::vector<std::size_t>& sizes,
                            const std::string& what) {
  require(mask.sizes() == sizes, ErrorKind::alignment,
          what + ": mask layout does not match " + std::to_string(sizes.size()) +
              "-layer parameters");
  require(mask.is_binary(), ErrorKind::alignment, what + ": mask entries must be 0 or 1");
}

// p = 1 - sum ||c_l||_0 / sum m_l.
inline double sparsity(const Mask& mask) {
  const std::size_t total = mask.total();
  if (total == 0) return 0.0;
  return 1.0 - static_cast<double>(mask.total_kept()) / static_cast<double>(total);
}

// p_l = ||c_l||_0 / m_l.
inline std::vector<double> keep_ratios(const Mask& mask) {
  std::vector<double> out;
  const auto kept = mask.kept_counts();
  for (std::size_t l = 0; l < mask.layers.size(); ++l)
    out.push_back(mask.layers[l].empty()
                      ? 1.0
                      : static_cast<double>(kept[l]) /
                            static_cast<double>(mask.layers[l].size()));
  return out;
}

inline bool has_empty_layer(const Mask& mask) {
  for (std::size_t k : mask.kept_counts())
    if (k == 0) return true;
  return false;
}

}  // namespace prunelab
