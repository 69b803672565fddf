#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

enum class LayerKind { dense, conv };

struct KernelSize {
  std::size_t h = 0;
  std::size_t w = 0;
  friend bool operator==(const KernelSize&, const KernelSize&) = default;
};

// Dense weights are stored [fan_in, fan_out]; conv kernels [fan_out, fan_in, h, w].
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::optional<KernelSize> kernel;
  bool is_output = false;

  static LayerSpec dense(std::size_t in, std::size_t out, bool output = false) {
    return {LayerKind::dense, in, out, std::nullopt, output};
  }
  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw) {
    return {LayerKind::conv, in, out, KernelSize{kh, kw}, false};
  }

  std::size_t kernel_area() const { return kernel ? kernel->h * kernel->w : 1; }
  std::size_t weight_count() const { return fan_in * fan_out * kernel_area(); }
  std::size_t effective_fan_in() const { return fan_in * kernel_area(); }

  Shape weight_shape() const {
    if (kind == LayerKind::conv) return {fan_out, fan_in, kernel->h, kernel->w};
    return {fan_in, fan_out};
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Selects the smart-ratio decay: plain_stack is the ResNet-like variant,
// fast_decay_stack divides by l^2 (VGG-like).
enum class ArchFamily { plain_stack, fast_decay_stack };

inline ArchFamily parse_family(std::string_view name) {
  if (name == "plain" || name == "plainStack" || name == "plain-stack") return ArchFamily::plain_stack;
  if (name == "fast" || name == "fastDecayStack" || name == "fast-decay-stack")
    return ArchFamily::fast_decay_stack;
  fail(ErrorKind::usage, "unknown architecture family '" + std::string(name) + "'");
}

constexpr std::string_view to_string(ArchFamily f) {
  return f == ArchFamily::plain_stack ? "plain" : "fast";
}

inline void validate_specs(const std::vector<LayerSpec>& specs) {
  require(!specs.empty(), ErrorKind::spec, "network needs at least one layer");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const LayerSpec& s = specs[l];
    require(s.fan_in > 0 && s.fan_out > 0, ErrorKind::spec,
            "layer " + std::to_string(l) + " has zero fan-in or fan-out");
    if (s.kind == LayerKind::conv)
      require(s.kernel && s.kernel->h > 0 && s.kernel->w > 0, ErrorKind::spec,
              "conv layer " + std::to_string(l) + " needs a positive kernel size");
    else
      require(!s.kernel, ErrorKind::spec, "dense layer " + std::to_string(l) + " has a kernel");
    require(s.is_output == (l + 1 == specs.size()), ErrorKind::spec,
            "exactly the last layer must be the output layer");
    require(!(s.is_output && s.kind == LayerKind::conv), ErrorKind::spec,
            "output layer must be dense");
  }
}

struct LayeredParams {
  std::vector<LayerSpec> specs;
  LayerVectors weights;

  std::size_t layer_count() const { return specs.size(); }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out;
    for (const auto& s : specs) out.push_back(s.weight_count());
    return out;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& s : specs) n += s.weight_count();
    return n;
  }

  void validate() const {
    validate_specs(specs);
    require(weights.size() == specs.size(), ErrorKind::alignment,
            "weight layer count does not match specs");
    for (std::size_t l = 0; l < specs.size(); ++l) {
      require(weights[l].size() == specs[l].weight_count(), ErrorKind::alignment,
              "layer " + std::to_string(l) + " weight count mismatch");
      for (double w : weights[l])
        require(std::isfinite(w), ErrorKind::domain, "non-finite weight");
    }
  }

  friend bool operator==(const LayeredParams&, const LayeredParams&) = default;
};

// m_l for every layer.
inline std::vector<std::size_t> layer_sizes(const LayeredParams& params) { return params.sizes(); }

inline std::vector<std::size_t> layer_sizes(const std::vector<LayerSpec>& specs) {
  std::vector<std::size_t> out;
  for (const auto& s : specs) out.push_back(s.weight_count());
  return out;
}

// Kaiming-normal initialization, std = sqrt(2 / fan_in_effective).
inline LayeredParams build_network(const std::vector<LayerSpec>& specs, RngSeed seed) {
  validate_specs(specs);
  require(specs.size() >= 2, ErrorKind::spec, "network needs at least two layers");
  LayeredParams params;
  params.specs = specs;
  Rng rng(derive_seed(seed, "init"));
  for (const auto& s : specs) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(s.effective_fan_in()));
    std::vector<double> w(s.weight_count());
    for (double& x : w) x = rng.normal(0.0, stddev);
    params.weights.push_back(std::move(w));
  }
  return params;
}

inline LayeredParams apply_mask(LayeredParams params, const Mask& mask) {
  require_aligned(mask, params.sizes(), "apply_mask");
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    for (std::size_t i = 0; i < params.weights[l].size(); ++i)
      params.weights[l][i] *= static_cast<double>(mask.layers[l][i]);
  return params;
}

// Preset toy architectures. Both take the sample shape ({d}, {h, w} or
// {c, h, w}) and class count of the data they will see.
inline std::vector<LayerSpec> preset_specs(std::string_view name, const Shape& sample_shape,
                                           std::size_t class_count) {
  require(class_count >= 1, ErrorKind::spec, "preset needs at least one class");
  const std::size_t d = element_count(sample_shape);
  if (name == "mlp-4") {
    return {LayerSpec::dense(d, 64), LayerSpec::dense(64, 128), LayerSpec::dense(128, 256),
            LayerSpec::dense(256, class_count, true)};
  }
  if (name == "conv-5") {
    std::size_t c = 1, h = 0, w = 0;
    if (sample_shape.size() == 3) {
      c = sample_shape[0], h = sample_shape[1], w = sample_shape[2];
    } else if (sample_shape.size() == 2) {
      h = sample_shape[0], w = sample_shape[1];
    } else {
      const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
      require(side * side == d, ErrorKind::spec,
              "conv-5 needs a square or image-shaped sample, got " + shape_string(sample_shape));
      h = w = side;
    }
    require(h >= 7 && w >= 7, ErrorKind::spec, "conv-5 needs samples at least 7x7");
    const std::size_t flat = 32 * (h - 6) * (w - 6);
    return {LayerSpec::conv(c, 16, 3, 3), LayerSpec::conv(16, 16, 3, 3),
            LayerSpec::conv(16, 32, 3, 3), LayerSpec::dense(flat, 32),
            LayerSpec::dense(32, class_count, true)};
  }
  fail(ErrorKind::usage, "unknown preset '" + std::string(name) + "'");
}

// Default geometry used when no dataset is in play (e.g. printing ratios).
inline const Shape kPresetSampleShape = {1, 8, 8};
inline constexpr std::size_t kPresetClassCount = 10;

inline std::vector<LayerSpec> preset_specs(std::string_view name) {
  return preset_specs(name, kPresetSampleShape, kPresetClassCount);
}

struct NetworkGraph {
  std::vector<NodeId> weight_nodes;
  NodeId logits = 0;
};

// Records f(c_1 * w_1, ..., c_L * w_L; x) for a batch onto the tape. ReLU
// follows every non-output layer; a dense layer flattens conv activations.
inline NetworkGraph record_network(ComputationTape& tape, const LayeredParams& params,
                                   const Mask& mask, const Dataset& batch, bool needs_grad) {
  require_aligned(mask, params.sizes(), "forward");
  require(params.weights.size() == params.specs.size(), ErrorKind::alignment,
          "weights do not match specs");
  require(!batch.empty(), ErrorKind::domain, "empty batch");
  const std::size_t n = batch.size();
  NetworkGraph graph;
  NodeId act = tape.leaf(Tensor({n, batch.sample_size()}, batch.features));
  for (std::size_t l = 0; l < params.specs.size(); ++l) {
    const LayerSpec& spec = params.specs[l];
    const Shape wshape = spec.weight_shape();
    const NodeId w = tape.leaf(Tensor(wshape, params.weights[l]), needs_grad);
    std::vector<double> c(mask.layers[l].begin(), mask.layers[l].end());
    const NodeId cn = tape.leaf(Tensor(wshape, std::move(c)));
    const NodeId eff = tape.mul(w, cn);
    graph.weight_nodes.push_back(w);
    const Shape& ashape = tape.value(act).shape;
    if (spec.kind == LayerKind::conv) {
      if (ashape.size() == 2) {
        Shape img = batch.sample_shape;
        if (img.size() == 1) {
          const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(img[0]))));
          if (side * side == img[0]) img = {side, side};
        }
        if (img.size() == 2) img.insert(img.begin(), 1);
        require(img.size() == 3, ErrorKind::alignment,
                "conv layer needs an image-shaped sample, got " + shape_string(batch.sample_shape));
        act = tape.reshape(act, {n, img[0], img[1], img[2]});
      }
      require(tape.value(act).shape[1] == spec.fan_in, ErrorKind::alignment,
              "layer " + std::to_string(l) + " expects " + std::to_string(spec.fan_in) +
                  " input channels");
      act = tape.conv2d(act, eff);
    } else {
      if (ashape.size() != 2) act = tape.reshape(act, {n, tape.value(act).size() / n});
      require(tape.value(act).shape[1] == spec.fan_in, ErrorKind::alignment,
              "layer " + std::to_string(l) + " expects " + std::to_string(spec.fan_in) +
                  " inputs, got " + std::to_string(tape.value(act).shape[1]));
      act = tape.matmul(act, eff);
    }
    if (!spec.is_output) act = tape.relu(act);
  }
  graph.logits = act;
  return graph;
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

inline std::vector<std::size_t> predict_batch(const LayeredParams& params, const Mask& mask,
                                              const Dataset& batch) {
  ComputationTape tape;
  const NetworkGraph g = record_network(tape, params, mask, batch, false);
  const Tensor& z = tape.value(g.logits);
  const std::size_t c = z.shape[1];
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < batch.size(); ++i)
    out.push_back(argmax(std::span<const double>(z.values).subspan(i * c, c)));
  return out;
}

inline std::size_t predict(const LayeredParams& params, const Mask& mask,
                           std::span<const double> x, const Shape& sample_shape) {
  Dataset one;
  one.features.assign(x.begin(), x.end());
  one.labels = {0};
  one.class_count = 1;
  one.sample_shape = sample_shape;
  require(one.sample_size() == x.size(), ErrorKind::alignment, "sample does not match its shape");
  return predict_batch(params, mask, one).front();
}

// Percentage of correctly classified samples, in [0, 100].
inline double accuracy(const LayeredParams& params, const Mask& mask, const Dataset& data,
                       std::size_t chunk = 512) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) idx.push_back(i);
    const Dataset part = data.subset(idx);
    const auto pred = predict_batch(params, mask, part);
    for (std::size_t i = 0; i < pred.size(); ++i)
      correct += pred[i] == static_cast<std::size_t>(part.labels[i]);
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace prunelab
