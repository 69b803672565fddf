#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prunelab/error.hpp"

namespace prunelab {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major array of doubles with an optional gradient slot.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;

  Tensor() = default;

  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    require(values.size() == element_count(shape), ErrorKind::alignment,
            "tensor of shape " + shape_string(shape) + " given " +
                std::to_string(values.size()) + " values");
    for (std::size_t d : shape)
      require(d > 0, ErrorKind::alignment, "tensor dimensions must be positive");
  }

  static Tensor zeros(Shape s) {
    const std::size_t n = element_count(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double x) { return std::isfinite(x); });
  }
};

enum class OpKind {
  leaf,
  matmul,
  add,
  mul,
  relu,
  reshape,
  conv2d,
  softmax_cross_entropy,
  half_squared_error,
};

// Valid cross-correlation, stride 1, no padding.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;

  std::size_t out_h() const { return height - kernel_h + 1; }
  std::size_t out_w() const { return width - kernel_w + 1; }
};

using NodeId = std::size_t;

// Records primitive operations in execution order so that a single reverse
// sweep yields gradients. Node ids are indices; inputs always precede outputs.
class ComputationTape {
 public:
  NodeId leaf(Tensor value, bool needs_grad = false) {
    Node node;
    node.op = OpKind::leaf;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    return push(std::move(node));
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require(x.rank() == 2 && y.rank() == 2 && x.shape[1] == y.shape[0],
            ErrorKind::alignment,
            "matmul of " + shape_string(x.shape) + " and " + shape_string(y.shape));
    return record(OpKind::matmul, {a, b});
  }

  NodeId add(NodeId a, NodeId b) {
    require_same_shape(a, b, "add");
    return record(OpKind::add, {a, b});
  }

  NodeId mul(NodeId a, NodeId b) {
    require_same_shape(a, b, "mul");
    return record(OpKind::mul, {a, b});
  }

  NodeId relu(NodeId a) { return record(OpKind::relu, {a}); }

  NodeId reshape(NodeId a, Shape shape) {
    require(element_count(shape) == value(a).size(), ErrorKind::alignment,
            "reshape " + shape_string(value(a).shape) + " to " + shape_string(shape));
    Node node;
    node.op = OpKind::reshape;
    node.inputs = {a};
    node.target_shape = std::move(shape);
    return finish(std::move(node));
  }

  // x: [n, c, h, w], kernel: [o, c, kh, kw].
  NodeId conv2d(NodeId x, NodeId kernel) {
    const Tensor& in = value(x);
    const Tensor& k = value(kernel);
    require(in.rank() == 4 && k.rank() == 4 && in.shape[1] == k.shape[1],
            ErrorKind::alignment,
            "conv2d of " + shape_string(in.shape) + " with kernel " + shape_string(k.shape));
    require(in.shape[2] >= k.shape[2] && in.shape[3] >= k.shape[3], ErrorKind::alignment,
            "conv2d kernel larger than input");
    Node node;
    node.op = OpKind::conv2d;
    node.inputs = {x, kernel};
    node.conv = ConvGeometry{in.shape[0], in.shape[1], in.shape[2], in.shape[3],
                             k.shape[0], k.shape[2], k.shape[3]};
    return finish(std::move(node));
  }

  // Mean over rows of log-sum-exp(z) - z[label]; scalar output.
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Tensor& z = value(logits);
    require(z.rank() == 2 && z.shape[0] == labels.size(), ErrorKind::alignment,
            "cross-entropy labels do not match logits");
    for (int y : labels)
      require(y >= 0 && static_cast<std::size_t>(y) < z.shape[1], ErrorKind::domain,
              "label " + std::to_string(y) + " outside [0, " +
                  std::to_string(z.shape[1]) + ")");
    Node node;
    node.op = OpKind::softmax_cross_entropy;
    node.inputs = {logits};
    node.labels = std::move(labels);
    return finish(std::move(node));
  }

  // Mean over rows of sum_k (z - t)^2 / 2; scalar output.
  NodeId half_squared_error(NodeId prediction, std::vector<double> targets) {
    const Tensor& z = value(prediction);
    require(z.rank() == 2 && z.size() == targets.size(), ErrorKind::alignment,
            "squared-error targets do not match prediction");
    Node node;
    node.op = OpKind::half_squared_error;
    node.inputs = {prediction};
    node.targets = std::move(targets);
    return finish(std::move(node));
  }

  const Tensor& value(NodeId id) const {
    require(id < nodes_.size(), ErrorKind::alignment, "unknown tape node");
    return nodes_[id].value;
  }

  OpKind op(NodeId id) const { return nodes_.at(id).op; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Reverse sweep from a scalar root. A tape supports exactly one sweep.
  void backward(NodeId root) {
    require(!consumed_, ErrorKind::single_use, "tape already consumed by a backward pass");
    require(root < nodes_.size() && nodes_[root].value.size() == 1, ErrorKind::domain,
            "backward root must be a scalar node");
    consumed_ = true;
    for (Node& node : nodes_)
      if (node.needs_grad) node.value.grad.emplace(node.value.size(), 0.0);
    if (!nodes_[root].needs_grad) return;
    (*nodes_[root].value.grad)[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.op == OpKind::leaf || !node.needs_grad) continue;
      propagate(node);
    }
  }

  std::span<const double> grad(NodeId id) const {
    const auto& g = nodes_.at(id).value.grad;
    require(g.has_value(), ErrorKind::domain, "node carries no gradient");
    return *g;
  }

  // Recomputes every non-leaf node from its inputs and compares bit-exactly
  // against the recorded values.
  bool replay_matches() const {
    for (const Node& node : nodes_) {
      if (node.op == OpKind::leaf) continue;
      const std::vector<double> again = compute(node).values;
      if (again.size() != node.value.values.size()) return false;
      for (std::size_t i = 0; i < again.size(); ++i)
        if (std::bit_cast<std::uint64_t>(again[i]) !=
            std::bit_cast<std::uint64_t>(node.value.values[i]))
          return false;
    }
    return true;
  }

 private:
  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    bool needs_grad = false;
    ConvGeometry conv;
    Shape target_shape;
    std::vector<int> labels;
    std::vector<double> targets;
  };

  NodeId push(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }

  NodeId record(OpKind op, std::vector<NodeId> inputs) {
    Node node;
    node.op = op;
    node.inputs = std::move(inputs);
    return finish(std::move(node));
  }

  NodeId finish(Node node) {
    require(!consumed_, ErrorKind::single_use, "cannot record onto a consumed tape");
    for (NodeId in : node.inputs) {
      require(in < nodes_.size(), ErrorKind::alignment, "unknown tape node");
      node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
    }
    node.value = compute(node);
    return push(std::move(node));
  }

  void require_same_shape(NodeId a, NodeId b, const char* what) const {
    require(value(a).shape == value(b).shape, ErrorKind::alignment,
            std::string(what) + " of " + shape_string(value(a).shape) + " and " +
                shape_string(value(b).shape));
  }

  const std::vector<double>& in_values(const Node& node, std::size_t k) const {
    return nodes_[node.inputs[k]].value.values;
  }

  Tensor compute(const Node& node) const {
    switch (node.op) {
      case OpKind::leaf:
        return node.value;
      case OpKind::matmul: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        const Tensor& b = nodes_[node.inputs[1]].value;
        const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
        Tensor out = Tensor::zeros({n, m});
        for (std::size_t i = 0; i < n; ++i) {
          double* row = &out.values[i * m];
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = a.values[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &b.values[p * m];
            for (std::size_t j = 0; j < m; ++j) row[j] += aip * brow[j];
          }
        }
        return out;
      }
      case OpKind::add:
      case OpKind::mul: {
        const auto& a = in_values(node, 0);
        const auto& b = in_values(node, 1);
        Tensor out = Tensor::zeros(nodes_[node.inputs[0]].value.shape);
        for (std::size_t i = 0; i < a.size(); ++i)
          out.values[i] = node.op == OpKind::add ? a[i] + b[i] : a[i] * b[i];
        return out;
      }
      case OpKind::relu: {
        Tensor out = nodes_[node.inputs[0]].value;
        out.grad.reset();
        for (double& x : out.values) x = x > 0.0 ? x : 0.0;
        return out;
      }
      case OpKind::reshape:
        return Tensor(node.target_shape, in_values(node, 0));
      case OpKind::conv2d: {
        const ConvGeometry& g = node.conv;
        const auto& x = in_values(node, 0);
        const auto& k = in_values(node, 1);
        const std::size_t oh = g.out_h(), ow = g.out_w();
        Tensor out = Tensor::zeros({g.batch, g.out_channels, oh, ow});
        for (std::size_t n = 0; n < g.batch; ++n)
          for (std::size_t o = 0; o < g.out_channels; ++o) {
            double* dst = &out.values[((n * g.out_channels + o) * oh) * ow];
            for (std::size_t c = 0; c < g.in_channels; ++c)
              for (std::size_t u = 0; u < g.kernel_h; ++u)
                for (std::size_t v = 0; v < g.kernel_w; ++v) {
                  const double kv =
                      k[((o * g.in_channels + c) * g.kernel_h + u) * g.kernel_w + v];
                  if (kv == 0.0) continue;
                  for (std::size_t i = 0; i < oh; ++i) {
                    const double* src =
                        &x[((n * g.in_channels + c) * g.height + i + u) * g.width + v];
                    for (std::size_t j = 0; j < ow; ++j) dst[i * ow + j] += kv * src[j];
                  }
                }
          }
        return out;
      }
      case OpKind::softmax_cross_entropy: {
        const Tensor& z = nodes_[node.inputs[0]].value;
        const std::size_t n = z.shape[0], c = z.shape[1];
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double* row = &z.values[i * c];
          const double mx = *std::max_element(row, row + c);
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
          total += mx + std::log(s) - row[node.labels[i]];
        }
        return Tensor({1}, {total / static_cast<double>(n)});
      }
      case OpKind::half_squared_error: {
        const Tensor& z = nodes_[node.inputs[0]].value;
        double total = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
          const double d = z.values[i] - node.targets[i];
          total += 0.5 * d * d;
        }
        return Tensor({1}, {total / static_cast<double>(z.shape[0])});
      }
    }
    fail(ErrorKind::domain, "unknown op");
  }

  std::vector<double>* grad_slot(const Node& node, std::size_t k) {
    Node& in = nodes_[node.inputs[k]];
    return in.needs_grad ? &*in.value.grad : nullptr;
  }

  void propagate(const Node& node) {
    const std::vector<double>& up = *node.value.grad;
    switch (node.op) {
      case OpKind::leaf:
        return;
      case OpKind::matmul: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        const Tensor& b = nodes_[node.inputs[1]].value;
        const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
        if (auto* ga = grad_slot(node, 0))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < m; ++j) s += up[i * m + j] * b.values[p * m + j];
              (*ga)[i * k + p] += s;
            }
        if (auto* gb = grad_slot(node, 1))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = a.values[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < m; ++j) (*gb)[p * m + j] += aip * up[i * m + j];
            }
        return;
      }
      case OpKind::add: {
        for (std::size_t k = 0; k < 2; ++k)
          if (auto* g = grad_slot(node, k))
            for (std::size_t i = 0; i < up.size(); ++i) (*g)[i] += up[i];
        return;
      }
      case OpKind::mul: {
        const auto& a = in_values(node, 0);
        const auto& b = in_values(node, 1);
        if (auto* ga = grad_slot(node, 0))
          for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i] * b[i];
        if (auto* gb = grad_slot(node, 1))
          for (std::size_t i = 0; i < up.size(); ++i) (*gb)[i] += up[i] * a[i];
        return;
      }
      case OpKind::relu: {
        const auto& x = in_values(node, 0);
        if (auto* g = grad_slot(node, 0))
          for (std::size_t i = 0; i < up.size(); ++i)
            if (x[i] > 0.0) (*g)[i] += up[i];
        return;
      }
      case OpKind::reshape: {
        if (auto* g = grad_slot(node, 0))
          for (std::size_t i = 0; i < up.size(); ++i) (*g)[i] += up[i];
        return;
      }
      case OpKind::conv2d: {
        const ConvGeometry& g = node.conv;
        const auto& x = in_values(node, 0);
        const auto& k = in_values(node, 1);
        auto* gx = grad_slot(node, 0);
        auto* gk = grad_slot(node, 1);
        const std::size_t oh = g.out_h(), ow = g.out_w();
        for (std::size_t n = 0; n < g.batch; ++n)
          for (std::size_t o = 0; o < g.out_channels; ++o) {
            const double* dout = &up[((n * g.out_channels + o) * oh) * ow];
            for (std::size_t c = 0; c < g.in_channels; ++c)
              for (std::size_t u = 0; u < g.kernel_h; ++u)
                for (std::size_t v = 0; v < g.kernel_w; ++v) {
                  const std::size_t kidx =
                      ((o * g.in_channels + c) * g.kernel_h + u) * g.kernel_w + v;
                  double acc = 0.0;
                  for (std::size_t i = 0; i < oh; ++i) {
                    const std::size_t base =
                        ((n * g.in_channels + c) * g.height + i + u) * g.width + v;
                    for (std::size_t j = 0; j < ow; ++j) {
                      const double d = dout[i * ow + j];
                      acc += d * x[base + j];
                      if (gx) (*gx)[base + j] += d * k[kidx];
                    }
                  }
                  if (gk) (*gk)[kidx] += acc;
                }
          }
        return;
      }
      case OpKind::softmax_cross_entropy: {
        auto* g = grad_slot(node, 0);
        if (!g) return;
        const Tensor& z = nodes_[node.inputs[0]].value;
        const std::size_t n = z.shape[0], c = z.shape[1];
        const double scale = up[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double* row = &z.values[i * c];
          const double mx = *std::max_element(row, row + c);
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
          for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(row[j] - mx) / s;
            const double y = static_cast<std::size_t>(node.labels[i]) == j ? 1.0 : 0.0;
            (*g)[i * c + j] += scale * (p - y);
          }
        }
        return;
      }
      case OpKind::half_squared_error: {
        auto* g = grad_slot(node, 0);
        if (!g) return;
        const Tensor& z = nodes_[node.inputs[0]].value;
        const double scale = up[0] / static_cast<double>(z.shape[0]);
        for (std::size_t i = 0; i < z.size(); ++i)
          (*g)[i] += scale * (z.values[i] - node.targets[i]);
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace prunelab
