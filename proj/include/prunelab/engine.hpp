#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

enum class LossHead {
  softmax_cross_entropy,
  // Regression test head: the single network output is fitted to the
  // numeric label value.
  half_squared_error,
};

struct ForwardPass {
  double loss = 0.0;
  ComputationTape tape;
  std::vector<NodeId> weight_nodes;
  NodeId loss_node = 0;
};

namespace detail {

inline ForwardPass record_loss(const LayeredParams& params, const Mask& mask,
                               const Dataset& batch, LossHead head) {
  require(!batch.empty(), ErrorKind::domain, "forward_loss on an empty batch");
  for (int y : batch.labels)
    require(y >= 0 && y < batch.class_count, ErrorKind::domain, "label outside class range");
  ForwardPass pass;
  const NetworkGraph g = record_network(pass.tape, params, mask, batch, true);
  pass.weight_nodes = g.weight_nodes;
  if (head == LossHead::softmax_cross_entropy) {
    pass.loss_node = pass.tape.softmax_cross_entropy(g.logits, batch.labels);
  } else {
    require(pass.tape.value(g.logits).shape[1] == 1, ErrorKind::alignment,
            "squared-error head needs a single output");
    std::vector<double> targets(batch.labels.begin(), batch.labels.end());
    pass.loss_node = pass.tape.half_squared_error(g.logits, std::move(targets));
  }
  pass.loss = pass.tape.value(pass.loss_node).values[0];
  return pass;
}

}  // namespace detail

// Mean batch loss of the masked network, with the tape for one backward pass.
inline ForwardPass forward_loss(const LayeredParams& params, const Mask& mask,
                                const Dataset& batch,
                                LossHead head = LossHead::softmax_cross_entropy) {
  ForwardPass pass = detail::record_loss(params, mask, batch, head);
  require(std::isfinite(pass.loss), ErrorKind::domain, "non-finite loss");
  return pass;
}

// Gradient of the masked loss with respect to the raw weights w_l.
inline LayerVectors backward(ForwardPass& pass) {
  pass.tape.backward(pass.loss_node);
  LayerVectors grads;
  for (NodeId w : pass.weight_nodes) {
    auto g = pass.tape.grad(w);
    grads.emplace_back(g.begin(), g.end());
  }
  return grads;
}

inline LayerVectors loss_gradient(const LayeredParams& params, const Mask& mask,
                                  const Dataset& batch,
                                  LossHead head = LossHead::softmax_cross_entropy) {
  ForwardPass pass = forward_loss(params, mask, batch, head);
  return backward(pass);
}

using LossFn = std::function<double(const LayerVectors&)>;
using GradientFn = std::function<LayerVectors(const LayerVectors&)>;

// Central differences (L(w + eps e_j) - L(w - eps e_j)) / 2 eps per coordinate.
inline LayerVectors finite_diff_gradient(const LossFn& loss, LayerVectors w, double epsilon) {
  require(epsilon > 0.0, ErrorKind::domain, "finite-difference step must be positive");
  LayerVectors grad;
  for (std::size_t l = 0; l < w.size(); ++l) {
    grad.emplace_back(w[l].size(), 0.0);
    for (std::size_t j = 0; j < w[l].size(); ++j) {
      const double orig = w[l][j];
      w[l][j] = orig + epsilon;
      const double up = loss(w);
      w[l][j] = orig - epsilon;
      const double down = loss(w);
      w[l][j] = orig;
      require(std::isfinite(up) && std::isfinite(down), ErrorKind::oracle_failure,
              "non-finite loss at perturbed coordinate " + std::to_string(j) + " of layer " +
                  std::to_string(l));
      grad[l][j] = (up - down) / (2.0 * epsilon);
    }
  }
  return grad;
}

inline std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& loss,
                                                std::vector<double> w, double epsilon) {
  LayerVectors g = finite_diff_gradient(
      [&](const LayerVectors& v) { return loss(v.front()); }, LayerVectors{std::move(w)}, epsilon);
  return std::move(g.front());
}

inline double norm2(const LayerVectors& v) {
  double s = 0.0;
  for (const auto& l : v)
    for (double x : l) s += x * x;
  return std::sqrt(s);
}

inline constexpr double kMinDirectionNorm = 1e-12;

// H v from central differences of gradients along the unit direction v/|v|,
// rescaled by |v|. Exact (up to rounding) when the loss is quadratic.
inline LayerVectors hessian_vector_product(const GradientFn& gradient, const LayerVectors& w,
                                           const LayerVectors& v, double epsilon) {
  require(epsilon > 0.0, ErrorKind::domain, "HVP step must be positive");
  require(layer_lengths(v) == layer_lengths(w), ErrorKind::alignment,
          "HVP direction does not match parameters");
  const double vnorm = norm2(v);
  require(std::isfinite(vnorm) && vnorm >= kMinDirectionNorm, ErrorKind::domain,
          "HVP direction has (near) zero norm");
  LayerVectors plus = w, minus = w;
  bool moved = false;
  for (std::size_t l = 0; l < w.size(); ++l)
    for (std::size_t j = 0; j < w[l].size(); ++j) {
      const double step = epsilon * v[l][j] / vnorm;
      plus[l][j] = w[l][j] + step;
      minus[l][j] = w[l][j] - step;
      moved = moved || plus[l][j] != minus[l][j];
    }
  require(moved, ErrorKind::degenerate_step, "HVP perturbation underflows the parameters");
  const LayerVectors gp = gradient(plus);
  const LayerVectors gm = gradient(minus);
  LayerVectors hv;
  for (std::size_t l = 0; l < w.size(); ++l) {
    hv.emplace_back(w[l].size());
    for (std::size_t j = 0; j < w[l].size(); ++j)
      hv[l][j] = (gp[l][j] - gm[l][j]) / (2.0 * epsilon) * vnorm;
  }
  return hv;
}

inline LayerVectors hessian_vector_product(const LayeredParams& params, const Mask& mask,
                                           const Dataset& batch, const LayerVectors& v,
                                           double epsilon,
                                           LossHead head = LossHead::softmax_cross_entropy) {
  LayeredParams probe = params;
  return hessian_vector_product(
      [&](const LayerVectors& w) {
        probe.weights = w;
        return loss_gradient(probe, mask, batch, head);
      },
      params.weights, v, epsilon);
}

}  // namespace prunelab
