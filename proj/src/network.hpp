// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "layers.hpp"
#include "loss.hpp"

namespace neurotrails {

/// Per-layer gradients for a Network. `dense` records whether masked-out
/// weight positions hold their true dL/dtheta (RigL regrowth) or were zeroed
/// to the active-set view.
struct GradientSet {
  std::vector<LayerGrad> layers;
  bool dense = false;

  bool all_finite() const;
};

/// Activations recorded during a forward pass, consumed by backward.
struct Tape {
  std::vector<Tensor> inputs;
  bool recorded = false;
};

/// Ordered stack of layers evaluated front to back.
class Network {
public:
  Network() = default;
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  /// Initializes every layer from `specs`, drawing weights from `rng`.
  static Network init(const std::vector<LayerSpec> &specs, Rng &rng);

  Tensor forward(const Tensor &x, Tape *tape = nullptr) const;
  /// Backpropagates `dy` through the recorded pass, accumulating into
  /// `grads` (which must come from zero_grads()). Returns dL/dx.
  Tensor backward(const Tape &tape, const Tensor &dy, GradientSet &grads) const;

  GradientSet zero_grads() const;

  /// Zeroes gradient entries at masked-out weight positions.
  void mask_gradients(GradientSet &grads) const;

  std::vector<Layer> &layers() { return layers_; }
  const std::vector<Layer> &layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  Shape output_shape(const Shape &sample_in) const;
  std::size_t maskable_params() const;
  std::size_t active_params() const;

private:
  std::vector<Layer> layers_;
};

/// Forward + backward + loss for one plain network. `dense` keeps gradients
/// at masked-out positions.
struct NetworkStep {
  double loss;
  Tensor probs;
  GradientSet grads;
};
NetworkStep network_loss_and_grad(const Network &net, const Tensor &x,
                                  std::span<const std::int32_t> targets,
                                  bool dense = false);

} // namespace neurotrails
