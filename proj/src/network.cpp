// SPDX-License-Identifier: Apache-2.0
#include "network.hpp"

#include "error.hpp"

namespace neurotrails {

bool GradientSet::all_finite() const {
  for (const auto &g : layers)
    if (!g.weight.all_finite() || !g.bias.all_finite())
      return false;
  return true;
}

Network Network::init(const std::vector<LayerSpec> &specs, Rng &rng) {
  std::vector<Layer> layers;
  layers.reserve(specs.size());
  for (const auto &s : specs)
    layers.push_back(Layer::init(s, rng));
  return Network(std::move(layers));
}

Tensor Network::forward(const Tensor &x, Tape *tape) const {
  if (tape) {
    tape->inputs.clear();
    tape->inputs.reserve(layers_.size());
  }
  Tensor h = x;
  for (const auto &layer : layers_) {
    Tensor next = layer_forward(layer, h);
    if (tape)
      tape->inputs.push_back(std::move(h));
    h = std::move(next);
  }
  if (tape)
    tape->recorded = true;
  return h;
}

Tensor Network::backward(const Tape &tape, const Tensor &dy,
                         GradientSet &grads) const {
  if (!tape.recorded || tape.inputs.size() != layers_.size())
    fail("backward called without a recorded forward pass");
  if (grads.layers.size() != layers_.size())
    fail("gradient set has " + std::to_string(grads.layers.size()) +
         " layers, network has " + std::to_string(layers_.size()));
  Tensor d = dy;
  for (std::size_t i = layers_.size(); i-- > 0;)
    d = layer_backward(layers_[i], tape.inputs[i], d, grads.layers[i]);
  return d;
}

GradientSet Network::zero_grads() const {
  GradientSet g;
  g.layers.reserve(layers_.size());
  for (const auto &layer : layers_) {
    LayerGrad lg;
    if (layer.spec.maskable()) {
      lg.weight = Tensor(layer.spec.weight_shape());
      lg.bias = Tensor({layer.spec.bias_count()});
    }
    g.layers.push_back(std::move(lg));
  }
  return g;
}

void Network::mask_gradients(GradientSet &grads) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!layers_[i].spec.maskable())
      continue;
    const Mask &m = layers_[i].weight.mask;
    auto g = grads.layers[i].weight.data();
    for (std::size_t j = 0; j < g.size(); ++j)
      if (!m[j])
        g[j] = 0.0f;
  }
  grads.dense = false;
}

Shape Network::output_shape(const Shape &sample_in) const {
  Shape s = sample_in;
  for (const auto &layer : layers_)
    s = layer.spec.output_shape(s);
  return s;
}

std::size_t Network::maskable_params() const {
  std::size_t n = 0;
  for (const auto &layer : layers_)
    n += layer.spec.weight_count();
  return n;
}

std::size_t Network::active_params() const {
  std::size_t n = 0;
  for (const auto &layer : layers_)
    if (layer.spec.maskable())
      n += layer.weight.active();
  return n;
}

NetworkStep network_loss_and_grad(const Network &net, const Tensor &x,
                                  std::span<const std::int32_t> targets,
                                  bool dense) {
  Tape tape;
  const Tensor logits = net.forward(x, &tape);
  LossResult lr = cross_entropy(logits, targets);
  GradientSet grads = net.zero_grads();
  net.backward(tape, cross_entropy_grad(lr.probs, targets), grads);
  if (dense)
    grads.dense = true;
  else
    net.mask_gradients(grads);
  return {lr.loss, std::move(lr.probs), std::move(grads)};
}

} // namespace neurotrails
