// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "rng.hpp"
#include "tensor.hpp"

namespace neurotrails {

enum class LayerKind { linear, conv2d, relu };
enum class Padding { valid, same };

std::string to_string(LayerKind kind);
std::string to_string(Padding padding);

/// Static description of one layer. For linear layers `in`/`out` are fan-in
/// and fan-out; for conv2d they are channel counts and the kernel is
/// kernel_h x kernel_w, stride 1.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  Padding padding = Padding::valid;
  bool has_bias = false;

  static LayerSpec linear(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch,
                          std::size_t kh, std::size_t kw,
                          Padding pad = Padding::valid, bool bias = true);
  static LayerSpec relu();

  bool maskable() const { return kind != LayerKind::relu; }
  std::size_t weight_count() const;
  std::size_t bias_count() const;
  Shape weight_shape() const;

  /// Per-sample output shape (no batch dimension) for a per-sample input.
  Shape output_shape(const Shape &sample_in) const;
  void validate() const;

  friend bool operator==(const LayerSpec &, const LayerSpec &) = default;
};

/// Layer with parameters. Weights of maskable layers carry a mask; biases are
/// always dense.
struct Layer {
  LayerSpec spec;
  MaskedTensor weight;
  Tensor bias;

  /// Kaiming-uniform weights (bound sqrt(6/fan_in)) with an all-ones mask;
  /// bias uniform in +-1/sqrt(fan_in).
  static Layer init(const LayerSpec &spec, Rng &rng);
  std::size_t fan_in() const;
};

/// Gradients of one layer, shaped like its parameters.
struct LayerGrad {
  Tensor weight;
  Tensor bias;
};

/// Forward kernel shared by the f32 training path and the f64 oracle path.
/// `w` and `b` may be empty for parameterless layers.
template <class T>
BasicTensor<T> layer_forward(const LayerSpec &spec, std::span<const T> w,
                             std::span<const T> b, const BasicTensor<T> &x);

inline Tensor layer_forward(const Layer &layer, const Tensor &x) {
  return layer_forward<float>(layer.spec, layer.weight.values.data(),
                              layer.bias.data(), x);
}

/// Backward kernel. Accumulates dense dL/dW and dL/db into `grad` and returns
/// dL/dx.
Tensor layer_backward(const Layer &layer, const Tensor &x, const Tensor &dy,
                      LayerGrad &grad);

extern template TensorF64 layer_forward<double>(const LayerSpec &,
                                                std::span<const double>,
                                                std::span<const double>,
                                                const TensorF64 &);
extern template Tensor layer_forward<float>(const LayerSpec &,
                                            std::span<const float>,
                                            std::span<const float>,
                                            const Tensor &);

} // namespace neurotrails
