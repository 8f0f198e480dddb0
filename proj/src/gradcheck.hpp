// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "network.hpp"

namespace neurotrails {

/// Double-precision copy of a network's parameters, used by the
/// finite-difference oracle.
struct LayerParamsF64 {
  std::vector<double> weight;
  std::vector<double> bias;
};
using NetworkParamsF64 = std::vector<LayerParamsF64>;

NetworkParamsF64 to_f64(const Network &net);

/// Runs `net`'s layer structure on `params` entirely in double precision.
TensorF64 forward_f64(const Network &net, const NetworkParamsF64 &params,
                      TensorF64 x);

using LossF64 = std::function<double(const std::vector<NetworkParamsF64> &)>;

/// Central differences (L(t+eps) - L(t-eps)) / 2eps for every active weight
/// and every bias of each network in `nets`. Masked-out positions are left 0.
std::vector<GradientSet>
finite_difference(const std::vector<const Network *> &nets, const LossF64 &loss,
                  double eps);

/// Finite-difference gradient of mean cross-entropy for a single network.
GradientSet finite_difference_gradient(const Network &net, const Tensor &x,
                                       std::span<const std::int32_t> targets,
                                       double eps = 1e-3);

/// Largest elementwise |a-b| / max(|a|, |b|, floor) over active weights and
/// biases.
double max_relative_error(const Network &net, const GradientSet &a,
                          const GradientSet &b, double floor = 1e-6);

} // namespace neurotrails
