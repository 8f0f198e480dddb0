// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "network.hpp"

namespace neurotrails {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double momentum = 0.9;     // sgd
  double weight_decay = 0.0; // sgd, L2 added to the gradient
  double beta1 = 0.9;        // adam
  double beta2 = 0.999;      // adam
  double epsilon = 1e-8;     // adam

  void validate() const;
};

enum class ScheduleKind { constant, step, cosine };

/// Learning-rate schedule over optimizer steps [0, total].
struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  std::vector<double> milestones{0.25, 0.5, 0.75}; // fractions of total
  double factor = 0.1;
  double warmup_fraction = 0.1;
  double min_fraction = 0.1;

  void validate() const;
};

/// Learning rate at step t of `total`.
///   step:   base * factor^(milestones passed), a milestone m is passed once
///           t >= m * total
///   cosine: linear 0 -> base over the warmup steps, then cosine from base
///           down to min_fraction * base at t = total
double lr_at(std::size_t t, std::size_t total, double base,
             const LrSchedule &schedule);

/// Per-layer optimizer buffers. `first` is SGD velocity or Adam's first
/// moment; `second` is Adam's second moment (empty for SGD).
struct LayerOptState {
  Tensor first_w, second_w;
  Tensor first_b, second_b;
};

struct OptimizerState {
  std::vector<LayerOptState> layers;
  std::uint64_t steps = 0;

  static OptimizerState zeros(const Network &net, OptimizerKind kind);
  /// Zeroes weight-buffer entries at `positions` of layer `layer`.
  void reset(std::size_t layer, const std::vector<std::size_t> &positions);
};

/// One masked update. Gradients at masked-out positions are ignored, and
/// after the step every masked-out weight and state entry is exactly 0.
/// Throws a divergence error on non-finite gradients.
void optimizer_step(Network &net, const GradientSet &grads,
                    OptimizerState &state, const OptimizerConfig &config,
                    double lr);

} // namespace neurotrails
