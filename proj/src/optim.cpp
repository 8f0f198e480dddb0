// SPDX-License-Identifier: Apache-2.0
#include "optim.hpp"

#include <cmath>
#include <numbers>

#include "error.hpp"

namespace neurotrails {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0))
    fail_validation("optimizer.lr: must be > 0");
  if (kind == OptimizerKind::sgd) {
    if (!(momentum >= 0.0 && momentum < 1.0))
      fail_validation("optimizer.momentum: must be in [0, 1)");
    if (!(weight_decay >= 0.0))
      fail_validation("optimizer.weight_decay: must be >= 0");
  } else {
    if (!(beta1 >= 0.0 && beta1 < 1.0))
      fail_validation("optimizer.beta1: must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0))
      fail_validation("optimizer.beta2: must be in [0, 1)");
    if (!(epsilon >= 0.0))
      fail_validation("optimizer.epsilon: must be >= 0");
  }
}

void LrSchedule::validate() const {
  if (kind == ScheduleKind::step) {
    double prev = 0.0;
    for (double m : milestones) {
      if (!(m > 0.0 && m < 1.0))
        fail_validation("schedule.milestones: each must be in (0, 1)");
      if (m <= prev && prev != 0.0)
        fail_validation("schedule.milestones: must be strictly increasing");
      prev = m;
    }
    if (!(factor > 0.0))
      fail_validation("schedule.factor: must be > 0");
  } else if (kind == ScheduleKind::cosine) {
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
      fail_validation("schedule.warmup_fraction: must be in [0, 1)");
    if (!(min_fraction >= 0.0 && min_fraction <= 1.0))
      fail_validation("schedule.min_fraction: must be in [0, 1]");
  }
}

double lr_at(std::size_t t, std::size_t total, double base,
             const LrSchedule &schedule) {
  if (t > total)
    fail("lr_at: step " + std::to_string(t) + " beyond horizon " +
         std::to_string(total));
  const double td = static_cast<double>(t);
  const double T = static_cast<double>(total);
  switch (schedule.kind) {
  case ScheduleKind::constant:
    return base;
  case ScheduleKind::step: {
    double lr = base;
    for (double m : schedule.milestones)
      if (td >= m * T)
        lr *= schedule.factor;
    return lr;
  }
  case ScheduleKind::cosine: {
    const double warm = std::floor(schedule.warmup_fraction * T);
    if (td < warm)
      return base * td / warm;
    const double span = T - warm;
    const double progress = span > 0.0 ? (td - warm) / span : 1.0;
    const double lo = schedule.min_fraction * base;
    return lo + (base - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  }
  return base;
}

OptimizerState OptimizerState::zeros(const Network &net, OptimizerKind kind) {
  OptimizerState s;
  for (const auto &layer : net.layers()) {
    LayerOptState ls;
    if (layer.spec.maskable()) {
      ls.first_w = Tensor(layer.spec.weight_shape());
      ls.first_b = Tensor({layer.spec.bias_count()});
      if (kind == OptimizerKind::adam) {
        ls.second_w = Tensor(layer.spec.weight_shape());
        ls.second_b = Tensor({layer.spec.bias_count()});
      }
    }
    s.layers.push_back(std::move(ls));
  }
  return s;
}

void OptimizerState::reset(std::size_t layer,
                           const std::vector<std::size_t> &positions) {
  LayerOptState &ls = layers.at(layer);
  for (std::size_t p : positions) {
    ls.first_w[p] = 0.0f;
    if (!ls.second_w.empty())
      ls.second_w[p] = 0.0f;
  }
}

void optimizer_step(Network &net, const GradientSet &grads,
                    OptimizerState &state, const OptimizerConfig &config,
                    double lr) {
  if (grads.layers.size() != net.size() || state.layers.size() != net.size())
    fail("optimizer_step: gradient/state layout does not match network");
  if (!grads.all_finite())
    fail_divergence("non-finite gradient at optimizer step " +
                    std::to_string(state.steps + 1));
  ++state.steps;
  const double bc1 =
      1.0 - std::pow(config.beta1, static_cast<double>(state.steps));
  const double bc2 =
      1.0 - std::pow(config.beta2, static_cast<double>(state.steps));

  auto update = [&](float &theta, float g, float &m1, float *m2) {
    if (config.kind == OptimizerKind::sgd) {
      const double gd = static_cast<double>(g) +
                        config.weight_decay * static_cast<double>(theta);
      const double v = config.momentum * m1 + gd;
      m1 = static_cast<float>(v);
      theta = static_cast<float>(theta - lr * v);
    } else {
      const double a = config.beta1 * m1 + (1.0 - config.beta1) * g;
      const double b = config.beta2 * *m2 + (1.0 - config.beta2) * g * g;
      m1 = static_cast<float>(a);
      *m2 = static_cast<float>(b);
      const double mh = a / bc1;
      const double vh = b / bc2;
      theta = static_cast<float>(theta - lr * mh / (std::sqrt(vh) + config.epsilon));
    }
  };

  for (std::size_t l = 0; l < net.size(); ++l) {
    Layer &layer = net.layers()[l];
    if (!layer.spec.maskable())
      continue;
    LayerOptState &ls = state.layers[l];
    const LayerGrad &g = grads.layers[l];
    const bool adam = config.kind == OptimizerKind::adam;
    auto w = layer.weight.values.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!layer.weight.mask[j]) {
        w[j] = 0.0f;
        ls.first_w[j] = 0.0f;
        if (adam)
          ls.second_w[j] = 0.0f;
        continue;
      }
      update(w[j], g.weight[j], ls.first_w[j], adam ? &ls.second_w[j] : nullptr);
    }
    for (std::size_t j = 0; j < layer.bias.size(); ++j)
      update(layer.bias[j], g.bias[j], ls.first_b[j],
             adam ? &ls.second_b[j] : nullptr);
  }
}

} // namespace neurotrails
