// SPDX-License-Identifier: Apache-2.0
#include "topology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "error.hpp"
#include "sparsity.hpp"

namespace neurotrails {

std::string to_string(Strategy s) {
  switch (s) {
  case Strategy::static_sparse:
    return "static";
  case Strategy::prune_oneshot:
    return "prune_oneshot";
  case Strategy::set:
    return "set";
  case Strategy::rigl:
    return "rigl";
  }
  return "?";
}

std::string to_string(PruneMethod m) {
  return m == PruneMethod::soft_magnitude ? "soft_magnitude" : "magnitude";
}

Strategy parse_strategy(const std::string &name) {
  if (name == "static")
    return Strategy::static_sparse;
  if (name == "prune_oneshot")
    return Strategy::prune_oneshot;
  if (name == "set")
    return Strategy::set;
  if (name == "rigl")
    return Strategy::rigl;
  fail("unknown strategy '" + name +
       "' (expected static, prune_oneshot, set, rigl)");
}

PruneMethod parse_prune_method(const std::string &name) {
  if (name == "magnitude")
    return PruneMethod::magnitude;
  if (name == "soft_magnitude")
    return PruneMethod::soft_magnitude;
  fail("unknown prune method '" + name +
       "' (expected magnitude, soft_magnitude)");
}

void TopologySchedule::validate() const {
  if (update_interval < 1)
    fail_validation("topology.update_interval: must be >= 1");
  if (!(initial_drop > 0.0 && initial_drop <= 1.0))
    fail_validation("topology.initial_drop_fraction: must be in (0, 1]");
  if (prune == PruneMethod::soft_magnitude && !(temperature > 0.0))
    fail_validation("topology.temperature: must be > 0");
  if (!(stop_fraction >= 0.0 && stop_fraction < 1.0))
    fail_validation("topology.stop_fraction: must be in [0, 1)");
  if (strategy == Strategy::prune_oneshot &&
      !(pre_pruning_fraction > 0.0 && pre_pruning_fraction < 1.0))
    fail_validation("topology.pre_pruning_fraction: must be in (0, 1)");
}

bool TopologySchedule::is_update_step(std::size_t t) const {
  if (!dynamic() || t == 0 || t >= horizon || t % update_interval != 0)
    return false;
  return static_cast<double>(t) <=
         (1.0 - stop_fraction) * static_cast<double>(horizon);
}

std::size_t TopologySchedule::prune_step() const {
  return static_cast<std::size_t>(
      std::floor(pre_pruning_fraction * static_cast<double>(horizon)));
}

double drop_fraction(std::size_t t, std::size_t horizon, double initial) {
  if (t > horizon)
    fail("drop_fraction: step " + std::to_string(t) + " beyond horizon " +
         std::to_string(horizon));
  if (horizon == 0)
    return initial;
  const double x = static_cast<double>(t) / static_cast<double>(horizon);
  return initial * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

namespace {

std::vector<std::size_t> positions_where(const Mask &mask, bool active) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if ((mask[i] != 0) == active)
      out.push_back(i);
  return out;
}

/// Indices of the k largest keys; ties go to the lower position.
std::vector<std::size_t> top_k(const std::vector<std::size_t> &candidates,
                               const std::vector<double> &keys, std::size_t k) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(candidates[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

std::vector<std::size_t> select_prune(const MaskedTensor &w, std::size_t k,
                                      PruneMethod method, double temperature,
                                      bool normalize_by_mean, Rng &rng) {
  const std::vector<std::size_t> active = positions_where(w.mask, true);
  if (k > active.size())
    fail("select_prune: k=" + std::to_string(k) + " exceeds active count " +
         std::to_string(active.size()));
  if (k == 0)
    return {};
  std::vector<double> keys(active.size());
  if (method == PruneMethod::magnitude) {
    for (std::size_t i = 0; i < active.size(); ++i)
      keys[i] = -std::abs(static_cast<double>(w.values[active[i]]));
    return top_k(active, keys, k);
  }
  if (!(temperature > 0.0))
    fail("select_prune: soft magnitude temperature must be > 0");
  double mu = 1.0;
  if (normalize_by_mean) {
    double s = 0.0;
    for (std::size_t i : active)
      s += std::abs(static_cast<double>(w.values[i]));
    mu = s / static_cast<double>(active.size());
  }
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double logw =
        mu > 0.0 ? -std::abs(static_cast<double>(w.values[active[i]])) /
                       (temperature * mu)
                 : 0.0;
    keys[i] = logw - std::log(-std::log(rng.uniform_open()));
  }
  return top_k(active, keys, k);
}

std::vector<std::size_t> select_grow(const Mask &mask, std::size_t k,
                                     GrowMethod method,
                                     const Tensor *dense_grads, Rng &rng) {
  std::vector<std::size_t> inactive = positions_where(mask, false);
  if (k > inactive.size())
    fail("select_grow: k=" + std::to_string(k) + " exceeds inactive count " +
         std::to_string(inactive.size()));
  if (method == GrowMethod::gradient) {
    if (!dense_grads)
      fail("select_grow: gradient growth requires dense gradients");
    if (dense_grads->size() != mask.size())
      fail("select_grow: gradient length " + std::to_string(dense_grads->size()) +
           " does not match mask " + std::to_string(mask.size()));
  }
  if (k == 0)
    return {};
  if (method == GrowMethod::gradient) {
    std::vector<double> keys(inactive.size());
    for (std::size_t i = 0; i < inactive.size(); ++i)
      keys[i] = std::abs(static_cast<double>((*dense_grads)[inactive[i]]));
    return top_k(inactive, keys, k);
  }
  for (std::size_t i = 0; i < k; ++i)
    std::swap(inactive[i], inactive[i + rng.below(inactive.size() - i)]);
  inactive.resize(k);
  std::sort(inactive.begin(), inactive.end());
  return inactive;
}

UpdateRecord topology_update(Network &net, OptimizerState *state,
                             const GradientSet *dense_grads,
                             const TopologySchedule &schedule, std::size_t t,
                             Rng &rng) {
  if (!schedule.dynamic())
    fail("topology_update requires strategy set or rigl, got " +
         to_string(schedule.strategy));
  if (schedule.update_interval == 0 || t % schedule.update_interval != 0)
    fail("topology_update called off-schedule at step " + std::to_string(t) +
         " (interval " + std::to_string(schedule.update_interval) + ")");
  const GrowMethod grow = schedule.grow();
  if (grow == GrowMethod::gradient && (!dense_grads || !dense_grads->dense))
    fail("RigL topology update needs dense gradients");

  UpdateRecord rec;
  rec.step = t;
  rec.drop_fraction = drop_fraction(t, schedule.horizon, schedule.initial_drop);
  for (std::size_t l = 0; l < net.size(); ++l) {
    Layer &layer = net.layers()[l];
    if (!layer.spec.maskable())
      continue;
    LayerUpdate up;
    up.layer = l;
    up.active_before = layer.weight.active();
    std::size_t k = static_cast<std::size_t>(
        std::floor(rec.drop_fraction * static_cast<double>(up.active_before) + 0.5));
    k = std::min(k, up.active_before);
    up.pruned = select_prune(layer.weight, k, schedule.prune,
                             schedule.temperature, schedule.normalize_by_mean,
                             rng);
    for (std::size_t p : up.pruned) {
      layer.weight.mask[p] = 0;
      layer.weight.values[p] = 0.0f;
    }
    const std::size_t inactive = layer.weight.size() - layer.weight.active();
    up.grown = select_grow(layer.weight.mask, std::min(k, inactive), grow,
                           dense_grads ? &dense_grads->layers[l].weight : nullptr,
                           rng);
    for (std::size_t g : up.grown) {
      layer.weight.mask[g] = 1;
      layer.weight.values[g] = 0.0f;
    }
    if (state) {
      state->reset(l, up.pruned);
      state->reset(l, up.grown);
    }
    up.active_after = layer.weight.active();
    rec.layers.push_back(std::move(up));
  }
  return rec;
}

std::vector<std::vector<Mask>>
one_shot_global_prune(const std::vector<const Network *> &nets,
                      double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    fail("one_shot_global_prune: sparsity must be in [0, 1), got " +
         std::to_string(sparsity));
  struct Entry {
    float mag;
    std::size_t net, layer, index;
  };
  std::vector<Entry> all;
  std::vector<std::vector<Mask>> out(nets.size());
  for (std::size_t n = 0; n < nets.size(); ++n) {
    std::size_t maskable = 0;
    for (std::size_t l = 0; l < nets[n]->size(); ++l) {
      const Layer &layer = nets[n]->layers()[l];
      if (!layer.spec.maskable())
        continue;
      for (std::size_t j = 0; j < layer.weight.size(); ++j)
        all.push_back({std::abs(layer.weight.values[j]), n, maskable, j});
      out[n].emplace_back(layer.weight.size(), 0);
      ++maskable;
    }
  }
  const std::size_t keep = global_budget(sparsity, all.size());
  // `all` is already in ascending (net, layer, index) order; a stable sort on
  // magnitude alone keeps that order among ties.
  std::stable_sort(all.begin(), all.end(),
                   [](const Entry &a, const Entry &b) { return a.mag > b.mag; });
  for (std::size_t i = 0; i < keep; ++i)
    out[all[i].net][all[i].layer][all[i].index] = 1;
  return out;
}

void apply_masks(Network &net, const std::vector<Mask> &masks,
                 OptimizerState *state) {
  std::size_t k = 0;
  for (std::size_t l = 0; l < net.size(); ++l) {
    Layer &layer = net.layers()[l];
    if (!layer.spec.maskable())
      continue;
    if (k >= masks.size() || masks[k].size() != layer.weight.size())
      fail("apply_masks: mask list does not match network layout");
    std::vector<std::size_t> cleared;
    for (std::size_t j = 0; j < layer.weight.size(); ++j) {
      if (!masks[k][j] && layer.weight.mask[j])
        cleared.push_back(j);
    }
    layer.weight.mask = masks[k];
    layer.weight.apply_mask();
    if (state)
      state->reset(l, cleared);
    ++k;
  }
  if (k != masks.size())
    fail("apply_masks: mask list does not match network layout");
}

} // namespace neurotrails
