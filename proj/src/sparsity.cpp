// SPDX-License-Identifier: Apache-2.0
#include "sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "rng.hpp"

namespace neurotrails {

std::string to_string(Allocation mode) {
  switch (mode) {
  case Allocation::uniform:
    return "uniform";
  case Allocation::er:
    return "er";
  case Allocation::erk:
    return "erk";
  }
  return "?";
}

Allocation parse_allocation(const std::string &name) {
  if (name == "uniform")
    return Allocation::uniform;
  if (name == "er")
    return Allocation::er;
  if (name == "erk")
    return Allocation::erk;
  fail("unknown allocation mode '" + name + "' (expected uniform, er, erk)");
}

std::size_t SparsityPlan::total_size() const {
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
}

std::size_t SparsityPlan::total_budget() const {
  return std::accumulate(budgets.begin(), budgets.end(), std::size_t{0});
}

double sparsity_ratio(std::span<const std::uint8_t> mask) {
  if (mask.empty())
    fail("sparsity_ratio of an empty mask");
  return 1.0 - static_cast<double>(count_active(mask)) /
                   static_cast<double>(mask.size());
}

double er_factor(const LayerSpec &spec, Allocation mode) {
  const double in = static_cast<double>(spec.in);
  const double out = static_cast<double>(spec.out);
  if (spec.kind == LayerKind::conv2d && mode == Allocation::erk) {
    const double kh = static_cast<double>(spec.kernel_h);
    const double kw = static_cast<double>(spec.kernel_w);
    return (in + out + kw + kh) / (in * out * kw * kh);
  }
  return (in + out) / (in * out);
}

std::size_t global_budget(double sparsity, std::size_t total) {
  return static_cast<std::size_t>(
      std::floor((1.0 - sparsity) * static_cast<double>(total) + 0.5));
}

namespace {

/// Largest-remainder rounding of real budgets to integers summing to target.
std::vector<std::size_t> round_budgets(const std::vector<double> &real,
                                       const std::vector<std::size_t> &cap,
                                       std::size_t target) {
  const std::size_t n = real.size();
  std::vector<std::size_t> out(n);
  std::vector<double> frac(n);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::clamp(real[i], 0.0, static_cast<double>(cap[i]));
    out[i] = static_cast<std::size_t>(std::floor(r));
    frac[i] = r - static_cast<double>(out[i]);
    sum += out[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (sum < target) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return frac[a] > frac[b];
    });
    // More than one pass only happens when floating error pushed every
    // fraction to ~0.
    while (sum < target) {
      bool moved = false;
      for (std::size_t i : order) {
        if (sum == target)
          break;
        if (out[i] < cap[i]) {
          ++out[i];
          ++sum;
          moved = true;
        }
      }
      if (!moved)
        fail("sparsity budget " + std::to_string(target) +
             " exceeds layer capacity");
    }
  } else if (sum > target) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return frac[a] < frac[b];
    });
    while (sum > target) {
      for (std::size_t i : order) {
        if (sum == target)
          break;
        if (out[i] > 0) {
          --out[i];
          --sum;
        }
      }
    }
  }
  return out;
}

} // namespace

SparsityPlan allocate(const std::vector<LayerSpec> &layers, double sparsity,
                      Allocation mode) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    fail("sparsity must be in [0, 1), got " + std::to_string(sparsity));
  SparsityPlan plan;
  plan.sparsity = sparsity;
  plan.mode = mode;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (!layers[i].maskable())
      continue;
    plan.layer_index.push_back(i);
    plan.sizes.push_back(layers[i].weight_count());
  }
  if (plan.sizes.empty())
    fail("allocation needs at least one maskable layer");

  const std::size_t n = plan.sizes.size();
  const double total = static_cast<double>(plan.total_size());
  const double target_real = (1.0 - sparsity) * total;
  plan.densities.assign(n, 1.0 - sparsity);

  if (mode != Allocation::uniform) {
    std::vector<double> factor(n);
    for (std::size_t k = 0; k < n; ++k)
      factor[k] = er_factor(layers[plan.layer_index[k]], mode);
    std::vector<bool> pinned(n, false);
    double eps = 0.0;
    for (;;) {
      ++plan.solves;
      double dense_sum = 0.0, denom = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (pinned[k])
          dense_sum += static_cast<double>(plan.sizes[k]);
        else
          denom += factor[k] * static_cast<double>(plan.sizes[k]);
      }
      if (denom == 0.0) {
        if (dense_sum + 0.5 < target_real)
          fail("infeasible allocation: every layer pinned dense yet budget "
               "unmet");
        break;
      }
      eps = (target_real - dense_sum) / denom;
      bool changed = false;
      for (std::size_t k = 0; k < n; ++k) {
        if (!pinned[k] && eps * factor[k] >= 1.0) {
          pinned[k] = true;
          changed = true;
        }
      }
      if (!changed)
        break;
    }
    plan.epsilon = eps;
    for (std::size_t k = 0; k < n; ++k)
      plan.densities[k] = pinned[k] ? 1.0 : std::min(1.0, eps * factor[k]);
  }

  std::vector<double> real(n);
  for (std::size_t k = 0; k < n; ++k)
    real[k] = plan.densities[k] * static_cast<double>(plan.sizes[k]);
  plan.budgets =
      round_budgets(real, plan.sizes, global_budget(sparsity, plan.total_size()));
  return plan;
}

std::vector<Mask> init_masks(const SparsityPlan &plan, const MaskSeed &seed) {
  if (plan.budgets.size() != plan.sizes.size())
    fail("sparsity plan has mismatched budgets and sizes");
  std::vector<Mask> masks;
  masks.reserve(plan.sizes.size());
  for (std::size_t k = 0; k < plan.sizes.size(); ++k) {
    const std::size_t size = plan.sizes[k];
    const std::size_t budget = plan.budgets[k];
    if (budget > size)
      fail("layer " + std::to_string(plan.layer_index[k]) + " budget " +
           std::to_string(budget) + " exceeds its size " +
           std::to_string(size));
    Rng rng = Rng::stream(seed.seed, stream::mask_init, seed.component,
                          plan.layer_index[k]);
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < budget; ++i)
      std::swap(idx[i], idx[i + rng.below(size - i)]);
    Mask m(size, 0);
    for (std::size_t i = 0; i < budget; ++i)
      m[idx[i]] = 1;
    masks.push_back(std::move(m));
  }
  return masks;
}

} // namespace neurotrails
