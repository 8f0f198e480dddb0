// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layers.hpp"

namespace neurotrails {

enum class Allocation { uniform, er, erk };

std::string to_string(Allocation mode);
Allocation parse_allocation(const std::string &name);

/// Layerwise split of a global sparsity target over the maskable layers of
/// one component. Entries are indexed by maskable-layer order.
struct SparsityPlan {
  double sparsity = 0.0;
  Allocation mode = Allocation::uniform;
  std::vector<std::size_t> layer_index; // position in the full layer list
  std::vector<std::size_t> sizes;
  std::vector<double> densities; // real-valued, before integer rounding
  std::vector<std::size_t> budgets;
  double epsilon = 0.0;    // ER/ERK scale; 0 for uniform
  std::size_t solves = 0;  // epsilon re-solve count
  /// Attention-like projections would stay dense. No such layers exist at
  /// this scale, so the flag is carried but never consulted.
  bool dense_attention = true;

  std::size_t total_size() const;
  std::size_t total_budget() const;
};

/// S = 1 - active/total.
double sparsity_ratio(std::span<const std::uint8_t> mask);

/// Density scale factor of a maskable layer:
/// linear (n_in+n_out)/(n_in*n_out); conv under ERK adds the kernel dims,
/// (c_in+c_out+kw+kh)/(c_in*c_out*kw*kh). Plain ER ignores kernel dims.
double er_factor(const LayerSpec &spec, Allocation mode);

/// Active-count target round((1-S) * total), rounding half up.
std::size_t global_budget(double sparsity, std::size_t total);

SparsityPlan allocate(const std::vector<LayerSpec> &layers, double sparsity,
                      Allocation mode);

/// Seed material for mask initialization; each (component, layer) pair draws
/// from its own substream.
struct MaskSeed {
  std::uint64_t seed = 0;
  std::uint64_t component = 0;
};

/// One mask per maskable layer of the plan, each with exactly its budget of
/// active entries chosen uniformly without replacement.
std::vector<Mask> init_masks(const SparsityPlan &plan, const MaskSeed &seed);

} // namespace neurotrails
