// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "network.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace neurotrails {

enum class Strategy { static_sparse, prune_oneshot, set, rigl };
enum class PruneMethod { magnitude, soft_magnitude };
enum class GrowMethod { random, gradient };

std::string to_string(Strategy s);
std::string to_string(PruneMethod m);
Strategy parse_strategy(const std::string &name);
PruneMethod parse_prune_method(const std::string &name);

/// When and how masks mutate during training.
struct TopologySchedule {
  Strategy strategy = Strategy::rigl;
  PruneMethod prune = PruneMethod::magnitude;
  double temperature = 3.0;
  bool normalize_by_mean = true;
  std::size_t update_interval = 100; // steps between updates
  double initial_drop = 0.5;         // drop fraction at t = 0
  std::size_t horizon = 0;           // total training steps
  double stop_fraction = 0.0;        // trailing share of training w/o updates
  double pre_pruning_fraction = 0.5; // prune_oneshot: dense phase length

  void validate() const;
  GrowMethod grow() const {
    return strategy == Strategy::rigl ? GrowMethod::gradient : GrowMethod::random;
  }
  bool dynamic() const {
    return strategy == Strategy::set || strategy == Strategy::rigl;
  }
  /// True at steps where fit applies a topology update.
  bool is_update_step(std::size_t t) const;
  /// prune_oneshot: the step after which the global prune happens.
  std::size_t prune_step() const;
};

struct LayerUpdate {
  std::size_t layer = 0; // index in the component's layer list
  std::vector<std::size_t> pruned;
  std::vector<std::size_t> grown;
  std::size_t active_before = 0;
  std::size_t active_after = 0;
};

struct UpdateRecord {
  std::size_t step = 0;
  std::string component;
  double drop_fraction = 0.0;
  std::vector<LayerUpdate> layers;
};

/// p0 * (1 + cos(pi t / T)) / 2.
double drop_fraction(std::size_t t, std::size_t horizon, double initial);

/// Positions (ascending) to prune from the active set of `w`.
/// magnitude: the k smallest |theta|, ties to the lower index.
/// soft_magnitude: k draws without replacement with weight
/// exp(-|theta| / (tau * mu)), mu the mean active |theta| (1 when
/// `normalize_by_mean` is off), via Gumbel-top-k on `rng`.
std::vector<std::size_t> select_prune(const MaskedTensor &w, std::size_t k,
                                      PruneMethod method, double temperature,
                                      bool normalize_by_mean, Rng &rng);

/// Positions (ascending) to activate among the inactive entries of `mask`.
/// random: uniform without replacement. gradient: the k largest |g|, ties to
/// the lower index; needs `dense_grads`.
std::vector<std::size_t> select_grow(const Mask &mask, std::size_t k,
                                     GrowMethod method,
                                     const Tensor *dense_grads, Rng &rng);

/// Prune-then-grow on every maskable layer of `net` with p(t) from the
/// schedule. Grown weights start at 0; optimizer state at every changed
/// position is zeroed. `dense_grads` is required for RigL.
UpdateRecord topology_update(Network &net, OptimizerState *state,
                             const GradientSet *dense_grads,
                             const TopologySchedule &schedule, std::size_t t,
                             Rng &rng);

/// Global magnitude pruning across all maskable layers of `nets`, keeping
/// round((1-S) * total) weights. Ties at the threshold keep the earlier
/// (network, layer, index). Returns one mask list per network (maskable
/// layers only).
std::vector<std::vector<Mask>>
one_shot_global_prune(const std::vector<const Network *> &nets, double sparsity);

/// Installs `masks` (maskable layers in order) on `net`, zeroing newly
/// masked weights and their optimizer state.
void apply_masks(Network &net, const std::vector<Mask> &masks,
                 OptimizerState *state);

} // namespace neurotrails
