// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "data.hpp"
#include "flops.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "topology.hpp"

namespace neurotrails {

struct TrainConfig {
  OptimizerConfig optimizer;
  LrSchedule schedule;
  TopologySchedule topology; // horizon is kept equal to `steps`
  std::size_t batch_size = 128;
  std::size_t steps = 0;      // optimizer steps actually run (T)
  std::size_t base_steps = 0; // dense-baseline step budget
  double sparsity = 0.0;      // target S, for the extension rule
  std::size_t eval_interval = 100;
  std::size_t checkpoint_interval = 0; // 0 = only the final checkpoint
  VoteMode vote = VoteMode::probs;
  PdMode pd_mode = PdMode::pairwise;
  std::uint64_t seed = 0;

  void validate() const;
};

/// floor(base_steps / (1 - S)).
std::size_t extension_cap(double sparsity, std::size_t base_steps);

/// Everything that evolves during training for one independently trained
/// member: the model, per-component optimizer state, per-component topology
/// streams.
struct MemberState {
  TrailsModel model;
  std::vector<OptimizerState> optim;
  std::vector<Rng> topology_rng;
};

struct TrainState {
  std::vector<MemberState> members;
  std::size_t step = 0;
  double train_flops = 0.0;
  bool pruned = false; // prune_oneshot: global prune already applied
  double loss_sum = 0.0; // composite loss accumulated since the last eval
  std::size_t loss_count = 0;

  std::vector<const TrailsModel *> models() const;
  std::size_t head_count() const;
};

TrainState make_train_state(std::vector<TrailsModel> members,
                            OptimizerKind optimizer, std::uint64_t seed);

struct EvalResult {
  MetricsReport report;
  std::vector<Predictions> head_predictions;
  Predictions ensemble;
};

/// Soft-voted metrics over every head of every member.
EvalResult evaluate(const TrainState &state, const Dataset &data, VoteMode vote,
                    PdMode pd_mode);

struct EvalRecord {
  MetricsReport metrics;
  double train_loss = 0.0; // mean composite loss since the previous record
  double lr = 0.0;
  double drop_fraction = 0.0;
};

struct History {
  std::vector<EvalRecord> evals;
  std::vector<UpdateRecord> updates;
  FlopsLedger flops;
};

struct FitHooks {
  std::function<void(const EvalRecord &)> on_eval;
  std::function<void(const UpdateRecord &)> on_update;
  std::function<void(const TrainState &)> on_checkpoint;
};

/// Upper bound on the run's cumulative training FLOPs (exact unless a
/// one-shot prune is still pending, where the post-prune phase is costed
/// dense).
double projected_train_flops(const TrainState &state, const TrainConfig &config);
/// 3 * f_D * base_steps * batch.
double dense_train_budget(const TrainState &state, const TrainConfig &config);

/// Runs steps state.step+1 .. config.steps. Rejects configs breaking the
/// extension rule; throws a divergence error on a non-finite loss.
History fit(TrainState &state, const Dataset &train, const Dataset &test,
            const TrainConfig &config, const FitHooks &hooks = {});

} // namespace neurotrails
