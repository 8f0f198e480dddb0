// SPDX-License-Identifier: Apache-2.0
#include "trainer.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace neurotrails {

void TrainConfig::validate() const {
  optimizer.validate();
  schedule.validate();
  topology.validate();
  if (batch_size < 1)
    fail_validation("training.batch_size: must be >= 1");
  if (steps < 1)
    fail_validation("training.steps: must be >= 1");
  if (base_steps < 1)
    fail_validation("training.base_steps: must be >= 1");
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    fail_validation("sparsity.ratio: must be in [0, 1), got " +
                    std::to_string(sparsity));
  if (eval_interval < 1)
    fail_validation("training.eval_interval: must be >= 1");
  if (topology.horizon != steps)
    fail_validation("topology horizon " + std::to_string(topology.horizon) +
                    " differs from training.steps " + std::to_string(steps));
  const std::size_t cap = extension_cap(sparsity, base_steps);
  if (steps > cap)
    fail_validation("training.steps: " + std::to_string(steps) +
                    " exceeds the sparse extension cap " + std::to_string(cap) +
                    " = floor(base_steps / (1 - S))");
}

std::size_t extension_cap(double sparsity, std::size_t base_steps) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    fail("extension_cap: sparsity must be in [0, 1), got " +
         std::to_string(sparsity));
  const double raw = static_cast<double>(base_steps) / (1.0 - sparsity);
  return static_cast<std::size_t>(std::floor(raw + 1e-9));
}

std::vector<const TrailsModel *> TrainState::models() const {
  std::vector<const TrailsModel *> out;
  for (const auto &m : members)
    out.push_back(&m.model);
  return out;
}

std::size_t TrainState::head_count() const {
  std::size_t n = 0;
  for (const auto &m : members)
    n += m.model.head_count();
  return n;
}

TrainState make_train_state(std::vector<TrailsModel> members,
                            OptimizerKind optimizer, std::uint64_t seed) {
  if (members.empty())
    fail("training state needs at least one member");
  TrainState s;
  for (auto &model : members) {
    MemberState ms;
    ms.model = std::move(model);
    const auto comps = ms.model.components();
    for (std::size_t c = 0; c < comps.size(); ++c) {
      ms.optim.push_back(OptimizerState::zeros(*comps[c], optimizer));
      ms.topology_rng.push_back(Rng::stream(
          seed, stream::topology, ms.model.member, static_cast<std::uint64_t>(c)));
    }
    s.members.push_back(std::move(ms));
  }
  return s;
}

EvalResult evaluate(const TrainState &state, const Dataset &data, VoteMode vote,
                    PdMode pd_mode) {
  if (data.size() == 0)
    fail("evaluation set is empty");
  constexpr std::size_t chunk = 256;
  const std::size_t heads = state.head_count();
  std::vector<std::vector<float>> logits(heads);
  std::size_t classes = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i)
      idx.push_back(i);
    const Tensor x = gather_inputs(data, idx);
    std::size_t h = 0;
    for (const auto &m : state.members) {
      const HeadOutputs out = forward_heads(m.model, x, false);
      for (const auto &l : out.logits) {
        classes = l.dim(1);
        logits[h].insert(logits[h].end(), l.vec().begin(), l.vec().end());
        ++h;
      }
    }
  }
  std::vector<Tensor> head_logits;
  for (auto &l : logits)
    head_logits.emplace_back(Shape{data.size(), classes}, std::move(l));

  EvalResult r;
  const Vote v = soft_vote(head_logits, vote);
  r.ensemble = v.predictions;
  for (const auto &l : head_logits)
    r.head_predictions.push_back(argmax_rows(l));

  MetricsReport &rep = r.report;
  rep.step = state.step;
  rep.accuracy = accuracy(v.predictions, data.labels);
  rep.nll = nll(v.probs, data.labels);
  rep.ece = ece(v.probs, data.labels, 15);
  rep.perplexity = perplexity(rep.nll);
  if (heads >= 2) {
    rep.pd = prediction_disagreement(r.head_predictions, pd_mode);
    rep.pd_strict = prediction_disagreement(r.head_predictions, PdMode::strict);
  }
  for (const auto &p : r.head_predictions)
    rep.head_accuracy.push_back(accuracy(p, data.labels));
  const FlopsLedger ledger = count_flops(state.models());
  rep.flops.forward_sparse = ledger.forward_sparse;
  rep.flops.forward_dense = ledger.forward_dense;
  rep.flops.train_cumulative = state.train_flops;
  return r;
}

double dense_train_budget(const TrainState &state, const TrainConfig &config) {
  return count_flops(state.models()).dense_train_step(config.batch_size) *
         static_cast<double>(config.base_steps);
}

double projected_train_flops(const TrainState &state,
                             const TrainConfig &config) {
  const FlopsLedger ledger = count_flops(state.models());
  double total = state.train_flops;
  for (std::size_t t = state.step + 1; t <= config.steps; ++t) {
    // Post-prune density is unknown until the prune happens; cost it dense.
    const bool dense_phase =
        config.topology.strategy == Strategy::prune_oneshot && !state.pruned;
    total += dense_phase ? ledger.dense_train_step(config.batch_size)
                         : ledger.train_step(config.batch_size);
  }
  return total;
}

namespace {

struct BatchCursor {
  BatchPlan plan;
  std::size_t per_epoch = 0;
  std::uint64_t epoch = ~std::uint64_t{0};
  std::vector<std::vector<std::size_t>> order;

  const std::vector<std::size_t> &at(std::size_t t, std::size_t n) {
    const std::size_t idx = t - 1;
    const std::uint64_t e = idx / per_epoch;
    if (e != epoch) {
      order = batches(n, plan, e);
      epoch = e;
    }
    return order[idx % per_epoch];
  }
};

} // namespace

History fit(TrainState &state, const Dataset &train, const Dataset &test,
            const TrainConfig &config, const FitHooks &hooks) {
  config.validate();
  if (state.members.empty())
    fail("fit: no members to train");
  if (train.size() < config.batch_size)
    fail_validation("training.batch_size: " + std::to_string(config.batch_size) +
                    " exceeds the training set size " +
                    std::to_string(train.size()));
  if (state.step > config.steps)
    fail("fit: state is at step " + std::to_string(state.step) +
         ", beyond training.steps " + std::to_string(config.steps));

  const double budget = dense_train_budget(state, config);
  const double projected = projected_train_flops(state, config);
  if (projected > budget)
    fail_validation("training.steps: projected training FLOPs " +
                    std::to_string(projected) + " exceed the dense budget " +
                    std::to_string(budget));

  std::vector<BatchCursor> cursors;
  for (const auto &m : state.members) {
    BatchCursor c;
    c.plan.batch_size = config.batch_size;
    c.plan.shuffle_seed =
        Rng::stream(config.seed, stream::member, m.model.member)();
    c.plan.drop_last = true;
    c.per_epoch = batches_per_epoch(train.size(), c.plan);
    cursors.push_back(std::move(c));
  }

  History history;
  FlopsLedger ledger = count_flops(state.models());
  // Per-member forward FLOPs; layer densities only change at a one-shot prune.
  std::vector<FlopsLedger> member_flops;
  for (const auto &m : state.members)
    member_flops.push_back(count_flops(m.model));
  const TopologySchedule &topo = config.topology;

  for (std::size_t t = state.step + 1; t <= config.steps; ++t) {
    const double lr =
        lr_at(t - 1, config.steps, config.optimizer.lr, config.schedule);
    const bool update = topo.is_update_step(t);
    const bool dense = update && topo.strategy == Strategy::rigl;

    for (std::size_t mi = 0; mi < state.members.size(); ++mi) {
      MemberState &ms = state.members[mi];
      const auto &idx = cursors[mi].at(t, train.size());
      const Tensor x = gather_inputs(train, idx);
      const Labels y = gather_labels(train, idx);

      const HeadOutputs out = forward_heads(ms.model, x, true);
      const CompositeLoss cl = composite_loss(out, y);
      if (!std::isfinite(cl.loss))
        fail_divergence("loss diverged at step " + std::to_string(t) +
                        " (member " + std::to_string(mi) + ")");
      state.loss_sum += cl.loss;
      ++state.loss_count;

      TrailsGradients g = backward(ms.model, out, cl, y, dense);
      auto comps = ms.model.components();
      for (std::size_t c = 0; c < comps.size(); ++c) {
        const GradientSet &gc = c == 0 ? g.backbone : g.heads[c - 1];
        optimizer_step(*comps[c], gc, ms.optim[c], config.optimizer, lr);
      }
      if (update) {
        for (std::size_t c = 0; c < comps.size(); ++c) {
          if (comps[c]->maskable_params() == 0)
            continue;
          const GradientSet &gc = c == 0 ? g.backbone : g.heads[c - 1];
          UpdateRecord rec = topology_update(*comps[c], &ms.optim[c], &gc, topo,
                                             t, ms.topology_rng[c]);
          rec.component = ms.model.component_name(c);
          if (hooks.on_update)
            hooks.on_update(rec);
          history.updates.push_back(std::move(rec));
        }
      }
      state.train_flops += member_flops[mi].train_step(idx.size());
    }

    if (topo.strategy == Strategy::prune_oneshot && !state.pruned &&
        t == topo.prune_step()) {
      for (auto &ms : state.members) {
        const auto masks = one_shot_global_prune(
            static_cast<const TrailsModel &>(ms.model).components(),
            config.sparsity);
        auto comps = ms.model.components();
        for (std::size_t c = 0; c < comps.size(); ++c)
          apply_masks(*comps[c], masks[c], &ms.optim[c]);
      }
      state.pruned = true;
      ledger = count_flops(state.models());
      for (std::size_t mi = 0; mi < state.members.size(); ++mi)
        member_flops[mi] = count_flops(state.members[mi].model);
    }

    if (state.train_flops > budget)
      fail("training FLOPs " + std::to_string(state.train_flops) +
           " exceeded the dense budget at step " + std::to_string(t));
    state.step = t;

    if (t % config.eval_interval == 0 || t == config.steps) {
      EvalRecord rec;
      rec.metrics = evaluate(state, test, config.vote, config.pd_mode).report;
      rec.train_loss = state.loss_count
                           ? state.loss_sum / static_cast<double>(state.loss_count)
                           : 0.0;
      rec.lr = lr;
      rec.drop_fraction =
          topo.dynamic() ? drop_fraction(t, config.steps, topo.initial_drop) : 0.0;
      state.loss_sum = 0.0;
      state.loss_count = 0;
      if (hooks.on_eval)
        hooks.on_eval(rec);
      history.evals.push_back(std::move(rec));
    }
    if (config.checkpoint_interval && t % config.checkpoint_interval == 0 &&
        t != config.steps && hooks.on_checkpoint)
      hooks.on_checkpoint(state);
  }
  history.flops = ledger;
  return history;
}

} // namespace neurotrails
