// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "trainer.hpp"

using namespace neurotrails;

namespace {

Network scalar_net(float theta, std::uint8_t mask = 1) {
  Layer l;
  l.spec = LayerSpec::linear(1, 1, false);
  l.weight = MaskedTensor(Tensor({1, 1}, {theta}), Mask{mask});
  return Network({l});
}

GradientSet scalar_grad(float g) {
  GradientSet gs;
  gs.layers.push_back({Tensor({1, 1}, {g}), Tensor({0})});
  return gs;
}

TrainConfig base_config(std::size_t steps) {
  TrainConfig c;
  c.optimizer.lr = 0.05;
  c.optimizer.momentum = 0.9;
  c.batch_size = 32;
  c.steps = steps;
  c.base_steps = steps;
  c.eval_interval = 50;
  c.topology.strategy = Strategy::static_sparse;
  c.topology.horizon = steps;
  c.seed = 3;
  return c;
}

TrainState toy_state(std::size_t heads, double s, std::uint64_t seed) {
  const NetworkSpec spec = NetworkSpec::mlp(2, 16, 2, 2);
  std::vector<TrailsModel> m;
  m.push_back(build_trails(spec, 1, heads, s, Allocation::er, {seed, 0}));
  return make_train_state(std::move(m), OptimizerKind::sgd, seed);
}

} // namespace

TEST_CASE("SGD step without momentum") {
  Network net = scalar_net(1.0f);
  OptimizerConfig c;
  c.lr = 0.1;
  c.momentum = 0.0;
  OptimizerState st = OptimizerState::zeros(net, c.kind);
  optimizer_step(net, scalar_grad(0.5f), st, c, c.lr);
  CHECK(net.layers()[0].weight.values[0] == doctest::Approx(0.95));
}

TEST_CASE("masked-out weights stay zero under any gradient") {
  Network net = scalar_net(0.0f, 0);
  OptimizerConfig c;
  c.weight_decay = 0.1;
  OptimizerState st = OptimizerState::zeros(net, c.kind);
  for (int i = 0; i < 3; ++i)
    optimizer_step(net, scalar_grad(7.0f), st, c, c.lr);
  CHECK(net.layers()[0].weight.values[0] == 0.0f);
  CHECK(st.layers[0].first_w[0] == 0.0f);
}

TEST_CASE("first Adam step moves by about the learning rate") {
  for (float g : {0.3f, -2.0f}) {
    Network net = scalar_net(1.0f);
    OptimizerConfig c;
    c.kind = OptimizerKind::adam;
    c.lr = 0.01;
    c.epsilon = 1e-12;
    OptimizerState st = OptimizerState::zeros(net, c.kind);
    optimizer_step(net, scalar_grad(g), st, c, c.lr);
    const double moved = 1.0 - net.layers()[0].weight.values[0];
    CHECK(moved == doctest::Approx(g > 0 ? 0.01 : -0.01).epsilon(1e-5));
  }
}

TEST_CASE("non-finite gradients are a divergence") {
  Network net = scalar_net(1.0f);
  OptimizerConfig c;
  OptimizerState st = OptimizerState::zeros(net, c.kind);
  try {
    optimizer_step(net, scalar_grad(std::nanf("")), st, c, c.lr);
    FAIL("expected divergence");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::divergence);
  }
}

TEST_CASE("learning rate schedules") {
  LrSchedule step;
  step.kind = ScheduleKind::step;
  CHECK(lr_at(0, 100, 0.1, step) == doctest::Approx(0.1));
  CHECK(lr_at(30, 100, 0.1, step) == doctest::Approx(0.01));
  CHECK(lr_at(80, 100, 0.1, step) == doctest::Approx(1e-4));

  LrSchedule cos;
  cos.kind = ScheduleKind::cosine;
  cos.warmup_fraction = 0.1;
  CHECK(lr_at(0, 100, 0.5, cos) == doctest::Approx(0.0));
  CHECK(lr_at(10, 100, 0.5, cos) == doctest::Approx(0.5));
  CHECK(lr_at(100, 100, 0.5, cos) == doctest::Approx(0.05));
  CHECK_THROWS_AS(lr_at(101, 100, 0.5, cos), Error);
}

TEST_CASE("extension cap") {
  CHECK(extension_cap(0.8, 250) == 1250);
  CHECK(extension_cap(0.0, 250) == 250);
  CHECK(extension_cap(0.5, 100) == 200);
  CHECK(extension_cap(0.9, 100) == 1000);
  TrainConfig c = base_config(201);
  c.base_steps = 100;
  c.sparsity = 0.5;
  try {
    c.validate();
    FAIL("expected rejection");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::validation);
    CHECK(std::string(e.what()).find("training.steps") != std::string::npos);
  }
}

TEST_CASE("separable data reaches full train accuracy within 200 steps") {
  const Dataset data = gen_synthetic(SyntheticKind::two_clusters, 400, 0.2, 1);
  TrainState st = toy_state(1, 0.0, 1);
  TrainConfig c = base_config(200);
  c.eval_interval = 200;
  fit(st, data, data, c);
  const EvalResult r = evaluate(st, data, VoteMode::probs, PdMode::pairwise);
  CHECK(r.report.accuracy == 1.0);
}

TEST_CASE("update interval beyond the horizon equals static training") {
  const Dataset data = gen_synthetic(SyntheticKind::rings, 300, 0.2, 2);
  TrainState a = toy_state(2, 0.5, 4);
  TrainState b = a;
  TrainConfig ca = base_config(60);
  ca.base_steps = 120;
  ca.sparsity = 0.5;
  TrainConfig cb = ca;
  cb.topology.strategy = Strategy::rigl;
  cb.topology.update_interval = 1000;
  const History ha = fit(a, data, data, ca);
  const History hb = fit(b, data, data, cb);
  CHECK(hb.updates.empty());
  REQUIRE(ha.evals.size() == hb.evals.size());
  for (std::size_t i = 0; i < ha.evals.size(); ++i)
    CHECK(ha.evals[i].metrics.nll == hb.evals[i].metrics.nll);
}

TEST_CASE("same seeds give bit-identical histories") {
  const Dataset data = gen_synthetic(SyntheticKind::xor_grid, 300, 0.1, 2);
  TrainConfig c = base_config(80);
  c.base_steps = 45;
  c.sparsity = 0.5;
  c.topology.strategy = Strategy::rigl;
  c.topology.update_interval = 10;
  c.eval_interval = 20;
  TrainState a = toy_state(3, 0.5, 6);
  TrainState b = toy_state(3, 0.5, 6);
  const History ha = fit(a, data, data, c);
  const History hb = fit(b, data, data, c);
  REQUIRE(ha.evals.size() == 4);
  for (std::size_t i = 0; i < ha.evals.size(); ++i) {
    CHECK(ha.evals[i].metrics.nll == hb.evals[i].metrics.nll);
    CHECK(ha.evals[i].train_loss == hb.evals[i].train_loss);
  }
  REQUIRE(ha.updates.size() == hb.updates.size());
  for (std::size_t i = 0; i < ha.updates.size(); ++i)
    for (std::size_t l = 0; l < ha.updates[i].layers.size(); ++l)
      CHECK(ha.updates[i].layers[l].grown == hb.updates[i].layers[l].grown);
}

TEST_CASE("dynamic training conserves density and keeps masked state zero") {
  const Dataset data = gen_synthetic(SyntheticKind::rings, 300, 0.2, 2);
  for (Strategy s : {Strategy::set, Strategy::rigl}) {
    TrainConfig c = base_config(100);
    c.base_steps = 50;
    c.sparsity = 0.7;
    c.topology.strategy = s;
    c.topology.update_interval = 10;
    c.topology.prune = PruneMethod::soft_magnitude;
    TrainState st = toy_state(2, 0.7, 8);
    const History h = fit(st, data, data, c);
    CHECK(h.updates.size() == 9 * 3);
    for (const auto &u : h.updates)
      for (const auto &l : u.layers) {
        CHECK(l.active_before == l.active_after);
        CHECK(l.pruned.size() == l.grown.size());
      }
    for (const auto &ms : st.members) {
      const auto comps = ms.model.components();
      for (std::size_t ci = 0; ci < comps.size(); ++ci)
        for (std::size_t li = 0; li < comps[ci]->size(); ++li) {
          const Layer &layer = comps[ci]->layers()[li];
          if (!layer.spec.maskable())
            continue;
          CHECK(layer.weight.consistent());
          for (std::size_t j = 0; j < layer.weight.size(); ++j)
            if (!layer.weight.mask[j])
              CHECK(ms.optim[ci].layers[li].first_w[j] == 0.0f);
        }
    }
  }
}

TEST_CASE("one-shot pruning reaches the target sparsity at the prune step") {
  const Dataset data = gen_synthetic(SyntheticKind::rings, 300, 0.2, 2);
  TrainConfig c = base_config(60);
  c.sparsity = 0.8;
  c.topology.strategy = Strategy::prune_oneshot;
  c.topology.pre_pruning_fraction = 0.5;
  TrainState st = toy_state(2, 0.0, 3);
  fit(st, data, data, c);
  CHECK(st.pruned);
  std::size_t total = 0, active = 0;
  for (const Network *n : st.members[0].model.components()) {
    total += n->maskable_params();
    active += n->active_params();
  }
  CHECK(active == global_budget(0.8, total));
  CHECK(st.train_flops <= dense_train_budget(st, c));
}

TEST_CASE("runs whose projected FLOPs exceed the dense budget are rejected") {
  // Biases and activations stay dense, so 2x the steps at S = 0.5 costs more
  // than the dense run even though the extension cap allows it.
  const Dataset data = gen_synthetic(SyntheticKind::rings, 300, 0.2, 2);
  TrainConfig c = base_config(200);
  c.base_steps = 100;
  c.sparsity = 0.5;
  TrainState st = toy_state(3, 0.5, 3);
  CHECK(projected_train_flops(st, c) > dense_train_budget(st, c));
  CHECK_THROWS_AS(fit(st, data, data, c), Error);
  CHECK(st.step == 0);
}

TEST_CASE("cumulative training FLOPs stay within the dense budget") {
  const Dataset data = gen_synthetic(SyntheticKind::rings, 300, 0.2, 2);
  TrainConfig c = base_config(200);
  c.base_steps = 115;
  c.sparsity = 0.5;
  TrainState st = toy_state(3, 0.5, 3);
  const double projected = projected_train_flops(st, c);
  fit(st, data, data, c);
  CHECK(st.train_flops == doctest::Approx(projected).epsilon(1e-12));
  CHECK(st.train_flops <= dense_train_budget(st, c));
}
