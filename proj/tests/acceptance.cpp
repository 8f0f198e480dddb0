// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "experiment.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace neurotrails;
namespace fs = std::filesystem;

namespace {

constexpr double grad_tolerance = 1e-3;
constexpr double er_tolerance = 1e-4;
constexpr double metric_tolerance = 1e-9;
constexpr double flops_tolerance = 1e-6;
constexpr double accuracy_slack = 0.005; // half a point
constexpr double density_seconds = 60.0;
constexpr double gradient_seconds = 60.0;
constexpr double end_to_end_seconds = 600.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string &what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

// Train FLOPs against the dense budget for every run in this battery.
struct BudgetLog {
  std::size_t runs = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;

  void add(double flops, double budget) {
    ++runs;
    if (flops > budget)
      ++violations;
    worst_ratio = std::max(worst_ratio, flops / budget);
  }
  void add(const RunResult &r) { add(r.train_flops, r.train_budget); }
};

BudgetLog budget_log;

std::string fmt(const char *f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<std::string> lines(const fs::path &p) {
  std::istringstream in(nt_test::slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    out.push_back(l);
  return out;
}

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');)
    out.push_back(cell);
  return out;
}

ExperimentConfig from_json(const std::string &text) {
  return parse_config(nlohmann::json::parse(text));
}

// ---------------------------------------------------------------------------

struct DensityRun {
  TrainState state;
  History history;
  std::vector<std::vector<std::size_t>> initial_active; // component x layer
  double seconds = 0.0;
};

DensityRun density_run() {
  const NetworkSpec spec = NetworkSpec::mlp(2, 32, 4, 2);
  std::vector<TrailsModel> m;
  m.push_back(build_trails(spec, 2, 3, 0.8, Allocation::er, {21, 0}));
  DensityRun run{make_train_state(std::move(m), OptimizerKind::sgd, 21), {}, {}, 0.0};
  for (const Network *c : run.state.members[0].model.components()) {
    std::vector<std::size_t> active;
    for (const auto &l : c->layers())
      active.push_back(l.spec.maskable() ? l.weight.active() : 0);
    run.initial_active.push_back(active);
  }
  TrainConfig c;
  c.optimizer.lr = 0.05;
  c.optimizer.momentum = 0.9;
  c.optimizer.weight_decay = 5e-4;
  c.batch_size = 32;
  c.steps = 2000;
  c.base_steps = 2000;
  c.sparsity = 0.8;
  c.eval_interval = 500;
  c.topology.strategy = Strategy::rigl;
  c.topology.update_interval = 50;
  c.topology.horizon = c.steps;
  c.seed = 21;
  const Dataset data = gen_synthetic(SyntheticKind::rings, 600, 0.2, 21);
  const auto t0 = Clock::now();
  run.history = fit(run.state, data, data, c);
  run.seconds = seconds_since(t0);
  budget_log.add(run.state.train_flops, dense_train_budget(run.state, c));
  return run;
}

Outcome density_conservation(const DensityRun &run) {
  Outcome o;
  std::size_t violations = 0, layer_records = 0, moved = 0;
  const auto &model = run.state.members[0].model;
  for (const auto &u : run.history.updates) {
    std::size_t comp = 0;
    while (model.component_name(comp) != u.component)
      ++comp;
    for (const auto &l : u.layers) {
      ++layer_records;
      moved += l.pruned.size();
      const std::size_t want = run.initial_active[comp][l.layer];
      if (l.active_before != want || l.active_after != want ||
          l.pruned.size() != l.grown.size())
        ++violations;
    }
  }
  o.require(run.history.updates.size() == 39 * 4,
            "expected 39 updates per component, got " +
                std::to_string(run.history.updates.size()));
  o.require(moved > 0, "no weight ever moved");
  o.require(violations == 0, std::to_string(violations) + " density violations");
  o.require(run.seconds < density_seconds, fmt("runtime %.1fs", run.seconds));
  o.detail = o.pass ? std::to_string(layer_records) + " layer records, " +
                          std::to_string(moved) + " weights moved, " +
                          fmt("%.1fs", run.seconds)
                    : o.detail;
  return o;
}

Outcome mask_zero_closure(const DensityRun &run) {
  Outcome o;
  std::size_t masked = 0, bad_w = 0, bad_state = 0;
  const auto &member = run.state.members[0];
  const auto comps = member.model.components();
  for (std::size_t ci = 0; ci < comps.size(); ++ci) {
    const auto &layers = comps[ci]->layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto &w = layers[li].weight;
      if (!layers[li].spec.maskable())
        continue;
      const auto &st = member.optim[ci].layers[li];
      for (std::size_t i = 0; i < w.mask.size(); ++i) {
        if (w.mask[i])
          continue;
        ++masked;
        if (w.values[i] != 0.0f)
          ++bad_w;
        if (st.first_w.size() && st.first_w[i] != 0.0f)
          ++bad_state;
        if (st.second_w.size() && st.second_w[i] != 0.0f)
          ++bad_state;
      }
    }
  }
  o.require(masked > 0, "no masked weights");
  o.require(bad_w == 0, std::to_string(bad_w) + " nonzero masked weights");
  o.require(bad_state == 0, std::to_string(bad_state) + " nonzero masked state entries");
  if (o.pass)
    o.detail = std::to_string(masked) + " masked positions checked";
  return o;
}

Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t max_active = 0;
  for (std::uint64_t seed = 1000; seed < 1020; ++seed) {
    const auto c = nt_test::random_gradcheck_case(seed, 500);
    max_active = std::max(max_active, c.net.active_params());
    const NetworkStep step = network_loss_and_grad(c.net, c.x, c.targets);
    const GradientSet fd = finite_difference_gradient(c.net, c.x, c.targets, 1e-4);
    worst = std::max(worst, max_relative_error(c.net, step.grads, fd));
  }
  const double secs = seconds_since(t0);
  o.require(max_active <= 500, "model above 500 active weights");
  o.require(worst < grad_tolerance, fmt("max relative error %.3g", worst));
  o.require(secs < gradient_seconds, fmt("runtime %.1fs", secs));
  if (o.pass)
    o.detail = fmt("max relative error %.3g", worst) + ", " + fmt("%.1fs", secs);
  return o;
}

Outcome er_allocation() {
  Outcome o;
  const SparsityPlan p = allocate({LayerSpec::linear(4, 4), LayerSpec::linear(8, 8)},
                                  0.5, Allocation::er);
  o.require(std::abs(p.densities[0] - 0.8333) < er_tolerance &&
                std::abs(p.densities[1] - 0.4167) < er_tolerance,
            "oracle densities " + fmt("%.6f", p.densities[0]) + "/" +
                fmt("%.6f", p.densities[1]));
  o.require(p.total_budget() == 40, "oracle active count " + std::to_string(p.total_budget()));

  Rng rng(4242);
  std::size_t exact = 0, monotone_violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LayerSpec> layers;
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.below(3) == 0)
        layers.push_back(LayerSpec::conv2d(1 + rng.below(8), 1 + rng.below(8),
                                           1 + rng.below(3), 1 + rng.below(3)));
      else
        layers.push_back(LayerSpec::linear(1 + rng.below(40), 1 + rng.below(40)));
    }
    const double s = rng.uniform() * 0.99;
    const Allocation mode = rng.below(2) ? Allocation::er : Allocation::erk;
    const SparsityPlan plan = allocate(layers, s, mode);
    std::size_t total = 0;
    for (const auto &l : layers)
      total += l.weight_count();
    exact += plan.total_budget() ==
             static_cast<std::size_t>(std::floor((1.0 - s) * total + 0.5));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (er_factor(layers[i], mode) > er_factor(layers[j], mode) &&
            plan.densities[i] < plan.densities[j])
          ++monotone_violations;
  }
  o.require(exact == 100, std::to_string(100 - exact) + " lists miss the global count");
  o.require(monotone_violations == 0,
            std::to_string(monotone_violations) + " monotonicity violations");
  if (o.pass)
    o.detail = "densities " + fmt("%.4f", p.densities[0]) + "/" +
               fmt("%.4f", p.densities[1]) + ", 100/100 random lists exact";
  return o;
}

Outcome selection_oracles() {
  Outcome o;
  Rng rng(5150);
  std::size_t prune_miss = 0, grow_miss = 0, soft_miss = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    MaskedTensor w(nt_test::random_tensor({n}, rng), Mask(n, 0));
    for (auto &m : w.mask)
      m = static_cast<std::uint8_t>(rng.below(2));
    w.mask[0] = 1;
    w.mask[n - 1] = 0;
    w.apply_mask();
    const Tensor g = nt_test::random_tensor({n}, rng);
    std::vector<std::size_t> active, inactive;
    for (std::size_t i = 0; i < n; ++i)
      (w.mask[i] ? active : inactive).push_back(i);

    const std::size_t kp = rng.below(active.size() + 1);
    auto by_mag = active;
    std::sort(by_mag.begin(), by_mag.end(), [&](std::size_t a, std::size_t b) {
      const float ma = std::abs(w.values[a]), mb = std::abs(w.values[b]);
      return ma != mb ? ma < mb : a < b;
    });
    const std::set<std::size_t> want_p(by_mag.begin(), by_mag.begin() + kp);
    const auto got_p = select_prune(w, kp, PruneMethod::magnitude, 1.0, true, rng);
    prune_miss += std::set<std::size_t>(got_p.begin(), got_p.end()) != want_p;

    const std::size_t kg = rng.below(inactive.size() + 1);
    auto by_grad = inactive;
    std::sort(by_grad.begin(), by_grad.end(), [&](std::size_t a, std::size_t b) {
      const float ga = std::abs(g[a]), gb = std::abs(g[b]);
      return ga != gb ? ga > gb : a < b;
    });
    const std::set<std::size_t> want_g(by_grad.begin(), by_grad.begin() + kg);
    const auto got_g = select_grow(w.mask, kg, GrowMethod::gradient, &g, rng);
    grow_miss += std::set<std::size_t>(got_g.begin(), got_g.end()) != want_g;

    // Distinct magnitudes spaced 1/(n+1) apart: no ties.
    MaskedTensor spaced = w;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
      std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < n; ++i)
      spaced.values[i] = static_cast<float>((rng.below(2) ? 1.0 : -1.0) *
                                            static_cast<double>(perm[i] + 1) /
                                            static_cast<double>(n + 1));
    spaced.apply_mask();
    Rng unused(0);
    const auto hard = select_prune(spaced, kp, PruneMethod::magnitude, 1.0, true, unused);
    soft_miss += select_prune(spaced, kp, PruneMethod::soft_magnitude, 1e-6, true, rng) != hard;
  }
  o.require(prune_miss == 0, std::to_string(prune_miss) + " magnitude prune mismatches");
  o.require(grow_miss == 0, std::to_string(grow_miss) + " gradient grow mismatches");
  o.require(soft_miss == 0, std::to_string(soft_miss) + " soft/hard mismatches");
  if (o.pass)
    o.detail = "100 layers, exact set equality";
  return o;
}

double ece_oracle(const TensorF64 &p, const std::vector<std::int32_t> &y,
                  std::size_t bins) {
  std::vector<double> conf(bins + 1, 0.0), hit(bins + 1, 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.dim(1); ++c)
      if (p.row(i)[c] > p.row(i)[best])
        best = c;
    const double c = p.row(i)[best];
    const auto b = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(c * static_cast<double>(bins))));
    conf[b] += c;
    hit[b] += static_cast<std::int32_t>(best) == y[i] ? 1.0 : 0.0;
  }
  double e = 0.0;
  for (std::size_t b = 1; b <= bins; ++b)
    e += std::abs(hit[b] - conf[b]);
  return e / static_cast<double>(p.rows());
}

Outcome metric_oracles() {
  Outcome o;
  const double e = ece(TensorF64({2, 2}, {0.9, 0.1, 0.6, 0.4}),
                       std::vector<std::int32_t>{0, 1}, 15);
  o.require(std::abs(e - 0.35) < metric_tolerance, fmt("ECE %.12f", e));
  const double pd = prediction_disagreement({{1}, {1}, {2}});
  o.require(std::abs(pd - 2.0 / 3.0) < metric_tolerance, fmt("PD %.12f", pd));
  const double nl = nll(TensorF64({2, 2}, {0.5, 0.5, 0.75, 0.25}),
                        std::vector<std::int32_t>{0, 1});
  o.require(std::abs(nl - (std::log(2.0) + std::log(4.0)) / 2.0) < metric_tolerance,
            fmt("NLL %.12f", nl));

  Rng rng(6060);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(60), k = 2 + rng.below(5);
    std::vector<double> v(n * k);
    std::vector<std::int32_t> y(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c)
        s += v[i * k + c] = rng.uniform() + 1e-3;
      for (std::size_t c = 0; c < k; ++c)
        v[i * k + c] /= s;
      y[i] = static_cast<std::int32_t>(rng.below(k));
      pred[i] = static_cast<std::int32_t>(rng.below(k));
    }
    const TensorF64 p({n, k}, v);
    double correct = 0.0, sum_nll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      correct += pred[i] == y[i];
      sum_nll -= std::log(v[i * k + static_cast<std::size_t>(y[i])]);
    }
    const std::size_t bins = 1 + rng.below(20);
    const std::size_t m = 2 + rng.below(4);
    std::vector<Predictions> heads(m, Predictions(n));
    for (auto &h : heads)
      for (auto &c : h)
        c = static_cast<std::int32_t>(rng.below(3));
    double pairs = 0.0, differ = 0.0;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b) {
        pairs += 1.0;
        for (std::size_t i = 0; i < n; ++i)
          differ += heads[a][i] != heads[b][i] ? 1.0 : 0.0;
      }
    double strict = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 1; a < m; ++a)
        if (heads[a][i] != heads[0][i]) {
          strict += 1.0;
          break;
        }
    const double mean_nll = sum_nll / static_cast<double>(n);
    const bool ok =
        std::abs(accuracy(pred, y) - correct / static_cast<double>(n)) < metric_tolerance &&
        std::abs(nll(p, y) - mean_nll) < metric_tolerance &&
        std::abs(ece(p, y, bins) - ece_oracle(p, y, bins)) < metric_tolerance &&
        std::abs(prediction_disagreement(heads) - differ / (pairs * n)) < metric_tolerance &&
        std::abs(prediction_disagreement(heads, PdMode::strict) - strict / n) <
            metric_tolerance &&
        std::abs(perplexity(mean_nll) - std::exp(mean_nll)) < metric_tolerance;
    mismatches += !ok;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " random cases disagree");
  if (o.pass)
    o.detail = "hand cases exact to 1e-9, 200 random cases agree";
  return o;
}

Outcome flops_rule() {
  Outcome o;
  std::size_t step_mismatch = 0;
  for (double s : {0.0, 0.5, 0.9})
    for (std::size_t heads : {1, 3}) {
      const TrailsModel m =
          build_trails(NetworkSpec::mlp(2, 16, 4, 3), 2, heads, s, Allocation::er, {8, 0});
      const FlopsLedger l = count_flops(m);
      for (std::size_t batch : {1, 32, 128})
        step_mismatch += l.train_step(batch) != 3.0 * l.forward_sparse * batch;
    }
  o.require(step_mismatch == 0, std::to_string(step_mismatch) + " train-step mismatches");

  // Width 4, two blocks, split after the first, three heads:
  // stem 24, block 40, classifier 18 FLOPs per sample.
  const NetworkSpec spec = NetworkSpec::mlp(2, 4, 2, 2);
  const TrailsModel trails = build_trails(spec, 1, 3, 0.0, Allocation::er, {1, 0});
  const auto members = build_independent_ensemble(spec, 3, 1, 0.0, Allocation::er, 1);
  std::vector<const TrailsModel *> ptrs;
  for (const auto &mm : members)
    ptrs.push_back(&mm);
  const double ratio = count_flops(trails).forward_sparse / count_flops(ptrs).forward_sparse;
  const double hand = (24.0 + 40.0 + 3 * (40.0 + 18.0)) / (3 * (24.0 + 2 * 40.0 + 18.0));
  o.require(std::abs(ratio - hand) < flops_tolerance, fmt("inference ratio %.9f", ratio));
  if (o.pass)
    o.detail = "train step = 3x forward, ratio " + fmt("%.6f", ratio) + " = 238/366";
  return o;
}

// ---------------------------------------------------------------------------

struct ArmResult {
  std::string name;
  std::vector<double> accuracy, pd;
  double mean_acc() const {
    return std::accumulate(accuracy.begin(), accuracy.end(), 0.0) / accuracy.size();
  }
  double mean_pd() const {
    return std::accumulate(pd.begin(), pd.end(), 0.0) / pd.size();
  }
};

std::string rings_config(const fs::path &out, const std::string &trails,
                         double sparsity) {
  return R"({"seed": 1, "output_dir": ")" + out.string() + R"(",
    "dataset": {"generator": "rings", "n": 2000, "noise": 0.4},
    "network": {"mlp": {"input": 2, "width": 32, "blocks": 6, "classes": 2}},
    "trails": )" + trails + R"(,
    "sparsity": {"ratio": )" + fmt("%g", sparsity) + R"(, "allocation": "er"},
    "topology": {"strategy": "rigl", "update_interval": 50},
    "optimizer": {"type": "sgd", "lr": 0.05, "momentum": 0.9, "weight_decay": 5e-4},
    "schedule": {"type": "cosine"},
    "training": {"batch_size": 64, "base_steps": 1000, "steps": "auto",
                 "eval_interval": 1000}})";
}

Outcome end_to_end(const fs::path &root) {
  Outcome o;
  struct Arm {
    const char *name;
    const char *trails;
    double sparsity;
  };
  const Arm arms[] = {
      {"neurotrails", R"({"heads": 3, "blocks_in_head": 3})", 0.5},
      {"single_dense", R"({"heads": 1, "blocks_in_head": 3})", 0.0},
      {"neurotrails_m1", R"({"heads": 1, "blocks_in_head": 3})", 0.5},
      {"full_ensemble", R"({"heads": 3, "blocks_in_head": 6, "ensemble": "independent"})", 0.0},
  };
  const auto t0 = Clock::now();
  std::vector<ArmResult> results;
  for (const Arm &arm : arms) {
    ArmResult r{arm.name, {}, {}};
    const ExperimentConfig c = from_json(rings_config(root / arm.name, arm.trails, arm.sparsity));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunOptions opts;
      opts.seed = seed;
      opts.output_dir = root / arm.name / ("seed_" + std::to_string(seed));
      const RunResult run = run_train(c, opts);
      budget_log.add(run);
      r.accuracy.push_back(run.final.accuracy);
      r.pd.push_back(run.final.pd);
    }
    results.push_back(r);
  }
  const double secs = seconds_since(t0);
  for (const auto &r : results)
    std::printf("    %-15s accuracy %.4f  pd %.4f\n", r.name.c_str(), r.mean_acc(),
                r.mean_pd());
  const ArmResult &nt = results[0], &dense = results[1], &m1 = results[2],
                  &full = results[3];
  o.require(nt.mean_acc() >= dense.mean_acc() - accuracy_slack,
            fmt("(a) accuracy %.4f", nt.mean_acc()) +
                fmt(" below single dense %.4f - 0.5pt", dense.mean_acc()));
  o.require(nt.mean_acc() >= m1.mean_acc(),
            fmt("(a) accuracy %.4f", nt.mean_acc()) +
                fmt(" below M=1 ablation %.4f", m1.mean_acc()));
  o.require(nt.mean_pd() < full.mean_pd(),
            fmt("(b) PD %.4f", nt.mean_pd()) + fmt(" not below full ensemble %.4f",
                                                  full.mean_pd()));
  o.require(secs < end_to_end_seconds, fmt("runtime %.1fs", secs));
  if (o.pass)
    o.detail = fmt("accuracy %.4f", nt.mean_acc()) + fmt(" vs dense %.4f", dense.mean_acc()) +
               fmt(" / M=1 %.4f", m1.mean_acc()) + fmt(", PD %.4f", nt.mean_pd()) +
               fmt(" < %.4f", full.mean_pd()) + fmt(", %.0fs", secs);
  return o;
}

Outcome extension_rule(const fs::path &root) {
  // Auto-resolved configs across strategies and sparsities, run to the end.
  const char *strategies[] = {"static", "prune_oneshot", "set", "rigl"};
  std::size_t rejected = 0;
  std::size_t i = 0;
  for (const char *strategy : strategies)
    for (double s : {0.0, 0.5, 0.9})
      for (const char *ensemble : {"trails", "independent"}) {
        const std::string extra =
            std::string(R"("topology": {"strategy": ")") + strategy +
            R"(", "update_interval": 10}, "trails": {"heads": 2, "blocks_in_head": 2, "ensemble": ")" +
            ensemble + R"("}, "sparsity": {"ratio": )" + fmt("%g", s) + "}";
        nlohmann::json j = nlohmann::json::parse(
            nt_test::tiny_config((root / std::to_string(i++)).string()));
        j.merge_patch(nlohmann::json::parse("{" + extra + "}"));
        j["training"]["steps"] = "auto";
        budget_log.add(run_train(parse_config(j), {}));
      }
  // Fixed step counts above the budget must be refused.
  for (std::size_t steps : {120, 121, 500}) {
    ExperimentConfig c = from_json(nt_test::tiny_config((root / "over").string()));
    c.steps = steps;
    try {
      run_train(c, {});
    } catch (const Error &) {
      ++rejected;
    }
  }
  Outcome o;
  o.require(budget_log.violations == 0,
            std::to_string(budget_log.violations) + " runs over the dense budget");
  o.require(rejected == 3, std::to_string(rejected) + "/3 over-budget configs rejected");
  if (o.pass)
    o.detail = std::to_string(budget_log.runs) + " accepted runs within budget" +
               fmt(" (max %.4f of dense)", budget_log.worst_ratio) +
               ", 3/3 over-budget configs rejected";
  return o;
}

Outcome determinism(const fs::path &root) {
  Outcome o;
  ExperimentConfig c = from_json(nt_test::tiny_config((root / "a").string(),
                                                      R"("seed": 7)"));
  c.train.checkpoint_interval = 25;
  budget_log.add(run_train(c, {}));
  RunOptions again;
  again.output_dir = root / "b";
  budget_log.add(run_train(c, again));
  o.require(nt_test::slurp(root / "a/summary.csv") == nt_test::slurp(root / "b/summary.csv"),
            "summary.csv differs between identical runs");
  o.require(nt_test::slurp(root / "a/history.jsonl") == nt_test::slurp(root / "b/history.jsonl"),
            "history.jsonl differs between identical runs");

  std::size_t resumed_points = 0;
  for (std::size_t at : {25, 50, 75}) {
    RunOptions r;
    r.output_dir = root / ("resume_" + std::to_string(at));
    r.resume = root / "a" / ("checkpoint_" + std::to_string(at) + ".ntck");
    budget_log.add(run_train(c, r));
    const auto full = lines(root / "a/summary.csv");
    const auto tail = lines(*r.output_dir / "summary.csv");
    bool same = tail.size() >= 2 && tail[0] == full[0];
    for (std::size_t i = 1; same && i < tail.size(); ++i)
      same = tail[tail.size() - i] == full[full.size() - i];
    same = same && std::stoul(split_csv(tail[1])[0]) == at + 25;
    o.require(same, "resume from step " + std::to_string(at) + " diverges");
    resumed_points += same;
  }
  if (o.pass)
    o.detail = "identical summaries, " + std::to_string(resumed_points) +
               " resume points match";
  return o;
}

Outcome sweep_shape(const fs::path &root) {
  Outcome o;
  ExperimentConfig c = from_json(nt_test::tiny_config(root.string()));
  c.steps.reset();
  SweepPlan plan;
  plan.axis = SweepAxis::sparsity;
  plan.values = {0.0, 0.5, 0.8, 0.95, 0.99};
  plan.repeats = 2;
  plan.workers = 2;
  const auto rows = run_sweep(c, plan, {});
  o.require(rows.size() == 5, std::to_string(rows.size()) + " aggregate rows");
  o.require(lines(root / "sweep.csv").size() == 6, "sweep.csv row count");

  const auto again = aggregate_sweep(root, c, plan);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < rows.size() && i < again.size(); ++i) {
    // Recompute accuracy and PD from the per-run summaries.
    std::vector<double> acc, pd;
    for (std::uint64_t s = c.seed; s < c.seed + plan.repeats; ++s) {
      const fs::path dir = root / sweep_run_dir(plan.axis, plan.values[i], s);
      const auto cells = split_csv(lines(dir / "summary.csv").back());
      acc.push_back(std::stod(cells[3]));
      pd.push_back(std::stod(cells[6]));
    }
    {
      const ExperimentConfig point = resolve(with_axis(c, plan.axis, plan.values[i]));
      const TrainState st = build_state(point);
      for (std::uint64_t s = c.seed; s < c.seed + plan.repeats; ++s) {
        const fs::path dir = root / sweep_run_dir(plan.axis, plan.values[i], s);
        // history.jsonl keeps full precision; summary.csv is rounded.
        double flops = 0.0;
        for (const auto &l : lines(dir / "history.jsonl")) {
          const auto rec = nlohmann::json::parse(l);
          if (rec.contains("flops"))
            flops = rec["flops"]["train_cumulative"].get<double>();
        }
        budget_log.add(flops, dense_train_budget(st, point.train));
      }
    }
    auto stat = [](const std::vector<double> &v) {
      const double mean = (v[0] + v[1]) / 2.0;
      return SweepStat{mean, std::sqrt(((v[0] - mean) * (v[0] - mean) +
                                        (v[1] - mean) * (v[1] - mean)) /
                                       1.0)};
    };
    const SweepStat a = stat(acc), p = stat(pd);
    bad += rows[i].runs != 2 || rows[i].accuracy.mean != a.mean ||
           rows[i].accuracy.std != a.std || rows[i].pd.mean != p.mean ||
           rows[i].pd.std != p.std || again[i].accuracy.mean != rows[i].accuracy.mean ||
           again[i].nll.std != rows[i].nll.std;
  }
  o.require(bad == 0, std::to_string(bad) + " aggregate rows disagree with the runs");
  std::printf("    sparsity  accuracy (mean +- std)\n");
  for (const auto &r : rows)
    std::printf("    %-8g  %.4f +- %.4f\n", r.value, r.accuracy.mean, r.accuracy.std);
  if (o.pass)
    o.detail = "5 values x 2 seeds aggregated exactly (curve recorded, not gated)";
  return o;
}

} // namespace

int main() {
  const nt_test::TempDir scratch("acceptance");
  int failures = 0;
  const auto report = [&](int id, const char *name, const std::function<Outcome()> &f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  const DensityRun run = density_run();
  report(1, "density conservation", [&] { return density_conservation(run); });
  report(2, "mask-zero closure", [&] { return mask_zero_closure(run); });
  report(3, "gradient correctness", gradient_correctness);
  report(4, "ER allocation", er_allocation);
  report(5, "selection oracles", selection_oracles);
  report(6, "metric oracles", metric_oracles);
  report(7, "FLOPs rule", flops_rule);
  report(8, "end-to-end rings", [&] { return end_to_end(scratch / "e2e"); });
  report(10, "determinism and resume", [&] { return determinism(scratch / "det"); });
  report(11, "sparsity sweep", [&] { return sweep_shape(scratch / "sweep"); });
  report(9, "extension rule", [&] { return extension_rule(scratch / "ext"); });
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
