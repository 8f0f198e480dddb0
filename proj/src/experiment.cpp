// SPDX-License-Identifier: Apache-2.0
#include "experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "checkpoint.hpp"
#include "error.hpp"

namespace neurotrails {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char *summary_header =
    "step,train_loss,lr,accuracy,nll,ece,pd,pd_strict,perplexity,"
    "inference_flops,dense_inference_flops,train_flops";

json metrics_json(const MetricsReport &m) {
  return json{{"step", m.step},
              {"accuracy", m.accuracy},
              {"nll", m.nll},
              {"ece", m.ece},
              {"pd", m.pd},
              {"pd_strict", m.pd_strict},
              {"perplexity", m.perplexity},
              {"head_accuracy", m.head_accuracy},
              {"flops",
               {{"inference", m.flops.forward_sparse},
                {"dense_inference", m.flops.forward_dense},
                {"train_cumulative", m.flops.train_cumulative}}}};
}

json eval_json(const EvalRecord &r) {
  json j = metrics_json(r.metrics);
  j["type"] = "eval";
  j["train_loss"] = r.train_loss;
  j["lr"] = r.lr;
  j["drop_fraction"] = r.drop_fraction;
  return j;
}

json update_json(const UpdateRecord &r) {
  json layers = json::array();
  for (const auto &l : r.layers)
    layers.push_back({{"layer", l.layer},
                      {"pruned", l.pruned},
                      {"grown", l.grown},
                      {"active_before", l.active_before},
                      {"active_after", l.active_after}});
  return json{{"type", "topology"},
              {"step", r.step},
              {"component", r.component},
              {"drop_fraction", r.drop_fraction},
              {"layers", layers}};
}

std::string summary_row(const EvalRecord &r) {
  const MetricsReport &m = r.metrics;
  std::string s = std::to_string(m.step);
  for (double v : {r.train_loss, r.lr, m.accuracy, m.nll, m.ece, m.pd,
                   m.pd_strict, m.perplexity, m.flops.forward_sparse,
                   m.flops.forward_dense, m.flops.train_cumulative})
    s += "," + format_g6(v);
  return s;
}

std::ofstream open_out(const fs::path &path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out)
    fail_io("cannot write " + path.string());
  return out;
}

std::vector<std::string> read_lines(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    fail_io("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty())
      lines.push_back(line);
  return lines;
}

// Drops records past `step` so a resumed run appends where the checkpoint
// left off.
void truncate_records(const fs::path &dir, std::size_t step) {
  const fs::path summary = dir / "summary.csv";
  if (fs::exists(summary)) {
    auto lines = read_lines(summary);
    auto out = open_out(summary, std::ios::trunc);
    out << summary_header << "\n";
    for (std::size_t i = 1; i < lines.size(); ++i)
      if (std::stoull(lines[i].substr(0, lines[i].find(','))) <= step)
        out << lines[i] << "\n";
  } else {
    open_out(summary, std::ios::trunc) << summary_header << "\n";
  }
  const fs::path history = dir / "history.jsonl";
  if (fs::exists(history)) {
    auto lines = read_lines(history);
    auto out = open_out(history, std::ios::trunc);
    for (const auto &line : lines)
      if (json::parse(line).at("step").get<std::size_t>() <= step)
        out << line << "\n";
  } else {
    open_out(history, std::ios::trunc);
  }
}

void write_disagreements(const fs::path &path, const EvalResult &r,
                         const Labels &labels) {
  auto out = open_out(path, std::ios::trunc);
  out << "sample,label,ensemble";
  for (std::size_t h = 0; h < r.head_predictions.size(); ++h)
    out << ",head" << h;
  out << "\n";
  if (r.head_predictions.size() < 2)
    return;
  for (const auto &d :
       disagreement_breakdown(r.head_predictions, r.ensemble, labels)) {
    out << d.sample << "," << d.label << "," << d.ensemble_prediction;
    for (auto p : d.head_predictions)
      out << "," << p;
    out << "\n";
  }
}

std::size_t integer_value(double v, const std::string &what) {
  if (!(v >= 0.0) || std::floor(v) != v)
    fail_validation("sweep.values: " + what + " needs non-negative integers, got " +
                    format_g6(v));
  return static_cast<std::size_t>(v);
}

SweepStat stat(const std::vector<double> &xs) {
  SweepStat s;
  if (xs.empty())
    return s;
  double sum = 0.0;
  for (double x : xs)
    sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs)
      ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

} // namespace

std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

ExperimentConfig apply_options(ExperimentConfig config, const RunOptions &opts) {
  if (opts.seed)
    config.seed = *opts.seed;
  if (opts.output_dir)
    config.output_dir = *opts.output_dir;
  config.train.seed = config.seed;
  config.train.sparsity = config.sparsity;
  return config;
}

TrainState build_state(const ExperimentConfig &config) {
  const double s = config.train.topology.strategy == Strategy::prune_oneshot
                       ? 0.0
                       : config.sparsity;
  std::vector<TrailsModel> members;
  if (config.ensemble == EnsembleMode::trails)
    members.push_back(build_trails(config.network, config.split, config.heads, s,
                                   config.allocation, {config.seed, 0}));
  else
    members = build_independent_ensemble(config.network, config.heads,
                                         config.split, s, config.allocation,
                                         config.seed);
  return make_train_state(std::move(members), config.train.optimizer.kind,
                          config.seed);
}

ExperimentConfig resolve(const ExperimentConfig &config) {
  ExperimentConfig c = config;
  c.train.seed = c.seed;
  c.train.sparsity = c.sparsity;
  c.validate();
  const TrainState state = build_state(c);
  const std::size_t cap = extension_cap(c.sparsity, c.train.base_steps);
  const double budget = dense_train_budget(state, c.train);

  auto projected = [&](std::size_t steps) {
    TrainConfig t = c.train;
    t.steps = steps;
    return projected_train_flops(state, t);
  };

  std::size_t steps = 0;
  if (c.steps) {
    steps = *c.steps;
    const double p = projected(steps);
    if (p > budget)
      fail_validation("training.steps: " + std::to_string(steps) +
                      " steps would cost " + format_g6(p) +
                      " training FLOPs, above the dense budget " +
                      format_g6(budget));
  } else {
    const FlopsLedger ledger = count_flops(state.models());
    const double per_step =
        c.train.topology.strategy == Strategy::prune_oneshot
            ? ledger.dense_train_step(c.train.batch_size)
            : ledger.train_step(c.train.batch_size);
    steps = std::min<std::size_t>(
        cap, static_cast<std::size_t>(std::floor(budget / per_step)));
    while (steps > 0 && projected(steps) > budget)
      --steps;
    if (steps == 0)
      fail_validation("training.steps: no step fits the dense FLOPs budget");
  }
  c.steps = steps;
  c.train.steps = steps;
  c.train.topology.horizon = steps;
  c.train.validate();
  return c;
}

SplitData load_data(const ExperimentConfig &config) {
  const DatasetConfig &d = config.dataset;
  Dataset all;
  if (d.source == DataSource::synthetic)
    all = gen_synthetic(d.generator, d.n, d.noise,
                        Rng::stream(config.seed, stream::synthetic)());
  else
    all = load_idx(d.images, d.labels, d.limit);
  if (shape_size(all.sample_shape()) != shape_size(config.network.input_shape))
    fail_validation("network.input_shape: " +
                    shape_str(config.network.input_shape) +
                    " does not match dataset samples of shape " +
                    shape_str(all.sample_shape()));
  for (auto y : all.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= config.network.classes)
      fail_validation("network.classes: dataset label " + std::to_string(y) +
                      " outside [0, " + std::to_string(config.network.classes) +
                      ")");
  all.classes = config.network.classes;
  SplitData split = train_test_split(all, d.train_fraction,
                                     Rng::stream(config.seed, stream::split)());
  if (split.train.size() < config.train.batch_size)
    fail_validation("training.batch_size: " +
                    std::to_string(config.train.batch_size) +
                    " exceeds the training set size " +
                    std::to_string(split.train.size()));
  if (split.test.size() == 0)
    fail_validation("dataset.train_fraction: leaves no test samples");
  if (d.normalize) {
    const Normalization norm = fit_normalization(split.train);
    apply_normalization(split.train, norm);
    apply_normalization(split.test, norm);
  }
  return split;
}

RunResult run_train(const ExperimentConfig &config, const RunOptions &opts) {
  const ExperimentConfig c = resolve(apply_options(config, opts));
  const std::uint64_t hash = c.hash();
  const fs::path dir = c.output_dir;
  SplitData data = load_data(c);
  TrainState state = build_state(c);
  if (opts.resume)
    load_checkpoint(*opts.resume, state, hash, opts.force);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    fail_io("cannot create output directory " + dir.string() + ": " +
            ec.message());
  open_out(dir / "config.resolved.json", std::ios::trunc)
      << c.to_json().dump(2) << "\n";
  if (opts.resume) {
    truncate_records(dir, state.step);
  } else {
    open_out(dir / "summary.csv", std::ios::trunc) << summary_header << "\n";
    open_out(dir / "history.jsonl", std::ios::trunc);
  }

  auto summary = open_out(dir / "summary.csv", std::ios::app);
  auto history = open_out(dir / "history.jsonl", std::ios::app);
  FitHooks hooks;
  std::optional<EvalRecord> last;
  hooks.on_eval = [&](const EvalRecord &r) {
    history << eval_json(r).dump() << "\n" << std::flush;
    summary << summary_row(r) << "\n" << std::flush;
    last = r;
  };
  hooks.on_update = [&](const UpdateRecord &r) {
    history << update_json(r).dump() << "\n";
  };
  hooks.on_checkpoint = [&](const TrainState &s) {
    history.flush();
    save_checkpoint(s, hash, dir / ("checkpoint_" + std::to_string(s.step) + ".ntck"));
  };

  fit(state, data.train, data.test, c.train, hooks);
  history.flush();
  save_checkpoint(state, hash, dir / "checkpoint.ntck");

  RunResult result;
  result.steps = state.step;
  result.train_flops = state.train_flops;
  result.train_budget = dense_train_budget(state, c.train);
  result.output_dir = dir;
  const EvalResult ev = evaluate(state, data.test, c.train.vote, c.train.pd_mode);
  result.final = last ? last->metrics : ev.report;
  if (opts.dump_disagreements)
    write_disagreements(dir / "disagreements.csv", ev, data.test.labels);
  return result;
}

RunResult run_eval(const ExperimentConfig &config, const RunOptions &opts) {
  const ExperimentConfig c = resolve(apply_options(config, opts));
  const fs::path dir = c.output_dir;
  const fs::path ckpt = opts.resume ? *opts.resume : dir / "checkpoint.ntck";
  SplitData data = load_data(c);
  TrainState state = build_state(c);
  load_checkpoint(ckpt, state, c.hash(), opts.force);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    fail_io("cannot create output directory " + dir.string() + ": " +
            ec.message());
  const EvalResult ev = evaluate(state, data.test, c.train.vote, c.train.pd_mode);
  json j = metrics_json(ev.report);
  j["checkpoint"] = ckpt.string();
  open_out(dir / "eval.json", std::ios::trunc) << j.dump(2) << "\n";
  if (opts.dump_disagreements)
    write_disagreements(dir / "disagreements.csv", ev, data.test.labels);

  RunResult result;
  result.final = ev.report;
  result.steps = state.step;
  result.train_flops = state.train_flops;
  result.train_budget = dense_train_budget(state, c.train);
  result.output_dir = dir;
  return result;
}

std::string to_string(SweepAxis a) {
  switch (a) {
  case SweepAxis::blocks_in_head:
    return "blocks_in_head";
  case SweepAxis::sparsity:
    return "sparsity";
  case SweepAxis::heads:
    return "heads";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string &name) {
  if (name == "blocks_in_head")
    return SweepAxis::blocks_in_head;
  if (name == "sparsity")
    return SweepAxis::sparsity;
  if (name == "heads")
    return SweepAxis::heads;
  fail_validation("sweep.axis: unknown axis '" + name +
                  "' (expected blocks_in_head, sparsity, heads)");
}

ExperimentConfig with_axis(const ExperimentConfig &config, SweepAxis axis,
                           double value) {
  ExperimentConfig c = config;
  switch (axis) {
  case SweepAxis::blocks_in_head: {
    const std::size_t b = integer_value(value, "blocks_in_head");
    if (b > c.network.depth())
      fail_validation("sweep.values: blocks_in_head " + std::to_string(b) +
                      " exceeds network depth " +
                      std::to_string(c.network.depth()));
    c.split = c.network.depth() - b;
    break;
  }
  case SweepAxis::sparsity:
    c.sparsity = value;
    break;
  case SweepAxis::heads: {
    const std::size_t h = integer_value(value, "heads");
    if (h < 1)
      fail_validation("sweep.values: heads must be >= 1");
    c.heads = h;
    break;
  }
  }
  c.train.sparsity = c.sparsity;
  return c;
}

fs::path sweep_run_dir(SweepAxis axis, double value, std::uint64_t seed) {
  return fs::path(to_string(axis) + "_" + format_g6(value)) /
         ("seed_" + std::to_string(seed));
}

std::vector<SweepRow> run_sweep(const ExperimentConfig &config,
                                const SweepPlan &plan, const RunOptions &opts) {
  if (opts.resume)
    fail_validation("sweep: --resume is not supported for sweeps");
  if (plan.values.empty())
    fail_validation("sweep.values: at least one value is required");
  if (plan.repeats < 1)
    fail_validation("sweep.repeats: must be >= 1");
  const ExperimentConfig base = apply_options(config, opts);

  std::vector<ExperimentConfig> grid;
  for (double v : plan.values) {
    for (std::size_t r = 0; r < plan.repeats; ++r) {
      ExperimentConfig c = with_axis(base, plan.axis, v);
      c.seed = base.seed + r;
      c.output_dir = base.output_dir / sweep_run_dir(plan.axis, v, c.seed);
      try {
        resolve(c);
      } catch (const Error &e) {
        throw Error(e.code(), "sweep point " + to_string(plan.axis) + "=" +
                           format_g6(v) + ": " + e.what());
      }
      grid.push_back(std::move(c));
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        RunOptions o;
        o.dump_disagreements = opts.dump_disagreements;
        run_train(grid[i], o);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error)
          first_error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(
      1, std::min(plan.workers, grid.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < n; ++w)
    threads.emplace_back(worker);
  for (auto &t : threads)
    t.join();
  if (first_error)
    std::rethrow_exception(first_error);

  const auto rows = aggregate_sweep(base.output_dir, base, plan);
  auto out = open_out(base.output_dir / "sweep.csv", std::ios::trunc);
  out << "axis,value,runs";
  for (const char *m : {"accuracy", "nll", "ece", "pd", "perplexity",
                        "inference_flops", "train_flops"})
    out << "," << m << "_mean," << m << "_std";
  out << "\n";
  for (const auto &row : rows) {
    out << to_string(plan.axis) << "," << format_g6(row.value) << ","
        << row.runs;
    for (const SweepStat *s : {&row.accuracy, &row.nll, &row.ece, &row.pd,
                               &row.perplexity, &row.inference_flops,
                               &row.train_flops})
      out << "," << format_g6(s->mean) << "," << format_g6(s->std);
    out << "\n";
  }
  return rows;
}

std::vector<SweepRow> aggregate_sweep(const fs::path &dir,
                                      const ExperimentConfig &config,
                                      const SweepPlan &plan) {
  std::vector<SweepRow> rows;
  for (double v : plan.values) {
    std::map<std::string, std::vector<double>> cols;
    SweepRow row;
    row.value = v;
    for (std::size_t r = 0; r < plan.repeats; ++r) {
      const fs::path summary =
          dir / sweep_run_dir(plan.axis, v, config.seed + r) / "summary.csv";
      const auto lines = read_lines(summary);
      if (lines.size() < 2)
        fail_io(summary.string() + ": no records");
      std::vector<std::string> header, last;
      for (auto *dst : {&header, &last}) {
        std::stringstream ss(dst == &header ? lines.front() : lines.back());
        for (std::string cell; std::getline(ss, cell, ',');)
          dst->push_back(cell);
      }
      if (header.size() != last.size())
        fail_io(summary.string() + ": malformed last row");
      for (std::size_t i = 0; i < header.size(); ++i)
        cols[header[i]].push_back(std::stod(last[i]));
      ++row.runs;
    }
    row.accuracy = stat(cols["accuracy"]);
    row.nll = stat(cols["nll"]);
    row.ece = stat(cols["ece"]);
    row.pd = stat(cols["pd"]);
    row.perplexity = stat(cols["perplexity"]);
    row.inference_flops = stat(cols["inference_flops"]);
    row.train_flops = stat(cols["train_flops"]);
    rows.push_back(row);
  }
  return rows;
}

} // namespace neurotrails
