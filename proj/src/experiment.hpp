// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "trainer.hpp"

namespace neurotrails {

/// Command-line style overrides applied on top of a parsed config.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  bool dump_disagreements = false;
  std::optional<std::filesystem::path> resume; // checkpoint to continue from
  bool force = false;                          // ignore config hash mismatch
};

ExperimentConfig apply_options(ExperimentConfig config, const RunOptions &opts);

/// Members as configured: one TrailsModel, or `heads` single-head networks
/// for the independent ensemble. prune_oneshot members start dense.
TrainState build_state(const ExperimentConfig &config);

/// Fills `steps` (auto: the longest run under both the extension cap and the
/// dense FLOPs budget), the topology horizon, and the trainer copies of
/// seed/sparsity. Rejects configs whose projected training FLOPs exceed the
/// dense budget.
ExperimentConfig resolve(const ExperimentConfig &config);

SplitData load_data(const ExperimentConfig &config);

struct RunResult {
  MetricsReport final;
  std::size_t steps = 0;
  double train_flops = 0.0;
  double train_budget = 0.0;
  std::filesystem::path output_dir;
};

/// Writes config.resolved.json, history.jsonl, summary.csv and
/// checkpoint.ntck (plus checkpoint_<step>.ntck every checkpoint_interval
/// steps, and disagreements.csv on request) under the output directory.
RunResult run_train(const ExperimentConfig &config, const RunOptions &opts);

/// Evaluates a checkpoint (opts.resume, or <output_dir>/checkpoint.ntck) on
/// the test split and writes eval.json.
RunResult run_eval(const ExperimentConfig &config, const RunOptions &opts);

enum class SweepAxis { blocks_in_head, sparsity, heads };
std::string to_string(SweepAxis a);
SweepAxis parse_sweep_axis(const std::string &name);

/// Copy of `config` with the axis set to `value`. Integer axes reject
/// fractional values.
ExperimentConfig with_axis(const ExperimentConfig &config, SweepAxis axis,
                           double value);

struct SweepStat {
  double mean = 0.0;
  double std = 0.0; // sample standard deviation, 0 for a single run
};

struct SweepRow {
  double value = 0.0;
  std::size_t runs = 0;
  SweepStat accuracy, nll, ece, pd, perplexity, inference_flops, train_flops;
};

struct SweepPlan {
  SweepAxis axis = SweepAxis::sparsity;
  std::vector<double> values;
  std::size_t repeats = 1; // seeds seed, seed+1, ...
  std::size_t workers = 1;
};

/// Directory of one grid point, relative to the sweep output directory.
std::filesystem::path sweep_run_dir(SweepAxis axis, double value,
                                    std::uint64_t seed);

/// Validates every grid point, runs them (up to `workers` at a time) and
/// writes sweep.csv from the per-run summary.csv files.
std::vector<SweepRow> run_sweep(const ExperimentConfig &config,
                                const SweepPlan &plan, const RunOptions &opts);

/// Recomputes the aggregate rows from the last line of every per-run
/// summary.csv under `dir`.
std::vector<SweepRow> aggregate_sweep(const std::filesystem::path &dir,
                                      const ExperimentConfig &config,
                                      const SweepPlan &plan);

/// "%.6g".
std::string format_g6(double v);

} // namespace neurotrails
