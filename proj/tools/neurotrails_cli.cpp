// SPDX-License-Identifier: Apache-2.0
// neurotrails: train, evaluate and sweep sparse multi-head ensembles.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neurotrails/neurotrails.h"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool dump = false;
  std::string resume;
  bool force = false;
};

int report(nt_status s) {
  if (s != NT_OK)
    std::fprintf(stderr, "error: %s\n", nt_last_error());
  return static_cast<int>(s);
}

void print_metrics(const char *what, const nt_metrics &m) {
  std::printf("%s step=%llu accuracy=%.4f nll=%.4f ece=%.4f pd=%.4f "
              "perplexity=%.4f\n",
              what, static_cast<unsigned long long>(m.step), m.accuracy, m.nll,
              m.ece, m.pd, m.perplexity);
  std::printf("flops inference=%.6g dense_inference=%.6g train=%.6g "
              "budget=%.6g\n",
              m.inference_flops, m.dense_inference_flops, m.train_flops,
              m.train_flops_budget);
}

// Loads the config and applies the shared overrides. Returns a status.
int open_experiment(const Common &c, nt_experiment **exp) {
  nt_status s = nt_experiment_load(c.config.c_str(), exp);
  if (s != NT_OK)
    return report(s);
  if (c.seed)
    nt_experiment_set_seed(*exp, *c.seed);
  if (!c.out.empty())
    nt_experiment_set_output_dir(*exp, c.out.c_str());
  nt_experiment_set_dump_disagreements(*exp, c.dump ? 1 : 0);
  if (!c.resume.empty())
    nt_experiment_set_resume(*exp, c.resume.c_str(), c.force ? 1 : 0);
  return 0;
}

void add_common(CLI::App *cmd, Common &c, bool resume) {
  cmd->add_option("--config,-c", c.config, "experiment config (JSON)")
      ->required();
  cmd->add_option("--seed", c.seed, "override the master seed");
  cmd->add_option("--out,-o", c.out, "override the output directory");
  cmd->add_flag("--dump-disagreements", c.dump,
                "write disagreements.csv for the test split");
  if (resume) {
    cmd->add_option("--resume", c.resume, "checkpoint to continue from");
    cmd->add_flag("--force", c.force, "accept a config hash mismatch");
  }
}

std::vector<double> parse_values(const std::string &spec) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = spec.find(',', start);
    const std::string item =
        spec.substr(start, end == std::string::npos ? std::string::npos
                                                    : end - start);
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size())
      throw std::invalid_argument(item);
    out.push_back(v);
    if (end == std::string::npos)
      break;
    start = end + 1;
  }
  return out;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Sparse multi-head ensemble training"};
  app.set_version_flag("--version", std::string(nt_version()));
  app.require_subcommand(1);

  Common train_opts, eval_opts, sweep_opts;
  auto *train = app.add_subcommand("train", "train one configuration");
  add_common(train, train_opts, true);

  auto *eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_opts, true);

  auto *sweep = app.add_subcommand("sweep", "grid over one axis");
  add_common(sweep, sweep_opts, false);
  std::string axis_name, values_spec;
  std::size_t repeats = 1, workers = 1;
  sweep->add_option("--axis", axis_name, "blocks_in_head, sparsity or heads")
      ->required();
  sweep->add_option("--values", values_spec, "comma separated values")
      ->required();
  sweep->add_option("--repeats", repeats, "seeds per value")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--workers", workers, "concurrent runs")
      ->check(CLI::PositiveNumber);

  auto *export_data = app.add_subcommand("export-data", "write a synthetic task as CSV");
  std::string kind = "rings", path;
  std::size_t n = 2000;
  double noise = 0.1;
  std::uint64_t seed = 0;
  export_data->add_option("--kind", kind, "two_clusters, rings or xor_grid");
  export_data->add_option("--n", n, "samples");
  export_data->add_option("--noise", noise, "noise level");
  export_data->add_option("--seed", seed, "generator seed");
  export_data->add_option("--out,-o", path, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*export_data)
    return report(nt_export_synthetic(kind.c_str(), n, noise, seed, path.c_str()));

  nt_experiment *exp = nullptr;
  int rc = 0;
  if (*train || *eval) {
    const bool is_train = train->parsed();
    if ((rc = open_experiment(is_train ? train_opts : eval_opts, &exp)))
      return rc;
    nt_metrics m{};
    rc = report(is_train ? nt_experiment_train(exp, &m)
                         : nt_experiment_eval(exp, &m));
    if (rc == 0)
      print_metrics(is_train ? "final" : "eval", m);
  } else if (*sweep) {
    nt_sweep_axis axis;
    if (nt_parse_axis(axis_name.c_str(), &axis) != NT_OK)
      return report(NT_ERR_VALIDATION);
    std::vector<double> values;
    try {
      values = parse_values(values_spec);
    } catch (const std::exception &) {
      std::fprintf(stderr, "error: --values: expected comma separated numbers, got '%s'\n",
                   values_spec.c_str());
      return NT_ERR_VALIDATION;
    }
    if ((rc = open_experiment(sweep_opts, &exp)))
      return rc;
    rc = report(nt_sweep(exp, axis, values.data(), values.size(), repeats, workers));
    if (rc == 0)
      std::printf("sweep: %zu runs done\n", values.size() * repeats);
  }
  nt_experiment_free(exp);
  return rc;
}
