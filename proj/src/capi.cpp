// SPDX-License-Identifier: Apache-2.0
#include "neurotrails/neurotrails.h"

#include <cstring>
#include <string>

#include "checkpoint.hpp"
#include "error.hpp"
#include "experiment.hpp"

using namespace neurotrails;

struct nt_experiment {
  ExperimentConfig config;
  RunOptions options;
};

namespace {

thread_local std::string last_error;

template <class F> nt_status guarded(F &&f) {
  last_error.clear();
  try {
    f();
    return NT_OK;
  } catch (const Error &e) {
    last_error = e.what();
    return static_cast<nt_status>(static_cast<int>(e.code()));
  } catch (const nlohmann::json::exception &e) {
    last_error = e.what();
    return NT_ERR_VALIDATION;
  } catch (const std::filesystem::filesystem_error &e) {
    last_error = e.what();
    return NT_ERR_IO;
  } catch (const std::exception &e) {
    last_error = e.what();
    return NT_ERR_INTERNAL;
  }
}

nt_status bad_argument(const char *what) {
  last_error = what;
  return NT_ERR_INVALID_ARGUMENT;
}

void fill(nt_metrics *out, const RunResult &r) {
  if (!out)
    return;
  out->step = r.final.step;
  out->accuracy = r.final.accuracy;
  out->nll = r.final.nll;
  out->ece = r.final.ece;
  out->pd = r.final.pd;
  out->pd_strict = r.final.pd_strict;
  out->perplexity = r.final.perplexity;
  out->inference_flops = r.final.flops.forward_sparse;
  out->dense_inference_flops = r.final.flops.forward_dense;
  out->train_flops = r.train_flops;
  out->train_flops_budget = r.train_budget;
}

} // namespace

extern "C" {

const char *nt_version(void) { return "0.1.0"; }

const char *nt_last_error(void) { return last_error.c_str(); }

nt_status nt_experiment_load(const char *path, nt_experiment **out) {
  if (!path || !out)
    return bad_argument("nt_experiment_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new nt_experiment{load_config(path), {}}; });
}

nt_status nt_experiment_parse(const char *json, nt_experiment **out) {
  if (!json || !out)
    return bad_argument("nt_experiment_parse: null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new nt_experiment{parse_config(nlohmann::json::parse(json)), {}};
  });
}

void nt_experiment_free(nt_experiment *exp) { delete exp; }

nt_status nt_experiment_set_seed(nt_experiment *exp, uint64_t seed) {
  if (!exp)
    return bad_argument("nt_experiment_set_seed: null experiment");
  exp->options.seed = seed;
  return NT_OK;
}

nt_status nt_experiment_set_output_dir(nt_experiment *exp, const char *dir) {
  if (!exp || !dir)
    return bad_argument("nt_experiment_set_output_dir: null argument");
  exp->options.output_dir = dir;
  return NT_OK;
}

nt_status nt_experiment_set_dump_disagreements(nt_experiment *exp,
                                               int enabled) {
  if (!exp)
    return bad_argument("nt_experiment_set_dump_disagreements: null experiment");
  exp->options.dump_disagreements = enabled != 0;
  return NT_OK;
}

nt_status nt_experiment_set_resume(nt_experiment *exp, const char *checkpoint,
                                   int force) {
  if (!exp)
    return bad_argument("nt_experiment_set_resume: null experiment");
  if (checkpoint)
    exp->options.resume = checkpoint;
  else
    exp->options.resume.reset();
  exp->options.force = force != 0;
  return NT_OK;
}

nt_status nt_experiment_resolved_config(nt_experiment *exp, char *buf,
                                        size_t cap, size_t *needed) {
  if (!exp)
    return bad_argument("nt_experiment_resolved_config: null experiment");
  return guarded([&] {
    const std::string s =
        resolve(apply_options(exp->config, exp->options)).to_json().dump(2);
    if (needed)
      *needed = s.size() + 1;
    if (buf && cap > 0) {
      const std::size_t n = std::min(cap - 1, s.size());
      std::memcpy(buf, s.data(), n);
      buf[n] = '\0';
    }
  });
}

nt_status nt_experiment_train(nt_experiment *exp, nt_metrics *out) {
  if (!exp)
    return bad_argument("nt_experiment_train: null experiment");
  return guarded([&] { fill(out, run_train(exp->config, exp->options)); });
}

nt_status nt_experiment_eval(nt_experiment *exp, nt_metrics *out) {
  if (!exp)
    return bad_argument("nt_experiment_eval: null experiment");
  return guarded([&] { fill(out, run_eval(exp->config, exp->options)); });
}

nt_status nt_parse_axis(const char *name, nt_sweep_axis *out) {
  if (!name || !out)
    return bad_argument("nt_parse_axis: null argument");
  return guarded(
      [&] { *out = static_cast<nt_sweep_axis>(parse_sweep_axis(name)); });
}

nt_status nt_sweep(nt_experiment *exp, nt_sweep_axis axis,
                   const double *values, size_t count, size_t repeats,
                   size_t workers) {
  if (!exp || (!values && count))
    return bad_argument("nt_sweep: null argument");
  if (axis < NT_AXIS_BLOCKS_IN_HEAD || axis > NT_AXIS_HEADS)
    return bad_argument("nt_sweep: unknown axis");
  return guarded([&] {
    SweepPlan plan;
    plan.axis = static_cast<SweepAxis>(axis);
    plan.values.assign(values, values + count);
    plan.repeats = repeats;
    plan.workers = workers;
    run_sweep(exp->config, plan, exp->options);
  });
}

nt_status nt_checkpoint_info(const char *path, uint32_t *version,
                             uint64_t *config_hash, uint64_t *step) {
  if (!path)
    return bad_argument("nt_checkpoint_info: null path");
  return guarded([&] {
    const CheckpointInfo info = read_checkpoint_info(path);
    if (version)
      *version = info.version;
    if (config_hash)
      *config_hash = info.config_hash;
    if (step)
      *step = info.step;
  });
}

nt_status nt_export_synthetic(const char *kind, size_t n, double noise,
                              uint64_t seed, const char *path) {
  if (!kind || !path)
    return bad_argument("nt_export_synthetic: null argument");
  return guarded([&] {
    export_csv(gen_synthetic(parse_synthetic_kind(kind), n, noise, seed), path);
  });
}

} // extern "C"
