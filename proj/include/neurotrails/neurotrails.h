/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the neurotrails experiment runner.
 *
 * Every call returns an nt_status. On failure a message is available from
 * nt_last_error() until the next call on the same thread.
 */
#ifndef NEUROTRAILS_H
#define NEUROTRAILS_H

#include <stddef.h>
#include <stdint.h>

#if defined(NEUROTRAILS_BUILDING)
#define NT_API __attribute__((visibility("default")))
#else
#define NT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nt_status {
  NT_OK = 0,
  NT_ERR_VALIDATION = 1, /* bad config or argument value */
  NT_ERR_DIVERGENCE = 2, /* non-finite loss during training */
  NT_ERR_IO = 3,         /* unreadable, unwritable or corrupt file */
  NT_ERR_INVALID_ARGUMENT = 4,
  NT_ERR_INTERNAL = 5
} nt_status;

typedef struct nt_experiment nt_experiment;

typedef struct nt_metrics {
  uint64_t step;
  double accuracy;
  double nll;
  double ece;
  double pd;
  double pd_strict;
  double perplexity;
  double inference_flops;       /* per sample, sparse */
  double dense_inference_flops; /* per sample, same ensemble kept dense */
  double train_flops;           /* cumulative */
  double train_flops_budget;    /* dense baseline */
} nt_metrics;

typedef enum nt_sweep_axis {
  NT_AXIS_BLOCKS_IN_HEAD = 0,
  NT_AXIS_SPARSITY = 1,
  NT_AXIS_HEADS = 2
} nt_sweep_axis;

NT_API const char *nt_version(void);
NT_API const char *nt_last_error(void);

/* Config from a JSON file or string. */
NT_API nt_status nt_experiment_load(const char *path, nt_experiment **out);
NT_API nt_status nt_experiment_parse(const char *json, nt_experiment **out);
NT_API void nt_experiment_free(nt_experiment *exp);

NT_API nt_status nt_experiment_set_seed(nt_experiment *exp, uint64_t seed);
NT_API nt_status nt_experiment_set_output_dir(nt_experiment *exp,
                                              const char *dir);
NT_API nt_status nt_experiment_set_dump_disagreements(nt_experiment *exp,
                                                      int enabled);
/* Continue training (or evaluate) from `checkpoint`. With `force` set a
 * config hash mismatch is accepted. NULL clears. */
NT_API nt_status nt_experiment_set_resume(nt_experiment *exp,
                                          const char *checkpoint, int force);

/* Resolved config (auto steps filled in) as JSON. Writes at most `cap`
 * bytes including the terminator; `needed` receives the full size. */
NT_API nt_status nt_experiment_resolved_config(nt_experiment *exp, char *buf,
                                               size_t cap, size_t *needed);

/* `out` may be NULL. */
NT_API nt_status nt_experiment_train(nt_experiment *exp, nt_metrics *out);
NT_API nt_status nt_experiment_eval(nt_experiment *exp, nt_metrics *out);

NT_API nt_status nt_parse_axis(const char *name, nt_sweep_axis *out);
/* One run per value and repeat (seeds seed .. seed+repeats-1), then
 * <output_dir>/sweep.csv. */
NT_API nt_status nt_sweep(nt_experiment *exp, nt_sweep_axis axis,
                          const double *values, size_t count, size_t repeats,
                          size_t workers);

NT_API nt_status nt_checkpoint_info(const char *path, uint32_t *version,
                                    uint64_t *config_hash, uint64_t *step);

/* Writes a synthetic task ("two_clusters", "rings", "xor_grid") as CSV. */
NT_API nt_status nt_export_synthetic(const char *kind, size_t n, double noise,
                                     uint64_t seed, const char *path);

#ifdef __cplusplus
}
#endif

#endif /* NEUROTRAILS_H */
