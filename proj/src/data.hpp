// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loss.hpp"
#include "tensor.hpp"

namespace neurotrails {

/// Immutable labelled sample set. `inputs` is [N, features...].
struct Dataset {
  Tensor inputs;
  Labels labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  void validate() const;
};

struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0, 1]. `limit` > 0 keeps only the first `limit`
/// samples.
Dataset load_idx(const std::filesystem::path &images,
                 const std::filesystem::path &labels, std::size_t limit = 0);

/// Writes inputs (values in [0, 1], quantized to bytes) and labels as IDX.
/// Inputs of rank 2 are written as [N, features, 1].
void write_idx(const Dataset &ds, const std::filesystem::path &images,
               const std::filesystem::path &labels);

enum class SyntheticKind { two_clusters, rings, xor_grid };
std::string to_string(SyntheticKind k);
SyntheticKind parse_synthetic_kind(const std::string &name);

/// Deterministic 2-D binary tasks with alternating labels.
///   two_clusters: Gaussians at (-1,-1) and (1,1) with std `noise`
///   rings: radii 1 and 2 with radial Gaussian noise `noise`
///   xor_grid: points in the XOR quadrants, jittered by `noise`
Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise,
                      std::uint64_t seed);

struct BatchPlan {
  std::size_t batch_size = 128;
  std::uint64_t shuffle_seed = 0;
  bool drop_last = true;
};

/// Index slices for one epoch from the (seed, epoch) permutation.
std::vector<std::vector<std::size_t>> batches(std::size_t n,
                                              const BatchPlan &plan,
                                              std::uint64_t epoch);
std::size_t batches_per_epoch(std::size_t n, const BatchPlan &plan);

struct SplitData {
  Dataset train;
  Dataset test;
};

/// Deterministic split: a seeded permutation, the first `train_fraction`
/// of it goes to train.
SplitData train_test_split(const Dataset &ds, double train_fraction,
                           std::uint64_t seed);

Dataset subset(const Dataset &ds, const std::vector<std::size_t> &indices);
Tensor gather_inputs(const Dataset &ds, const std::vector<std::size_t> &indices);
Labels gather_labels(const Dataset &ds, const std::vector<std::size_t> &indices);

/// Per-feature statistics of `ds` (std floored to 1 when zero).
Normalization fit_normalization(const Dataset &ds);
void apply_normalization(Dataset &ds, const Normalization &norm);

/// CSV with header x0,x1,...,label.
void export_csv(const Dataset &ds, const std::filesystem::path &path);

} // namespace neurotrails
