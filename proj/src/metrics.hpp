// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace neurotrails {

using Predictions = std::vector<std::int32_t>;

enum class PdMode { pairwise, strict };
std::string to_string(PdMode m);
PdMode parse_pd_mode(const std::string &name);

struct FlopsSnapshot {
  double forward_sparse = 0.0; // per sample, whole ensemble
  double forward_dense = 0.0;
  double train_cumulative = 0.0;
};

struct MetricsReport {
  std::size_t step = 0;
  double accuracy = 0.0;
  double nll = 0.0;
  double ece = 0.0;
  double pd = 0.0;        // configured mode
  double pd_strict = 0.0; // "not all heads agree" fraction
  double perplexity = 1.0;
  std::vector<double> head_accuracy;
  FlopsSnapshot flops;
};

struct DisagreementRecord {
  std::size_t sample = 0;
  std::vector<std::int32_t> head_predictions;
  std::int32_t ensemble_prediction = 0;
  std::int32_t label = 0;
};

double accuracy(std::span<const std::int32_t> predictions,
                std::span<const std::int32_t> labels);

/// Mean -log p[label], probabilities floored at 1e-12.
double nll(const TensorF64 &probs, std::span<const std::int32_t> labels);

/// Equal-width right-closed confidence bins over (0, 1]; confidence c goes to
/// bin ceil(c * bins) (c = 0 to bin 1).
double ece(const TensorF64 &probs, std::span<const std::int32_t> labels,
           std::size_t bins = 15);

/// pairwise: mean over unordered head pairs of the fraction of differing
/// samples. strict: fraction of samples where not all heads agree.
double prediction_disagreement(const std::vector<Predictions> &per_head,
                               PdMode mode = PdMode::pairwise);

double perplexity(double mean_nll);

/// Samples where heads disagree, ascending by sample id.
std::vector<DisagreementRecord>
disagreement_breakdown(const std::vector<Predictions> &per_head,
                       std::span<const std::int32_t> ensemble,
                       std::span<const std::int32_t> labels);

} // namespace neurotrails
