// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "network.hpp"
#include "sparsity.hpp"

namespace neurotrails {

/// Block-sequential architecture: stem, then blocks f_1..f_L, then the
/// classifier. The stem always sits in the shared backbone and the
/// classifier always in the heads.
struct NetworkSpec {
  Shape input_shape; // per sample
  std::size_t classes = 0;
  std::vector<LayerSpec> stem;
  std::vector<std::vector<LayerSpec>> blocks;
  std::vector<LayerSpec> classifier;

  std::size_t depth() const { return blocks.size(); }
  /// Checks dims chain from input_shape to `classes` logits.
  void validate() const;
  std::vector<LayerSpec> backbone_layers(std::size_t split) const;
  std::vector<LayerSpec> head_layers(std::size_t split) const;
  std::vector<LayerSpec> all_layers() const;

  /// Linear(input->width)+ReLU stem, `blocks` x [Linear(width)+ReLU],
  /// Linear(width->classes) classifier.
  static NetworkSpec mlp(std::size_t input, std::size_t width,
                         std::size_t blocks, std::size_t classes);
};

enum class VoteMode { probs, logits };
std::string to_string(VoteMode m);
VoteMode parse_vote_mode(const std::string &name);

/// Shared backbone plus M structurally identical heads.
struct TrailsModel {
  NetworkSpec spec;
  std::size_t split = 0;
  Network backbone;
  std::vector<Network> heads;
  SparsityPlan backbone_plan; // empty when the backbone has no maskable layer
  SparsityPlan head_plan;
  std::uint64_t member = 0;

  mutable std::uint64_t backbone_forwards = 0;
  mutable std::uint64_t head_forwards = 0;

  std::size_t head_count() const { return heads.size(); }
  /// Backbone first, then heads in order.
  std::vector<const Network *> components() const;
  std::vector<Network *> components();
  std::string component_name(std::size_t index) const;
};

struct TrailsSeed {
  std::uint64_t seed = 0;
  std::uint64_t member = 0; // distinct per independent-ensemble member
};

/// Splits `spec` at block `split` (0 <= split <= L) into a backbone and
/// `heads` independently initialized heads. Backbone and each head are
/// allocated to `sparsity` independently.
TrailsModel build_trails(const NetworkSpec &spec, std::size_t split,
                         std::size_t heads, double sparsity,
                         Allocation allocation, const TrailsSeed &seed);

/// `members` single-head networks with independent stems, weights and masks.
std::vector<TrailsModel>
build_independent_ensemble(const NetworkSpec &spec, std::size_t members,
                           std::size_t split, double sparsity,
                           Allocation allocation, std::uint64_t seed);

struct HeadOutputs {
  std::vector<Tensor> logits;
  Tensor backbone_activation;
  Tape backbone_tape;
  std::vector<Tape> head_tapes;
};

/// Backbone once, then each head on the cached activation.
HeadOutputs forward_heads(const TrailsModel &model, const Tensor &batch,
                          bool record = false);

struct CompositeLoss {
  double loss = 0.0;
  std::vector<double> head_losses;
  std::vector<Tensor> probs;
};

/// (1/M) * sum of per-head cross-entropies.
CompositeLoss composite_loss(const HeadOutputs &outputs,
                             std::span<const std::int32_t> targets);

struct TrailsGradients {
  GradientSet backbone;
  std::vector<GradientSet> heads;

  bool all_finite() const;
};

/// Gradients of the composite loss. With `dense`, masked-out weight
/// positions keep their true gradient; otherwise they are zeroed.
TrailsGradients backward(const TrailsModel &model, const HeadOutputs &outputs,
                         const CompositeLoss &loss,
                         std::span<const std::int32_t> targets, bool dense);

struct Vote {
  TensorF64 probs; // softmax evaluated in double from the f32 logits
  std::vector<std::int32_t> predictions;
};

/// Mean of head probabilities (or softmax of mean logits), argmax with ties
/// to the lowest class.
Vote soft_vote(const std::vector<Tensor> &head_logits,
               VoteMode mode = VoteMode::probs);
inline Vote soft_vote(const HeadOutputs &outputs,
                      VoteMode mode = VoteMode::probs) {
  return soft_vote(outputs.logits, mode);
}

template <class T>
std::vector<std::int32_t> argmax_rows(const BasicTensor<T> &t);

/// Central-difference gradient of the composite loss, evaluated in double.
TrailsGradients finite_difference_gradient(const TrailsModel &model,
                                           const Tensor &x,
                                           std::span<const std::int32_t> targets,
                                           double eps = 1e-3);

} // namespace neurotrails
