// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "model.hpp"

namespace neurotrails {

/// Forward FLOPs per sample. Conventions: linear 2*active + out (bias adds);
/// conv 2*active*positions + out*positions; relu one per element. Dense
/// counts treat every mask as all-ones.
double network_forward_flops(const Network &net, const Shape &sample_in,
                             bool dense, Shape *sample_out = nullptr);

struct ComponentFlops {
  std::string name;
  double sparse = 0.0;
  double dense = 0.0;
};

struct FlopsLedger {
  double forward_sparse = 0.0; // f_S, whole ensemble, per sample
  double forward_dense = 0.0;  // f_D
  std::vector<ComponentFlops> components;

  /// One optimizer step costs three forward passes.
  double train_step(std::size_t batch) const {
    return 3.0 * forward_sparse * static_cast<double>(batch);
  }
  double dense_train_step(std::size_t batch) const {
    return 3.0 * forward_dense * static_cast<double>(batch);
  }
  double inference_per_sample() const { return forward_sparse; }
};

/// Backbone once plus every head.
FlopsLedger count_flops(const TrailsModel &model);
/// Sum over independently trained members.
FlopsLedger count_flops(const std::vector<const TrailsModel *> &members);

} // namespace neurotrails
