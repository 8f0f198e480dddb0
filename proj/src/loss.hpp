// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "tensor.hpp"

namespace neurotrails {

using Labels = std::vector<std::int32_t>;

struct LossResult {
  double loss = 0.0;
  Tensor probs;
};

/// Row-wise softmax with max subtraction.
template <class T> BasicTensor<T> softmax_rows(const BasicTensor<T> &logits);

/// Mean softmax cross-entropy over the batch. `logits` is [N, classes].
LossResult cross_entropy(const Tensor &logits, std::span<const std::int32_t> targets);

/// Same loss evaluated entirely in double precision.
double cross_entropy_f64(const TensorF64 &logits,
                         std::span<const std::int32_t> targets);

/// dL/dlogits for the mean cross-entropy, scaled by `scale`:
/// scale * (probs - onehot) / N.
Tensor cross_entropy_grad(const Tensor &probs,
                          std::span<const std::int32_t> targets,
                          double scale = 1.0);

} // namespace neurotrails
