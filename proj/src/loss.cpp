// SPDX-License-Identifier: Apache-2.0
#include "loss.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace neurotrails {

namespace {

void check_targets(const Shape &shape, std::span<const std::int32_t> targets) {
  if (shape.size() != 2)
    fail("logits must be [N, classes], got " + shape_str(shape));
  if (targets.size() != shape[0])
    fail("logits have " + std::to_string(shape[0]) + " rows but " +
         std::to_string(targets.size()) + " targets were given");
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= shape[1])
      fail("target " + std::to_string(targets[i]) + " at row " +
           std::to_string(i) + " out of range [0, " +
           std::to_string(shape[1]) + ")");
}

template <class T>
double log_sum_exp(std::span<const T> row, double &max_out) {
  double mx = row[0];
  for (T v : row)
    mx = std::max(mx, static_cast<double>(v));
  double s = 0.0;
  for (T v : row)
    s += std::exp(static_cast<double>(v) - mx);
  max_out = mx;
  return mx + std::log(s);
}

template <class T>
double mean_ce(const BasicTensor<T> &logits,
               std::span<const std::int32_t> targets) {
  check_targets(logits.shape(), targets);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    double mx;
    const double lse = log_sum_exp<T>(row, mx);
    total += lse - static_cast<double>(row[targets[r]]);
  }
  return logits.rows() ? total / static_cast<double>(logits.rows()) : 0.0;
}

} // namespace

template <class T> BasicTensor<T> softmax_rows(const BasicTensor<T> &logits) {
  if (logits.rank() != 2)
    fail("softmax expects [N, classes], got " + shape_str(logits.shape()));
  BasicTensor<T> out(logits.shape());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    auto dst = out.row(r);
    double mx;
    const double lse = log_sum_exp<T>(row, mx);
    for (std::size_t c = 0; c < row.size(); ++c)
      dst[c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - lse));
  }
  return out;
}

template Tensor softmax_rows<float>(const Tensor &);
template TensorF64 softmax_rows<double>(const TensorF64 &);

LossResult cross_entropy(const Tensor &logits,
                         std::span<const std::int32_t> targets) {
  LossResult r;
  r.loss = mean_ce(logits, targets);
  r.probs = softmax_rows(logits);
  return r;
}

double cross_entropy_f64(const TensorF64 &logits,
                         std::span<const std::int32_t> targets) {
  return mean_ce(logits, targets);
}

Tensor cross_entropy_grad(const Tensor &probs,
                          std::span<const std::int32_t> targets,
                          double scale) {
  check_targets(probs.shape(), targets);
  Tensor g = probs;
  const std::size_t n = probs.rows();
  const std::size_t c = probs.dim(1);
  const double k = scale / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double onehot = (static_cast<std::int32_t>(j) == targets[r]) ? 1.0 : 0.0;
      g[r * c + j] = static_cast<float>((probs[r * c + j] - onehot) * k);
    }
  }
  return g;
}

} // namespace neurotrails
