// SPDX-License-Identifier: Apache-2.0
#include "tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "error.hpp"

namespace neurotrails {

std::size_t shape_size(const Shape &shape) {
  if (shape.empty())
    return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    fail("tensor data length " + std::to_string(data_.size()) +
         " does not match shape " + shape_str(shape_));
}

template <class T> void BasicTensor<T>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size())
    fail("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
}

template <class T> bool BasicTensor<T>::all_finite() const {
  for (T v : data_)
    if (!std::isfinite(v))
      return false;
  return true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

std::size_t count_active(std::span<const std::uint8_t> mask) {
  std::size_t n = 0;
  for (auto m : mask)
    n += (m != 0);
  return n;
}

MaskedTensor::MaskedTensor(Tensor v, Mask m)
    : values(std::move(v)), mask(std::move(m)) {
  if (mask.size() != values.size())
    fail("mask length " + std::to_string(mask.size()) +
         " does not match values " + shape_str(values.shape()));
  apply_mask();
}

void MaskedTensor::apply_mask() {
  auto d = values.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!mask[i])
      d[i] = 0.0f;
}

bool MaskedTensor::consistent() const {
  if (mask.size() != values.size())
    return false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1)
      return false;
    if (!mask[i] && values[i] != 0.0f)
      return false;
  }
  return true;
}

} // namespace neurotrails
