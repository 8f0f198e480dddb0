// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace neurotrails {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape &shape);
std::string shape_str(const Shape &shape);

/// Row-major dense array. The first dimension is the batch when the tensor
/// holds activations.
template <class T> class BasicTensor {
public:
  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape &shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Number of rows when viewed as [shape[0], rest...].
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_size() const { return rows() == 0 ? 0 : size() / rows(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T> &vec() { return data_; }
  const std::vector<T> &vec() const { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t r) {
    return std::span<T>(data_).subspan(r * row_size(), row_size());
  }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * row_size(), row_size());
  }

  void reshape(Shape shape);
  bool all_finite() const;

  friend bool operator==(const BasicTensor &, const BasicTensor &) = default;

private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorF64 = BasicTensor<double>;

template <class To, class From>
BasicTensor<To> tensor_cast(const BasicTensor<From> &src) {
  std::vector<To> out(src.vec().begin(), src.vec().end());
  return BasicTensor<To>(src.shape(), std::move(out));
}

/// Binary connectivity mask; entries are 0 or 1.
using Mask = std::vector<std::uint8_t>;

std::size_t count_active(std::span<const std::uint8_t> mask);

/// Weight array paired with its mask. Wherever the mask is 0 the value is
/// exactly 0.0f.
struct MaskedTensor {
  Tensor values;
  Mask mask;

  MaskedTensor() = default;
  MaskedTensor(Tensor v, Mask m);

  std::size_t size() const { return values.size(); }
  std::size_t active() const { return count_active(mask); }

  /// Zeroes every value under a 0 mask entry.
  void apply_mask();
  /// True if mask is binary, shapes agree and masked values are exactly 0.
  bool consistent() const;
};

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

} // namespace neurotrails
