#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "handdi/errors.hpp"

namespace handdi {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major tensor of positive extents. Every operation in this library
/// works on rank-2 tensors (a vector is n x 1); higher ranks are only carried
/// through for storage.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{1, 1}, data_(1, T{0}) {}

  Tensor(std::size_t rows, std::size_t cols, T fill = T{0})
      : shape_{rows, cols}, data_(rows * cols, fill) {
    check_extents();
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (shape_volume(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  /// Row-major nested initializer, e.g. {{1, 2}, {3, 4}}.
  Tensor(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    shape_ = {r, c};
    check_extents();
    data_.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged tensor initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Tensor scalar(T value) { return Tensor(1, 1, value); }

  static Tensor column(std::span<const T> values) {
    return Tensor({values.size(), 1}, std::vector<T>(values.begin(), values.end()));
  }

  static Tensor identity(std::size_t n) {
    Tensor out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
    return out;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  T operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols(), cols()}; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <std::floating_point U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    if (shape_.empty()) throw DimensionError("tensor rank must be at least 1");
    for (auto e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
    }
  }
  void require_matrix() const {
    if (shape_.size() != 2) throw DimensionError("expected a rank-2 tensor, got " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Boolean n x m mask stored row-major. Used for neighbor masks.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) { bits_[i * cols_ + j] = v ? 1 : 0; }

  std::size_t row_count(std::size_t i) const {
    return static_cast<std::size_t>(
        std::count(bits_.begin() + static_cast<std::ptrdiff_t>(i * cols_),
                   bits_.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols_), std::uint8_t{1}));
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace handdi
