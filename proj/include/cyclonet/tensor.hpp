#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cyclonet/errors.hpp"

namespace cyclonet {

// Dense n-dimensional array, row-major. The value type is float for model
// storage and double for the gradient-check pathway.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(count(shape_)), T(0));
  }

  TensorT(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != static_cast<std::int64_t>(data_.size())) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t(std::move(shape));
    for (T& v : t.data_) v = value;
    return t;
  }

  static TensorT ones(std::vector<int> shape) { return full(std::move(shape), T(1)); }

  static TensorT scalar(T value) { return TensorT({1}, {value}); }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(int i) { return data_[static_cast<std::size_t>(i)]; }
  T& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  T& at(int i, int j, int k) {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  T& at(int i, int j, int k, int l) {
    return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& at(int i) const { return data_[static_cast<std::size_t>(i)]; }
  const T& at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  const T& at(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(int i, int j, int k, int l) const {
    return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  TensorT reshaped(std::vector<int> shape) const {
    if (count(shape) != size()) {
      throw ShapeError("cannot reshape tensor of shape " + shape_str(shape_) + " ("
                       + std::to_string(size()) + " values) to " + shape_str(shape));
    }
    return TensorT(std::move(shape), data_);
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("nonpositive extent in shape " + shape_str(shape));
      n *= d;
    }
    return n;
  }

  static std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << ", ";
      os << shape[i];
    }
    os << ']';
    return os.str();
  }

  std::string shape_str() const { return shape_str(shape_); }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Grayscale image: rank-2 tensor [H, W] with values in [0, 1].
using Image = TensorT<float>;

inline void require_same_shape(const char* op, const std::vector<int>& a,
                               const std::vector<int>& b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + Tensor::shape_str(a) + " vs " +
                     Tensor::shape_str(b));
  }
}

inline void require_rank(const char* op, const std::vector<int>& shape, int rank) {
  if (static_cast<int>(shape.size()) != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " tensor, got shape " + Tensor::shape_str(shape));
  }
}

}  // namespace cyclonet
