#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "raft/numerics/errors.hpp"

namespace raft::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Dense row-major array. Rank 0 (empty shape) is a scalar with one element.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> values, bool grad = false)
      : shape(std::move(s)), data(std::move(values)), requires_grad(grad) {
    if (shape_size(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor shape dims must be positive: " + shape_string(shape));
    }
  }

  static Tensor zeros(Shape s) {
    const auto n = shape_size(s);
    return Tensor(std::move(s), std::vector<T>(n, T(0)));
  }
  static Tensor filled(Shape s, T value) {
    const auto n = shape_size(s);
    return Tensor(std::move(s), std::vector<T>(n, value));
  }
  static Tensor scalar(T value) { return Tensor({}, {value}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // 2-D views; a rank-1 tensor is treated as a single row.
  std::size_t rows() const { return rank() >= 2 ? shape[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape.back(); }

  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  T item() const {
    if (data.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape));
    return data[0];
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape, std::vector<U>(data.begin(), data.end()), requires_grad);
  }
};

}  // namespace raft::numerics
