#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "flavr/errors.hpp"

namespace flavr {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense N-d array, row-major (last axis fastest). Value semantics throughout;
// kernels never alias their inputs.
template <typename T>
class Tensor {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "Tensor supports float and double only");

 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    check_shape(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  bool empty() const { return data_.empty(); }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  const Shape& shape() const { return shape_; }
  std::int64_t extent(std::int64_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Element count is preserved; the flat buffer is reinterpreted in place.
  Tensor reshaped(Shape new_shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(new_shape));
  }

  Tensor reshaped(Shape new_shape) && {
    check_shape(new_shape);
    if (shape_numel(new_shape) != size())
      throw ShapeError("reshape: " + shape_str(shape_) + " has " + std::to_string(size()) +
                       " elements, target " + shape_str(new_shape) + " needs " +
                       std::to_string(shape_numel(new_shape)));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = std::move(data_);
    return t;
  }

  void fill(T v) { data_.assign(data_.size(), v); }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: rank must be >= 1");
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (shape[i] < 1)
        throw ShapeError("tensor: extent of axis " + std::to_string(i) + " is " +
                         std::to_string(shape[i]) + ", must be >= 1");
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T lo, T hi, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<T> dist(lo, hi);
  for (auto& v : t) v = dist(rng);
  return t;
}

// Strides in elements for row-major iteration over `shape`.
inline Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::int64_t i = static_cast<std::int64_t>(shape.size()) - 2; i >= 0; --i)
    strides[static_cast<std::size_t>(i)] =
        strides[static_cast<std::size_t>(i + 1)] * shape[static_cast<std::size_t>(i + 1)];
  return strides;
}

}  // namespace flavr
