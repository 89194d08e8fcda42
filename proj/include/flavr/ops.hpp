#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flavr/tensor.hpp"

namespace flavr {

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y) v = v > T(0) ? v : T(0);
  return y;
}

// Masks by the forward output; subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& forward_out) {
  if (!grad_out.same_shape(forward_out))
    throw ShapeError("relu_backward: grad shape " + shape_str(grad_out.shape()) +
                     " vs forward " + shape_str(forward_out.shape()));
  Tensor<T> g = grad_out;
  for (std::int64_t i = 0; i < g.size(); ++i)
    if (!(forward_out[i] > T(0))) g[i] = T(0);
  return g;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y) v = stable_sigmoid(v);
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_out, const Tensor<T>& forward_out) {
  if (!grad_out.same_shape(forward_out))
    throw ShapeError("sigmoid_backward: grad shape " + shape_str(grad_out.shape()) +
                     " vs forward " + shape_str(forward_out.shape()));
  Tensor<T> g = grad_out;
  for (std::int64_t i = 0; i < g.size(); ++i)
    g[i] *= forward_out[i] * (T(1) - forward_out[i]);
  return g;
}

// Mean over T, H, W per (batch, channel): [B, C, T, H, W] -> [B, C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 5)
    throw ShapeError("global_avg_pool: expected rank 5, got " + shape_str(x.shape()));
  const std::int64_t B = x.extent(0), C = x.extent(1);
  const std::int64_t inner = x.extent(2) * x.extent(3) * x.extent(4);
  Tensor<T> y({B, C});
  const T* p = x.data();
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    double acc = 0.0;
    const T* row = p + bc * inner;
    for (std::int64_t i = 0; i < inner; ++i) acc += static_cast<double>(row[i]);
    y[bc] = static_cast<T>(acc / static_cast<double>(inner));
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& input_shape) {
  Tensor<T> g(input_shape);
  const std::int64_t B = input_shape[0], C = input_shape[1];
  const std::int64_t inner = input_shape[2] * input_shape[3] * input_shape[4];
  if (grad_out.rank() != 2 || grad_out.extent(0) != B || grad_out.extent(1) != C)
    throw ShapeError("global_avg_pool_backward: grad shape " + shape_str(grad_out.shape()));
  T* p = g.data();
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const T v = grad_out[bc] / static_cast<T>(inner);
    T* row = p + bc * inner;
    for (std::int64_t i = 0; i < inner; ++i) row[i] = v;
  }
  return g;
}

template <typename T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& xs, std::int64_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = xs[0]->shape();
  if (axis < 0 || axis >= static_cast<std::int64_t>(first.size()))
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(first.size()));
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto* x : xs) {
    if (x->rank() != static_cast<std::int64_t>(first.size()))
      throw ShapeError("concat: rank mismatch");
    for (std::int64_t a = 0; a < x->rank(); ++a)
      if (a != axis && x->extent(a) != first[static_cast<std::size_t>(a)])
        throw ShapeError("concat: inputs disagree on axis " + std::to_string(a) + ": " +
                         std::to_string(x->extent(a)) + " vs " +
                         std::to_string(first[static_cast<std::size_t>(a)]));
    out_shape[static_cast<std::size_t>(axis)] += x->extent(axis);
  }

  Tensor<T> out(out_shape);
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t a = 0; a < axis; ++a) outer *= first[static_cast<std::size_t>(a)];
  for (std::size_t a = static_cast<std::size_t>(axis) + 1; a < first.size(); ++a)
    inner *= first[a];
  const std::int64_t out_axis = out_shape[static_cast<std::size_t>(axis)];

  std::int64_t offset = 0;
  for (const auto* x : xs) {
    const std::int64_t n_axis = x->extent(axis);
    for (std::int64_t i = 0; i < outer; ++i) {
      const T* src = x->data() + i * n_axis * inner;
      T* dst = out.data() + (i * out_axis + offset) * inner;
      std::copy(src, src + n_axis * inner, dst);
    }
    offset += n_axis;
  }
  return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::int64_t axis) {
  return concat<T>({&a, &b}, axis);
}

// Splits along `axis` into pieces with the given extents (concat's adjoint).
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::int64_t axis,
                             const std::vector<std::int64_t>& extents) {
  std::int64_t total = 0;
  for (auto e : extents) total += e;
  if (total != x.extent(axis))
    throw ShapeError("split: extents sum to " + std::to_string(total) + ", axis has " +
                     std::to_string(x.extent(axis)));
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t a = 0; a < axis; ++a) outer *= x.extent(a);
  for (std::int64_t a = axis + 1; a < x.rank(); ++a) inner *= x.extent(a);

  std::vector<Tensor<T>> parts;
  parts.reserve(extents.size());
  std::int64_t offset = 0;
  for (auto e : extents) {
    Shape s = x.shape();
    s[static_cast<std::size_t>(axis)] = e;
    Tensor<T> part(s);
    for (std::int64_t i = 0; i < outer; ++i) {
      const T* src = x.data() + (i * x.extent(axis) + offset) * inner;
      std::copy(src, src + e * inner, part.data() + i * e * inner);
    }
    offset += e;
    parts.push_back(std::move(part));
  }
  return parts;
}

template <typename T>
Tensor<T> flip(const Tensor<T>& x, std::int64_t axis) {
  if (axis < 0 || axis >= x.rank())
    throw ShapeError("flip: axis " + std::to_string(axis) + " out of range");
  Tensor<T> y(x.shape());
  const std::int64_t n = x.extent(axis);
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t a = 0; a < axis; ++a) outer *= x.extent(a);
  for (std::int64_t a = axis + 1; a < x.rank(); ++a) inner *= x.extent(a);
  for (std::int64_t i = 0; i < outer; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      const T* src = x.data() + (i * n + j) * inner;
      T* dst = y.data() + (i * n + (n - 1 - j)) * inner;
      std::copy(src, src + inner, dst);
    }
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ShapeError("add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y = a;
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

template <typename T>
void add_in_place(Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ShapeError("add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  for (std::int64_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  return y;
}

}  // namespace flavr
