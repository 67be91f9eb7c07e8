#pragma once

#include <cstddef>

#include "capvae/graph.hpp"

// Differentiable forward ops. Every op checks operand shapes (ShapeError
// listing both shapes) and records a backward closure on the operands' graph.
namespace capvae::nn {

// Spatial geometry for a strided "same" convolution: out = ceil(in / stride),
// zero padding split with the smaller half before.
struct ConvGeometry {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad_before = 0;

  static ConvGeometry same(std::size_t in, std::size_t kernel, std::size_t stride);
};

// x [B, in] . W [in, out] + b [out] -> [B, out]
template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b);

// x [B, Cin, H, W], K [Cout, Cin, k, k], b [Cout] -> [B, Cout, ceil(H/s), ceil(W/s)]
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, Var<T> bias, std::size_t stride);

// Adjoint geometry of conv2d. x [B, Cin, h, w], K [Cin, Cout, k, k], b [Cout]
// -> [B, Cout, h*s, w*s]
template <typename T>
Var<T> conv2d_transpose(Var<T> x, Var<T> kernel, Var<T> bias, std::size_t stride);

template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> exp(Var<T> x);
template <typename T> Var<T> log(Var<T> x);
// Subgradient 0 at the origin.
template <typename T> Var<T> abs(Var<T> x);
template <typename T> Var<T> square(Var<T> x);
// Gradient passes inside [lo, hi] and is zero where the input was clipped.
template <typename T> Var<T> clamp(Var<T> x, T lo, T hi);
template <typename T> Var<T> scale(Var<T> x, T factor);
template <typename T> Var<T> add_scalar(Var<T> x, T offset);

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);

// Full reductions to a single-element tensor of shape [1]. Accumulated in double.
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

// x [B, N] -> [N], mean over the leading axis.
template <typename T> Var<T> mean_rows(Var<T> x);
// x [B, N] * v [N] broadcast over rows.
template <typename T> Var<T> mul_rowvec(Var<T> x, Var<T> v);
// v [N] -> [rows, N]
template <typename T> Var<T> broadcast_rows(Var<T> v, std::size_t rows);
// x [B, N] -> columns [begin, end)
template <typename T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);

template <typename T> Var<T> reshape(Var<T> x, Shape shape);
// [B, ...] -> [B, prod(...)]
template <typename T> Var<T> flatten(Var<T> x);

}  // namespace capvae::nn
