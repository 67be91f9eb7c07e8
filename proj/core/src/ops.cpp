#include "capvae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "capvae/error.hpp"
#include "gemm.hpp"

namespace capvae::nn {

ConvGeometry ConvGeometry::same(std::size_t in, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw InvalidArgument("convolution stride must be >= 1");
  if (kernel == 0) throw InvalidArgument("convolution kernel must be >= 1");
  ConvGeometry g;
  g.in = in;
  g.kernel = kernel;
  g.stride = stride;
  g.out = (in + stride - 1) / stride;
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>((g.out - 1) * stride + kernel) -
                               static_cast<std::ptrdiff_t>(in);
  g.pad_before = total > 0 ? static_cast<std::size_t>(total / 2) : 0;
  return g;
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                   shape_string(b));
}

template <typename T>
void require_same_graph(const char* op, Var<T> a, Var<T> b) {
  if (a.graph != b.graph || a.graph == nullptr)
    throw StateError(std::string(op) + ": operands belong to different graphs");
}

// Output positions o in [lo, hi) read input o*stride + offset - pad inside [0, in).
struct ValidRange {
  std::size_t lo;
  std::size_t hi;
};

inline ValidRange valid_range(const ConvGeometry& g, std::size_t offset) {
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto shift = static_cast<std::ptrdiff_t>(offset) - static_cast<std::ptrdiff_t>(g.pad_before);
  const auto in = static_cast<std::ptrdiff_t>(g.in);
  const auto out = static_cast<std::ptrdiff_t>(g.out);
  std::ptrdiff_t lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  std::ptrdiff_t hi = in - shift <= 0 ? 0 : (in - shift + s - 1) / s;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// cols[(c*k + ki)*k + kj][(b*Ho + oy)*Wo + ox] = x[b][c][oy*s + ki - pad][ox*s + kj - pad]
template <typename T>
void im2col(const T* x, std::size_t batch, std::size_t channels, const ConvGeometry& gy,
            const ConvGeometry& gx, T* cols) {
  const std::size_t k = gy.kernel;
  const std::size_t plane = gy.in * gx.in;
  const std::size_t ncols = batch * gy.out * gx.out;
  const std::size_t sx = gx.stride;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      const auto ry = valid_range(gy, ki);
      for (std::size_t kj = 0; kj < k; ++kj) {
        const auto rx = valid_range(gx, kj);
        T* row = cols + ((c * k + ki) * k + kj) * ncols;
        for (std::size_t b = 0; b < batch; ++b) {
          const T* xp = x + (b * channels + c) * plane;
          for (std::size_t oy = 0; oy < gy.out; ++oy) {
            T* dst = row + (b * gy.out + oy) * gx.out;
            if (oy < ry.lo || oy >= ry.hi) {
              std::fill(dst, dst + gx.out, T{0});
              continue;
            }
            const T* src = xp + (oy * gy.stride + ki - gy.pad_before) * gx.in + kj - gx.pad_before;
            std::fill(dst, dst + rx.lo, T{0});
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) dst[ox] = src[ox * sx];
            std::fill(dst + rx.hi, dst + gx.out, T{0});
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into x.
template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, const ConvGeometry& gy,
            const ConvGeometry& gx, T* x) {
  const std::size_t k = gy.kernel;
  const std::size_t plane = gy.in * gx.in;
  const std::size_t ncols = batch * gy.out * gx.out;
  const std::size_t sx = gx.stride;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      const auto ry = valid_range(gy, ki);
      for (std::size_t kj = 0; kj < k; ++kj) {
        const auto rx = valid_range(gx, kj);
        const T* row = cols + ((c * k + ki) * k + kj) * ncols;
        for (std::size_t b = 0; b < batch; ++b) {
          T* xp = x + (b * channels + c) * plane;
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const T* src = row + (b * gy.out + oy) * gx.out;
            T* dst = xp + (oy * gy.stride + ki - gy.pad_before) * gx.in + kj - gx.pad_before;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) dst[ox * sx] += src[ox];
          }
        }
      }
    }
  }
}

// NCHW [B, C, P] <-> channel-major [C, B*P]
template <typename T>
std::vector<T> to_channel_major(const T* x, std::size_t batch, std::size_t channels,
                                std::size_t plane) {
  std::vector<T> out(batch * channels * plane);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const T* src = x + (b * channels + c) * plane;
      T* dst = out.data() + c * batch * plane + b * plane;
      std::copy(src, src + plane, dst);
    }
  return out;
}

template <typename T>
void add_from_channel_major(const T* cm, std::size_t batch, std::size_t channels,
                            std::size_t plane, T* x) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const T* src = cm + c * batch * plane + b * plane;
      T* dst = x + (b * channels + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
    }
}

template <typename T, typename F, typename D>
Var<T> unary(const char* op, Var<T> x, F f, D derivative) {
  const auto& xv = x.value();
  BasicTensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  return x.graph->record(op, std::move(y), {x}, [derivative](Graph<T>& g, std::size_t self) {
    const std::size_t in = g.input(self, 0);
    const auto& xv = g.value(in);
    const auto& yv = g.value(self);
    const auto& gy = g.grad(self);
    auto& gx = g.grad(in);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * derivative(xv[i], yv[i]);
  });
}

}  // namespace

template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  require_same_graph("dense", x, w);
  require_same_graph("dense", x, b);
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0))
    shape_mismatch("dense", xv.shape(), wv.shape());
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(1)) shape_mismatch("dense", wv.shape(), bv.shape());
  const std::size_t batch = xv.dim(0), in = wv.dim(0), out = wv.dim(1);

  BasicTensor<T> y(Shape{batch, out});
  for (std::size_t r = 0; r < batch; ++r) std::copy(bv.data(), bv.data() + out, y.data() + r * out);
  detail::gemm(false, false, batch, out, in, T{1}, xv.data(), wv.data(), T{1}, y.data());

  return x.graph->record("dense", std::move(y), {x, w, b},
                         [batch, in, out](Graph<T>& g, std::size_t self) {
                           const std::size_t xi = g.input(self, 0), wi = g.input(self, 1),
                                             bi = g.input(self, 2);
                           const auto& gy = g.grad(self);
                           if (g.requires_grad(wi))
                             detail::gemm(true, false, in, out, batch, T{1}, g.value(xi).data(),
                                          gy.data(), T{1}, g.grad(wi).data());
                           if (g.requires_grad(bi)) {
                             auto& gb = g.grad(bi);
                             for (std::size_t r = 0; r < batch; ++r)
                               for (std::size_t j = 0; j < out; ++j) gb[j] += gy[r * out + j];
                           }
                           if (g.requires_grad(xi))
                             detail::gemm(false, true, batch, in, out, T{1}, gy.data(),
                                          g.value(wi).data(), T{1}, g.grad(xi).data());
                         });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, Var<T> bias, std::size_t stride) {
  require_same_graph("conv2d", x, kernel);
  require_same_graph("conv2d", x, bias);
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  const auto& bv = bias.value();
  if (xv.rank() != 4 || kv.rank() != 4 || kv.dim(1) != xv.dim(1) || kv.dim(2) != kv.dim(3))
    shape_mismatch("conv2d", xv.shape(), kv.shape());
  if (bv.rank() != 1 || bv.dim(0) != kv.dim(0)) shape_mismatch("conv2d", kv.shape(), bv.shape());

  const std::size_t batch = xv.dim(0), cin = xv.dim(1), cout = kv.dim(0), k = kv.dim(2);
  const auto gy = ConvGeometry::same(xv.dim(2), k, stride);
  const auto gx = ConvGeometry::same(xv.dim(3), k, stride);
  const std::size_t rows = cin * k * k;
  const std::size_t plane_out = gy.out * gx.out;
  const std::size_t ncols = batch * plane_out;

  auto cols = std::make_shared<std::vector<T>>(rows * ncols);
  im2col(xv.data(), batch, cin, gy, gx, cols->data());
  std::vector<T> ycm(cout * ncols);
  detail::gemm(false, false, cout, ncols, rows, T{1}, kv.data(), cols->data(), T{0}, ycm.data());

  BasicTensor<T> y(Shape{batch, cout, gy.out, gx.out});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < cout; ++c) {
      const T* src = ycm.data() + c * ncols + b * plane_out;
      T* dst = y.data() + (b * cout + c) * plane_out;
      for (std::size_t p = 0; p < plane_out; ++p) dst[p] = src[p] + bv[c];
    }

  return x.graph->record(
      "conv2d", std::move(y), {x, kernel, bias},
      [cols, gy, gx, batch, cin, cout, rows, plane_out, ncols](Graph<T>& g, std::size_t self) {
        const std::size_t xi = g.input(self, 0), ki = g.input(self, 1), bi = g.input(self, 2);
        const auto dycm = to_channel_major(g.grad(self).data(), batch, cout, plane_out);
        if (g.requires_grad(ki))
          detail::gemm(false, true, cout, rows, ncols, T{1}, dycm.data(), cols->data(), T{1},
                       g.grad(ki).data());
        if (g.requires_grad(bi)) {
          auto& gb = g.grad(bi);
          for (std::size_t c = 0; c < cout; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < ncols; ++j) acc += dycm[c * ncols + j];
            gb[c] += static_cast<T>(acc);
          }
        }
        if (g.requires_grad(xi)) {
          std::vector<T> dcols(rows * ncols);
          detail::gemm(true, false, rows, ncols, cout, T{1}, g.value(ki).data(), dycm.data(), T{0},
                       dcols.data());
          col2im(dcols.data(), batch, cin, gy, gx, g.grad(xi).data());
        }
      });
}

template <typename T>
Var<T> conv2d_transpose(Var<T> x, Var<T> kernel, Var<T> bias, std::size_t stride) {
  require_same_graph("conv2d_transpose", x, kernel);
  require_same_graph("conv2d_transpose", x, bias);
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  const auto& bv = bias.value();
  if (xv.rank() != 4 || kv.rank() != 4 || kv.dim(0) != xv.dim(1) || kv.dim(2) != kv.dim(3))
    shape_mismatch("conv2d_transpose", xv.shape(), kv.shape());
  if (bv.rank() != 1 || bv.dim(0) != kv.dim(1))
    shape_mismatch("conv2d_transpose", kv.shape(), bv.shape());
  if (stride == 0) throw InvalidArgument("convolution stride must be >= 1");

  const std::size_t batch = xv.dim(0), cin = xv.dim(1), cout = kv.dim(1), k = kv.dim(2);
  // Geometry of the forward conv this op is the adjoint of (output -> input).
  const auto gy = ConvGeometry::same(xv.dim(2) * stride, k, stride);
  const auto gx = ConvGeometry::same(xv.dim(3) * stride, k, stride);
  const std::size_t rows = cout * k * k;
  const std::size_t plane_in = gy.out * gx.out;
  const std::size_t plane_out = gy.in * gx.in;
  const std::size_t ncols = batch * plane_in;

  auto xcm = std::make_shared<std::vector<T>>(to_channel_major(xv.data(), batch, cin, plane_in));
  std::vector<T> cols(rows * ncols);
  detail::gemm(true, false, rows, ncols, cin, T{1}, kv.data(), xcm->data(), T{0}, cols.data());

  BasicTensor<T> y(Shape{batch, cout, gy.in, gx.in});
  col2im(cols.data(), batch, cout, gy, gx, y.data());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < cout; ++c) {
      T* dst = y.data() + (b * cout + c) * plane_out;
      for (std::size_t p = 0; p < plane_out; ++p) dst[p] += bv[c];
    }

  return x.graph->record(
      "conv2d_transpose", std::move(y), {x, kernel, bias},
      [xcm, gy, gx, batch, cin, cout, rows, plane_in, plane_out, ncols](Graph<T>& g,
                                                                         std::size_t self) {
        const std::size_t xi = g.input(self, 0), ki = g.input(self, 1), bi = g.input(self, 2);
        const auto& gyv = g.grad(self);
        std::vector<T> dcols(rows * ncols);
        im2col(gyv.data(), batch, cout, gy, gx, dcols.data());
        if (g.requires_grad(ki))
          detail::gemm(false, true, cin, rows, ncols, T{1}, xcm->data(), dcols.data(), T{1},
                       g.grad(ki).data());
        if (g.requires_grad(bi)) {
          auto& gb = g.grad(bi);
          for (std::size_t c = 0; c < cout; ++c) {
            double acc = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const T* src = gyv.data() + (b * cout + c) * plane_out;
              for (std::size_t p = 0; p < plane_out; ++p) acc += src[p];
            }
            gb[c] += static_cast<T>(acc);
          }
        }
        if (g.requires_grad(xi)) {
          std::vector<T> dxcm(cin * ncols);
          detail::gemm(false, false, cin, ncols, rows, T{1}, g.value(ki).data(), dcols.data(),
                       T{0}, dxcm.data());
          add_from_channel_major(dxcm.data(), batch, cin, plane_in, g.grad(xi).data());
        }
      });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary(
      "sigmoid", x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> exp(Var<T> x) {
  return unary(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> x) {
  return unary(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Var<T> abs(Var<T> x) {
  return unary(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

template <typename T>
Var<T> square(Var<T> x) {
  return unary(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  if (!(lo <= hi)) throw InvalidArgument("clamp: lower bound exceeds upper bound");
  return unary(
      "clamp", x, [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T{1} : T{0}; });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return unary(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  return unary(
      "add_scalar", x, [offset](T v) { return v + offset; }, [](T, T) { return T{1}; });
}

namespace {

template <typename T, typename F, typename DA, typename DB>
Var<T> binary(const char* op, Var<T> a, Var<T> b, F f, DA da, DB db) {
  require_same_graph(op, a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch(op, av.shape(), bv.shape());
  BasicTensor<T> y(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) y[i] = f(av[i], bv[i]);
  return a.graph->record(op, std::move(y), {a, b}, [da, db](Graph<T>& g, std::size_t self) {
    const std::size_t ai = g.input(self, 0), bi = g.input(self, 1);
    const auto& av = g.value(ai);
    const auto& bv = g.value(bi);
    const auto& gy = g.grad(self);
    if (g.requires_grad(ai)) {
      auto& ga = g.grad(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * da(av[i], bv[i]);
    }
    if (g.requires_grad(bi)) {
      auto& gb = g.grad(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * db(av[i], bv[i]);
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Var<T> sum(Var<T> x) {
  const auto& xv = x.value();
  double acc = 0.0;
  for (auto v : xv.values()) acc += v;
  return x.graph->record("sum", BasicTensor<T>::scalar(static_cast<T>(acc)), {x},
                         [](Graph<T>& g, std::size_t self) {
                           const T gy = g.grad(self)[0];
                           auto& gx = g.grad(g.input(self, 0));
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
                         });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const auto& xv = x.value();
  double acc = 0.0;
  for (auto v : xv.values()) acc += v;
  const double n = static_cast<double>(xv.size());
  return x.graph->record("mean", BasicTensor<T>::scalar(static_cast<T>(acc / n)), {x},
                         [n](Graph<T>& g, std::size_t self) {
                           const T gy = static_cast<T>(g.grad(self)[0] / n);
                           auto& gx = g.grad(g.input(self, 0));
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
                         });
}

template <typename T>
Var<T> mean_rows(Var<T> x) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("mean_rows: expected rank-2 input, got " + shape_string(xv.shape()));
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  BasicTensor<T> y(Shape{cols});
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += xv[r * cols + j];
    y[j] = static_cast<T>(acc / static_cast<double>(rows));
  }
  return x.graph->record("mean_rows", std::move(y), {x},
                         [rows, cols](Graph<T>& g, std::size_t self) {
                           const auto& gy = g.grad(self);
                           auto& gx = g.grad(g.input(self, 0));
                           const T inv = T{1} / static_cast<T>(rows);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += gy[j] * inv;
                         });
}

template <typename T>
Var<T> mul_rowvec(Var<T> x, Var<T> v) {
  require_same_graph("mul_rowvec", x, v);
  const auto& xv = x.value();
  const auto& vv = v.value();
  if (xv.rank() != 2 || vv.rank() != 1 || xv.dim(1) != vv.dim(0))
    shape_mismatch("mul_rowvec", xv.shape(), vv.shape());
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  BasicTensor<T> y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = xv[r * cols + j] * vv[j];
  return x.graph->record("mul_rowvec", std::move(y), {x, v},
                         [rows, cols](Graph<T>& g, std::size_t self) {
                           const std::size_t xi = g.input(self, 0), vi = g.input(self, 1);
                           const auto& gy = g.grad(self);
                           if (g.requires_grad(xi)) {
                             const auto& vv = g.value(vi);
                             auto& gx = g.grad(xi);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t j = 0; j < cols; ++j)
                                 gx[r * cols + j] += gy[r * cols + j] * vv[j];
                           }
                           if (g.requires_grad(vi)) {
                             const auto& xv = g.value(xi);
                             auto& gv = g.grad(vi);
                             for (std::size_t j = 0; j < cols; ++j) {
                               double acc = 0.0;
                               for (std::size_t r = 0; r < rows; ++r)
                                 acc += static_cast<double>(gy[r * cols + j]) * xv[r * cols + j];
                               gv[j] += static_cast<T>(acc);
                             }
                           }
                         });
}

template <typename T>
Var<T> broadcast_rows(Var<T> v, std::size_t rows) {
  const auto& vv = v.value();
  if (vv.rank() != 1) throw ShapeError("broadcast_rows: expected rank-1 input, got " + shape_string(vv.shape()));
  if (rows == 0) throw ShapeError("broadcast_rows: row count must be positive");
  const std::size_t cols = vv.dim(0);
  BasicTensor<T> y(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) std::copy(vv.data(), vv.data() + cols, y.data() + r * cols);
  return v.graph->record("broadcast_rows", std::move(y), {v},
                         [rows, cols](Graph<T>& g, std::size_t self) {
                           const auto& gy = g.grad(self);
                           auto& gv = g.grad(g.input(self, 0));
                           for (std::size_t j = 0; j < cols; ++j) {
                             double acc = 0.0;
                             for (std::size_t r = 0; r < rows; ++r) acc += gy[r * cols + j];
                             gv[j] += static_cast<T>(acc);
                           }
                         });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || begin >= end || end > xv.dim(1))
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_string(xv.shape()));
  const std::size_t rows = xv.dim(0), cols = xv.dim(1), width = end - begin;
  BasicTensor<T> y(Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(xv.data() + r * cols + begin, xv.data() + r * cols + end, y.data() + r * width);
  return x.graph->record("slice_cols", std::move(y), {x},
                         [rows, cols, begin, width](Graph<T>& g, std::size_t self) {
                           const auto& gy = g.grad(self);
                           auto& gx = g.grad(g.input(self, 0));
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < width; ++j)
                               gx[r * cols + begin + j] += gy[r * width + j];
                         });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  auto y = x.value().reshaped(std::move(shape));
  return x.graph->record("reshape", std::move(y), {x}, [](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad(g.input(self, 0));
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var<T> flatten(Var<T> x) {
  const auto& s = x.shape();
  return reshape(x, Shape{s.at(0), x.value().size() / s.at(0)});
}

#define CAPVAE_INSTANTIATE_OPS(T)                                           \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                            \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t);              \
  template Var<T> conv2d_transpose(Var<T>, Var<T>, Var<T>, std::size_t);    \
  template Var<T> relu(Var<T>);                                             \
  template Var<T> sigmoid(Var<T>);                                          \
  template Var<T> exp(Var<T>);                                              \
  template Var<T> log(Var<T>);                                              \
  template Var<T> abs(Var<T>);                                              \
  template Var<T> square(Var<T>);                                           \
  template Var<T> clamp(Var<T>, T, T);                                      \
  template Var<T> scale(Var<T>, T);                                         \
  template Var<T> add_scalar(Var<T>, T);                                    \
  template Var<T> add(Var<T>, Var<T>);                                      \
  template Var<T> sub(Var<T>, Var<T>);                                      \
  template Var<T> mul(Var<T>, Var<T>);                                      \
  template Var<T> sum(Var<T>);                                              \
  template Var<T> mean(Var<T>);                                             \
  template Var<T> mean_rows(Var<T>);                                        \
  template Var<T> mul_rowvec(Var<T>, Var<T>);                               \
  template Var<T> broadcast_rows(Var<T>, std::size_t);                      \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);             \
  template Var<T> reshape(Var<T>, Shape);                                   \
  template Var<T> flatten(Var<T>);

CAPVAE_INSTANTIATE_OPS(float)
CAPVAE_INSTANTIATE_OPS(double)

#undef CAPVAE_INSTANTIATE_OPS

}  // namespace capvae::nn
