#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dpit/autograd.hpp"

namespace dpit::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
MatMap<T> as_mat(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
ConstMatMap<T> as_mat(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(s));
  }
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  detail::accumulate(out, b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t o) {
    const Tensor<T>& g = t.grad(o);
    if (a.requires_grad()) detail::accumulate(t.grad_buffer(a.id()), g);
    if (b.requires_grad()) detail::accumulate(t.grad_buffer(b.id()), g);
  }, "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t o) {
    const Tensor<T>& g = t.grad(o);
    if (a.requires_grad()) detail::accumulate(t.grad_buffer(a.id()), g);
    if (b.requires_grad()) {
      auto& gb = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  }, "sub");
}

/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t o) {
    const Tensor<T>& g = t.grad(o);
    if (a.requires_grad()) {
      auto& ga = t.grad_buffer(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      auto& gb = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  }, "mul");
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape<T>& t, std::size_t o) {
    const Tensor<T>& g = t.grad(o);
    auto& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  }, "scale");
}

/// Adds a vector along the last axis of `x`.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  const std::size_t n = bias.value().size();
  if (bias.value().rank() != 1 || x.shape().back() != n) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " vs input " + to_string(x.shape()));
  }
  Tensor<T> out = x.value();
  const T* b = bias.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return x.tape().record(std::move(out), {x, bias}, [x, bias, n](Tape<T>& t, std::size_t o) {
    const Tensor<T>& g = t.grad(o);
    if (x.requires_grad()) detail::accumulate(t.grad_buffer(x.id()), g);
    if (bias.requires_grad()) {
      auto& gb = t.grad_buffer(bias.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  }, "add_bias");
}

/// Sum of all elements, shape [1].
template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  return x.tape().record(Tensor<T>({1}, std::vector<T>{s}), {x}, [x](Tape<T>& t, std::size_t o) {
    const T g = t.grad(o)[0];
    for (auto& v : t.grad_buffer(x.id()).data()) v += g;
  }, "sum");
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_rank(a.shape(), 2, "matmul");
  detail::require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  Tensor<T> out({m, n});
  detail::as_mat(out, m, n).noalias() = detail::as_mat(a.value(), m, k) * detail::as_mat(b.value(), k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, std::size_t o) {
    auto g = detail::as_mat(t.grad(o), m, n);
    if (a.requires_grad()) {
      detail::as_mat(t.grad_buffer(a.id()), m, k).noalias() += g * detail::as_mat(b.value(), k, n).transpose();
    }
    if (b.requires_grad()) {
      detail::as_mat(t.grad_buffer(b.id()), k, n).noalias() += detail::as_mat(a.value(), m, k).transpose() * g;
    }
  }, "matmul");
}

template <typename T>
Var<T> transpose(Var<T> a) {
  detail::require_rank(a.shape(), 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({n, m});
  detail::as_mat(out, n, m) = detail::as_mat(a.value(), m, n).transpose();
  return a.tape().record(std::move(out), {a}, [a, m, n](Tape<T>& t, std::size_t o) {
    detail::as_mat(t.grad_buffer(a.id()), m, n) += detail::as_mat(t.grad(o), n, m).transpose();
  }, "transpose");
}

/// Numerically stable softmax along `axis`.
template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Tensor<T> out(s);
  const T* in = x.value().ptr();
  T* y = out.ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * n * inner + j;
      T mx = in[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * inner]);
      T total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T e = std::exp(in[base + i * inner] - mx);
        y[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) y[base + i * inner] /= total;
    }
  }
  return x.tape().record(std::move(out), {x}, [x, outer, inner, n](Tape<T>& t, std::size_t o) {
    const T* yv = t.value(o).ptr();
    const T* g = t.grad(o).ptr();
    T* gx = t.grad_buffer(x.id()).ptr();
    for (std::size_t oo = 0; oo < outer; ++oo) {
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t base = oo * n * inner + j;
        T dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += g[base + i * inner] * yv[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          gx[idx] += yv[idx] * (g[idx] - dot);
        }
      }
    }
  }, "softmax");
}

/// Normalises each slice along the last axis, then applies gamma/beta.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  const std::size_t d = x.shape().back();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: affine parameters must have " + std::to_string(d) + " entries");
  }
  if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t rows = x.value().size() / d;
  Tensor<T> out(x.shape());
  // Normalised input and reciprocal std, kept for the backward pass.
  auto xhat = std::make_shared<Tensor<T>>(x.shape());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const T* in = x.value().ptr();
  const T* ga = gamma.value().ptr();
  const T* be = beta.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in + r * d;
    T mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (row[i] - mean) * rs;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * ga[i] + be[i];
    }
  }
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, d, rows, xhat, rstd](Tape<T>& t, std::size_t o) {
    const T* g = t.grad(o).ptr();
    const T* h = xhat->ptr();
    if (gamma.requires_grad() || beta.requires_grad()) {
      Tensor<T>* gg = gamma.requires_grad() ? &t.grad_buffer(gamma.id()) : nullptr;
      Tensor<T>* gb = beta.requires_grad() ? &t.grad_buffer(beta.id()) : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
          if (gg) (*gg)[i] += g[r * d + i] * h[r * d + i];
          if (gb) (*gb)[i] += g[r * d + i];
        }
      }
    }
    if (x.requires_grad()) {
      const T* ga = gamma.value().ptr();
      T* gx = t.grad_buffer(x.id()).ptr();
      const T inv_d = T(1) / static_cast<T>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_dh = 0, mean_dh_h = 0;
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = g[r * d + i] * ga[i];
          mean_dh += dh;
          mean_dh_h += dh * h[r * d + i];
        }
        mean_dh *= inv_d;
        mean_dh_h *= inv_d;
        const T rs = (*rstd)[r];
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = g[r * d + i] * ga[i];
          gx[r * d + i] += rs * (dh - mean_dh - h[r * d + i] * mean_dh_h);
        }
      }
    }
  }, "layer_norm");
}

/// Exact GELU, x * Phi(x).
template <typename T>
Var<T> gelu(Var<T> x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  Tensor<T> out(x.shape());
  const T* in = x.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * in[i] * (T(1) + std::erf(in[i] * inv_sqrt2));
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& t, std::size_t o) {
    constexpr T inv_sqrt2 = T(0.70710678118654752440);
    constexpr T inv_sqrt2pi = T(0.39894228040143267794);
    const T* in = x.value().ptr();
    const T* g = t.grad(o).ptr();
    T* gx = t.grad_buffer(x.id()).ptr();
    const std::size_t n = x.value().size();
    for (std::size_t i = 0; i < n; ++i) {
      const T v = in[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  }, "gelu");
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& t, std::size_t o) {
    const T* in = x.value().ptr();
    const T* g = t.grad(o).ptr();
    T* gx = t.grad_buffer(x.id()).ptr();
    for (std::size_t i = 0; i < x.value().size(); ++i) gx[i] += in[i] > T(0) ? g[i] : T(0);
  }, "relu");
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& t, std::size_t o) {
    detail::accumulate(t.grad_buffer(x.id()), t.grad(o));
  }, "reshape");
}

/// out.flat[i] = x.flat[index[i]]; backward scatters-adds.
template <typename T>
Var<T> gather(Var<T> x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape) {
  if (numel(shape) != index->size()) {
    throw DimensionError("gather: index length " + std::to_string(index->size()) + " vs shape " + to_string(shape));
  }
  const std::size_t n = x.value().size();
  Tensor<T> out(std::move(shape));
  const T* in = x.value().ptr();
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t src = (*index)[i];
    if (src >= n) throw DimensionError("gather: index out of range");
    out[i] = in[src];
  }
  return x.tape().record(std::move(out), {x}, [x, index](Tape<T>& t, std::size_t o) {
    const T* g = t.grad(o).ptr();
    T* gx = t.grad_buffer(x.id()).ptr();
    for (std::size_t i = 0; i < index->size(); ++i) gx[(*index)[i]] += g[i];
  }, "gather");
}

/// Rows [begin, end) of a 2-D tensor.
template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  detail::require_rank(x.shape(), 2, "slice_rows");
  const std::size_t cols = x.shape()[1];
  if (begin >= end || end > x.shape()[0]) throw DimensionError("slice_rows: invalid range");
  Tensor<T> out({end - begin, cols});
  std::copy(x.value().ptr() + begin * cols, x.value().ptr() + end * cols, out.ptr());
  return x.tape().record(std::move(out), {x}, [x, begin, cols](Tape<T>& t, std::size_t o) {
    const Tensor<T>& g = t.grad(o);
    T* gx = t.grad_buffer(x.id()).ptr() + begin * cols;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  }, "slice_rows");
}

/// Columns [begin, end) of a 2-D tensor.
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  detail::require_rank(x.shape(), 2, "slice_cols");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin >= end || end > cols) throw DimensionError("slice_cols: invalid range");
  const std::size_t w = end - begin;
  Tensor<T> out({rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(x.value().ptr() + r * cols + begin, x.value().ptr() + r * cols + end, out.ptr() + r * w);
  }
  return x.tape().record(std::move(out), {x}, [x, begin, rows, cols, w](Tape<T>& t, std::size_t o) {
    const T* g = t.grad(o).ptr();
    T* gx = t.grad_buffer(x.id()).ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
    }
  }, "slice_cols");
}

/// Stacks 2-D tensors with equal column counts.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts.front().shape().at(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 2, "concat_rows");
    if (p.shape()[1] != cols) {
      throw DimensionError("concat_rows: column mismatch " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    rows += p.shape()[0];
  }
  Tensor<T> out({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().ptr(), p.value().ptr() + p.value().size(), out.ptr() + offset);
    offset += p.value().size();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape<T>& t, std::size_t o) {
    const T* g = t.grad(o).ptr();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.value().size();
      if (p.requires_grad()) {
        T* gp = t.grad_buffer(p.id()).ptr();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  }, "concat_rows");
}

/// Joins 2-D tensors with equal row counts side by side.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().shape().at(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 2, "concat_cols");
    if (p.shape()[0] != rows) throw DimensionError("concat_cols: row mismatch");
    cols += p.shape()[1];
  }
  Tensor<T> out({rows, cols});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(p.value().ptr() + r * w, p.value().ptr() + (r + 1) * w, out.ptr() + r * cols + c0);
    }
    c0 += w;
  }
  return parts.front().tape().record(std::move(out), parts, [parts, rows, cols](Tape<T>& t, std::size_t o) {
    const T* g = t.grad(o).ptr();
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.shape()[1];
      if (p.requires_grad()) {
        T* gp = t.grad_buffer(p.id()).ptr();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * cols + c0 + c];
        }
      }
      c0 += w;
    }
  }, "concat_cols");
}

struct Conv2dGeometry {
  std::size_t in_h, in_w, in_c;
  std::size_t k_h, k_w, out_c;
  std::size_t stride_h, stride_w, pad_h, pad_w;
  std::size_t out_h, out_w;

  std::size_t patch() const { return k_h * k_w * in_c; }
};

inline Conv2dGeometry conv2d_geometry(const Shape& x, const Shape& w, std::size_t stride_h, std::size_t stride_w,
                                      std::size_t pad_h, std::size_t pad_w) {
  detail::require_rank(x, 3, "conv2d input");
  detail::require_rank(w, 4, "conv2d weights");
  if (w[2] != x[2]) {
    throw DimensionError("conv2d: input channels " + std::to_string(x[2]) + " vs kernel " + to_string(w));
  }
  if (stride_h == 0 || stride_w == 0) throw ConfigError("conv2d: stride must be positive");
  if (w[0] > x[0] + 2 * pad_h || w[1] > x[1] + 2 * pad_w) {
    throw DimensionError("conv2d: kernel " + to_string(w) + " larger than padded input " + to_string(x));
  }
  Conv2dGeometry g{x[0], x[1], x[2], w[0], w[1], w[3], stride_h, stride_w, pad_h, pad_w, 0, 0};
  g.out_h = (x[0] + 2 * pad_h - w[0]) / stride_h + 1;
  g.out_w = (x[1] + 2 * pad_w - w[1]) / stride_w + 1;
  return g;
}

namespace detail {

template <typename T>
void im2col(const T* x, const Conv2dGeometry& g, T* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* row = cols + (oy * g.out_w + ox) * patch;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) - static_cast<std::ptrdiff_t>(g.pad_h);
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kx) - static_cast<std::ptrdiff_t>(g.pad_w);
          T* dst = row + (ky * g.k_w + kx) * g.in_c;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) || ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
            std::fill(dst, dst + g.in_c, T(0));
          } else {
            const T* src = x + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
            std::copy(src, src + g.in_c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const Conv2dGeometry& g, T* x) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const T* row = cols + (oy * g.out_w + ox) * patch;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) - static_cast<std::ptrdiff_t>(g.pad_h);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kx) - static_cast<std::ptrdiff_t>(g.pad_w);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const T* src = row + (ky * g.k_w + kx) * g.in_c;
          T* dst = x + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
          for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation of an H x W x Cin input with a kh x kw x Cin x Cout kernel.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::size_t stride_h, std::size_t stride_w, std::size_t pad_h, std::size_t pad_w) {
  const Conv2dGeometry g = conv2d_geometry(x.shape(), w.shape(), stride_h, stride_w, pad_h, pad_w);
  const std::size_t positions = g.out_h * g.out_w;
  std::unique_ptr<T[]> cols(new T[positions * g.patch()]);
  detail::im2col(x.value().ptr(), g, cols.get());
  Tensor<T> out({g.out_h, g.out_w, g.out_c});
  using Map = detail::ConstMatMap<T>;
  detail::as_mat(out, positions, g.out_c).noalias() =
      Map(cols.get(), static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(g.patch())) *
      detail::as_mat(w.value(), g.patch(), g.out_c);
  return x.tape().record(std::move(out), {x, w}, [x, w, g](Tape<T>& t, std::size_t o) {
    const std::size_t positions = g.out_h * g.out_w;
    const auto ip = static_cast<Eigen::Index>(positions);
    const auto pp = static_cast<Eigen::Index>(g.patch());
    auto grad_out = detail::as_mat(t.grad(o), positions, g.out_c);
    std::unique_ptr<T[]> cols(new T[positions * g.patch()]);
    if (w.requires_grad()) {
      detail::im2col(x.value().ptr(), g, cols.get());
      detail::as_mat(t.grad_buffer(w.id()), g.patch(), g.out_c).noalias() +=
          detail::ConstMatMap<T>(cols.get(), ip, pp).transpose() * grad_out;
    }
    if (x.requires_grad()) {
      detail::MatMap<T>(cols.get(), ip, pp).noalias() =
          grad_out * detail::as_mat(w.value(), g.patch(), g.out_c).transpose();
      detail::col2im_add(cols.get(), g, t.grad_buffer(x.id()).ptr());
    }
  }, "conv2d");
}

/// Sum of squared differences over rows whose mask is set, divided by `denominator`.
template <typename T>
Var<T> masked_mse(Var<T> pred, const Tensor<T>& target, const std::vector<bool>& row_mask, T denominator) {
  detail::require_rank(pred.shape(), 2, "masked_mse");
  detail::require_same(pred.shape(), target.shape(), "masked_mse");
  const std::size_t rows = pred.shape()[0], cols = pred.shape()[1];
  if (row_mask.size() != rows) throw DimensionError("masked_mse: mask length differs from row count");
  if (!(denominator > T(0))) throw NumericError("masked_mse: empty normaliser (no visible rows)");
  auto diff = std::make_shared<Tensor<T>>(pred.shape());
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = pred.value()[r * cols + c] - target[r * cols + c];
      (*diff)[r * cols + c] = d;
      total += d * d;
    }
  }
  return pred.tape().record(Tensor<T>({1}, std::vector<T>{total / denominator}), {pred},
                            [pred, diff, denominator](Tape<T>& t, std::size_t o) {
    const T s = T(2) * t.grad(o)[0] / denominator;
    T* gp = t.grad_buffer(pred.id()).ptr();
    for (std::size_t i = 0; i < diff->size(); ++i) gp[i] += s * (*diff)[i];
  }, "masked_mse");
}

}  // namespace dpit::ops
