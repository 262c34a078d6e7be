/*
 * Copyright (C) 2026 The Widgetcap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "widgetcap/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <type_traits>

#include "widgetcap/nn/exact.hpp"

namespace widgetcap::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void accumulate(Node<T>& input, auto&& fn) {
  if (!input.requires_grad) return;
  fn(input.ensure_grad());
}

// 64-bit kernels. Every entry accumulates its products in a fixed order with
// the same code path, so a row's result does not depend on its position.
void naive_gemm(const double* a, std::size_t a_cols, bool ta, const double* b, std::size_t b_cols,
                bool tb, double* c, std::size_t m, std::size_t n, std::size_t inner,
                bool accumulate_into) {
  if (!accumulate_into) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t k = 0; k < inner; ++k) {
      const double x = ta ? a[k * a_cols + i] : a[i * a_cols + k];
      if (tb)
        for (std::size_t j = 0; j < n; ++j) ci[j] += x * b[j * b_cols + k];
      else
        for (std::size_t j = 0; j < n; ++j) ci[j] += x * b[k * b_cols + j];
    }
  }
}

// Correctly rounded sum of the rounded products: independent of the order of
// the inner index as well. Contraction is off so no product is fused.
__attribute__((optimize("fp-contract=off"))) void exact_gemm(
    const double* a, std::size_t a_cols, bool ta, const double* b, std::size_t b_cols, bool tb,
    double* c, std::size_t m, std::size_t n, std::size_t inner) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      ExactSum acc;
      for (std::size_t k = 0; k < inner; ++k) {
        const double x = ta ? a[k * a_cols + i] : a[i * a_cols + k];
        const double y = tb ? b[j * b_cols + k] : b[k * b_cols + j];
        acc.add(x * y);
      }
      c[i * n + j] = acc.total();
    }
  }
}

/// C (+)= op(A) op(B) on row-major buffers; A stored a_rows x a_cols.
template <typename T>
void gemm(const T* a, std::size_t a_rows, std::size_t a_cols, bool ta, const T* b,
          std::size_t b_rows, std::size_t b_cols, bool tb, T* c, bool accumulate_into) {
  const auto m = ta ? a_cols : a_rows;
  const auto n = tb ? b_rows : b_cols;
  if constexpr (std::is_same_v<T, double>) {
    naive_gemm(a, a_cols, ta, b, b_cols, tb, c, m, n, ta ? a_rows : a_cols, accumulate_into);
  } else {
    using Map = Eigen::Map<const RowMat<T>>;
    Map A(a, static_cast<Eigen::Index>(a_rows), static_cast<Eigen::Index>(a_cols));
    Map B(b, static_cast<Eigen::Index>(b_rows), static_cast<Eigen::Index>(b_cols));
    Eigen::Map<RowMat<T>> C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (!accumulate_into) C.setZero();
    if (!ta && !tb) C.noalias() += A * B;
    else if (!ta && tb) C.noalias() += A * B.transpose();
    else if (ta && !tb) C.noalias() += A.transpose() * B;
    else C.noalias() += A.transpose() * B.transpose();
  }
}

/// Flat index into b for every flat index of a, or empty when b has a's shape.
std::vector<std::size_t> broadcast_map(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size())
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b) + " to " +
                     shape_string(a));
  const std::size_t offset = a.size() - b.size();
  for (std::size_t j = 0; j < b.size(); ++j)
    if (b[j] != 1 && b[j] != a[j + offset])
      throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " +
                       shape_string(b) + " are not broadcast-compatible");
  if (a == b) return {};

  std::vector<std::size_t> b_stride(a.size(), 0);
  std::size_t s = 1;
  for (std::size_t j = b.size(); j-- > 0;) {
    if (b[j] != 1) b_stride[j + offset] = s;
    s *= b[j];
  }
  const std::size_t n = numel(a);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(a.size(), 0);
  std::size_t flat_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = flat_b;
    for (std::size_t ax = a.size(); ax-- > 0;) {
      ++idx[ax];
      flat_b += b_stride[ax];
      if (idx[ax] < a[ax]) break;
      flat_b -= b_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

template <typename T>
Tensor<T> unary(const Tensor<T>& a, auto&& forward, auto&& derivative) {
  std::vector<T> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [derivative](Node<T>& self) {
    accumulate(*self.inputs[0], [&](std::vector<T>& g) {
      const auto& x = self.inputs[0]->value;
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * derivative(x[i], self.value[i]);
    });
  });
}

struct ConvGeometry {
  std::size_t n, h, w, c;        // input to the (forward) convolution
  std::size_t kh, kw, stride;
  std::size_t oh, ow;
  std::size_t pad_top, pad_left;
  std::size_t patch() const { return kh * kw * c; }
  std::size_t positions() const { return n * oh * ow; }
};

ConvGeometry conv_geometry(std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                           std::size_t kh, std::size_t kw, std::size_t stride) {
  const auto ph = same_padding(h, kh, stride);
  const auto pw = same_padding(w, kw, stride);
  return {n, h, w, c, kh, kw, stride, ph.out, pw.out, ph.before, pw.before};
}

/// Uninitialized buffer for data that is fully overwritten before use.
template <typename T>
std::unique_ptr<T[]> scratch(std::size_t n) {
  return std::unique_ptr<T[]>(new T[n]);
}

// Within one kernel row the taps that land inside the image are contiguous
// in NHWC memory, so each row is one zero run, one copy and one zero run.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t patch = g.patch();
  const long w = static_cast<long>(g.w), kw = static_cast<long>(g.kw);
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T* dst = col + ((b * g.oh + oy) * g.ow + ox) * patch;
        const long ix0 = static_cast<long>(ox * g.stride) - static_cast<long>(g.pad_left);
        const long lo = std::clamp(-ix0, 0L, kw), hi = std::clamp(w - ix0, lo, kw);
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
          T* d = dst + ky * g.kw * g.c;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(d, d + g.kw * g.c, T(0));
            continue;
          }
          const T* s = x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w) * g.c;
          std::fill(d, d + lo * g.c, T(0));
          std::copy(s + (ix0 + lo) * g.c, s + (ix0 + hi) * g.c, d + lo * g.c);
          std::fill(d + hi * g.c, d + kw * g.c, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t patch = g.patch();
  const long w = static_cast<long>(g.w), kw = static_cast<long>(g.kw);
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const T* src = col + ((b * g.oh + oy) * g.ow + ox) * patch;
        const long ix0 = static_cast<long>(ox * g.stride) - static_cast<long>(g.pad_left);
        const long lo = std::clamp(-ix0, 0L, kw), hi = std::clamp(w - ix0, lo, kw);
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const T* s = src + (ky * g.kw + lo) * g.c;
          T* d = x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w + (ix0 + lo)) * g.c;
          const std::size_t run = static_cast<std::size_t>(hi - lo) * g.c;
          for (std::size_t i = 0; i < run; ++i) d[i] += s[i];
        }
      }
    }
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  auto map = broadcast_map(a.shape(), b.shape(), "add");
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  if (map.empty()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[map[i]];
  }
  return make_result<T>(a.shape(), std::move(out), {a, b},
                        [map = std::move(map)](Node<T>& self) {
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                          });
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            if (map.empty()) {
                              for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                            } else {
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                g[map[i]] += self.grad[i];
                            }
                          });
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto map = broadcast_map(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[map.empty() ? i : map[i]];
  return make_result<T>(a.shape(), std::move(out), {a, b},
                        [map = std::move(map)](Node<T>& self) {
                          const auto& av = self.inputs[0]->value;
                          const auto& bv = self.inputs[1]->value;
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += self.grad[i] * bv[map.empty() ? i : map[i]];
                          });
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              g[map.empty() ? i : map[i]] += self.grad[i] * av[i];
                          });
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; },
               [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); },
               [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
               [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.values()) total += v;
  return make_result<T>({1}, {total}, {a}, [](Node<T>& self) {
    accumulate(*self.inputs[0], [&](std::vector<T>& g) {
      for (auto& v : g) v += self.grad[0];
    });
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b,
                 Summation summation) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3) ||
      (sa.size() == 3 && sa[0] != sb[0]))
    throw ShapeError("matmul: incompatible shapes " + shape_string(sa) + " and " +
                     shape_string(sb));
  const bool batched = sa.size() == 3;
  const std::size_t batch = batched ? sa[0] : 1;
  const std::size_t ar = sa[sa.size() - 2], ac = sa[sa.size() - 1];
  const std::size_t br = sb[sb.size() - 2], bc = sb[sb.size() - 1];
  const std::size_t m = transpose_a ? ac : ar;
  const std::size_t k = transpose_a ? ar : ac;
  const std::size_t k2 = transpose_b ? bc : br;
  const std::size_t n = transpose_b ? br : bc;
  if (k != k2)
    throw ShapeError("matmul: inner dimensions differ for " + shape_string(sa) +
                     (transpose_a ? "^T" : "") + " and " + shape_string(sb) +
                     (transpose_b ? "^T" : ""));

  std::vector<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    const T* ai = a.values().data() + i * ar * ac;
    const T* bi = b.values().data() + i * br * bc;
    if constexpr (std::is_same_v<T, double>) {
      if (summation == Summation::kOrderIndependent) {
        exact_gemm(ai, ac, transpose_a, bi, bc, transpose_b, out.data() + i * m * n, m, n, k);
        continue;
      }
    }
    gemm(ai, ar, ac, transpose_a, bi, br, bc, transpose_b, out.data() + i * m * n, false);
  }

  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return make_result<T>(std::move(shape), std::move(out), {a, b},
                        [=](Node<T>& self) {
                          const T* av = self.inputs[0]->value.data();
                          const T* bv = self.inputs[1]->value.data();
                          const T* dc = self.grad.data();
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < batch; ++i) {
                              const T* dci = dc + i * m * n;
                              const T* bi = bv + i * br * bc;
                              T* gi = g.data() + i * ar * ac;
                              if (!transpose_a)
                                gemm(dci, m, n, false, bi, br, bc, !transpose_b, gi, true);
                              else
                                gemm(bi, br, bc, transpose_b, dci, m, n, true, gi, true);
                            }
                          });
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < batch; ++i) {
                              const T* dci = dc + i * m * n;
                              const T* ai = av + i * ar * ac;
                              T* gi = g.data() + i * br * bc;
                              if (!transpose_b)
                                gemm(ai, ar, ac, !transpose_a, dci, m, n, false, gi, true);
                              else
                                gemm(dci, m, n, true, ai, ar, ac, transpose_a, gi, true);
                            }
                          });
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const auto& sx = x.shape();
  require_rank(weight.shape(), 2, "linear(weight)");
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
  if (sx.empty() || sx.back() != in)
    throw ShapeError("linear: input " + shape_string(sx) + " does not match weight " +
                     shape_string(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim))
    throw ShapeError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                     shape_string(weight.shape()));
  const std::size_t rows = x.size() / in;
  std::vector<T> out(rows * out_dim);
  gemm(x.values().data(), rows, in, false, weight.values().data(), in, out_dim, false,
       out.data(), false);
  if (has_bias) {
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] += bv[c];
  }
  Shape shape = sx;
  shape.back() = out_dim;
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(shape), std::move(out), inputs, [=](Node<T>& self) {
    const T* dy = self.grad.data();
    accumulate(*self.inputs[0], [&](std::vector<T>& g) {
      gemm(dy, rows, out_dim, false, self.inputs[1]->value.data(), in, out_dim, true, g.data(),
           true);
    });
    accumulate(*self.inputs[1], [&](std::vector<T>& g) {
      gemm(self.inputs[0]->value.data(), rows, in, true, dy, rows, out_dim, false, g.data(),
           true);
    });
    if (has_bias) {
      accumulate(*self.inputs[2], [&](std::vector<T>& g) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < out_dim; ++c) g[c] += dy[r * out_dim + c];
      });
    }
  });
}

// ---------------------------------------------------------------------------
// shape

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  std::vector<T> out(a.values().begin(), a.values().end());
  return make_result<T>(std::move(shape), std::move(out), {a}, [](Node<T>& self) {
    accumulate(*self.inputs[0], [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::span<const std::size_t> perm) {
  const auto& in = a.shape();
  if (perm.size() != in.size()) throw ShapeError("permute: permutation rank mismatch");
  std::vector<bool> seen(in.size(), false);
  for (auto p : perm) {
    if (p >= in.size() || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out_shape[i] = in[perm[i]];
  std::vector<std::size_t> in_stride(in.size(), 1);
  for (std::size_t i = in.size(); i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];

  const std::size_t n = a.size();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(in.size(), 0);
  std::size_t flat_in = 0;
  for (std::size_t i = 0; i < n; ++i) {
    source[i] = flat_in;
    for (std::size_t ax = out_shape.size(); ax-- > 0;) {
      ++idx[ax];
      flat_in += in_stride[perm[ax]];
      if (idx[ax] < out_shape[ax]) break;
      flat_in -= in_stride[perm[ax]] * idx[ax];
      idx[ax] = 0;
    }
  }
  std::vector<T> out(n);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[source[i]];
  return make_result<T>(std::move(out_shape), std::move(out), {a},
                        [source = std::move(source)](Node<T>& self) {
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < source.size(); ++i)
                              g[source[i]] += self.grad[i];
                          });
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) throw ShapeError("transpose: rank < 2");
  std::vector<std::size_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(a, perm);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i])
        throw ShapeError("concat: shapes " + shape_string(first) + " and " + shape_string(s) +
                         " differ off the concat axis");
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<std::size_t> widths;  // contiguous block per part per outer index
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::size_t row = out_shape[axis] * inner;
  std::vector<T> out(outer * row);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data() + o * widths[k], widths[k], out.data() + o * row + col);
    col += widths[k];
  }
  return make_result<T>(std::move(out_shape), std::move(out), parts,
                        [=](Node<T>& self) {
                          std::size_t c = 0;
                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                            accumulate(*self.inputs[k], [&](std::vector<T>& g) {
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t j = 0; j < widths[k]; ++j)
                                  g[o * widths[k] + j] += self.grad[o * row + c + j];
                            });
                            c += widths[k];
                          }
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis])
    throw ShapeError("slice: [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of range for " + shape_string(s));
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t in_row = s[axis] * inner;
  const std::size_t out_row = length * inner;
  std::vector<T> out(outer * out_row);
  const auto v = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(v.data() + o * in_row + start * inner, out_row, out.data() + o * out_row);
  Shape out_shape = s;
  out_shape[axis] = length;
  return make_result<T>(std::move(out_shape), std::move(out), {a}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](std::vector<T>& g) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < out_row; ++j)
          g[o * in_row + start * inner + j] += self.grad[o * out_row + j];
    });
  });
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& a, std::span<const std::size_t> rows) {
  if (a.rank() == 0) throw ShapeError("index_select: scalar input");
  const std::size_t n = a.dim(0);
  const std::size_t width = a.size() / std::max<std::size_t>(n, 1);
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  std::vector<T> out(picked.size() * width);
  const auto v = a.values();
  for (std::size_t r = 0; r < picked.size(); ++r) {
    if (picked[r] >= n)
      throw ShapeError("index_select: row " + std::to_string(picked[r]) + " out of range for " +
                       shape_string(a.shape()));
    std::copy_n(v.data() + picked[r] * width, width, out.data() + r * width);
  }
  Shape out_shape = a.shape();
  out_shape[0] = picked.size();
  return make_result<T>(std::move(out_shape), std::move(out), {a},
                        [picked = std::move(picked), width](Node<T>& self) {
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t r = 0; r < picked.size(); ++r)
                              for (std::size_t j = 0; j < width; ++j)
                                g[picked[r] * width + j] += self.grad[r * width + j];
                          });
                        });
}

template <typename T>
Tensor<T> pad_last_axis(const Tensor<T>& a, std::size_t channels) {
  const std::size_t c = a.shape().back();
  if (channels < c) throw ShapeError("pad_last_axis: cannot shrink " + shape_string(a.shape()));
  if (channels == c) return a;
  const std::size_t rows = a.size() / c;
  std::vector<T> out(rows * channels, T(0));
  const auto v = a.values();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data() + r * c, c, out.data() + r * channels);
  Shape shape = a.shape();
  shape.back() = channels;
  return make_result<T>(std::move(shape), std::move(out), {a}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](std::vector<T>& g) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad[r * channels + j];
    });
  });
}

// ---------------------------------------------------------------------------
// lookups

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_rank(table.shape(), 2, "embedding");
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.dim(0))
      throw std::out_of_range("embedding: id " + std::to_string(id) + " outside table of " +
                              std::to_string(table.dim(0)) + " rows");
    rows.push_back(static_cast<std::size_t>(id));
  }
  return index_select(table, rows);
}

template <typename T>
Tensor<T> segment_max(const Tensor<T>& x, std::span<const std::size_t> offsets,
                      const Tensor<T>& empty) {
  require_rank(x.shape(), 2, "segment_max");
  const std::size_t d = x.dim(1);
  if (empty.size() != d)
    throw ShapeError("segment_max: empty vector " + shape_string(empty.shape()) +
                     " does not match row width of " + shape_string(x.shape()));
  if (offsets.empty() || offsets.back() != x.dim(0))
    throw ShapeError("segment_max: offsets do not cover the input rows");
  const std::size_t segments = offsets.size() - 1;
  std::vector<T> out(segments * d);
  // Source row of each output coordinate; npos means "from the empty vector".
  std::vector<std::size_t> arg(segments * d, std::numeric_limits<std::size_t>::max());
  const auto xv = x.values();
  const auto ev = empty.values();
  for (std::size_t s = 0; s < segments; ++s) {
    if (offsets[s] > offsets[s + 1]) throw ShapeError("segment_max: offsets not sorted");
    for (std::size_t j = 0; j < d; ++j) {
      if (offsets[s] == offsets[s + 1]) {
        out[s * d + j] = ev[j];
        continue;
      }
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r)
        if (xv[r * d + j] > xv[best * d + j]) best = r;
      out[s * d + j] = xv[best * d + j];
      arg[s * d + j] = best;
    }
  }
  return make_result<T>({segments, d}, std::move(out), {x, empty},
                        [arg = std::move(arg), d](Node<T>& self) {
                          constexpr auto npos = std::numeric_limits<std::size_t>::max();
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < arg.size(); ++i)
                              if (arg[i] != npos) g[arg[i] * d + i % d] += self.grad[i];
                          });
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < arg.size(); ++i)
                              if (arg[i] == npos) g[i % d] += self.grad[i];
                          });
                        });
}

// ---------------------------------------------------------------------------
// normalization / attention helpers

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, bool causal, std::span<const std::size_t> key_lengths) {
  require_rank(x.shape(), 3, "masked_softmax");
  const std::size_t groups = x.dim(0), tq = x.dim(1), tk = x.dim(2);
  if (!key_lengths.empty() && key_lengths.size() != groups)
    throw ShapeError("masked_softmax: key_lengths size does not match group count");
  std::vector<std::size_t> limits(groups * tq);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t keys = key_lengths.empty() ? tk : std::min(tk, key_lengths[g]);
    for (std::size_t t = 0; t < tq; ++t)
      limits[g * tq + t] = causal ? std::min(keys, t + 1) : keys;
  }
  std::vector<T> out(x.size(), T(0));
  const auto xv = x.values();
  for (std::size_t row = 0; row < groups * tq; ++row) {
    const std::size_t lim = limits[row];
    if (lim == 0) continue;
    const T* in = xv.data() + row * tk;
    T* o = out.data() + row * tk;
    const T mx = *std::max_element(in, in + lim);
    T total = 0;
    if constexpr (std::is_same_v<T, double>) {
      ExactSum acc;
      for (std::size_t j = 0; j < lim; ++j) {
        o[j] = std::exp(in[j] - mx);
        acc.add(o[j]);
      }
      total = acc.total();
    } else {
      for (std::size_t j = 0; j < lim; ++j) {
        o[j] = std::exp(in[j] - mx);
        total += o[j];
      }
    }
    for (std::size_t j = 0; j < lim; ++j) o[j] /= total;
  }
  return make_result<T>(x.shape(), std::move(out), {x},
                        [limits = std::move(limits), tk](Node<T>& self) {
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t row = 0; row < limits.size(); ++row) {
                              const T* y = self.value.data() + row * tk;
                              const T* dy = self.grad.data() + row * tk;
                              T dot = 0;
                              for (std::size_t j = 0; j < limits[row]; ++j) dot += y[j] * dy[j];
                              for (std::size_t j = 0; j < limits[row]; ++j)
                                g[row * tk + j] += y[j] * (dy[j] - dot);
                            }
                          });
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t last = x.shape().back();
  auto as3 = reshape(x, {x.size() / last, 1, last});
  return reshape(masked_softmax(as3, false), x.shape());
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T epsilon) {
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d)
    throw ShapeError("layer_norm: gain/bias do not match " + shape_string(x.shape()));
  const std::size_t rows = x.size() / d;
  std::vector<T> out(x.size());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gain, bias},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), d,
                         rows](Node<T>& self) {
                          const auto& gv = self.inputs[1]->value;
                          const T* dy = self.grad.data();
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              T mean_dxhat = 0, mean_dxhat_xhat = 0;
                              for (std::size_t j = 0; j < d; ++j) {
                                const T dxh = dy[r * d + j] * gv[j];
                                mean_dxhat += dxh;
                                mean_dxhat_xhat += dxh * xhat[r * d + j];
                              }
                              mean_dxhat /= static_cast<T>(d);
                              mean_dxhat_xhat /= static_cast<T>(d);
                              for (std::size_t j = 0; j < d; ++j) {
                                const T dxh = dy[r * d + j] * gv[j];
                                g[r * d + j] += inv_std[r] * (dxh - mean_dxhat -
                                                              xhat[r * d + j] * mean_dxhat_xhat);
                              }
                            }
                          });
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < xhat.size(); ++i) g[i % d] += dy[i] * xhat[i];
                          });
                          accumulate(*self.inputs[2], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < xhat.size(); ++i) g[i % d] += dy[i];
                          });
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = uniform_unit(rng) < rate ? T(0) : keep_scale;
  return mul(x, Tensor<T>::from(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// convolution

SamePadding same_padding(std::size_t in, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("convolution stride must be positive");
  const std::size_t out = (in + stride - 1) / stride;
  const long total = std::max<long>(
      0, static_cast<long>((out - 1) * stride + kernel) - static_cast<long>(in));
  return {out, static_cast<std::size_t>(total / 2)};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride) {
  require_rank(x.shape(), 4, "conv2d(input)");
  require_rank(kernel.shape(), 4, "conv2d(kernel)");
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (kernel.dim(2) != x.dim(3))
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " does not match input channels of " + shape_string(x.shape()));
  const auto geo = conv_geometry(x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0),
                                 kernel.dim(1), stride);
  const std::size_t cout = kernel.dim(3);
  auto col = scratch<T>(geo.positions() * geo.patch());
  im2col(x.values().data(), geo, col.get());
  std::vector<T> out(geo.positions() * cout);
  gemm(col.get(), geo.positions(), geo.patch(), false, kernel.values().data(), geo.patch(),
       cout, false, out.data(), false);
  col.reset();
  return make_result<T>({geo.n, geo.oh, geo.ow, cout}, std::move(out), {x, kernel},
                        [geo, cout](Node<T>& self) {
                          const T* dy = self.grad.data();
                          const auto& kv = self.inputs[1]->value;
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            auto col = scratch<T>(geo.positions() * geo.patch());
                            im2col(self.inputs[0]->value.data(), geo, col.get());
                            gemm(col.get(), geo.positions(), geo.patch(), true, dy,
                                 geo.positions(), cout, false, g.data(), true);
                          });
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            auto dcol = scratch<T>(geo.positions() * geo.patch());
                            gemm(dy, geo.positions(), cout, false, kv.data(), geo.patch(), cout,
                                 true, dcol.get(), false);
                            col2im(dcol.get(), geo, g.data());
                          });
                        });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride) {
  require_rank(x.shape(), 4, "conv_transpose2d(input)");
  require_rank(kernel.shape(), 4, "conv_transpose2d(kernel)");
  if (stride == 0) throw std::invalid_argument("conv_transpose2d: stride must be positive");
  if (kernel.dim(3) != x.dim(3))
    throw ShapeError("conv_transpose2d: kernel " + shape_string(kernel.shape()) +
                     " does not match input channels of " + shape_string(x.shape()));
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t cout = kernel.dim(2);
  // Geometry of the forward convolution this operation is the adjoint of.
  const auto geo = conv_geometry(n, h * stride, w * stride, cout, kernel.dim(0), kernel.dim(1),
                                 stride);
  auto col = scratch<T>(geo.positions() * geo.patch());
  gemm(x.values().data(), n * h * w, cin, false, kernel.values().data(), geo.patch(), cin, true,
       col.get(), false);
  std::vector<T> out(n * geo.h * geo.w * cout, T(0));
  col2im(col.get(), geo, out.data());
  col.reset();
  return make_result<T>({n, geo.h, geo.w, cout}, std::move(out), {x, kernel},
                        [geo, cin](Node<T>& self) {
                          auto dcol = scratch<T>(geo.positions() * geo.patch());
                          im2col(self.grad.data(), geo, dcol.get());
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            gemm(dcol.get(), geo.positions(), geo.patch(), false,
                                 self.inputs[1]->value.data(), geo.patch(), cin, false, g.data(),
                                 true);
                          });
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            gemm(dcol.get(), geo.positions(), geo.patch(), true,
                                 self.inputs[0]->value.data(), geo.positions(), cin, false,
                                 g.data(), true);
                          });
                        });
}

template <typename T>
BatchNormState<T>::BatchNormState(std::size_t channels)
    : running_mean(Tensor<T>::zeros({channels})),
      running_var(Tensor<T>::full({channels}, T(1))),
      updates(Tensor<T>::zeros({1})) {}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, BatchNormMode mode, bool update_running) {
  if (x.rank() < 2) throw ShapeError("batch_norm: expected at least rank 2");
  const std::size_t c = x.shape().back();
  if (gamma.size() != c || beta.size() != c || state.running_mean.size() != c)
    throw ShapeError("batch_norm: parameters do not match channels of " +
                     shape_string(x.shape()));
  const std::size_t m = x.size() / c;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  const T eps = static_cast<T>(state.epsilon);

  std::vector<T> mu(c, T(0)), inv_std(c);
  if (mode == BatchNormMode::kTrain) {
    if (x.dim(0) < 2)
      throw std::invalid_argument("batch_norm: train mode needs a batch of at least 2");
    std::vector<double> mean_acc(c, 0.0), var_acc(c, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) mean_acc[j] += xv[i * c + j];
    for (std::size_t j = 0; j < c; ++j) mean_acc[j] /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double dlt = xv[i * c + j] - mean_acc[j];
        var_acc[j] += dlt * dlt;
      }
    for (std::size_t j = 0; j < c; ++j) {
      var_acc[j] /= static_cast<double>(m);
      mu[j] = static_cast<T>(mean_acc[j]);
      inv_std[j] = static_cast<T>(1.0 / std::sqrt(var_acc[j] + state.epsilon));
    }
    if (update_running) {
      auto rm = state.running_mean.mutable_values();
      auto rv = state.running_var.mutable_values();
      const bool first = !state.initialized();
      const double mom = state.momentum;
      for (std::size_t j = 0; j < c; ++j) {
        rm[j] = first ? static_cast<T>(mean_acc[j])
                      : static_cast<T>(mom * rm[j] + (1.0 - mom) * mean_acc[j]);
        rv[j] = first ? static_cast<T>(var_acc[j])
                      : static_cast<T>(mom * rv[j] + (1.0 - mom) * var_acc[j]);
      }
      state.updates.mutable_values()[0] += T(1);
    }
  } else {
    if (!state.initialized())
      throw std::logic_error("batch_norm: inference requested before any training statistics");
    const auto rm = state.running_mean.values();
    const auto rv = state.running_var.values();
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = rm[j];
      inv_std[j] = T(1) / std::sqrt(rv[j] + eps);
    }
  }

  std::vector<T> xhat(x.size()), out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t k = i * c + j;
      xhat[k] = (xv[k] - mu[j]) * inv_std[j];
      out[k] = xhat[k] * gv[j] + bv[j];
    }

  const bool train = mode == BatchNormMode::kTrain;
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), m, c,
                         train](Node<T>& self) {
                          const auto& gv = self.inputs[1]->value;
                          const T* dy = self.grad.data();
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            if (!train) {
                              for (std::size_t i = 0; i < m * c; ++i)
                                g[i] += dy[i] * gv[i % c] * inv_std[i % c];
                              return;
                            }
                            std::vector<T> sum_dxh(c, T(0)), sum_dxh_xh(c, T(0));
                            for (std::size_t i = 0; i < m * c; ++i) {
                              const T dxh = dy[i] * gv[i % c];
                              sum_dxh[i % c] += dxh;
                              sum_dxh_xh[i % c] += dxh * xhat[i];
                            }
                            const T inv_m = T(1) / static_cast<T>(m);
                            for (std::size_t i = 0; i < m * c; ++i) {
                              const std::size_t j = i % c;
                              const T dxh = dy[i] * gv[j];
                              g[i] += inv_std[j] * (dxh - inv_m * sum_dxh[j] -
                                                    xhat[i] * inv_m * sum_dxh_xh[j]);
                            }
                          });
                          accumulate(*self.inputs[1], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < m * c; ++i) g[i % c] += dy[i] * xhat[i];
                          });
                          accumulate(*self.inputs[2], [&](std::vector<T>& g) {
                            for (std::size_t i = 0; i < m * c; ++i) g[i % c] += dy[i];
                          });
                        });
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                                std::span<const T> weights) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  if (targets.size() != rows || weights.size() != rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                     std::to_string(weights.size()) + " weights for logits " +
                     shape_string(logits.shape()));
  std::vector<T> probs(logits.size(), T(0));
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<T> w(weights.begin(), weights.end());
  const auto lv = logits.values();
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (w[r] == T(0)) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= v)
      throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(tgt[r]) +
                              " outside vocabulary of " + std::to_string(v));
    const T* in = lv.data() + r * v;
    const T mx = *std::max_element(in, in + v);
    T z = 0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[r * v + j] = std::exp(in[j] - mx);
      z += probs[r * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] /= z;
    total += w[r] * (std::log(z) + mx - in[tgt[r]]);
  }
  return make_result<T>({1}, {total}, {logits},
                        [probs = std::move(probs), tgt = std::move(tgt), w = std::move(w), v,
                         rows](Node<T>& self) {
                          accumulate(*self.inputs[0], [&](std::vector<T>& g) {
                            const T up = self.grad[0];
                            for (std::size_t r = 0; r < rows; ++r) {
                              if (w[r] == T(0)) continue;
                              const T s = up * w[r];
                              for (std::size_t j = 0; j < v; ++j) g[r * v + j] += s * probs[r * v + j];
                              g[r * v + static_cast<std::size_t>(tgt[r])] -= s;
                            }
                          });
                        });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
  if (prediction.shape() != target.shape())
    throw ShapeError("mse_loss: shapes " + shape_string(prediction.shape()) + " and " +
                     shape_string(target.shape()) + " differ");
  return mean(square(sub(prediction, target)));
}

// ---------------------------------------------------------------------------

#define WIDGETCAP_INSTANTIATE_OPS(T)                                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> relu(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                                            \
  template Tensor<T> square(const Tensor<T>&);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> mean(const Tensor<T>&);                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool, Summation); \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
  template Tensor<T> permute(const Tensor<T>&, std::span<const std::size_t>);              \
  template Tensor<T> transpose(const Tensor<T>&);                                          \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                   \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);       \
  template Tensor<T> index_select(const Tensor<T>&, std::span<const std::size_t>);         \
  template Tensor<T> pad_last_axis(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>);           \
  template Tensor<T> segment_max(const Tensor<T>&, std::span<const std::size_t>,           \
                                 const Tensor<T>&);                                        \
  template Tensor<T> masked_softmax(const Tensor<T>&, bool, std::span<const std::size_t>); \
  template Tensor<T> softmax(const Tensor<T>&);                                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&);                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t);              \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, std::size_t);    \
  template struct BatchNormState<T>;                                                       \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                BatchNormState<T>&, BatchNormMode, bool);                  \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const std::int32_t>, \
                                           std::span<const T>);                            \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);

WIDGETCAP_INSTANTIATE_OPS(float)
WIDGETCAP_INSTANTIATE_OPS(double)

#undef WIDGETCAP_INSTANTIATE_OPS

}  // namespace widgetcap::nn
