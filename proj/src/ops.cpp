/*
 * Copyright 2026 The glore-mtl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "gmtl/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gmtl/error.hpp"

namespace gmtl::ops {

void set_blas_threads(int n) { Eigen::setNbThreads(n); }

namespace {

void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
          const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (int64_t i = 0; i < m * n; ++i) c[i] = beta == 0.0 ? 0.0 : beta * c[i];
    return;
  }
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> out(c, m, n);
  const ConstMap am(a, ta ? k : m, ta ? m : k);
  const ConstMap bm(b, tb ? n : k, tb ? k : n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (beta == 0.0) {
      out.noalias() = alpha * (lhs * rhs);
    } else {
      if (beta != 1.0) out *= beta;
      out.noalias() += alpha * (lhs * rhs);
    }
  };
  if (ta && tb) {
    run(am.transpose(), bm.transpose());
  } else if (ta) {
    run(am.transpose(), bm);
  } else if (tb) {
    run(am, bm.transpose());
  } else {
    run(am, bm);
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "axis out of range");
  return axis;
}

struct AxisSplit {
  int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  s.len = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Node& input(Node& self, size_t k) { return *self.inputs[k]; }

template <typename F>
Var unary(const Var& a, F&& fwd_and_deriv) {
  // fwd_and_deriv(x) -> pair(y, dy/dx)
  const Tensor& x = a.value();
  Tensor y(x.shape());
  Tensor d(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    auto [v, dv] = fwd_and_deriv(x[i]);
    y[i] = v;
    d[i] = dv;
  }
  return make_result(std::move(y), {a}, [d = std::move(d)](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * d[i];
  });
}

void im2col(const double* x, int64_t c, int64_t h, int64_t w, int k, int s, int p, int64_t oh,
            int64_t ow, double* col) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = col + ((ch * k + ki) * k + kj) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * s - p + ki;
          double* dst = row + y * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = x + (ch * h + iy) * w;
          for (int64_t xo = 0; xo < ow; ++xo) {
            const int64_t ix = xo * s - p + kj;
            dst[xo] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int64_t c, int64_t h, int64_t w, int k, int s, int p, int64_t oh,
            int64_t ow, double* x) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = col + ((ch * k + ki) * k + kj) * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * s - p + ki;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + y * ow;
          double* dst = x + (ch * h + iy) * w;
          for (int64_t xo = 0; xo < ow; ++xo) {
            const int64_t ix = xo * s - p + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[xo];
          }
        }
      }
    }
  }
}

struct Interp {
  std::vector<int64_t> i0, i1;
  std::vector<double> l1;
};

Interp interp_axis(int64_t in, int64_t out) {
  Interp t;
  t.i0.resize(static_cast<size_t>(out));
  t.i1.resize(static_cast<size_t>(out));
  t.l1.resize(static_cast<size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int64_t lo = static_cast<int64_t>(src);
    if (lo > in - 1) lo = in - 1;
    const int64_t hi = std::min(lo + 1, in - 1);
    t.i0[static_cast<size_t>(o)] = lo;
    t.i1[static_cast<size_t>(o)] = hi;
    t.l1[static_cast<size_t>(o)] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

int64_t conv_out_size(int64_t n, int kernel, int stride, int padding) {
  return (n + 2 * padding - kernel) / stride + 1;
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  const double* pb = b.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += pb[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    for (size_t k = 0; k < 2; ++k) {
      if (input(self, k).requires_grad) input(self, k).accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  const double* pb = b.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] -= pb[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    if (input(self, 0).requires_grad) input(self, 0).accumulate(self.grad);
    if (Node& in = input(self, 1); in.requires_grad) {
      Tensor& g = in.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  const double* pb = b.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= pb[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      Tensor& g = na.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      Tensor& g = nb.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor y = a.value();
  for (double& v : y.values()) v *= s;
  return make_result(std::move(y), {a}, [s](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return make_result(std::move(y), {a}, [](Node& self) {
    Node& in = input(self, 0);
    in.accumulate(self.grad.reshaped(in.value.shape()));
  });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? std::pair{x, 1.0} : std::pair{0.0, 0.0}; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(a, [slope](double x) {
    return x > 0 ? std::pair{x, 1.0} : std::pair{slope * x, slope};
  });
}

Var elu(const Var& a, double alpha) {
  return unary(a, [alpha](double x) {
    if (x > 0) return std::pair{x, 1.0};
    const double e = std::exp(x);
    return std::pair{alpha * (e - 1.0), alpha * e};
  });
}

Var concat(std::span<const Var> parts, int axis) {
  require(!parts.empty(), "concat of zero tensors");
  const Shape& ref = parts.front().shape();
  axis = normalize_axis(axis, static_cast<int>(ref.size()));
  Shape out_shape = ref;
  out_shape[static_cast<size_t>(axis)] = 0;
  std::vector<int64_t> lens;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    require(s.size() == ref.size(), "concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != ref[i]) {
        throw UsageError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(ref));
      }
    }
    lens.push_back(s[static_cast<size_t>(axis)]);
    out_shape[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
  }
  const AxisSplit sp = split_axis(out_shape, axis);
  Tensor y(out_shape);
  int64_t start = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].value().data();
    const int64_t chunk = lens[k] * sp.inner;
    for (int64_t o = 0; o < sp.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk,
                y.data() + o * sp.len * sp.inner + start * sp.inner);
    }
    start += lens[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_result(std::move(y), std::move(inputs), [lens, sp](Node& self) {
    int64_t start = 0;
    for (size_t k = 0; k < lens.size(); ++k) {
      Node& in = input(self, k);
      const int64_t chunk = lens[k] * sp.inner;
      if (in.requires_grad) {
        Tensor& g = in.grad_buffer();
        for (int64_t o = 0; o < sp.outer; ++o) {
          const double* src = self.grad.data() + o * sp.len * sp.inner + start * sp.inner;
          double* dst = g.data() + o * chunk;
          for (int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      start += lens[k];
    }
  });
}

Var gather_rows(const Var& a, std::span<const int64_t> rows) {
  require(a.value().rank() == 2, "gather_rows needs a matrix");
  const int64_t n = a.dim(0), d = a.dim(1);
  Tensor y({static_cast<int64_t>(rows.size()), d});
  for (size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] >= 0 && rows[r] < n, "gather_rows: row index out of range");
    std::copy(a.value().data() + rows[r] * d, a.value().data() + (rows[r] + 1) * d,
              y.data() + static_cast<int64_t>(r) * d);
  }
  std::vector<int64_t> idx(rows.begin(), rows.end());
  return make_result(std::move(y), {a}, [idx = std::move(idx), d](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    for (size_t r = 0; r < idx.size(); ++r) {
      const double* src = self.grad.data() + static_cast<int64_t>(r) * d;
      double* dst = g.data() + idx[r] * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Var sum_all(const Var& a) {
  Tensor y({1}, a.value().sum());
  return make_result(std::move(y), {a}, [](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    const double s = self.grad[0];
    for (double& v : g.values()) v += s;
  });
}

Var mean_all(const Var& a) {
  const int64_t n = a.value().numel();
  require(n > 0, "mean of empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var mean_axis(const Var& a, int axis) {
  axis = normalize_axis(axis, a.value().rank());
  const AxisSplit sp = split_axis(a.shape(), axis);
  require(sp.len > 0, "mean over empty axis");
  Shape out = a.shape();
  out.erase(out.begin() + axis);
  Tensor y(out);
  const double* x = a.value().data();
  const double inv = 1.0 / static_cast<double>(sp.len);
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t l = 0; l < sp.len; ++l) {
      const double* src = x + (o * sp.len + l) * sp.inner;
      double* dst = y.data() + o * sp.inner;
      for (int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  for (double& v : y.values()) v *= inv;
  return make_result(std::move(y), {a}, [sp, inv](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    for (int64_t o = 0; o < sp.outer; ++o) {
      const double* src = self.grad.data() + o * sp.inner;
      for (int64_t l = 0; l < sp.len; ++l) {
        double* dst = g.data() + (o * sp.len + l) * sp.inner;
        for (int64_t i = 0; i < sp.inner; ++i) dst[i] += inv * src[i];
      }
    }
  });
}

Var softmax(const Var& a, int axis) {
  axis = normalize_axis(axis, a.value().rank());
  const AxisSplit sp = split_axis(a.shape(), axis);
  Tensor y(a.shape());
  const double* x = a.value().data();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      const int64_t base = o * sp.len * sp.inner + i;
      double m = -std::numeric_limits<double>::infinity();
      for (int64_t l = 0; l < sp.len; ++l) m = std::max(m, x[base + l * sp.inner]);
      double s = 0.0;
      for (int64_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(x[base + l * sp.inner] - m);
        y[base + l * sp.inner] = e;
        s += e;
      }
      for (int64_t l = 0; l < sp.len; ++l) y[base + l * sp.inner] /= s;
    }
  }
  return make_result(y, {a}, [sp](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    const Tensor& y = self.value;
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t i = 0; i < sp.inner; ++i) {
        const int64_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (int64_t l = 0; l < sp.len; ++l) {
          dot += y[base + l * sp.inner] * self.grad[base + l * sp.inner];
        }
        for (int64_t l = 0; l < sp.len; ++l) {
          const int64_t j = base + l * sp.inner;
          g[j] += y[j] * (self.grad[j] - dot);
        }
      }
    }
  });
}

Var masked_softmax_rows(const Var& scores, const std::vector<uint8_t>& mask) {
  require(scores.value().rank() == 2, "masked_softmax_rows needs a matrix");
  const int64_t m = scores.dim(0), n = scores.dim(1);
  require(static_cast<int64_t>(mask.size()) == m * n, "mask size mismatch");
  const double* x = scores.value().data();
  Tensor y({m, n});
  for (int64_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j) {
      if (mask[static_cast<size_t>(i * n + j)]) mx = std::max(mx, x[i * n + j]);
    }
    require(std::isfinite(mx), "masked_softmax_rows: row without allowed entries");
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      if (!mask[static_cast<size_t>(i * n + j)]) continue;
      const double e = std::exp(x[i * n + j] - mx);
      y[i * n + j] = e;
      s += e;
    }
    for (int64_t j = 0; j < n; ++j) y[i * n + j] /= s;
  }
  return make_result(y, {scores}, [m, n](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    const Tensor& y = self.value;
    for (int64_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += y[i * n + j] * self.grad[i * n + j];
      // Masked entries have y = 0 and so receive no gradient.
      for (int64_t j = 0; j < n; ++j) g[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Var outer_add(const Var& a, const Var& b) {
  require(a.value().rank() == 1 && b.value().rank() == 1, "outer_add needs vectors");
  const int64_t m = a.dim(0), n = b.dim(0);
  Tensor y({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) y[i * n + j] = a.value()[i] + b.value()[j];
  return make_result(std::move(y), {a, b}, [m, n](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      Tensor& g = na.grad_buffer();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) g[i] += self.grad[i * n + j];
    }
    if (nb.requires_grad) {
      Tensor& g = nb.grad_buffer();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul needs matrices");
  const int64_t m = ta ? a.dim(1) : a.dim(0);
  const int64_t k = ta ? a.dim(0) : a.dim(1);
  const int64_t kb = tb ? b.dim(1) : b.dim(0);
  const int64_t n = tb ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw UsageError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()));
  }
  Tensor y({m, n});
  gemm(ta, tb, m, n, k, 1.0, a.value().data(), b.value().data(), 0.0, y.data());
  return make_result(std::move(y), {a, b}, [m, n, k, ta, tb](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    const double* dc = self.grad.data();
    if (na.requires_grad) {
      double* ga = na.grad_buffer().data();
      if (!ta) gemm(false, !tb, m, k, n, 1.0, dc, nb.value.data(), 1.0, ga);
      else gemm(tb, true, k, m, n, 1.0, nb.value.data(), dc, 1.0, ga);
    }
    if (nb.requires_grad) {
      double* gb = nb.grad_buffer().data();
      if (!tb) gemm(!ta, false, k, n, m, 1.0, na.value.data(), dc, 1.0, gb);
      else gemm(true, ta, n, k, m, 1.0, dc, na.value.data(), 1.0, gb);
    }
  });
}

Var bmm(const Var& a, const Var& b, bool ta, bool tb) {
  const int ra = a.value().rank(), rb = b.value().rank();
  require((ra == 2 || ra == 3) && (rb == 2 || rb == 3) && (ra == 3 || rb == 3),
          "bmm needs rank-3 operands (one may be rank-2)");
  const int64_t batch = ra == 3 ? a.dim(0) : b.dim(0);
  if (ra == 3 && rb == 3) require(a.dim(0) == b.dim(0), "bmm: batch mismatch");
  const int64_t ar = a.dim(-2), ac = a.dim(-1), br = b.dim(-2), bc = b.dim(-1);
  const int64_t m = ta ? ac : ar, k = ta ? ar : ac;
  const int64_t kb = tb ? bc : br, n = tb ? br : bc;
  if (k != kb) {
    throw UsageError("bmm: inner dimension mismatch " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()));
  }
  const int64_t sa = ra == 3 ? ar * ac : 0;
  const int64_t sb = rb == 3 ? br * bc : 0;
  Tensor y({batch, m, n});
  for (int64_t i = 0; i < batch; ++i) {
    gemm(ta, tb, m, n, k, 1.0, a.value().data() + i * sa, b.value().data() + i * sb, 0.0,
         y.data() + i * m * n);
  }
  return make_result(std::move(y), {a, b}, [=](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    for (int64_t i = 0; i < batch; ++i) {
      const double* dc = self.grad.data() + i * m * n;
      const double* av = na.value.data() + i * sa;
      const double* bv = nb.value.data() + i * sb;
      if (na.requires_grad) {
        double* ga = na.grad_buffer().data() + i * sa;
        if (!ta) gemm(false, !tb, m, k, n, 1.0, dc, bv, 1.0, ga);
        else gemm(tb, true, k, m, n, 1.0, bv, dc, 1.0, ga);
      }
      if (nb.requires_grad) {
        double* gb = nb.grad_buffer().data() + i * sb;
        if (!tb) gemm(!ta, false, k, n, m, 1.0, av, dc, 1.0, gb);
        else gemm(true, ta, n, k, m, 1.0, dc, av, 1.0, gb);
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(x.value().rank() == 2 && weight.value().rank() == 2, "linear needs matrices");
  const int64_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in) {
    throw UsageError("linear: input width " + std::to_string(in) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.value().numel() == out, "linear: bias width mismatch");
  Tensor y({n, out});
  gemm(false, true, n, out, in, 1.0, x.value().data(), weight.value().data(), 0.0, y.data());
  if (has_bias) {
    for (int64_t r = 0; r < n; ++r)
      for (int64_t c = 0; c < out; ++c) y[r * out + c] += bias.value()[c];
  }
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(y), std::move(inputs), [n, in, out, has_bias](Node& self) {
    Node& nx = input(self, 0);
    Node& nw = input(self, 1);
    const double* dy = self.grad.data();
    if (nx.requires_grad) gemm(false, false, n, in, out, 1.0, dy, nw.value.data(), 1.0,
                               nx.grad_buffer().data());
    if (nw.requires_grad) gemm(true, false, out, in, n, 1.0, dy, nx.value.data(), 1.0,
                               nw.grad_buffer().data());
    if (has_bias && input(self, 2).requires_grad) {
      Tensor& gb = input(self, 2).grad_buffer();
      for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < out; ++c) gb[c] += dy[r * out + c];
    }
  });
}

Var add_per_sample(const Var& nodes, const Var& rows) {
  require(nodes.value().rank() == 3 && rows.value().rank() == 2, "add_per_sample ranks");
  const int64_t b = nodes.dim(0), n = nodes.dim(1), d = nodes.dim(2);
  if (rows.dim(0) != b || rows.dim(1) != d) {
    throw UsageError("add_per_sample: rows " + shape_str(rows.shape()) + " do not fit nodes " +
                     shape_str(nodes.shape()));
  }
  Tensor y = nodes.value();
  for (int64_t i = 0; i < b; ++i)
    for (int64_t j = 0; j < n; ++j)
      for (int64_t c = 0; c < d; ++c) y[(i * n + j) * d + c] += rows.value()[i * d + c];
  return make_result(std::move(y), {nodes, rows}, [b, n, d](Node& self) {
    if (input(self, 0).requires_grad) input(self, 0).accumulate(self.grad);
    if (Node& nr = input(self, 1); nr.requires_grad) {
      Tensor& g = nr.grad_buffer();
      for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < n; ++j)
          for (int64_t c = 0; c < d; ++c) g[i * d + c] += self.grad[(i * n + j) * d + c];
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  require(x.value().rank() == 4 && weight.value().rank() == 4, "conv2d needs rank-4 tensors");
  const int64_t bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t o = weight.dim(0);
  const int k = static_cast<int>(weight.dim(2));
  if (weight.dim(1) != c || weight.dim(3) != k) {
    throw UsageError("conv2d: input channels " + std::to_string(c) + " do not match weight " +
                     shape_str(weight.shape()));
  }
  const int64_t oh = conv_out_size(h, k, stride, padding);
  const int64_t ow = conv_out_size(w, k, stride, padding);
  require(oh > 0 && ow > 0, "conv2d: input " + shape_str(x.shape()) + " too small for kernel");
  const bool has_bias = bias.defined();
  const int64_t ckk = c * k * k, ohw = oh * ow;
  const bool direct = (k == 1 && stride == 1 && padding == 0);

  Tensor y({bsz, o, oh, ow});
  std::vector<double> col(direct ? 0 : static_cast<size_t>(ckk * ohw));
  for (int64_t b = 0; b < bsz; ++b) {
    const double* xb = x.value().data() + b * c * h * w;
    const double* src = xb;
    if (!direct) {
      im2col(xb, c, h, w, k, stride, padding, oh, ow, col.data());
      src = col.data();
    }
    double* yb = y.data() + b * o * ohw;
    gemm(false, false, o, ohw, ckk, 1.0, weight.value().data(), src, 0.0, yb);
    if (has_bias) {
      for (int64_t oc = 0; oc < o; ++oc) {
        const double bv = bias.value()[oc];
        double* row = yb + oc * ohw;
        for (int64_t i = 0; i < ohw; ++i) row[i] += bv;
      }
    }
  }
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(y), std::move(inputs), [=](Node& self) {
    Node& nx = input(self, 0);
    Node& nw = input(self, 1);
    std::vector<double> col(direct ? 0 : static_cast<size_t>(ckk * ohw));
    std::vector<double> dcol(direct ? 0 : static_cast<size_t>(ckk * ohw));
    for (int64_t b = 0; b < bsz; ++b) {
      const double* dy = self.grad.data() + b * o * ohw;
      const double* xb = nx.value.data() + b * c * h * w;
      if (nw.requires_grad) {
        const double* src = xb;
        if (!direct) {
          im2col(xb, c, h, w, k, stride, padding, oh, ow, col.data());
          src = col.data();
        }
        gemm(false, true, o, ckk, ohw, 1.0, dy, src, 1.0, nw.grad_buffer().data());
      }
      if (nx.requires_grad) {
        double* gx = nx.grad_buffer().data() + b * c * h * w;
        if (direct) {
          gemm(true, false, ckk, ohw, o, 1.0, nw.value.data(), dy, 1.0, gx);
        } else {
          gemm(true, false, ckk, ohw, o, 1.0, nw.value.data(), dy, 0.0, dcol.data());
          col2im(dcol.data(), c, h, w, k, stride, padding, oh, ow, gx);
        }
      }
      if (has_bias && input(self, 2).requires_grad) {
        Tensor& gb = input(self, 2).grad_buffer();
        for (int64_t oc = 0; oc < o; ++oc) {
          double s = 0.0;
          for (int64_t i = 0; i < ohw; ++i) s += dy[oc * ohw + i];
          gb[oc] += s;
        }
      }
    }
  });
}

Var max_pool2d(const Var& x, int kernel, int stride, int padding) {
  require(x.value().rank() == 4, "max_pool2d needs B×C×H×W");
  const int64_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = conv_out_size(h, kernel, stride, padding);
  const int64_t ow = conv_out_size(w, kernel, stride, padding);
  require(oh > 0 && ow > 0, "max_pool2d: input too small");
  Tensor y({x.dim(0), x.dim(1), oh, ow});
  std::vector<int64_t> arg(static_cast<size_t>(bc * oh * ow));
  const double* xv = x.value().data();
  for (int64_t p = 0; p < bc; ++p) {
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_at = -1;
        for (int ki = 0; ki < kernel; ++ki) {
          const int64_t iy = i * stride - padding + ki;
          if (iy < 0 || iy >= h) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const int64_t ix = j * stride - padding + kj;
            if (ix < 0 || ix >= w) continue;
            const int64_t at = (p * h + iy) * w + ix;
            if (best_at < 0 || xv[at] > best) {
              best = xv[at];
              best_at = at;
            }
          }
        }
        const int64_t out = (p * oh + i) * ow + j;
        y[out] = best;
        arg[static_cast<size_t>(out)] = best_at;
      }
    }
  }
  return make_result(std::move(y), {x}, [arg = std::move(arg)](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    for (size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[static_cast<int64_t>(i)];
  });
}

Var global_avg_pool(const Var& x) {
  require(x.value().rank() == 4, "global_avg_pool needs B×C×H×W");
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({b, c});
  const double inv = 1.0 / static_cast<double>(hw);
  for (int64_t p = 0; p < b * c; ++p) {
    double s = 0.0;
    const double* src = x.value().data() + p * hw;
    for (int64_t i = 0; i < hw; ++i) s += src[i];
    y[p] = s * inv;
  }
  return make_result(std::move(y), {x}, [b, c, hw, inv](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    for (int64_t p = 0; p < b * c; ++p) {
      const double d = self.grad[p] * inv;
      double* dst = g.data() + p * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] += d;
    }
  });
}

Var upsample_bilinear(const Var& x, int64_t out_h, int64_t out_w) {
  require(x.value().rank() == 4, "upsample_bilinear needs B×C×H×W");
  require(out_h > 0 && out_w > 0, "upsample_bilinear: empty target");
  const int64_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Interp ty = interp_axis(h, out_h);
  Interp tx = interp_axis(w, out_w);
  Tensor y({x.dim(0), x.dim(1), out_h, out_w});
  const double* xv = x.value().data();
  for (int64_t p = 0; p < bc; ++p) {
    const double* src = xv + p * h * w;
    double* dst = y.data() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const size_t si = static_cast<size_t>(i);
      const double ly1 = ty.l1[si], ly0 = 1.0 - ly1;
      const double* r0 = src + ty.i0[si] * w;
      const double* r1 = src + ty.i1[si] * w;
      for (int64_t j = 0; j < out_w; ++j) {
        const size_t sj = static_cast<size_t>(j);
        const double lx1 = tx.l1[sj], lx0 = 1.0 - lx1;
        const int64_t x0 = tx.i0[sj], x1 = tx.i1[sj];
        dst[i * out_w + j] = ly0 * (lx0 * r0[x0] + lx1 * r0[x1]) + ly1 * (lx0 * r1[x0] + lx1 * r1[x1]);
      }
    }
  }
  return make_result(std::move(y), {x}, [=, ty = std::move(ty), tx = std::move(tx)](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    for (int64_t p = 0; p < bc; ++p) {
      double* dst = g.data() + p * h * w;
      const double* src = self.grad.data() + p * out_h * out_w;
      for (int64_t i = 0; i < out_h; ++i) {
        const size_t si = static_cast<size_t>(i);
        const double ly1 = ty.l1[si], ly0 = 1.0 - ly1;
        double* r0 = dst + ty.i0[si] * w;
        double* r1 = dst + ty.i1[si] * w;
        for (int64_t j = 0; j < out_w; ++j) {
          const size_t sj = static_cast<size_t>(j);
          const double lx1 = tx.l1[sj], lx0 = 1.0 - lx1;
          const int64_t x0 = tx.i0[sj], x1 = tx.i1[sj];
          const double d = src[i * out_w + j];
          r0[x0] += ly0 * lx0 * d;
          r0[x1] += ly0 * lx1 * d;
          r1[x0] += ly1 * lx0 * d;
          r1[x1] += ly1 * lx1 * d;
        }
      }
    }
  });
}

Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState st,
                 bool training) {
  require(x.value().rank() == 4, "batch_norm2d needs B×C×H×W");
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(gamma.value().numel() == c && beta.value().numel() == c,
          "batch_norm2d: channel mismatch");
  const int64_t count = b * hw;
  std::vector<double> mean(static_cast<size_t>(c)), invstd(static_cast<size_t>(c));
  const double* xv = x.value().data();
  for (int64_t ch = 0; ch < c; ++ch) {
    double m, v;
    if (training) {
      double s = 0.0;
      for (int64_t i = 0; i < b; ++i) {
        const double* p = xv + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) s += p[j];
      }
      m = s / static_cast<double>(count);
      double ss = 0.0;
      for (int64_t i = 0; i < b; ++i) {
        const double* p = xv + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) ss += (p[j] - m) * (p[j] - m);
      }
      v = ss / static_cast<double>(count);
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : v;
      (*st.running_mean)[ch] = (1.0 - st.momentum) * (*st.running_mean)[ch] + st.momentum * m;
      (*st.running_var)[ch] =
          (1.0 - st.momentum) * (*st.running_var)[ch] + st.momentum * unbiased;
    } else {
      m = (*st.running_mean)[ch];
      v = (*st.running_var)[ch];
    }
    mean[static_cast<size_t>(ch)] = m;
    invstd[static_cast<size_t>(ch)] = 1.0 / std::sqrt(v + st.eps);
  }
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t off = (i * c + ch) * hw;
      const double m = mean[static_cast<size_t>(ch)], is = invstd[static_cast<size_t>(ch)];
      const double gm = gamma.value()[ch], bt = beta.value()[ch];
      for (int64_t j = 0; j < hw; ++j) {
        const double xh = (xv[off + j] - m) * is;
        xhat[off + j] = xh;
        y[off + j] = gm * xh + bt;
      }
    }
  }
  return make_result(std::move(y), {x, gamma, beta},
                     [=, xhat = std::move(xhat), invstd = std::move(invstd)](Node& self) {
    Node& nx = input(self, 0);
    Node& ng = input(self, 1);
    Node& nb = input(self, 2);
    const double* dy = self.grad.data();
    for (int64_t ch = 0; ch < c; ++ch) {
      double sdy = 0.0, sdyx = 0.0;
      for (int64_t i = 0; i < b; ++i) {
        const int64_t off = (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          sdy += dy[off + j];
          sdyx += dy[off + j] * xhat[off + j];
        }
      }
      if (ng.requires_grad) ng.grad_buffer()[ch] += sdyx;
      if (nb.requires_grad) nb.grad_buffer()[ch] += sdy;
      if (!nx.requires_grad) continue;
      Tensor& gx = nx.grad_buffer();
      const double gm = ng.value[ch], is = invstd[static_cast<size_t>(ch)];
      const double n = static_cast<double>(count);
      for (int64_t i = 0; i < b; ++i) {
        const int64_t off = (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          if (training) {
            gx[off + j] += gm * is * (dy[off + j] - sdy / n - xhat[off + j] * sdyx / n);
          } else {
            gx[off + j] += gm * is * dy[off + j];
          }
        }
      }
    }
  });
}

Var dropout(const Var& x, double p, bool training, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout rate must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep = 1.0 - p;
  Tensor mask(x.shape());
  for (double& m : mask.values()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Tensor y = x.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= mask[i];
  return make_result(std::move(y), {x}, [mask = std::move(mask)](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Var cross_entropy2d(const Var& logits, std::span<const int32_t> labels) {
  require(logits.value().rank() == 4, "cross_entropy2d needs B×K×H×W logits");
  const int64_t b = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const int64_t hw = h * w;
  if (static_cast<int64_t>(labels.size()) != b * hw) {
    throw UsageError("cross_entropy2d: label count " + std::to_string(labels.size()) +
                     " does not match logits " + shape_str(logits.shape()));
  }
  for (int64_t i = 0; i < b * hw; ++i) {
    const int32_t l = labels[static_cast<size_t>(i)];
    if (l < 0 || l >= k) {
      std::ostringstream os;
      os << "label " << l << " out of range [0," << k << ") at (b=" << i / hw
         << ", y=" << (i % hw) / w << ", x=" << i % w << ")";
      throw DataError(os.str());
    }
  }
  const double* z = logits.value().data();
  Tensor prob(logits.shape());
  double total = 0.0;
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t p = 0; p < hw; ++p) {
      const double* zp = z + bi * k * hw + p;
      double m = -std::numeric_limits<double>::infinity();
      for (int64_t c = 0; c < k; ++c) m = std::max(m, zp[c * hw]);
      double s = 0.0;
      for (int64_t c = 0; c < k; ++c) s += std::exp(zp[c * hw] - m);
      const double lse = m + std::log(s);
      for (int64_t c = 0; c < k; ++c) prob[bi * k * hw + c * hw + p] = std::exp(zp[c * hw] - lse);
      total += lse - zp[labels[static_cast<size_t>(bi * hw + p)] * hw];
    }
  }
  const double n = static_cast<double>(b * hw);
  std::vector<int32_t> lab(labels.begin(), labels.end());
  return make_result(Tensor({1}, total / n), {logits},
                     [=, prob = std::move(prob), lab = std::move(lab)](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    const double s = self.grad[0] / n;
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t p = 0; p < hw; ++p) {
        const int64_t label = lab[static_cast<size_t>(bi * hw + p)];
        for (int64_t c = 0; c < k; ++c) {
          const int64_t at = bi * k * hw + c * hw + p;
          g[at] += s * (prob[at] - (c == label ? 1.0 : 0.0));
        }
      }
    }
  });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw UsageError("bce_with_logits: shape mismatch " + shape_str(logits.shape()) + " vs " +
                     shape_str(targets.shape()));
  }
  const int64_t n = targets.numel();
  require(n > 0, "bce_with_logits of empty tensor");
  double total = 0.0;
  const double* x = logits.value().data();
  for (int64_t i = 0; i < n; ++i) {
    const double t = targets[i];
    if (t != 0.0 && t != 1.0) throw DataError("interaction target not in {0,1}");
    total += std::max(x[i], 0.0) - x[i] * t + std::log1p(std::exp(-std::abs(x[i])));
  }
  return make_result(Tensor({1}, total / static_cast<double>(n)), {logits},
                     [targets, n](Node& self) {
    Node& in = input(self, 0);
    Tensor& g = in.grad_buffer();
    const double s = self.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-in.value[i]));
      g[i] += s * (sig - targets[i]);
    }
  });
}

Var channel_kld(const Var& student, const Tensor& teacher) {
  if (student.shape() != teacher.shape()) {
    throw UsageError("channel_kld: shape mismatch " + shape_str(student.shape()) + " vs " +
                     shape_str(teacher.shape()));
  }
  require(teacher.rank() == 4, "channel_kld needs B×C×H×W maps");
  const int64_t b = teacher.dim(0), c = teacher.dim(1), hw = teacher.dim(2) * teacher.dim(3);
  Tensor ps(teacher.shape()), pt(teacher.shape());
  double total = 0.0;
  auto log_softmax_at = [&](const double* z, int64_t base, std::vector<double>& out) {
    double m = -std::numeric_limits<double>::infinity();
    for (int64_t ch = 0; ch < c; ++ch) m = std::max(m, z[base + ch * hw]);
    double s = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) s += std::exp(z[base + ch * hw] - m);
    const double lse = m + std::log(s);
    for (int64_t ch = 0; ch < c; ++ch) out[static_cast<size_t>(ch)] = z[base + ch * hw] - lse;
  };
  std::vector<double> ls(static_cast<size_t>(c)), lt(static_cast<size_t>(c));
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t p = 0; p < hw; ++p) {
      const int64_t base = bi * c * hw + p;
      log_softmax_at(student.value().data(), base, ls);
      log_softmax_at(teacher.data(), base, lt);
      double kl = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double t = std::exp(lt[static_cast<size_t>(ch)]);
        kl += t * (lt[static_cast<size_t>(ch)] - ls[static_cast<size_t>(ch)]);
        pt[base + ch * hw] = t;
        ps[base + ch * hw] = std::exp(ls[static_cast<size_t>(ch)]);
      }
      total += kl;
    }
  }
  const double n = static_cast<double>(b * hw);
  return make_result(Tensor({1}, total / n), {student},
                     [ps = std::move(ps), pt = std::move(pt), n](Node& self) {
    Tensor& g = input(self, 0).grad_buffer();
    const double s = self.grad[0] / n;
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * (ps[i] - pt[i]);
  });
}

}  // namespace gmtl::ops
