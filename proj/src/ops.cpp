#include "arnn/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace arnn::ops {

namespace {

using detail::TensorImpl;
using Index = std::vector<std::size_t>;

std::vector<double>& grad_of(TensorImpl& self, std::size_t parent) {
  return self.parents[parent]->ensure_grad();
}

bool wants_grad(const TensorImpl& self, std::size_t parent) {
  return self.parents[parent]->requires_grad;
}

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
    return;
  }
  const auto lda = static_cast<int>(trans_a ? m : k);
  const auto ldb = static_cast<int>(trans_b ? k : n);
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, lda, b, ldb, beta, c, static_cast<int>(n));
}

// ---------------------------------------------------------------------------
// broadcasting

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                       to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each element of `out`, the flat index of the element of `in` it reads.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    stride[i + offset] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  const std::size_t total = numel(out);
  std::vector<std::size_t> idx(total);
  Index counter(rank, 0);
  std::size_t flat = 0;
  for (std::size_t k = 0; k < total; ++k) {
    idx[k] = flat;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      flat += stride[ax];
      if (counter[ax] < out[ax]) break;
      flat -= stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return idx;
}

struct BinaryPlan {
  Shape out;
  std::shared_ptr<const std::vector<std::size_t>> ia;  // null when identity
  std::shared_ptr<const std::vector<std::size_t>> ib;
  std::size_t index_a(std::size_t k) const { return ia ? (*ia)[k] : k; }
  std::size_t index_b(std::size_t k) const { return ib ? (*ib)[k] : k; }
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b, const char* op) {
  BinaryPlan plan;
  plan.out = broadcast_shape(a.shape(), b.shape(), op);
  if (a.shape() != plan.out) {
    plan.ia = std::make_shared<std::vector<std::size_t>>(broadcast_index(a.shape(), plan.out));
  }
  if (b.shape() != plan.out) {
    plan.ib = std::make_shared<std::vector<std::size_t>>(broadcast_index(b.shape(), plan.out));
  }
  return plan;
}

enum class BinaryKind { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  auto plan = plan_binary(a, b, name);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t total = numel(plan.out);
  std::vector<double> out(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double x = av[plan.index_a(k)];
    const double y = bv[plan.index_b(k)];
    switch (kind) {
      case BinaryKind::add: out[k] = x + y; break;
      case BinaryKind::sub: out[k] = x - y; break;
      case BinaryKind::mul: out[k] = x * y; break;
      case BinaryKind::div: out[k] = x / y; break;
    }
  }
  return Tensor::from_op(plan.out, std::move(out), name, {a, b},
                         [plan, kind](TensorImpl& self) {
    const auto& g = self.grad;
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    const std::size_t total = g.size();
    if (wants_grad(self, 0)) {
      auto& ga = grad_of(self, 0);
      for (std::size_t k = 0; k < total; ++k) {
        const std::size_t ia = plan.index_a(k);
        const std::size_t ib = plan.index_b(k);
        switch (kind) {
          case BinaryKind::add:
          case BinaryKind::sub: ga[ia] += g[k]; break;
          case BinaryKind::mul: ga[ia] += g[k] * y[ib]; break;
          case BinaryKind::div: ga[ia] += g[k] / y[ib]; break;
        }
      }
    }
    if (wants_grad(self, 1)) {
      auto& gb = grad_of(self, 1);
      for (std::size_t k = 0; k < total; ++k) {
        const std::size_t ia = plan.index_a(k);
        const std::size_t ib = plan.index_b(k);
        switch (kind) {
          case BinaryKind::add: gb[ib] += g[k]; break;
          case BinaryKind::sub: gb[ib] -= g[k]; break;
          case BinaryKind::mul: gb[ib] += g[k] * x[ia]; break;
          case BinaryKind::div: gb[ib] -= g[k] * x[ia] / (y[ib] * y[ib]); break;
        }
      }
    }
  });
}

// y = f(x) elementwise; dydx(x, y) gives the local derivative.
template <typename F, typename D>
Tensor unary(const Tensor& x, const char* name, F f, D dydx) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = f(xv[k]);
  return Tensor::from_op(x.shape(), std::move(out), name, {x}, [dydx](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    const auto& xs = self.parents[0]->data;
    for (std::size_t k = 0; k < self.grad.size(); ++k) {
      gx[k] += self.grad[k] * dydx(xs[k], self.data[k]);
    }
  });
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// convolution geometry

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;             // column side
  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = cols + ((c * g.kh + ky) * g.kw + kx) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Accumulates columns back onto the image (adjoint of im2col).
void col2im(const double* cols, const ConvGeometry& g, double* image) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + to_string(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::div, "div"); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor sigmoid(const Tensor& x) {
  return unary(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary(x, "softplus", stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  const auto xv = x.values();
  return Tensor::from_op(std::move(shape), std::vector<double>(xv.begin(), xv.end()), "reshape",
                         {x}, [](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += self.grad[k];
  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shape(x.shape(), shape, "broadcast_to") != shape) {
    throw ShapeError("broadcast_to: cannot expand " + to_string(x.shape()) + " to " +
                     to_string(shape));
  }
  auto idx = std::make_shared<const std::vector<std::size_t>>(broadcast_index(x.shape(), shape));
  const auto xv = x.values();
  std::vector<double> out(idx->size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = xv[(*idx)[k]];
  return Tensor::from_op(shape, std::move(out), "broadcast_to", {x}, [idx](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t k = 0; k < self.grad.size(); ++k) gx[(*idx)[k]] += self.grad[k];
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: " + to_string(s) + " incompatible with " + to_string(first) +
                       " along axis " + std::to_string(axis));
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    const std::size_t row = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * row), row,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    offset += row;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::from_op(std::move(out_shape), std::move(out), "concat", std::move(parents),
                         [extents, outer, inner, out_row](TensorImpl& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      const std::size_t row = extents[p] * inner;
      if (wants_grad(self, p)) {
        auto& gp = grad_of(self, p);
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * out_row + offset;
          double* dst = gp.data() + o * row;
          for (std::size_t k = 0; k < row; ++k) dst[k] += src[k];
        }
      }
      offset += row;
    }
  });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range on axis " + std::to_string(axis) + " of " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t in_row = s[axis] * inner;
  const std::size_t out_row = length * inner;
  const std::size_t offset = start * inner;
  Shape out_shape = s;
  out_shape[axis] = length;
  const auto xv = x.values();
  std::vector<double> out(outer * out_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(o * in_row + offset), out_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * out_row));
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), "slice", {x},
                         [outer, in_row, out_row, offset](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = self.grad.data() + o * out_row;
      double* dst = gx.data() + o * in_row + offset;
      for (std::size_t k = 0; k < out_row; ++k) dst[k] += src[k];
    }
  });
}

Tensor gather(const Tensor& x, Shape shape, std::vector<std::ptrdiff_t> source) {
  if (numel(shape) != source.size()) throw ShapeError("gather: index map size mismatch");
  const auto xv = x.values();
  const auto limit = static_cast<std::ptrdiff_t>(xv.size());
  std::vector<double> out(source.size());
  for (std::size_t k = 0; k < source.size(); ++k) {
    const auto s = source[k];
    if (s >= limit) throw ShapeError("gather: source index out of range");
    out[k] = s < 0 ? 0.0 : xv[static_cast<std::size_t>(s)];
  }
  auto src = std::make_shared<const std::vector<std::ptrdiff_t>>(std::move(source));
  return Tensor::from_op(std::move(shape), std::move(out), "gather", {x}, [src](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t k = 0; k < src->size(); ++k) {
      const auto s = (*src)[k];
      if (s >= 0) gx[static_cast<std::size_t>(s)] += self.grad[k];
    }
  });
}

Tensor pad_zeros(const Tensor& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads) {
  const Shape& s = x.shape();
  if (pads.size() != s.size()) throw ShapeError("pad_zeros: one (before, after) pair per axis");
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[i] + pads[i].first + pads[i].second;
  const std::size_t total = numel(out_shape);
  std::vector<std::ptrdiff_t> source(total);
  Index counter(s.size(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    std::ptrdiff_t flat = 0;
    bool inside = true;
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      const auto c = static_cast<std::ptrdiff_t>(counter[ax]) -
                     static_cast<std::ptrdiff_t>(pads[ax].first);
      if (c < 0 || c >= static_cast<std::ptrdiff_t>(s[ax])) {
        inside = false;
        break;
      }
      flat = flat * static_cast<std::ptrdiff_t>(s[ax]) + c;
    }
    source[k] = inside ? flat : -1;
    for (std::size_t ax = s.size(); ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) break;
      counter[ax] = 0;
    }
  }
  return gather(x, std::move(out_shape), std::move(source));
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return Tensor::from_op(Shape{}, {total}, "sum", {x}, [](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    const double g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  std::vector<bool> reduce(s.size(), false);
  for (auto a : axes) {
    if (a >= s.size()) throw ShapeError("sum: axis out of range for " + to_string(s));
    reduce[a] = true;
  }
  Shape out_shape;
  Shape kept(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    kept[i] = reduce[i] ? 1 : s[i];
    if (!reduce[i]) out_shape.push_back(s[i]);
  }
  // Map every input element to its output slot via a broadcast of the kept shape.
  auto idx = std::make_shared<const std::vector<std::size_t>>(broadcast_index(kept, s));
  const auto xv = x.values();
  std::vector<double> out(numel(out_shape), 0.0);
  for (std::size_t k = 0; k < xv.size(); ++k) out[(*idx)[k]] += xv[k];
  return Tensor::from_op(std::move(out_shape), std::move(out), "sum_axes", {x},
                         [idx](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += self.grad[(*idx)[k]];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm(false, false, m, n, k, 1.0, a.values().data(), b.values().data(), 0.0, out.data());
  return Tensor::from_op(Shape{m, n}, std::move(out), "matmul", {a, b},
                         [m, k, n](TensorImpl& self) {
    const double* g = self.grad.data();
    if (wants_grad(self, 0)) {
      gemm(false, true, m, k, n, 1.0, g, self.parents[1]->data.data(), 1.0,
           grad_of(self, 0).data());
    }
    if (wants_grad(self, 1)) {
      gemm(true, false, k, n, m, 1.0, self.parents[0]->data.data(), g, 1.0,
           grad_of(self, 1).data());
    }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  const std::size_t c_out = kernel.dim(0);
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(2), kernel.dim(3),
                 stride, padding, 0, 0};
  if (kernel.dim(1) != g.channels) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels, input is " +
                     to_string(input.shape()));
  }
  if (g.kh < 1 || g.kw < 1 || g.height + 2 * padding < g.kh || g.width + 2 * padding < g.kw) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " does not fit input " +
                     to_string(input.shape()) + " with padding " + std::to_string(padding));
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  std::shared_ptr<std::vector<double>> cols;
  const double* col_data = input.values().data();
  if (!is_pointwise(g)) {
    cols = std::make_shared<std::vector<double>>(g.rows() * g.cols());
    im2col(input.values().data(), g, cols->data());
    col_data = cols->data();
  }
  std::vector<double> out(c_out * g.cols());
  gemm(false, false, c_out, g.cols(), g.rows(), 1.0, kernel.values().data(), col_data, 0.0,
       out.data());
  return Tensor::from_op(Shape{c_out, g.out_h, g.out_w}, std::move(out), "conv2d",
                         {input, kernel}, [g, c_out, cols](TensorImpl& self) {
    const double* gout = self.grad.data();
    const auto& in = self.parents[0]->data;
    const auto& k = self.parents[1]->data;
    if (wants_grad(self, 1)) {
      const double* col_data = cols ? cols->data() : in.data();
      gemm(false, true, c_out, g.rows(), g.cols(), 1.0, gout, col_data, 1.0,
           grad_of(self, 1).data());
    }
    if (wants_grad(self, 0)) {
      auto& gin = grad_of(self, 0);
      if (is_pointwise(g)) {
        gemm(true, false, g.rows(), g.cols(), c_out, 1.0, k.data(), gout, 1.0, gin.data());
      } else {
        std::vector<double> dcols(g.rows() * g.cols());
        gemm(true, false, g.rows(), g.cols(), c_out, 1.0, k.data(), gout, 0.0, dcols.data());
        col2im(dcols.data(), g, gin.data());
      }
    }
  });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, std::size_t stride) {
  require_rank(input, 3, "conv_transpose2d", "input");
  require_rank(kernel, 4, "conv_transpose2d", "kernel");
  if (stride < 1) throw ContractError("conv_transpose2d: stride must be >= 1");
  const std::size_t c_in = input.dim(0);
  if (kernel.dim(0) != c_in) {
    throw ShapeError("conv_transpose2d: kernel " + to_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(0)) + " input channels, input is " +
                     to_string(input.shape()));
  }
  const std::size_t c_out = kernel.dim(1);
  const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t h = input.dim(1), w = input.dim(2);
  const std::size_t out_h = (h - 1) * stride + kh;
  const std::size_t out_w = (w - 1) * stride + kw;
  // Geometry of the forward convolution this operation is the adjoint of.
  const ConvGeometry g{c_out, out_h, out_w, kh, kw, stride, 0, h, w};

  std::vector<double> cols(g.rows() * g.cols());
  gemm(true, false, g.rows(), g.cols(), c_in, 1.0, kernel.values().data(), input.values().data(),
       0.0, cols.data());
  std::vector<double> out(c_out * out_h * out_w, 0.0);
  col2im(cols.data(), g, out.data());
  return Tensor::from_op(Shape{c_out, out_h, out_w}, std::move(out), "conv_transpose2d",
                         {input, kernel}, [g, c_in](TensorImpl& self) {
    std::vector<double> gcols(g.rows() * g.cols());
    im2col(self.grad.data(), g, gcols.data());
    if (wants_grad(self, 0)) {
      gemm(false, false, c_in, g.cols(), g.rows(), 1.0, self.parents[1]->data.data(),
           gcols.data(), 1.0, grad_of(self, 0).data());
    }
    if (wants_grad(self, 1)) {
      gemm(false, true, c_in, g.rows(), g.cols(), 1.0, self.parents[0]->data.data(),
           gcols.data(), 1.0, grad_of(self, 1).data());
    }
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || bias.dim(0) != x.dim(0)) {
    throw ShapeError("add_channel_bias: bias " + to_string(bias.shape()) + " vs input " +
                     to_string(x.shape()));
  }
  const std::size_t channels = x.dim(0);
  const std::size_t plane = x.numel() / channels;
  const auto xv = x.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.begin(), xv.end());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < plane; ++k) out[c * plane + k] += bv[c];
  }
  return Tensor::from_op(x.shape(), std::move(out), "add_channel_bias", {x, bias},
                         [channels, plane](TensorImpl& self) {
    if (wants_grad(self, 0)) {
      auto& gx = grad_of(self, 0);
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += self.grad[k];
    }
    if (wants_grad(self, 1)) {
      auto& gb = grad_of(self, 1);
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < plane; ++k) acc += self.grad[c * plane + k];
        gb[c] += acc;
      }
    }
  });
}

Tensor max_pool2d(const Tensor& x, std::size_t window) {
  require_rank(x, 3, "max_pool2d", "input");
  if (window < 1) throw ContractError("max_pool2d: window must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / window, ow = w / window;
  if (oh == 0 || ow == 0) throw ShapeError("max_pool2d: input smaller than window");
  const auto xv = x.values();
  std::vector<double> out(c * oh * ow);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ch * h + oy * window) * w + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t i = (ch * h + oy * window + dy) * w + ox * window + dx;
            if (xv[i] > xv[best]) best = i;
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = xv[best];
        (*arg)[o] = best;
      }
    }
  }
  return Tensor::from_op(Shape{c, oh, ow}, std::move(out), "max_pool2d", {x},
                         [arg](TensorImpl& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t o = 0; o < arg->size(); ++o) gx[(*arg)[o]] += self.grad[o];
  });
}

Tensor softmax_spatial(const Tensor& x) {
  const auto xv = x.values();
  if (xv.empty()) throw ShapeError("softmax_spatial: empty input");
  const double peak = *std::max_element(xv.begin(), xv.end());
  std::vector<double> out(xv.size());
  double total = 0.0;
  for (std::size_t k = 0; k < xv.size(); ++k) {
    out[k] = std::exp(xv[k] - peak);
    total += out[k];
  }
  for (auto& v : out) v /= total;
  return Tensor::from_op(x.shape(), std::move(out), "softmax_spatial", {x},
                         [](TensorImpl& self) {
    const auto& y = self.data;
    const auto& g = self.grad;
    double dot = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) dot += g[k] * y[k];
    auto& gx = grad_of(self, 0);
    for (std::size_t k = 0; k < y.size(); ++k) gx[k] += y[k] * (g[k] - dot);
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank(logits, 1, "softmax_cross_entropy", "logits");
  const auto z = logits.values();
  if (label >= z.size()) throw ContractError("softmax_cross_entropy: label out of range");
  const double peak = *std::max_element(z.begin(), z.end());
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    (*probs)[k] = std::exp(z[k] - peak);
    total += (*probs)[k];
  }
  for (auto& p : *probs) p /= total;
  const double loss = std::log(total) + peak - z[label];
  return Tensor::from_op(Shape{}, {loss}, "softmax_cross_entropy", {logits},
                         [probs, label](TensorImpl& self) {
    auto& gz = grad_of(self, 0);
    const double g = self.grad[0];
    for (std::size_t k = 0; k < gz.size(); ++k) {
      gz[k] += g * ((*probs)[k] - (k == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace arnn::ops
