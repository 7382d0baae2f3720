#include "arnn/skew.hpp"

#include <vector>

#include "arnn/ops.hpp"

namespace arnn {

namespace {

void require_map(const Tensor& x, const char* op) {
  if (x.rank() != 3 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw ShapeError(std::string(op) + ": expected a non-empty h x m x n map, got " +
                     to_string(x.shape()));
  }
}

}  // namespace

SkewedMap skew(const Tensor& x) {
  require_map(x, "skew");
  const std::size_t h = x.dim(0), m = x.dim(1), n = x.dim(2);
  const std::size_t w = m + n - 1;
  std::vector<std::ptrdiff_t> src(h * m * w, -1);
  for (std::size_t c = 0; c < h; ++c) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        src[(c * m + i) * w + i + j] = static_cast<std::ptrdiff_t>((c * m + i) * n + j);
      }
    }
  }
  return SkewedMap{ops::gather(x, Shape{h, m, w}, std::move(src)), n};
}

Tensor unskew(const SkewedMap& x) {
  const Tensor& t = x.tensor;
  require_map(t, "unskew");
  const std::size_t n = x.original_cols;
  if (n == 0 || t.dim(2) != t.dim(1) + n - 1) {
    throw ShapeError("unskew: width " + std::to_string(t.dim(2)) + " does not match m + n - 1 for " +
                     std::to_string(t.dim(1)) + " rows and " + std::to_string(n) + " columns");
  }
  const std::size_t h = t.dim(0), m = t.dim(1), w = t.dim(2);
  std::vector<std::ptrdiff_t> src(h * m * n, -1);
  for (std::size_t c = 0; c < h; ++c) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        src[(c * m + i) * n + j] = static_cast<std::ptrdiff_t>((c * m + i) * w + i + j);
      }
    }
  }
  return ops::gather(t, Shape{h, m, n}, std::move(src));
}

Tensor mirror_cols(const Tensor& x) {
  require_map(x, "mirror_cols");
  const std::size_t h = x.dim(0), m = x.dim(1), n = x.dim(2);
  std::vector<std::ptrdiff_t> src(h * m * n);
  for (std::size_t r = 0; r < h * m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      src[r * n + j] = static_cast<std::ptrdiff_t>(r * n + (n - 1 - j));
    }
  }
  return ops::gather(x, x.shape(), std::move(src));
}

Tensor shift_down_one_row(const Tensor& x) {
  require_map(x, "shift_down_one_row");
  const std::size_t h = x.dim(0), m = x.dim(1), n = x.dim(2);
  std::vector<std::ptrdiff_t> src(h * m * n, -1);
  for (std::size_t c = 0; c < h; ++c) {
    for (std::size_t i = 1; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        src[(c * m + i) * n + j] = static_cast<std::ptrdiff_t>((c * m + i - 1) * n + j);
      }
    }
  }
  return ops::gather(x, x.shape(), std::move(src));
}

}  // namespace arnn
