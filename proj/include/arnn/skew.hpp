#pragma once

#include <cstddef>

#include "arnn/tensor.hpp"

// Coordinate rearrangements that turn diagonal traversal of an h x m x n map
// into a left-to-right sweep over columns. All are linear, differentiable and
// implemented as indexed copies.
namespace arnn {

// Row i of the original m x n map occupies columns [i, i + n) of a width
// m + n - 1 map (2n - 1 for square maps); every other cell is zero.
struct SkewedMap {
  Tensor tensor;
  std::size_t original_cols = 0;

  std::size_t rows() const { return tensor.dim(1); }
  std::size_t width() const { return rows() + original_cols - 1; }
};

// (c, i, j) -> (c, i, i + j). Cells with equal i + j share a column.
SkewedMap skew(const Tensor& x);
// Exact inverse of skew.
Tensor unskew(const SkewedMap& x);
// Column j -> column n - 1 - j.
Tensor mirror_cols(const Tensor& x);
// Row i -> row i + 1; row 0 becomes zero and the last row is dropped.
Tensor shift_down_one_row(const Tensor& x);

}  // namespace arnn
