#include "arnn/attention.hpp"

#include <cmath>

#include "arnn/ops.hpp"

namespace arnn {

std::string to_string(Normalization n) {
  return n == Normalization::sigmoid ? "sigmoid" : "softmax";
}

Tensor normalize_mask(const Tensor& raw, Normalization mode) {
  return mode == Normalization::sigmoid ? ops::sigmoid(raw) : ops::softmax_spatial(raw);
}

Tensor apply_mask(const Tensor& mask, const Tensor& x) {
  if (x.rank() != 3 || mask.rank() != 2 || mask.dim(0) != x.dim(1) || mask.dim(1) != x.dim(2)) {
    throw ShapeError("apply_mask: mask " + to_string(mask.shape()) + " does not cover " +
                     to_string(x.shape()));
  }
  return ops::mul(x, ops::reshape(mask, Shape{1, mask.dim(0), mask.dim(1)}));
}

Tensor tile_query(const Tensor& query, std::size_t rows, std::size_t cols) {
  if (query.rank() != 1) throw ShapeError("tile_query: query must be a vector");
  const std::size_t d = query.dim(0);
  return ops::broadcast_to(ops::reshape(query, Shape{d, 1, 1}), Shape{d, rows, cols});
}

void require_finite(const Tensor& x, const std::string& who) {
  for (double v : x.values()) {
    if (!std::isfinite(v)) throw ContractError(who + ": input contains NaN or infinity");
  }
}

void check_query(const std::optional<Tensor>& query, std::size_t query_dim,
                 const std::string& who) {
  if (!query) {
    if (query_dim > 0) throw ContractError(who + ": layer expects a query of length " +
                                           std::to_string(query_dim));
    return;
  }
  if (query_dim == 0) throw ContractError(who + ": query given to a layer without query input");
  if (query->rank() != 1 || query->dim(0) != query_dim) {
    throw ContractError(who + ": query shape " + to_string(query->shape()) +
                        " does not match query_dim " + std::to_string(query_dim));
  }
}

}  // namespace arnn
