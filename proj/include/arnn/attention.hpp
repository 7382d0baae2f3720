#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "arnn/parameter.hpp"
#include "arnn/random.hpp"
#include "arnn/tensor.hpp"

namespace arnn {

enum class Normalization { sigmoid, softmax };

std::string to_string(Normalization n);

// mask is m x n; attended has the input's c x m x n shape with the mask
// multiplied into every channel.
struct AttentionResult {
  Tensor mask;
  Tensor attended;
};

// Common surface of every spatial attention mechanism that can occupy a
// backbone slot.
class SpatialAttention : public Module {
 public:
  // rng is consulted only by stochastic decoders. With a null rng they
  // decode the mean instead, which is how evaluation runs.
  virtual AttentionResult attend(const Tensor& x, const std::optional<Tensor>& query,
                                 Rng* rng) const = 0;
  virtual std::string kind() const = 0;
};

// sigmoid elementwise, or softmax across all m * n positions.
Tensor normalize_mask(const Tensor& raw, Normalization mode);
// x[c, i, j] * mask[i, j].
Tensor apply_mask(const Tensor& mask, const Tensor& x);
// query[d] repeated over an m x n grid: d x m x n.
Tensor tile_query(const Tensor& query, std::size_t rows, std::size_t cols);

// ContractError on NaN or infinity.
void require_finite(const Tensor& x, const std::string& who);
// Validates an optional query against a layer's configured length.
void check_query(const std::optional<Tensor>& query, std::size_t query_dim,
                 const std::string& who);

}  // namespace arnn
