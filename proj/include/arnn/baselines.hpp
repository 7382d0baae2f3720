#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "arnn/attention.hpp"

namespace arnn {

struct LocalConvAttentionConfig {
  std::size_t in_channels = 1;
  std::size_t query_dim = 0;
  std::size_t delta = 3;  // 1 for the context-free variant
  std::size_t hidden = 16;
  Normalization normalization = Normalization::sigmoid;
};

/// Local attention: each score sees only the delta x delta neighbourhood of
/// its location plus the tiled query. Two-layer head: delta x delta conv,
/// tanh, 1x1 conv to a scalar.
class LocalConvAttention : public SpatialAttention {
 public:
  LocalConvAttention(const LocalConvAttentionConfig& config, Rng& rng);

  const LocalConvAttentionConfig& config() const { return config_; }

  Tensor score(const Tensor& x, const std::optional<Tensor>& query) const;  // m x n
  AttentionResult attend(const Tensor& x, const std::optional<Tensor>& query,
                         Rng* rng) const override;
  std::string kind() const override { return config_.delta == 1 ? "noctx" : "ctx"; }

  Tensor& context_kernel() { return kernel_; }
  Tensor& score_kernel() { return score_kernel_; }

  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  LocalConvAttentionConfig config_;
  Tensor kernel_;
  Tensor bias_;
  Tensor score_kernel_;
  Tensor score_bias_;  // undefined under softmax normalization
};

struct GlobalSoftAttentionConfig {
  std::size_t in_channels = 1;
  std::size_t query_dim = 0;
  std::size_t embed = 64;
  std::size_t rows = 1;
  std::size_t cols = 1;
};

/// Soft attention over every position of the final feature map:
/// score = w . tanh(W_x x_ij + W_q q + b), softmax over all positions.
class GlobalSoftAttention : public SpatialAttention {
 public:
  struct Output {
    Tensor mask;      // m x n, sums to one
    Tensor attended;  // c x m x n
    Tensor pooled;    // c, attention-weighted sum of feature vectors
  };

  GlobalSoftAttention(const GlobalSoftAttentionConfig& config, Rng& rng);

  const GlobalSoftAttentionConfig& config() const { return config_; }

  Tensor score(const Tensor& x, const std::optional<Tensor>& query) const;
  Output global_attend(const Tensor& x, const std::optional<Tensor>& query) const;
  AttentionResult attend(const Tensor& x, const std::optional<Tensor>& query,
                         Rng* rng) const override;
  std::string kind() const override { return "san"; }

  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  GlobalSoftAttentionConfig config_;
  Tensor feature_proj_;
  Tensor query_proj_;  // undefined without a query
  Tensor bias_;
  Tensor score_weight_;
};

}  // namespace arnn
