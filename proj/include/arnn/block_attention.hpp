#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "arnn/attention_rnn.hpp"

namespace arnn {

struct BlockAttentionConfig {
  std::size_t gamma = 2;
  // inner.in_channels is the feature channel count; inner normalization is
  // ignored because the coarse mask is upsampled before normalizing.
  AttentionRNNConfig inner;
  Normalization normalization = Normalization::sigmoid;
};

// Attention computed on a gamma-times coarser grid: a stride-gamma gamma x
// gamma convolution shrinks the map, an AttentionRNN runs on it, and a
// transposed convolution scales the mask back before normalization.
class BlockAttentionLayer : public SpatialAttention {
 public:
  BlockAttentionLayer(const BlockAttentionConfig& config, Rng& rng);

  const BlockAttentionConfig& config() const { return config_; }

  // Zero-pads to multiples of gamma, then convolves with stride gamma.
  Tensor downsample(const Tensor& x) const;
  // Pre-normalization mask at the input's resolution.
  Tensor raw_mask(const Tensor& x, const std::optional<Tensor>& query, Rng* rng) const;
  AttentionResult attend(const Tensor& x, const std::optional<Tensor>& query,
                         Rng* rng) const override;
  std::string kind() const override;

  Tensor& downsample_kernel() { return down_kernel_; }  // c x c x gamma x gamma
  Tensor& downsample_bias() { return down_bias_; }
  Tensor& upsample_kernel() { return up_kernel_; }  // 1 x 1 x gamma x gamma
  const AttentionRNNLayer& inner() const { return inner_; }

  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  BlockAttentionConfig config_;
  Tensor down_kernel_;
  Tensor down_bias_;
  Tensor up_kernel_;
  AttentionRNNLayer inner_;
};

}  // namespace arnn
