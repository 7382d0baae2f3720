#include "arnn/block_attention.hpp"

#include <cmath>

#include "arnn/ops.hpp"

namespace arnn {

namespace {

BlockAttentionConfig validated(BlockAttentionConfig c) {
  if (c.gamma < 1) throw ContractError("BlockAttentionLayer: gamma must be >= 1");
  c.inner.normalization = Normalization::sigmoid;
  return c;
}

std::size_t round_up(std::size_t v, std::size_t step) { return (v + step - 1) / step * step; }

}  // namespace

BlockAttentionLayer::BlockAttentionLayer(const BlockAttentionConfig& config, Rng& rng)
    : config_(validated(config)), inner_(config_.inner, rng) {
  const std::size_t c = config_.inner.in_channels;
  const std::size_t g = config_.gamma;
  down_kernel_ = make_parameter(Shape{c, c, g, g}, rng, 1.0 / std::sqrt(double(c * g * g)));
  down_bias_ = make_parameter(Shape{c}, 0.0);
  up_kernel_ = make_parameter(Shape{1, 1, g, g}, rng, 0.5);
  for (auto& v : up_kernel_.mutable_values()) v += 1.0;
}

Tensor BlockAttentionLayer::downsample(const Tensor& x) const {
  if (x.rank() != 3) throw ShapeError("downsample: expected c x m x n, got " + to_string(x.shape()));
  const std::size_t g = config_.gamma;
  const std::size_t pad_rows = round_up(x.dim(1), g) - x.dim(1);
  const std::size_t pad_cols = round_up(x.dim(2), g) - x.dim(2);
  const Tensor padded =
      (pad_rows || pad_cols) ? ops::pad_zeros(x, {{0, 0}, {0, pad_rows}, {0, pad_cols}}) : x;
  return ops::add_channel_bias(ops::conv2d(padded, down_kernel_, g, 0), down_bias_);
}

Tensor BlockAttentionLayer::raw_mask(const Tensor& x, const std::optional<Tensor>& query,
                                     Rng* rng) const {
  require_finite(x, "BlockAttentionLayer");
  const Tensor coarse = inner_.raw_mask(downsample(x), query, rng);
  const Tensor up = ops::conv_transpose2d(
      ops::reshape(coarse, Shape{1, coarse.dim(0), coarse.dim(1)}), up_kernel_, config_.gamma);
  const std::size_t m = x.dim(1), n = x.dim(2);
  const Tensor cropped = ops::slice(ops::slice(up, 1, 0, m), 2, 0, n);
  return ops::reshape(cropped, Shape{m, n});
}

AttentionResult BlockAttentionLayer::attend(const Tensor& x, const std::optional<Tensor>& query,
                                            Rng* rng) const {
  const Tensor mask = normalize_mask(raw_mask(x, query, rng), config_.normalization);
  return AttentionResult{mask, apply_mask(mask, x)};
}

std::string BlockAttentionLayer::kind() const { return "brnn:" + std::to_string(config_.gamma); }

void BlockAttentionLayer::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "down_kernel", down_kernel_});
  out.push_back({prefix + "down_bias", down_bias_});
  out.push_back({prefix + "up_kernel", up_kernel_});
  inner_.collect_parameters(out, prefix + "inner.");
}

}  // namespace arnn
