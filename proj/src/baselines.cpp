#include "arnn/baselines.hpp"

#include <cmath>

#include "arnn/ops.hpp"

namespace arnn {

namespace {

double bound_for(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor with_query(const Tensor& x, const std::optional<Tensor>& query) {
  if (!query) return x;
  return ops::concat({x, tile_query(*query, x.dim(1), x.dim(2))}, 0);
}

Tensor plane(const Tensor& t) { return ops::reshape(t, Shape{t.dim(1), t.dim(2)}); }

}  // namespace

LocalConvAttention::LocalConvAttention(const LocalConvAttentionConfig& config, Rng& rng)
    : config_(config) {
  if (config.delta % 2 == 0) throw ContractError("LocalConvAttention: delta must be odd");
  const std::size_t in = config.in_channels + config.query_dim;
  kernel_ = make_parameter(Shape{config.hidden, in, config.delta, config.delta}, rng,
                           bound_for(in * config.delta * config.delta));
  bias_ = make_parameter(Shape{config.hidden}, 0.0);
  score_kernel_ = make_parameter(Shape{1, config.hidden, 1, 1}, rng, bound_for(config.hidden));
  if (config.normalization == Normalization::sigmoid) score_bias_ = make_parameter(Shape{1}, 0.0);
}

Tensor LocalConvAttention::score(const Tensor& x, const std::optional<Tensor>& query) const {
  check_query(query, config_.query_dim, "LocalConvAttention");
  if (x.rank() != 3 || x.dim(0) != config_.in_channels) {
    throw ShapeError("LocalConvAttention: expected " + std::to_string(config_.in_channels) +
                     " input channels, got " + to_string(x.shape()));
  }
  const Tensor hidden = ops::tanh(ops::add_channel_bias(
      ops::conv2d(with_query(x, query), kernel_, 1, (config_.delta - 1) / 2), bias_));
  Tensor s = plane(ops::conv2d(hidden, score_kernel_));
  if (score_bias_.defined()) s = ops::add(s, score_bias_);
  return s;
}

AttentionResult LocalConvAttention::attend(const Tensor& x, const std::optional<Tensor>& query,
                                           Rng*) const {
  require_finite(x, "LocalConvAttention");
  const Tensor mask = normalize_mask(score(x, query), config_.normalization);
  return AttentionResult{mask, apply_mask(mask, x)};
}

void LocalConvAttention::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "kernel", kernel_});
  out.push_back({prefix + "bias", bias_});
  out.push_back({prefix + "score_kernel", score_kernel_});
  if (score_bias_.defined()) out.push_back({prefix + "score_bias", score_bias_});
}

// ---------------------------------------------------------------------------

GlobalSoftAttention::GlobalSoftAttention(const GlobalSoftAttentionConfig& config, Rng& rng)
    : config_(config) {
  const std::size_t d = config.embed;
  feature_proj_ = make_parameter(Shape{d, config.in_channels, 1, 1}, rng,
                                 bound_for(config.in_channels + config.query_dim));
  if (config.query_dim > 0) {
    query_proj_ = make_parameter(Shape{d, config.query_dim}, rng,
                                 bound_for(config.in_channels + config.query_dim));
  }
  bias_ = make_parameter(Shape{d}, 0.0);
  score_weight_ = make_parameter(Shape{1, d, 1, 1}, rng, bound_for(d));
}

Tensor GlobalSoftAttention::score(const Tensor& x, const std::optional<Tensor>& query) const {
  check_query(query, config_.query_dim, "GlobalSoftAttention");
  if (x.rank() != 3 || x.dim(0) != config_.in_channels || x.dim(1) != config_.rows ||
      x.dim(2) != config_.cols) {
    throw ShapeError("GlobalSoftAttention: trained for " + std::to_string(config_.in_channels) +
                     "x" + std::to_string(config_.rows) + "x" + std::to_string(config_.cols) +
                     ", got " + to_string(x.shape()));
  }
  Tensor joint = ops::conv2d(x, feature_proj_);
  Tensor offset = bias_;
  if (query) {
    offset = ops::add(offset, ops::reshape(ops::matmul(query_proj_, ops::reshape(*query,
                                                                  Shape{config_.query_dim, 1})),
                                           Shape{config_.embed}));
  }
  joint = ops::tanh(ops::add_channel_bias(joint, offset));
  return plane(ops::conv2d(joint, score_weight_));
}

GlobalSoftAttention::Output GlobalSoftAttention::global_attend(
    const Tensor& x, const std::optional<Tensor>& query) const {
  require_finite(x, "GlobalSoftAttention");
  Output out;
  out.mask = ops::softmax_spatial(score(x, query));
  out.attended = apply_mask(out.mask, x);
  out.pooled = ops::sum(out.attended, {1, 2});
  return out;
}

AttentionResult GlobalSoftAttention::attend(const Tensor& x, const std::optional<Tensor>& query,
                                            Rng*) const {
  auto out = global_attend(x, query);
  return AttentionResult{out.mask, out.attended};
}

void GlobalSoftAttention::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "feature_proj", feature_proj_});
  if (query_proj_.defined()) out.push_back({prefix + "query_proj", query_proj_});
  out.push_back({prefix + "bias", bias_});
  out.push_back({prefix + "score_weight", score_weight_});
}

}  // namespace arnn
