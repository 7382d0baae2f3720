#include "arnn/attention_rnn.hpp"

#include <cmath>
#include <vector>

#include "arnn/ops.hpp"

namespace arnn {

namespace {

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor as_plane(const Tensor& t) {
  // 1 x m x n -> m x n
  return ops::reshape(t, Shape{t.dim(1), t.dim(2)});
}

Tensor as_map(const Tensor& t) {
  // m x n -> 1 x m x n
  return ops::reshape(t, Shape{1, t.dim(0), t.dim(1)});
}

}  // namespace

// ---------------------------------------------------------------------------

DiagonalLSTM::DiagonalLSTM(std::size_t input_channels, std::size_t hidden, Direction direction,
                           Rng& rng)
    : input_channels_(input_channels), hidden_(hidden), direction_(direction) {
  if (hidden == 0 || input_channels == 0) {
    throw ContractError("DiagonalLSTM: channel counts must be positive");
  }
  const double bound = fan_in_bound(2 * hidden + input_channels);
  state_kernel_ = make_parameter(Shape{4 * hidden, hidden, 2, 1}, rng, bound);
  input_kernel_ = make_parameter(Shape{4 * hidden, input_channels, 1, 1}, rng, bound);
  std::vector<double> b(4 * hidden, 0.0);
  // Forget gate starts open.
  for (std::size_t k = hidden; k < 2 * hidden; ++k) b[k] = 1.0;
  bias_ = Tensor(Shape{4 * hidden}, std::move(b));
  bias_.set_requires_grad(true);
}

void DiagonalLSTM::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "state_kernel", state_kernel_});
  out.push_back({prefix + "input_kernel", input_kernel_});
  out.push_back({prefix + "bias", bias_});
}

Tensor diagonal_pass(const DiagonalLSTM& lstm, const SkewedMap& context) {
  const Tensor& ctx = context.tensor;
  if (ctx.rank() != 3 || ctx.dim(0) != lstm.input_channels() ||
      ctx.dim(2) != context.width()) {
    throw ShapeError("diagonal_pass: context " + to_string(ctx.shape()) + " incompatible with " +
                     std::to_string(lstm.input_channels()) + " input channels");
  }
  const bool reverse = lstm.direction() == Direction::right_to_left;
  const SkewedMap sweep = reverse ? skew(mirror_cols(unskew(context))) : context;

  const std::size_t t = lstm.hidden();
  const std::size_t width = sweep.width();
  const Tensor pre_input =
      ops::add_channel_bias(ops::conv2d(sweep.tensor, lstm.input_kernel()), lstm.bias());

  std::vector<Tensor> columns;
  columns.reserve(width);
  Tensor h, c;
  for (std::size_t j = 0; j < width; ++j) {
    Tensor pre = ops::slice(pre_input, 2, j, 1);  // 4t x m x 1
    if (j > 0) {
      // Zero row on top so row i sees rows i-1 and i of the previous column.
      const Tensor padded = ops::pad_zeros(h, {{0, 0}, {1, 0}, {0, 0}});
      pre = ops::add(pre, ops::conv2d(padded, lstm.state_kernel()));
    }
    const Tensor gates = ops::sigmoid(ops::slice(pre, 0, 0, 3 * t));
    const Tensor o = ops::slice(gates, 0, 0, t);
    const Tensor f = ops::slice(gates, 0, t, t);
    const Tensor i = ops::slice(gates, 0, 2 * t, t);
    const Tensor g = ops::tanh(ops::slice(pre, 0, 3 * t, t));
    c = j > 0 ? ops::add(ops::mul(f, c), ops::mul(i, g)) : ops::mul(i, g);
    h = ops::mul(o, ops::tanh(c));
    columns.push_back(h);
  }
  Tensor hidden = unskew(SkewedMap{ops::concat(columns, 2), sweep.original_cols});
  if (reverse) hidden = shift_down_one_row(mirror_cols(hidden));
  return hidden;
}

// ---------------------------------------------------------------------------

GaussianHead::GaussianHead(std::size_t in_channels, bool mu_bias, Rng& rng)
    : in_channels_(in_channels) {
  weight_ = make_parameter(Shape{2, in_channels, 1, 1}, rng, fan_in_bound(in_channels));
  if (mu_bias) mu_bias_ = make_parameter(Shape{1}, 0.0);
  sigma_bias_ = make_parameter(Shape{1}, 0.0);
}

std::pair<Tensor, Tensor> GaussianHead::apply(const Tensor& features) const {
  if (features.rank() != 3 || features.dim(0) != in_channels_) {
    throw ShapeError("GaussianHead: expected " + std::to_string(in_channels_) +
                     " input channels, got " + to_string(features.shape()));
  }
  const Tensor out = ops::conv2d(features, weight_);
  Tensor mu = as_plane(ops::slice(out, 0, 0, 1));
  Tensor s = as_plane(ops::slice(out, 0, 1, 1));
  if (mu_bias_.defined()) mu = ops::add(mu, mu_bias_);
  s = ops::add(s, sigma_bias_);
  return {mu, s};
}

void GaussianHead::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight_});
  if (mu_bias_.defined()) out.push_back({prefix + "mu_bias", mu_bias_});
  out.push_back({prefix + "sigma_bias", sigma_bias_});
}

Tensor positive_sigma(const Tensor& pre_sigma) {
  return ops::add_scalar(ops::softplus(pre_sigma), kSigmaFloor);
}

GaussianField directional_params(const Tensor& hidden, const GaussianHead& head) {
  auto [mu, s] = head.apply(hidden);
  return GaussianField{mu, positive_sigma(s)};
}

GaussianField combine_independent(const GaussianField& left, const GaussianField& right) {
  if (left.mu.shape() != right.mu.shape() || left.sigma.shape() != right.sigma.shape()) {
    throw ShapeError("combine_independent: field shapes differ");
  }
  const Tensor prec_l = ops::div(Tensor::scalar(1.0), ops::square(left.sigma));
  const Tensor prec_r = ops::div(Tensor::scalar(1.0), ops::square(right.sigma));
  const Tensor var = ops::div(Tensor::scalar(1.0), ops::add(prec_l, prec_r));
  const Tensor mu = ops::mul(var, ops::add(ops::mul(left.mu, prec_l), ops::mul(right.mu, prec_r)));
  return GaussianField{mu, ops::sqrt(var)};
}

GaussianField combine_learned(const GaussianField& left, const GaussianField& right,
                              const GaussianHead& comb) {
  if (comb.in_channels() != 4) throw ShapeError("combine_learned: combiner must take 4 inputs");
  const Tensor stacked =
      ops::concat({as_map(left.mu), as_map(left.sigma), as_map(right.mu), as_map(right.sigma)}, 0);
  auto [mu, s] = comb.apply(stacked);
  return GaussianField{mu, positive_sigma(s)};
}

Tensor decode(const GaussianField& field, DecodeMode mode, double sigma_scale, Rng* rng) {
  if (mode == DecodeMode::expectation) return field.mu;
  if (sigma_scale < 0.0) throw ContractError("decode: sigma_scale must be non-negative");
  if (sigma_scale == 0.0) return field.mu;
  if (rng == nullptr) throw ContractError("decode: sampling requires a generator");
  Tensor noise(field.mu.shape());
  for (auto& v : noise.mutable_values()) v = sigma_scale * rng->normal();
  return ops::add(field.mu, ops::mul(field.sigma, noise));
}

// ---------------------------------------------------------------------------

namespace {

AttentionRNNConfig validated(const AttentionRNNConfig& c) {
  if (c.delta % 2 == 0) throw ContractError("AttentionRNNLayer: delta must be odd");
  if (c.in_channels == 0 || c.hidden == 0 || c.context_channels == 0) {
    throw ContractError("AttentionRNNLayer: channel counts must be positive");
  }
  return c;
}

}  // namespace

AttentionRNNLayer::AttentionRNNLayer(const AttentionRNNConfig& config, Rng& rng)
    : config_(validated(config)),
      left_(config.context_channels + config.query_dim, config.hidden, Direction::left_to_right,
            rng),
      right_(config.context_channels + config.query_dim, config.hidden,
             Direction::right_to_left, rng),
      // Under softmax a uniform shift of mu is invisible, so mu biases that
      // only produce such a shift are left out.
      left_head_(config.hidden,
                 !(config.normalization == Normalization::softmax &&
                   config.combiner == Combiner::learned),
                 rng),
      right_head_(config.hidden,
                  !(config.normalization == Normalization::softmax &&
                    config.combiner == Combiner::learned),
                  rng),
      comb_(4, config.normalization != Normalization::softmax, rng) {
  context_kernel_ =
      make_parameter(Shape{config.context_channels, config.in_channels, config.delta, config.delta},
                     rng, fan_in_bound(config.in_channels * config.delta * config.delta));
  context_bias_ = make_parameter(Shape{config.context_channels}, 0.0);
}

SkewedMap AttentionRNNLayer::local_context(const Tensor& x,
                                           const std::optional<Tensor>& query) const {
  check_query(query, config_.query_dim, "AttentionRNNLayer");
  if (x.rank() != 3 || x.dim(0) != config_.in_channels) {
    throw ShapeError("AttentionRNNLayer: expected " + std::to_string(config_.in_channels) +
                     " input channels, got " + to_string(x.shape()));
  }
  Tensor ctx = ops::add_channel_bias(ops::conv2d(x, context_kernel_, 1, (config_.delta - 1) / 2),
                                     context_bias_);
  if (query) ctx = ops::concat({ctx, tile_query(*query, x.dim(1), x.dim(2))}, 0);
  return skew(ctx);
}

AttentionRNNLayer::Trace AttentionRNNLayer::trace(const Tensor& x,
                                                  const std::optional<Tensor>& query,
                                                  Rng* rng) const {
  require_finite(x, "AttentionRNNLayer");
  Trace tr;
  tr.context = local_context(x, query);
  tr.hidden_left = diagonal_pass(left_, tr.context);
  tr.hidden_right = diagonal_pass(right_, tr.context);
  tr.left = directional_params(tr.hidden_left, left_head_);
  tr.right = directional_params(tr.hidden_right, right_head_);
  tr.combined = config_.combiner == Combiner::learned
                    ? combine_learned(tr.left, tr.right, comb_)
                    : combine_independent(tr.left, tr.right);
  const DecodeMode mode = rng != nullptr ? config_.decode : DecodeMode::expectation;
  tr.raw = decode(tr.combined, mode, config_.sigma_scale, rng);
  return tr;
}

AttentionResult AttentionRNNLayer::attend(const Tensor& x, const std::optional<Tensor>& query,
                                          Rng* rng) const {
  const Tensor mask = normalize_mask(raw_mask(x, query, rng), config_.normalization);
  return AttentionResult{mask, apply_mask(mask, x)};
}

std::string AttentionRNNLayer::kind() const {
  std::string k = "arnn";
  if (config_.combiner == Combiner::independent) k += "-ind";
  if (config_.decode == DecodeMode::sample) k += "-sample";
  return k;
}

void AttentionRNNLayer::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "context_kernel", context_kernel_});
  out.push_back({prefix + "context_bias", context_bias_});
  left_.collect_parameters(out, prefix + "left.");
  right_.collect_parameters(out, prefix + "right.");
  left_head_.collect_parameters(out, prefix + "left_head.");
  right_head_.collect_parameters(out, prefix + "right_head.");
  if (config_.combiner == Combiner::learned) comb_.collect_parameters(out, prefix + "comb.");
}

}  // namespace arnn
