#include "arnn/model.hpp"

#include <algorithm>
#include <cmath>

#include "arnn/baselines.hpp"
#include "arnn/block_attention.hpp"
#include "arnn/ops.hpp"

namespace arnn {

std::string AttentionSpec::name() const {
  switch (family) {
    case AttentionFamily::none: return "none";
    case AttentionFamily::ctx: return "ctx";
    case AttentionFamily::noctx: return "noctx";
    case AttentionFamily::san: return "san";
    case AttentionFamily::brnn: return "brnn:" + std::to_string(gamma);
    case AttentionFamily::arnn: {
      std::string s = "arnn";
      if (combiner == Combiner::independent) s += "-ind";
      if (decode == DecodeMode::sample) s += "-sample";
      return s;
    }
  }
  return "?";
}

AttentionSpec parse_attention(const std::string& name) {
  AttentionSpec s;
  if (name == "none") return s;
  if (name == "ctx") {
    s.family = AttentionFamily::ctx;
  } else if (name == "noctx") {
    s.family = AttentionFamily::noctx;
  } else if (name == "san") {
    s.family = AttentionFamily::san;
  } else if (name.rfind("brnn:", 0) == 0) {
    s.family = AttentionFamily::brnn;
    const std::string g = name.substr(5);
    if (g.empty() || g.find_first_not_of("0123456789") != std::string::npos || std::stoul(g) < 1) {
      throw ContractError("attention '" + name + "': block size must be a positive integer");
    }
    s.gamma = std::stoul(g);
  } else if (name == "arnn" || name == "arnn-sample" || name == "arnn-ind" ||
             name == "arnn-ind-sample") {
    s.family = AttentionFamily::arnn;
    if (name.find("-ind") != std::string::npos) s.combiner = Combiner::independent;
    if (name.find("-sample") != std::string::npos) s.decode = DecodeMode::sample;
  } else {
    throw ContractError("unknown attention '" + name +
                        "' (arnn, arnn-sample, arnn-ind, arnn-ind-sample, brnn:<g>, ctx, noctx, "
                        "san, none)");
  }
  return s;
}

std::size_t ModelConfig::slot_extent(std::size_t slot) const {
  std::size_t s = image_size;
  for (std::size_t k = 0; k <= slot; ++k) s /= 2;
  return s;
}

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"image_size", c.image_size},
                        {"in_channels", c.in_channels},
                        {"stacks", c.stacks},
                        {"channels", c.channels},
                        {"query_dim", c.query_dim},
                        {"num_classes", c.num_classes},
                        {"attention", c.attention.name()},
                        {"hidden", c.hidden},
                        {"context_channels", c.context_channels},
                        {"delta", c.delta},
                        {"sigma_scale", c.sigma_scale},
                        {"local_hidden", c.local_hidden},
                        {"san_embed", c.san_embed},
                        {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.stacks = j.at("stacks").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.query_dim = j.at("query_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.attention = parse_attention(j.at("attention").get<std::string>());
  c.hidden = j.at("hidden").get<std::size_t>();
  c.context_channels = j.at("context_channels").get<std::size_t>();
  c.delta = j.at("delta").get<std::size_t>();
  c.sigma_scale = j.at("sigma_scale").get<double>();
  c.local_hidden = j.at("local_hidden").get<std::size_t>();
  c.san_embed = j.at("san_embed").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::unique_ptr<SpatialAttention> make_attention(const AttentionSpec& spec,
                                                 const ModelConfig& model,
                                                 std::size_t in_channels, std::size_t rows,
                                                 std::size_t cols, Normalization normalization,
                                                 Rng& rng) {
  AttentionRNNConfig rnn;
  rnn.in_channels = in_channels;
  rnn.hidden = model.hidden;
  rnn.context_channels = model.context_channels;
  rnn.delta = model.delta;
  rnn.query_dim = model.query_dim;
  rnn.combiner = spec.combiner;
  rnn.decode = spec.decode;
  rnn.sigma_scale = model.sigma_scale;
  rnn.normalization = normalization;

  switch (spec.family) {
    case AttentionFamily::none: return nullptr;
    case AttentionFamily::arnn: return std::make_unique<AttentionRNNLayer>(rnn, rng);
    case AttentionFamily::brnn: {
      BlockAttentionConfig b;
      b.gamma = spec.gamma;
      b.inner = rnn;
      b.normalization = normalization;
      return std::make_unique<BlockAttentionLayer>(b, rng);
    }
    case AttentionFamily::ctx:
    case AttentionFamily::noctx: {
      LocalConvAttentionConfig l;
      l.in_channels = in_channels;
      l.query_dim = model.query_dim;
      l.delta = spec.family == AttentionFamily::ctx ? 3 : 1;
      l.hidden = model.local_hidden;
      l.normalization = normalization;
      return std::make_unique<LocalConvAttention>(l, rng);
    }
    case AttentionFamily::san: {
      if (normalization != Normalization::softmax) {
        throw ContractError("san attention is always softmax-normalized");
      }
      GlobalSoftAttentionConfig g;
      g.in_channels = in_channels;
      g.query_dim = model.query_dim;
      g.embed = model.san_embed;
      g.rows = rows;
      g.cols = cols;
      return std::make_unique<GlobalSoftAttention>(g, rng);
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

AttributeNet::AttributeNet(const ModelConfig& config) : config_(config) {
  if (config.stacks == 0) throw ContractError("AttributeNet: need at least one stack");
  if (config.slot_extent(config.stacks - 1) == 0) {
    throw ContractError("AttributeNet: " + std::to_string(config.image_size) +
                        " pixels is too small for " + std::to_string(config.stacks) + " stacks");
  }
  Rng rng(config.seed);
  for (std::size_t i = 0; i < config.stacks; ++i) {
    const std::size_t in = i == 0 ? config.in_channels : config.channels;
    conv_weight_.push_back(make_parameter(Shape{config.channels, in, 3, 3}, rng,
                                          std::sqrt(6.0 / double(in * 9))));
    conv_bias_.push_back(make_parameter(Shape{config.channels}, 0.0));
    const bool last = i + 1 == config.stacks;
    const bool filled = config.attention.family != AttentionFamily::none &&
                        (config.attention.family != AttentionFamily::san || last);
    const std::size_t extent = config.slot_extent(i);
    attention_.push_back(filled ? make_attention(config.attention, config, config.channels,
                                                 extent, extent,
                                                 last ? Normalization::softmax
                                                      : Normalization::sigmoid,
                                                 rng)
                                : nullptr);
  }
  // A softmax mask makes the pooled vector a weighted mean; without one it is
  // a sum over every cell, so shrink the head to start from similar logits.
  const std::size_t last = config.slot_extent(config.stacks - 1);
  const double mass = attention_.back() ? 1.0 : double(last * last);
  classifier_weight_ = make_parameter(Shape{config.num_classes, config.channels}, rng,
                                      1.0 / (mass * std::sqrt(double(config.channels))));
  classifier_bias_ = make_parameter(Shape{config.num_classes}, 0.0);
}

namespace {

double l2(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

ForwardResult AttributeNet::forward(const Tensor& image, const Tensor& query, Rng* rng) const {
  const auto& c = config_;
  if (image.shape() != Shape{c.in_channels, c.image_size, c.image_size}) {
    throw ShapeError("AttributeNet: expected image " +
                     to_string(Shape{c.in_channels, c.image_size, c.image_size}) + ", got " +
                     to_string(image.shape()));
  }
  std::optional<Tensor> q;
  if (c.query_dim > 0) q = query;
  check_query(q, c.query_dim, "AttributeNet");

  ForwardResult out;
  Tensor x = image;
  for (std::size_t i = 0; i < c.stacks; ++i) {
    const Tensor pre = ops::add_channel_bias(ops::conv2d(x, conv_weight_[i], 1, 1), conv_bias_[i]);
    out.preactivations.push_back(pre);
    x = ops::max_pool2d(ops::relu(pre), 2);
    out.activation_norms.emplace_back("stack" + std::to_string(i), l2(x));
    if (attention_[i]) {
      AttentionResult r = attention_[i]->attend(x, q, rng);
      out.masks.push_back(r.mask);
      x = r.attended;
      out.activation_norms.emplace_back("mask" + std::to_string(i), l2(r.mask));
    } else {
      out.masks.push_back(Tensor::ones(Shape{x.dim(1), x.dim(2)}));
    }
    out.attended.push_back(x);
  }
  const Tensor pooled = ops::reshape(ops::sum(x, {1, 2}), Shape{c.channels, 1});
  out.logits = ops::add(ops::reshape(ops::matmul(classifier_weight_, pooled), Shape{c.num_classes}),
                        classifier_bias_);
  out.activation_norms.emplace_back("logits", l2(out.logits));
  return out;
}

void AttributeNet::collect_parameters(ParameterList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < config_.stacks; ++i) {
    const std::string s = std::to_string(i);
    out.push_back({prefix + "conv" + s + ".weight", conv_weight_[i]});
    out.push_back({prefix + "conv" + s + ".bias", conv_bias_[i]});
    if (attention_[i]) attention_[i]->collect_parameters(out, prefix + "attn" + s + ".");
  }
  out.push_back({prefix + "classifier.weight", classifier_weight_});
  out.push_back({prefix + "classifier.bias", classifier_bias_});
}

std::vector<std::uint32_t> branch_pattern(const ForwardResult& r) {
  std::vector<std::uint32_t> pattern;
  for (const Tensor& pre : r.preactivations) {
    const auto v = pre.values();
    for (double x : v) pattern.push_back(x > 0.0);
    // Same scan order and tie rule as max_pool2d, on the rectified values.
    const std::size_t c = pre.dim(0), h = pre.dim(1), w = pre.dim(2);
    const auto rect = [&](std::size_t k) { return std::max(v[k], 0.0); };
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < h / 2; ++oy)
        for (std::size_t ox = 0; ox < w / 2; ++ox) {
          std::uint32_t best = 0;
          std::size_t best_at = (ch * h + 2 * oy) * w + 2 * ox;
          for (std::uint32_t d = 1; d < 4; ++d) {
            const std::size_t k = (ch * h + 2 * oy + d / 2) * w + 2 * ox + d % 2;
            if (rect(k) > rect(best_at)) {
              best = d;
              best_at = k;
            }
          }
          pattern.push_back(best);
        }
  }
  return pattern;
}

// ---------------------------------------------------------------------------

Tensor upsample_nearest(const Tensor& mask, std::size_t rows, std::size_t cols) {
  if (mask.rank() != 2) throw ShapeError("upsample_nearest: expected m x n");
  const std::size_t m = mask.dim(0), n = mask.dim(1);
  const auto v = mask.values();
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = v[(i * m / rows) * n + j * n / cols];
  return Tensor(Shape{rows, cols}, std::move(out));
}

double mask_correctness(const std::vector<Tensor>& masks, const std::vector<std::uint8_t>& roi,
                        std::size_t image_size) {
  const std::size_t px = image_size * image_size;
  if (roi.size() != px) throw ShapeError("mask_correctness: roi size does not match the image");
  std::vector<double> combined(px, 1.0);
  for (const Tensor& m : masks) {
    for (double v : m.values()) {
      if (v < 0.0) throw ContractError("mask_correctness: masks must be nonnegative");
    }
    const Tensor up = upsample_nearest(m, image_size, image_size);
    const auto u = up.values();
    for (std::size_t p = 0; p < px; ++p) combined[p] *= u[p];
  }
  double total = 0.0, inside = 0.0;
  for (std::size_t p = 0; p < px; ++p) {
    total += combined[p];
    if (roi[p]) inside += combined[p];
  }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace arnn
