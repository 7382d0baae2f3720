#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "arnn/attention.hpp"
#include "arnn/parameter.hpp"
#include "arnn/random.hpp"
#include "arnn/skew.hpp"
#include "arnn/tensor.hpp"

namespace arnn {

enum class Direction { left_to_right, right_to_left };
enum class Combiner { learned, independent };
enum class DecodeMode { expectation, sample };

// Per-location Gaussian attention parameters over an m x n grid.
struct GaussianField {
  Tensor mu;
  Tensor sigma;  // > 0 everywhere
};

inline constexpr double kSigmaFloor = 1e-6;

/// LSTM that sweeps the columns of a skewed map. Gate pre-activations for
/// a column are state_kernel * (previous hidden column) + input_kernel *
/// (current input column) + bias; the state kernel is 2x1 over rows i-1 and
/// i, the input kernel 1x1. Gate order along the channel axis is [o, f, i, g].
class DiagonalLSTM : public Module {
 public:
  DiagonalLSTM(std::size_t input_channels, std::size_t hidden, Direction direction, Rng& rng);

  std::size_t input_channels() const { return input_channels_; }
  std::size_t hidden() const { return hidden_; }
  Direction direction() const { return direction_; }

  const Tensor& state_kernel() const { return state_kernel_; }  // 4t x t x 2 x 1
  const Tensor& input_kernel() const { return input_kernel_; }  // 4t x c x 1 x 1
  const Tensor& bias() const { return bias_; }                  // 4t

  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  std::size_t input_channels_;
  std::size_t hidden_;
  Direction direction_;
  Tensor state_kernel_;
  Tensor input_kernel_;
  Tensor bias_;
};

/// Runs the LSTM over the skewed context and returns unskewed hidden states
/// t x m x n. The right-to-left direction mirrors the context, runs the same
/// sweep, mirrors the result back and shifts it down one row.
Tensor diagonal_pass(const DiagonalLSTM& lstm, const SkewedMap& context);

/// Shared per-location affine map from feature channels to (mu, pre-sigma).
/// The mu bias can be omitted for layers whose mask is softmax-normalized,
/// where a constant shift of mu has no effect.
class GaussianHead : public Module {
 public:
  GaussianHead(std::size_t in_channels, bool mu_bias, Rng& rng);

  std::size_t in_channels() const { return in_channels_; }
  bool has_mu_bias() const { return mu_bias_.defined(); }

  // in_channels x m x n -> (mu, s), each m x n.
  std::pair<Tensor, Tensor> apply(const Tensor& features) const;

  // Mutable handles, for tests and hand-built configurations.
  Tensor& weight() { return weight_; }  // 2 x in x 1 x 1
  Tensor& mu_bias() { return mu_bias_; }
  Tensor& sigma_bias() { return sigma_bias_; }

  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  std::size_t in_channels_;
  Tensor weight_;
  Tensor mu_bias_;
  Tensor sigma_bias_;
};

// sigma = softplus(s) + 1e-6
Tensor positive_sigma(const Tensor& pre_sigma);

GaussianField directional_params(const Tensor& hidden, const GaussianHead& head);
// Precision-weighted product of two Gaussians at every location.
GaussianField combine_independent(const GaussianField& left, const GaussianField& right);
// Learned combination: (mu, s) = comb(mu_l, sigma_l, mu_r, sigma_r).
GaussianField combine_learned(const GaussianField& left, const GaussianField& right,
                              const GaussianHead& comb);
// Expectation returns mu; sampling returns mu + sigma_scale * sigma * eps.
Tensor decode(const GaussianField& field, DecodeMode mode, double sigma_scale, Rng* rng);

struct AttentionRNNConfig {
  std::size_t in_channels = 1;
  std::size_t hidden = 16;            // recurrent units per direction
  std::size_t context_channels = 16;  // local-context conv outputs
  std::size_t delta = 3;              // odd context size
  std::size_t query_dim = 0;
  Combiner combiner = Combiner::learned;
  DecodeMode decode = DecodeMode::expectation;
  double sigma_scale = 1.0;
  Normalization normalization = Normalization::sigmoid;
};

class AttentionRNNLayer : public SpatialAttention {
 public:
  // Intermediate quantities of one forward pass.
  struct Trace {
    SkewedMap context;
    Tensor hidden_left;   // t x m x n
    Tensor hidden_right;  // t x m x n, already shifted down
    GaussianField left;
    GaussianField right;
    GaussianField combined;
    Tensor raw;  // decoded, pre-normalization m x n
  };

  AttentionRNNLayer(const AttentionRNNConfig& config, Rng& rng);

  const AttentionRNNConfig& config() const { return config_; }

  SkewedMap local_context(const Tensor& x, const std::optional<Tensor>& query) const;
  Trace trace(const Tensor& x, const std::optional<Tensor>& query, Rng* rng) const;
  Tensor raw_mask(const Tensor& x, const std::optional<Tensor>& query, Rng* rng) const {
    return trace(x, query, rng).raw;
  }
  AttentionResult attend(const Tensor& x, const std::optional<Tensor>& query,
                         Rng* rng) const override;
  std::string kind() const override;

  Tensor& context_kernel() { return context_kernel_; }  // cc x in x delta x delta
  Tensor& context_bias() { return context_bias_; }
  const DiagonalLSTM& left() const { return left_; }
  const DiagonalLSTM& right() const { return right_; }
  GaussianHead& left_head() { return left_head_; }
  GaussianHead& right_head() { return right_head_; }
  GaussianHead& combiner() { return comb_; }

  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  AttentionRNNConfig config_;
  Tensor context_kernel_;
  Tensor context_bias_;
  DiagonalLSTM left_;
  DiagonalLSTM right_;
  GaussianHead left_head_;
  GaussianHead right_head_;
  GaussianHead comb_;
};

}  // namespace arnn
