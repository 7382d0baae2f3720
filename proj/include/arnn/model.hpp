#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "arnn/attention.hpp"
#include "arnn/attention_rnn.hpp"

namespace arnn {

enum class AttentionFamily { none, arnn, brnn, ctx, noctx, san };

// One attention-slot variant: arnn, arnn-sample, arnn-ind, arnn-ind-sample,
// brnn:<gamma>, ctx, noctx, san or none.
struct AttentionSpec {
  AttentionFamily family = AttentionFamily::none;
  Combiner combiner = Combiner::learned;
  DecodeMode decode = DecodeMode::expectation;
  std::size_t gamma = 2;

  std::string name() const;
};

AttentionSpec parse_attention(const std::string& name);

struct ModelConfig {
  std::size_t image_size = 100;
  std::size_t in_channels = 3;
  std::size_t stacks = 4;
  std::size_t channels = 32;
  std::size_t query_dim = 10;
  std::size_t num_classes = 5;
  AttentionSpec attention;
  std::size_t hidden = 16;  // recurrent units per direction
  std::size_t context_channels = 16;
  std::size_t delta = 3;  // recurrent layer's local context
  double sigma_scale = 1.0;
  std::size_t local_hidden = 16;  // ctx / noctx head width
  std::size_t san_embed = 64;
  std::uint64_t seed = 0;  // initialization

  // Spatial extent after the pool of stack `slot` (0-based).
  std::size_t slot_extent(std::size_t slot) const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Builds one attention layer for a c x rows x cols feature map.
std::unique_ptr<SpatialAttention> make_attention(const AttentionSpec& spec,
                                                 const ModelConfig& model,
                                                 std::size_t in_channels, std::size_t rows,
                                                 std::size_t cols, Normalization normalization,
                                                 Rng& rng);

struct ForwardResult {
  Tensor logits;                  // num_classes
  std::vector<Tensor> masks;      // per slot, m x n; ones for an empty slot
  std::vector<Tensor> attended;   // per slot, c x m x n
  std::vector<Tensor> preactivations;  // per stack, conv output before ReLU
  std::vector<std::pair<std::string, double>> activation_norms;
};

// Stacks of 3x3 conv + ReLU + 2x2 max-pool, each followed by an attention
// slot (sigmoid masks, softmax in the last slot). The last attended map is
// summed over space and fed to an affine classifier.
class AttributeNet : public Module {
 public:
  explicit AttributeNet(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::size_t slots() const { return config_.stacks; }
  // Null for an empty slot.
  const SpatialAttention* slot(std::size_t i) const { return attention_.at(i).get(); }

  ForwardResult forward(const Tensor& image, const Tensor& query, Rng* rng) const;

  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  ModelConfig config_;
  std::vector<Tensor> conv_weight_;
  std::vector<Tensor> conv_bias_;
  std::vector<std::unique_ptr<SpatialAttention>> attention_;
  Tensor classifier_weight_;
  Tensor classifier_bias_;
};

// Which side of every ReLU and max-pool switch a forward pass took: one
// entry per ReLU input (positive or not) and per pool window (winning cell).
// Finite differences are only meaningful between passes with equal patterns.
std::vector<std::uint32_t> branch_pattern(const ForwardResult& r);

// Nearest-neighbour resize of an m x n mask.
Tensor upsample_nearest(const Tensor& mask, std::size_t rows, std::size_t cols);

// Product of the layer masks upsampled to the image, then the share of its
// mass inside the roi. Zero when the product has no mass.
double mask_correctness(const std::vector<Tensor>& masks, const std::vector<std::uint8_t>& roi,
                        std::size_t image_size);

}  // namespace arnn
