#include <gtest/gtest.h>

#include "arnn/block_attention.hpp"
#include "arnn/gradcheck.hpp"
#include "arnn/ops.hpp"

namespace arnn {
namespace {

Tensor random_map(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void fill(Tensor t, double value) {
  for (auto& v : t.mutable_values()) v = value;
}

BlockAttentionConfig block_config(std::size_t gamma, std::size_t channels) {
  BlockAttentionConfig c;
  c.gamma = gamma;
  c.inner.in_channels = channels;
  c.inner.hidden = 4;
  c.inner.context_channels = 3;
  return c;
}

TEST(DownsampleTest, HalvesEachAxis) {
  Rng rng(1);
  BlockAttentionLayer layer(block_config(2, 1), rng);
  EXPECT_EQ(layer.downsample(random_map({1, 4, 4}, rng)).shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(layer.downsample(random_map({1, 5, 3}, rng)).shape(), (Shape{1, 3, 2}));
}

TEST(DownsampleTest, AveragingKernelGivesBlockMeans) {
  Rng rng(2);
  BlockAttentionLayer layer(block_config(2, 1), rng);
  fill(layer.downsample_kernel(), 0.25);
  fill(layer.downsample_bias(), 0.0);
  const Tensor x(Shape{1, 4, 4},
                 std::vector<double>{1, 1, 3, 3, 1, 1, 3, 3, 5, 5, 7, 7, 5, 5, 7, 7});
  const Tensor y = layer.downsample(x);
  const std::vector<double> want{1, 3, 5, 7};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(y.values()[k], want[k]);
}

TEST(DownsampleTest, PadsWithZeros) {
  Rng rng(3);
  BlockAttentionLayer layer(block_config(2, 1), rng);
  fill(layer.downsample_kernel(), 1.0);
  fill(layer.downsample_bias(), 0.0);
  const Tensor y = layer.downsample(Tensor(Shape{1, 3, 3}, 1.0));
  const std::vector<double> want{4, 2, 2, 1};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(y.values()[k], want[k]);
}

TEST(DownsampleTest, UnitBlockIdentityKernel) {
  Rng rng(4);
  BlockAttentionLayer layer(block_config(1, 2), rng);
  auto k = layer.downsample_kernel().mutable_values();
  std::fill(k.begin(), k.end(), 0.0);
  k[0] = 1.0;
  k[3] = 1.0;
  fill(layer.downsample_bias(), 0.0);
  const Tensor x = random_map({2, 3, 5}, rng);
  const Tensor y = layer.downsample(x);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(BlockAttendTest, OnesKernelReplicatesCoarseMask) {
  Rng rng(5);
  BlockAttentionLayer layer(block_config(2, 2), rng);
  fill(layer.upsample_kernel(), 1.0);
  for (auto [m, n] : {std::pair<std::size_t, std::size_t>{4, 6}, {5, 5}}) {
    const Tensor x = random_map({2, m, n}, rng);
    const Tensor coarse = layer.inner().raw_mask(layer.downsample(x), std::nullopt, nullptr);
    const Tensor fine = layer.raw_mask(x, std::nullopt, nullptr);
    ASSERT_EQ(fine.shape(), (Shape{m, n}));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(fine.at({i, j}), coarse.at({i / 2, j / 2}));
  }
}

TEST(BlockAttendTest, MaskMatchesInputExtents) {
  Rng rng(6);
  for (std::size_t gamma : {1u, 2u, 3u}) {
    BlockAttentionLayer layer(block_config(gamma, 1), rng);
    for (std::size_t m : {1u, 4u, 7u}) {
      for (std::size_t n : {2u, 6u}) {
        const auto out = layer.attend(random_map({1, m, n}, rng), std::nullopt, nullptr);
        EXPECT_EQ(out.mask.shape(), (Shape{m, n}));
        EXPECT_EQ(out.attended.shape(), (Shape{1, m, n}));
      }
    }
  }
}

TEST(BlockAttendTest, UnitBlockMatchesPlainLayerShape) {
  Rng rng(7);
  BlockAttentionLayer block(block_config(1, 1), rng);
  AttentionRNNLayer plain(block_config(1, 1).inner, rng);
  const Tensor x = random_map({1, 5, 4}, rng);
  EXPECT_EQ(block.attend(x, std::nullopt, nullptr).mask.shape(),
            plain.attend(x, std::nullopt, nullptr).mask.shape());
}

TEST(BlockAttendTest, CoarseTraversalIsShorter) {
  Rng rng(8);
  BlockAttentionLayer layer(block_config(2, 1), rng);
  const Tensor x(Shape{1, 112, 112}, 0.1);
  const SkewedMap coarse = layer.inner().local_context(layer.downsample(x), std::nullopt);
  EXPECT_EQ(coarse.width(), 111u);
  EXPECT_EQ(skew(x).width(), 223u);
}

TEST(BlockAttendTest, SoftmaxMaskSumsToOne) {
  Rng rng(9);
  auto cfg = block_config(2, 1);
  cfg.normalization = Normalization::softmax;
  BlockAttentionLayer layer(cfg, rng);
  const auto out = layer.attend(random_map({1, 5, 7}, rng), std::nullopt, nullptr);
  double total = 0.0;
  for (double v : out.mask.values()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-10);
  EXPECT_EQ(layer.kind(), "brnn:2");
}

TEST(BlockAttendTest, QueryContract) {
  Rng rng(10);
  auto cfg = block_config(2, 1);
  cfg.inner.query_dim = 3;
  BlockAttentionLayer layer(cfg, rng);
  const Tensor x = random_map({1, 4, 4}, rng);
  EXPECT_NO_THROW(layer.attend(x, Tensor(Shape{3}, 1.0), nullptr));
  EXPECT_THROW(layer.attend(x, std::nullopt, nullptr), ContractError);
  EXPECT_THROW(layer.attend(x, Tensor(Shape{2}), nullptr), ContractError);
}

// Same step as the other layer-level checks; see the attention tests.
constexpr double kLayerStep = 1e-3;

TEST(BlockGradientTest, EndToEndOnSixBySix) {
  Rng rng(11);
  for (auto norm : {Normalization::sigmoid, Normalization::softmax}) {
    auto cfg = block_config(2, 1);
    cfg.normalization = norm;
    BlockAttentionLayer layer(cfg, rng);
    const Tensor x = random_map({1, 6, 6}, rng);
    const Tensor head = random_map({1, 6, 6}, rng);
    const auto f = [&] {
      return ops::sum(ops::mul(layer.attend(x, std::nullopt, nullptr).attended, head));
    };
    EXPECT_LT(finite_diff_check(f, layer.parameter_tensors(), kLayerStep), 1e-4);
  }
}

TEST(BlockGradientTest, OddExtentsWithCrop) {
  Rng rng(12);
  BlockAttentionLayer layer(block_config(2, 2), rng);
  const Tensor x = random_map({2, 5, 3}, rng);
  const Tensor head = random_map({2, 5, 3}, rng);
  const auto f = [&] {
    return ops::sum(ops::mul(layer.attend(x, std::nullopt, nullptr).attended, head));
  };
  EXPECT_LT(finite_diff_check(f, layer.parameter_tensors(), kLayerStep), 1e-4);
}

}  // namespace
}  // namespace arnn
