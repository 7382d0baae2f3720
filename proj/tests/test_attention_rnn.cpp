#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "arnn/attention_rnn.hpp"
#include "arnn/gradcheck.hpp"
#include "arnn/ops.hpp"
#include "arnn/oracles.hpp"

namespace arnn {
namespace {

Tensor random_map(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_values()) v = rng.uniform(-scale, scale);
  return t;
}

void fill(Tensor t, double value) {
  for (auto& v : t.mutable_values()) v = value;
}

void zero_all(const Module& m) {
  for (auto& p : m.parameters()) fill(p.tensor, 0.0);
}

AttentionRNNConfig small_config(std::size_t channels = 1, std::size_t delta = 1) {
  AttentionRNNConfig c;
  c.in_channels = channels;
  c.hidden = 4;
  c.context_channels = 3;
  c.delta = delta;
  return c;
}

// Larger weights than the default initialization make the dependency
// structure visible well above round-off.
void amplify(const Module& m, Rng& rng) {
  for (auto& p : m.parameters()) {
    for (auto& v : Tensor(p.tensor).mutable_values()) v = rng.uniform(-1.5, 1.5);
  }
}

// --- local context ---------------------------------------------------------

TEST(LocalContextTest, UnitKernelReproducesSkew) {
  Rng rng(1);
  auto cfg = small_config(2, 1);
  cfg.context_channels = 2;
  AttentionRNNLayer layer(cfg, rng);
  auto k = layer.context_kernel().mutable_values();
  std::fill(k.begin(), k.end(), 0.0);
  k[0] = 1.0;  // out 0 <- in 0
  k[3] = 1.0;  // out 1 <- in 1
  const Tensor x = random_map({2, 3, 4}, rng);
  const SkewedMap got = layer.local_context(x, std::nullopt);
  const SkewedMap want = skew(x);
  ASSERT_EQ(got.tensor.shape(), want.tensor.shape());
  for (std::size_t i = 0; i < want.tensor.numel(); ++i) {
    EXPECT_EQ(got.tensor.values()[i], want.tensor.values()[i]);
  }
}

TEST(LocalContextTest, ThreeByThreeFootprint) {
  Rng rng(2);
  auto cfg = small_config(1, 3);
  cfg.context_channels = 1;
  AttentionRNNLayer layer(cfg, rng);
  fill(layer.context_kernel(), 1.0);
  Tensor x(Shape{1, 5, 5}, 0.0);
  x.mutable_values()[0 * 5 + 1] = 1.0;  // hot cell (0, 1)
  const Tensor ctx = unskew(layer.local_context(x, std::nullopt));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const bool neighbour = i <= 1 && j <= 2;
      EXPECT_EQ(ctx.at({0, i, j}), neighbour ? 1.0 : 0.0) << i << "," << j;
    }
  }
}

TEST(LocalContextTest, QueryIsConcatenated) {
  Rng rng(3);
  auto cfg = small_config(2, 3);
  cfg.context_channels = 8;
  cfg.query_dim = 4;
  AttentionRNNLayer layer(cfg, rng);
  EXPECT_EQ(layer.left().input_channels(), 12u);
  const Tensor q(Shape{4}, std::vector<double>{0, 1, 0, 0});
  const SkewedMap ctx = layer.local_context(random_map({2, 3, 3}, rng), q);
  EXPECT_EQ(ctx.tensor.dim(0), 12u);
  EXPECT_EQ(unskew(ctx).at({9, 2, 1}), 1.0);
  EXPECT_THROW(layer.local_context(random_map({2, 3, 3}, rng), Tensor(Shape{3})), ContractError);
}

TEST(LocalContextTest, QueryWithoutQueryInputIsRejected) {
  Rng rng(4);
  AttentionRNNLayer layer(small_config(), rng);
  EXPECT_THROW(layer.local_context(Tensor(Shape{1, 2, 2}), Tensor(Shape{2})), ContractError);
}

// --- diagonal pass -----------------------------------------------------------

TEST(DiagonalPassTest, ZeroParametersGiveZeroHidden) {
  Rng rng(5);
  DiagonalLSTM lstm(3, 4, Direction::left_to_right, rng);
  zero_all(lstm);
  const Tensor h = diagonal_pass(lstm, skew(random_map({3, 4, 5}, rng)));
  EXPECT_EQ(h.shape(), (Shape{4, 4, 5}));
  for (double v : h.values()) EXPECT_EQ(v, 0.0);
}

TEST(DiagonalPassTest, SingleCellIsOneLstmStep) {
  Rng rng(6);
  DiagonalLSTM lstm(2, 3, Direction::left_to_right, rng);
  const Tensor x = random_map({2, 1, 1}, rng);
  const Tensor h = diagonal_pass(lstm, skew(x));
  const auto kx = lstm.input_kernel().values();
  const auto b = lstm.bias().values();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t u = 0; u < 3; ++u) {
    double pre[4];
    for (std::size_t gate = 0; gate < 4; ++gate) {
      const std::size_t row = gate * 3 + u;
      pre[gate] = b[row] + kx[row * 2] * x.values()[0] + kx[row * 2 + 1] * x.values()[1];
    }
    const double c = sig(pre[2]) * std::tanh(pre[3]);
    EXPECT_NEAR(h.values()[u], sig(pre[0]) * std::tanh(c), 1e-15);
  }
}

TEST(DiagonalPassTest, LeftPassDependsExactlyOnUpLeftCone) {
  Rng rng(7);
  DiagonalLSTM lstm(2, 3, Direction::left_to_right, rng);
  amplify(lstm, rng);
  const Tensor x = random_map({2, 6, 6}, rng);
  const auto deps = oracles::dependency_set(
      [&](const Tensor& in) { return diagonal_pass(lstm, skew(in)); }, x);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 6; ++b)
          EXPECT_EQ(deps.depends(i, j, a, b), a <= i && b <= j)
              << "(" << i << "," << j << ") <- (" << a << "," << b << ")";
}

TEST(DiagonalPassTest, RightPassDependsOnShiftedUpRightCone) {
  Rng rng(8);
  DiagonalLSTM lstm(2, 3, Direction::right_to_left, rng);
  amplify(lstm, rng);
  const Tensor x = random_map({2, 6, 6}, rng);
  const auto deps = oracles::dependency_set(
      [&](const Tensor& in) { return diagonal_pass(lstm, skew(in)); }, x);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 6; ++b)
          EXPECT_EQ(deps.depends(i, j, a, b), a + 1 <= i && b >= j)
              << "(" << i << "," << j << ") <- (" << a << "," << b << ")";
}

// --- Gaussian heads and combination -----------------------------------------

TEST(DirectionalParamsTest, BiasOnlyHead) {
  Rng rng(9);
  GaussianHead head(4, true, rng);
  fill(head.weight(), 0.0);
  fill(head.mu_bias(), 0.3);
  fill(head.sigma_bias(), 0.0);
  const GaussianField f = directional_params(Tensor(Shape{4, 3, 2}, 0.0), head);
  for (double v : f.mu.values()) EXPECT_DOUBLE_EQ(v, 0.3);
  // softplus(0) = ln 2
  for (double v : f.sigma.values()) EXPECT_NEAR(v, 0.693148180559945, 1e-12);
}

TEST(DirectionalParamsTest, SigmaAlwaysPositive) {
  Rng rng(10);
  for (int trial = 0; trial < 10000; ++trial) {
    GaussianHead head(2, true, rng);
    for (auto& v : head.weight().mutable_values()) v = rng.uniform(-50.0, 50.0);
    fill(head.sigma_bias(), rng.uniform(-900.0, 50.0));
    const GaussianField f = directional_params(random_map({2, 1, 2}, rng, 20.0), head);
    for (double v : f.sigma.values()) ASSERT_GE(v, kSigmaFloor);
  }
}

TEST(DirectionalParamsTest, SharedAcrossPositions) {
  Rng rng(11);
  GaussianHead head(3, true, rng);
  const Tensor h = random_map({3, 1, 4}, rng);
  const Tensor flipped = mirror_cols(h);
  const GaussianField a = directional_params(h, head);
  const GaussianField b = directional_params(flipped, head);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(a.mu.values()[j], b.mu.values()[3 - j]);
    EXPECT_EQ(a.sigma.values()[j], b.sigma.values()[3 - j]);
  }
}

GaussianField constant_field(double mu, double sigma, Shape shape = {1, 1}) {
  return GaussianField{Tensor(shape, mu), Tensor(shape, sigma)};
}

TEST(CombineIndependentTest, ClosedFormCases) {
  const auto f = combine_independent(constant_field(1, 1), constant_field(3, 1));
  EXPECT_NEAR(f.mu.item(), 2.0, 1e-15);
  EXPECT_NEAR(f.sigma.item() * f.sigma.item(), 0.5, 1e-15);

  const auto same = combine_independent(constant_field(-0.7, 2.0), constant_field(-0.7, 2.0));
  EXPECT_NEAR(same.mu.item(), -0.7, 1e-15);
  EXPECT_NEAR(same.sigma.item() * same.sigma.item(), 2.0, 1e-14);

  const auto dom = combine_independent(constant_field(5.0, 1e6), constant_field(0.25, 0.8));
  EXPECT_NEAR(dom.mu.item(), 0.25, 1e-6);
  EXPECT_NEAR(dom.sigma.item(), 0.8, 1e-6);
}

TEST(CombineIndependentTest, MatchesReferenceProduct) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const double m1 = rng.uniform(-5, 5), m2 = rng.uniform(-5, 5);
    const double s1 = rng.uniform(0.01, 4), s2 = rng.uniform(0.01, 4);
    const auto f = combine_independent(constant_field(m1, s1), constant_field(m2, s2));
    const auto [mu, s] = oracles::gaussian_product_reference(m1, s1, m2, s2);
    EXPECT_NEAR(f.mu.item(), mu, 1e-9);
    EXPECT_NEAR(f.sigma.item(), s, 1e-9);
  }
}

TEST(CombineLearnedTest, ProjectionReproducesLeftField) {
  Rng rng(13);
  GaussianHead left_head(3, true, rng);
  fill(left_head.weight(), 0.0);
  // mu from hidden, sigma constant.
  auto w = left_head.weight().mutable_values();
  w[0] = 0.8;
  w[1] = -0.3;
  fill(left_head.sigma_bias(), 0.37);
  const GaussianField left = directional_params(random_map({3, 4, 5}, rng), left_head);
  const GaussianField right = directional_params(random_map({3, 4, 5}, rng),
                                                 GaussianHead(3, true, rng));
  GaussianHead comb(4, true, rng);
  auto cw = comb.weight().mutable_values();
  std::fill(cw.begin(), cw.end(), 0.0);
  cw[0] = 1.0;
  fill(comb.mu_bias(), 0.0);
  fill(comb.sigma_bias(), 0.37);
  const GaussianField out = combine_learned(left, right, comb);
  for (std::size_t k = 0; k < out.mu.numel(); ++k) {
    EXPECT_EQ(out.mu.values()[k], left.mu.values()[k]);
    EXPECT_EQ(out.sigma.values()[k], left.sigma.values()[k]);
  }
}

TEST(CombineLearnedTest, ZeroWeightsGiveSoftplusOfZero) {
  Rng rng(14);
  GaussianHead comb(4, true, rng);
  zero_all(comb);
  for (std::size_t m : {1u, 3u}) {
    for (std::size_t n : {2u, 5u}) {
      const auto f = combine_learned(constant_field(1, 2, {m, n}), constant_field(3, 4, {m, n}),
                                     comb);
      EXPECT_EQ(f.mu.shape(), (Shape{m, n}));
      for (double v : f.mu.values()) EXPECT_EQ(v, 0.0);
      for (double v : f.sigma.values()) EXPECT_NEAR(v, std::log(2.0) + 1e-6, 1e-15);
    }
  }
}

// --- decoding ----------------------------------------------------------------

TEST(DecodeTest, ExpectationAndDegenerateSample) {
  Rng rng(15);
  const GaussianField f{random_map({3, 3}, rng), ops::add_scalar(random_map({3, 3}, rng), 2.0)};
  const Tensor e = decode(f, DecodeMode::expectation, 1.0, nullptr);
  const Tensor s0 = decode(f, DecodeMode::sample, 0.0, &rng);
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(e.values()[k], f.mu.values()[k]);
    EXPECT_EQ(s0.values()[k], f.mu.values()[k]);
  }
  EXPECT_THROW(decode(f, DecodeMode::sample, 1.0, nullptr), ContractError);
}

TEST(DecodeTest, SampleStatistics) {
  const double mu = 0.4, sigma = 1.7;
  const GaussianField f = constant_field(mu, sigma);
  Rng rng(16);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double v = decode(f, DecodeMode::sample, 1.0, &rng).item();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_LT(std::abs(mean - mu), 4.0 * sigma / std::sqrt(double(n)));
  EXPECT_LT(std::abs(sd - sigma) / sigma, 0.05);
}

// --- full layer --------------------------------------------------------------

TEST(AttendTest, ZeroEverythingGivesHalfMask) {
  Rng rng(17);
  AttentionRNNLayer layer(small_config(2, 3), rng);
  zero_all(layer);
  const auto out = layer.attend(Tensor(Shape{2, 4, 5}, 0.0), std::nullopt, nullptr);
  EXPECT_EQ(out.mask.shape(), (Shape{4, 5}));
  for (double v : out.mask.values()) EXPECT_EQ(v, 0.5);
  for (double v : out.attended.values()) EXPECT_EQ(v, 0.0);
}

TEST(AttendTest, SoftmaxMaskSumsToOne) {
  Rng rng(18);
  auto cfg = small_config(2, 3);
  cfg.normalization = Normalization::softmax;
  AttentionRNNLayer layer(cfg, rng);
  const auto out = layer.attend(random_map({2, 5, 4}, rng), std::nullopt, nullptr);
  double total = 0.0;
  for (double v : out.mask.values()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-10);
  // Attended is the mask broadcast over channels.
  EXPECT_EQ(out.attended.shape(), (Shape{2, 5, 4}));
}

TEST(AttendTest, SamplingWithoutRngDecodesTheMean) {
  Rng rng(23);
  auto sampling = small_config(2, 3);
  sampling.decode = DecodeMode::sample;
  auto expecting = sampling;
  expecting.decode = DecodeMode::expectation;
  Rng init_a(5), init_b(5);
  AttentionRNNLayer a(sampling, init_a);
  AttentionRNNLayer b(expecting, init_b);
  const Tensor x = random_map({2, 4, 4}, rng);
  const Tensor mask_a = a.attend(x, std::nullopt, nullptr).mask;
  const Tensor mask_b = b.attend(x, std::nullopt, nullptr).mask;
  const auto ma = mask_a.values();
  const auto mb = mask_b.values();
  ASSERT_EQ(ma.size(), mb.size());
  for (std::size_t k = 0; k < ma.size(); ++k) EXPECT_EQ(ma[k], mb[k]);
  Rng noise(1);
  const Tensor sampled = a.attend(x, std::nullopt, &noise).mask;
  double diff = 0.0;
  for (std::size_t k = 0; k < mb.size(); ++k) diff += std::abs(sampled.values()[k] - mb[k]);
  EXPECT_GT(diff, 1e-6);
}

TEST(AttendTest, RejectsNonFiniteInput) {
  Rng rng(19);
  AttentionRNNLayer layer(small_config(), rng);
  Tensor x(Shape{1, 3, 3}, 0.0);
  x.mutable_values()[4] = std::nan("");
  EXPECT_THROW(layer.attend(x, std::nullopt, nullptr), ContractError);
  x.mutable_values()[4] = INFINITY;
  EXPECT_THROW(layer.attend(x, std::nullopt, nullptr), ContractError);
}

TEST(AttendTest, CausalityOnSixBySix) {
  Rng rng(20);
  auto cfg = small_config(2, 1);
  AttentionRNNLayer layer(cfg, rng);
  amplify(layer, rng);
  const Tensor x = random_map({2, 6, 6}, rng);
  const auto deps = oracles::dependency_set(
      [&](const Tensor& in) { return layer.attend(in, std::nullopt, nullptr).mask; }, x);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 6; ++b) {
          const bool left_cone = a <= i && b <= j;
          const bool right_cone = a + 1 <= i && b >= j;
          EXPECT_EQ(deps.depends(i, j, a, b), left_cone || right_cone)
              << "(" << i << "," << j << ") <- (" << a << "," << b << ")";
          if (a > i) {
            EXPECT_FALSE(deps.depends(i, j, a, b));
          }
        }
}

TEST(AttendTest, SigmaRespectsFloor) {
  Rng rng(21);
  for (auto comb : {Combiner::learned, Combiner::independent}) {
    auto cfg = small_config(2, 3);
    cfg.combiner = comb;
    AttentionRNNLayer layer(cfg, rng);
    amplify(layer, rng);
    const auto tr = layer.trace(random_map({2, 5, 5}, rng, 3.0), std::nullopt, nullptr);
    for (const auto* f : {&tr.left, &tr.right, &tr.combined}) {
      for (double v : f->sigma.values()) {
        EXPECT_GE(v, kSigmaFloor);
        EXPECT_TRUE(std::isfinite(v));
      }
      for (double v : f->mu.values()) EXPECT_TRUE(std::isfinite(v));
    }
  }
}

TEST(AttendTest, SampledMasksAreDeterministicPerSeed) {
  Rng init(22);
  auto cfg = small_config(2, 3);
  cfg.decode = DecodeMode::sample;
  cfg.sigma_scale = 2.0;
  AttentionRNNLayer layer(cfg, init);
  const Tensor x = random_map({2, 4, 4}, init);
  Rng a(5), b(5), c(6);
  const auto ma = layer.attend(x, std::nullopt, &a).mask;
  const auto mb = layer.attend(x, std::nullopt, &b).mask;
  const auto mc = layer.attend(x, std::nullopt, &c).mask;
  bool differs = false;
  for (std::size_t k = 0; k < ma.numel(); ++k) {
    EXPECT_EQ(ma.values()[k], mb.values()[k]);
    differs = differs || ma.values()[k] != mc.values()[k];
  }
  EXPECT_TRUE(differs);
}

struct VariantCase {
  const char* name;
  Combiner combiner;
  DecodeMode decode;
  Normalization norm;
  std::size_t query_dim;
};

// Layer-level gradients include coordinates near 1e-8, where round-off in
// the forward pass swamps a 1e-5 central difference.
constexpr double kLayerStep = 1e-3;

class LayerGradientTest : public ::testing::TestWithParam<VariantCase> {};

TEST_P(LayerGradientTest, AllParametersMatchFiniteDifferences) {
  const auto& v = GetParam();
  Rng rng(23);
  AttentionRNNConfig cfg = small_config(1, 3);
  cfg.combiner = v.combiner;
  cfg.decode = v.decode;
  cfg.normalization = v.norm;
  cfg.query_dim = v.query_dim;
  AttentionRNNLayer layer(cfg, rng);
  const Tensor x = random_map({1, 4, 4}, rng);
  const Tensor head = random_map({1, 4, 4}, rng);
  std::optional<Tensor> query;
  if (v.query_dim) query = random_map({v.query_dim}, rng);
  const auto f = [&] {
    Rng noise(77);
    return ops::sum(ops::mul(layer.attend(x, query, &noise).attended, head));
  };
  EXPECT_LT(finite_diff_check(f, layer.parameter_tensors(), kLayerStep), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    Variants, LayerGradientTest,
    ::testing::Values(
        VariantCase{"learned", Combiner::learned, DecodeMode::expectation,
                    Normalization::sigmoid, 0},
        VariantCase{"independent", Combiner::independent, DecodeMode::expectation,
                    Normalization::sigmoid, 0},
        VariantCase{"learned_sample", Combiner::learned, DecodeMode::sample,
                    Normalization::sigmoid, 0},
        VariantCase{"independent_sample", Combiner::independent, DecodeMode::sample,
                    Normalization::sigmoid, 0},
        VariantCase{"softmax_query", Combiner::learned, DecodeMode::expectation,
                    Normalization::softmax, 3}),
    [](const auto& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace arnn
