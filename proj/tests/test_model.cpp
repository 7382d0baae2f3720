#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "arnn/harness.hpp"
#include "arnn/model.hpp"
#include "arnn/ops.hpp"

namespace arnn {
namespace {

const std::vector<std::string> kAllKinds{"arnn", "arnn-sample", "arnn-ind", "arnn-ind-sample",
                                         "brnn:2", "ctx", "noctx", "san", "none"};

ModelConfig small_config(const std::string& kind, std::size_t size = 16, std::size_t stacks = 2) {
  ModelConfig c;
  c.image_size = size;
  c.stacks = stacks;
  c.channels = 6;
  c.hidden = 4;
  c.context_channels = 4;
  c.local_hidden = 4;
  c.san_embed = 8;
  c.query_dim = 5;
  c.num_classes = 10;
  c.attention = parse_attention(kind);
  c.seed = 11;
  return c;
}

Tensor random_image(std::size_t size, Rng& rng) {
  Tensor t(Shape{3, size, size});
  for (auto& v : t.mutable_values()) v = rng.uniform();
  return t;
}

Tensor one_hot(std::size_t dim, std::size_t k) {
  Tensor t(Shape{dim}, 0.0);
  t.mutable_values()[k] = 1.0;
  return t;
}

TEST(AttentionSpecTest, NamesRoundTrip) {
  for (const auto& name : kAllKinds) EXPECT_EQ(parse_attention(name).name(), name);
  EXPECT_EQ(parse_attention("brnn:3").gamma, 3u);
  EXPECT_EQ(parse_attention("arnn-ind-sample").combiner, Combiner::independent);
  EXPECT_EQ(parse_attention("arnn-ind-sample").decode, DecodeMode::sample);
  for (const char* bad : {"", "ARNN", "brnn:", "brnn:0", "brnn:x", "arnn-sample-ind", "pan"}) {
    EXPECT_THROW(parse_attention(bad), ContractError) << bad;
  }
}

TEST(ModelConfigTest, JsonRoundTripAndExtents) {
  ModelConfig c = small_config("brnn:3", 40);
  c.sigma_scale = 0.25;
  const ModelConfig back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(c.slot_extent(0), 20u);
  EXPECT_EQ(c.slot_extent(1), 10u);
  ModelConfig d;
  EXPECT_EQ(d.slot_extent(3), 6u);  // 100 -> 50 -> 25 -> 12 -> 6
  EXPECT_THROW(AttributeNet(small_config("none", 3, 2)), ContractError);
}

TEST(AttributeNetTest, ShapesDoNotDependOnAttentionKind) {
  Rng rng(2);
  const Tensor image = random_image(16, rng);
  const Tensor query = one_hot(5, 2);
  for (const auto& kind : kAllKinds) {
    SCOPED_TRACE(kind);
    const AttributeNet net(small_config(kind));
    Rng noise(4);
    const ForwardResult r = net.forward(image, query, &noise);
    EXPECT_EQ(r.logits.shape(), (Shape{10}));
    ASSERT_EQ(r.masks.size(), 2u);
    ASSERT_EQ(r.attended.size(), 2u);
    EXPECT_EQ(r.masks[0].shape(), (Shape{8, 8}));
    EXPECT_EQ(r.masks[1].shape(), (Shape{4, 4}));
    EXPECT_EQ(r.attended[0].shape(), (Shape{6, 8, 8}));
    EXPECT_EQ(r.attended[1].shape(), (Shape{6, 4, 4}));
  }
}

TEST(AttributeNetTest, FinalMaskSumsToOneAndEarlierMasksAreGates) {
  Rng rng(3);
  const Tensor image = random_image(16, rng);
  for (const auto& kind : {"arnn", "arnn-ind", "brnn:2", "ctx", "noctx", "san"}) {
    SCOPED_TRACE(kind);
    const AttributeNet net(small_config(kind));
    const ForwardResult r = net.forward(image, one_hot(5, 0), nullptr);
    const auto last = r.masks[1].values();
    EXPECT_NEAR(std::accumulate(last.begin(), last.end(), 0.0), 1.0, 1e-12);
    for (double v : r.masks[0].values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(AttributeNetTest, NoneHasNoAttentionAndUnitMasks) {
  const AttributeNet net(small_config("none"));
  for (std::size_t i = 0; i < net.slots(); ++i) EXPECT_EQ(net.slot(i), nullptr);
  for (const auto& p : net.parameters()) EXPECT_EQ(p.name.find("attn"), std::string::npos) << p.name;
  Rng rng(5);
  const Tensor image = random_image(16, rng);
  const ForwardResult a = net.forward(image, one_hot(5, 0), nullptr);
  const ForwardResult b = net.forward(image, one_hot(5, 4), nullptr);
  for (const auto& m : a.masks)
    for (double v : m.values()) EXPECT_EQ(v, 1.0);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(a.logits.values()[k], b.logits.values()[k]);
}

TEST(AttributeNetTest, SanOccupiesOnlyTheLastSlot) {
  const AttributeNet net(small_config("san", 32, 3));
  EXPECT_EQ(net.slot(0), nullptr);
  EXPECT_EQ(net.slot(1), nullptr);
  ASSERT_NE(net.slot(2), nullptr);
  EXPECT_EQ(net.slot(2)->kind(), "san");
}

TEST(AttributeNetTest, QueryReachesLogitsThroughAttention) {
  Rng rng(6);
  const Tensor image = random_image(16, rng);
  for (const auto& kind : {"arnn", "brnn:2", "ctx", "san"}) {
    const AttributeNet net(small_config(kind));
    const Tensor a = net.forward(image, one_hot(5, 0), nullptr).logits;
    const Tensor b = net.forward(image, one_hot(5, 3), nullptr).logits;
    double diff = 0.0;
    for (std::size_t k = 0; k < 10; ++k) diff += std::abs(a.values()[k] - b.values()[k]);
    EXPECT_GT(diff, 1e-9) << kind;
  }
}

TEST(AttributeNetTest, RejectsWrongInputs) {
  const AttributeNet net(small_config("arnn"));
  Rng rng(7);
  EXPECT_THROW(net.forward(random_image(12, rng), one_hot(5, 0), nullptr), ShapeError);
  EXPECT_THROW(net.forward(random_image(16, rng), one_hot(4, 0), nullptr), std::exception);
}

TEST(AttributeNetTest, SameSeedSameParameters) {
  const AttributeNet a(small_config("arnn"));
  const AttributeNet b(small_config("arnn"));
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    EXPECT_EQ(pa[k].name, pb[k].name);
    EXPECT_TRUE(std::equal(pa[k].tensor.values().begin(), pa[k].tensor.values().end(),
                           pb[k].tensor.values().begin()));
  }
}

TEST(UpsampleTest, NearestBlocks) {
  const Tensor m(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor up = upsample_nearest(m, 4, 4);
  const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_EQ(std::vector<double>(up.values().begin(), up.values().end()), want);
  // Uneven: 2 -> 5 rows maps 0,0,0,1,1 (floor(i * 2 / 5)).
  const Tensor odd = upsample_nearest(m, 5, 1);
  EXPECT_EQ(std::vector<double>(odd.values().begin(), odd.values().end()),
            (std::vector<double>{1, 1, 1, 3, 3}));
}

TEST(MaskCorrectnessTest, AllInside) {
  std::vector<std::uint8_t> roi(16, 0);
  Tensor mask(Shape{4, 4}, 0.0);
  for (std::size_t p : {5u, 6u, 9u}) {
    roi[p] = 1;
    mask.mutable_values()[p] = 0.3;
  }
  roi[10] = 1;
  EXPECT_NEAR(mask_correctness({mask}, roi, 4), 1.0, 1e-12);
}

TEST(MaskCorrectnessTest, UniformMaskGivesRoiShare) {
  std::vector<std::uint8_t> roi(100, 0);
  for (std::size_t p = 0; p < 10; ++p) roi[p * 7] = 1;
  EXPECT_NEAR(mask_correctness({Tensor(Shape{5, 5}, 0.04), Tensor(Shape{10, 10}, 0.5)}, roi, 10),
              0.10, 1e-12);
}

TEST(MaskCorrectnessTest, ZeroLayerGivesZero) {
  std::vector<std::uint8_t> roi(16, 1);
  EXPECT_EQ(mask_correctness({Tensor(Shape{2, 2}, 1.0), Tensor(Shape{4, 4}, 0.0)}, roi, 4), 0.0);
}

TEST(MaskCorrectnessTest, ProductOfUpsampledLayers) {
  // Coarse 2x2 [1 0; 0 3] over a 4x4 image, fine mask 2 on the first row.
  const Tensor coarse(Shape{2, 2}, std::vector<double>{1, 0, 0, 3});
  Tensor fine(Shape{4, 4}, 1.0);
  for (std::size_t j = 0; j < 4; ++j) fine.mutable_values()[j] = 2.0;
  std::vector<std::uint8_t> roi(16, 0);
  roi[0] = 1;  // weight 2
  roi[15] = 1;  // weight 3
  // total = 2*2 (row 0, cols 0-1) + 2*1 (row 1) + 4*3 (bottom right) = 18
  EXPECT_NEAR(mask_correctness({coarse, fine}, roi, 4), 5.0 / 18.0, 1e-15);
}

TEST(MaskCorrectnessTest, Contracts) {
  EXPECT_THROW(mask_correctness({Tensor(Shape{2, 2}, 1.0)}, std::vector<std::uint8_t>(3), 2),
               ShapeError);
  EXPECT_THROW(mask_correctness({Tensor(Shape{2, 2}, -1.0)}, std::vector<std::uint8_t>(4), 2),
               ContractError);
}

// Layer and model checks use a 1e-3 central-difference step; see the
// attention-rnn tests for the round-off analysis behind it.
constexpr double kStep = 1e-3;

class MiniatureGradientTest : public ::testing::TestWithParam<std::string> {};

TEST_P(MiniatureGradientTest, AttentionLayerOnFourByFour) {
  const GradcheckResult r = gradcheck_attention(parse_attention(GetParam()), 1, 4, 4, 3, kStep);
  EXPECT_LT(r.max_error, 1e-4) << r.worst_parameter;
  EXPECT_GT(r.coordinates, 0u);
}

TEST_P(MiniatureGradientTest, AttributeNetEndToEnd) {
  ModelConfig c;
  c.image_size = 12;
  c.channels = 8;
  c.stacks = 2;
  c.hidden = 4;
  c.context_channels = 4;
  c.local_hidden = 4;
  c.san_embed = 8;
  c.query_dim = 5;
  c.num_classes = 10;
  c.attention = parse_attention(GetParam());
  c.seed = 21;
  const GradcheckResult r = gradcheck_model(c, 5, kStep);
  EXPECT_LT(r.max_error, 1e-4) << r.worst_parameter;
}

INSTANTIATE_TEST_SUITE_P(Kinds, MiniatureGradientTest,
                         ::testing::Values("arnn", "arnn-ind", "arnn-sample", "arnn-ind-sample",
                                           "brnn:2", "ctx", "noctx", "san"),
                         [](const auto& info) {
                           std::string s = info.param;
                           for (char& ch : s)
                             if (ch == '-' || ch == ':') ch = '_';
                           return s;
                         });

TEST(MiniatureGradientTest, NoneModel) {
  ModelConfig c = small_config("none", 12);
  EXPECT_LT(gradcheck_model(c, 5, kStep).max_error, 1e-4);
  EXPECT_THROW(gradcheck_attention(parse_attention("none"), 1, 4, 4, 1, kStep), ContractError);
}

}  // namespace
}  // namespace arnn
