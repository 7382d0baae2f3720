#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "arnn/checkpoint.hpp"
#include "arnn/checksum.hpp"
#include "arnn/harness.hpp"
#include "arnn/mask_export.hpp"

namespace arnn {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("arnn_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

DatasetSpec desk_spec(std::size_t train, std::size_t seed = 3) {
  DatasetSpec s;
  s.variant = Variant::ref;
  s.image_size = 40;
  s.train = train;
  s.val = 0;
  s.test = 0;
  s.min_digits = 3;
  s.max_digits = 3;
  s.seed = seed;
  return s;
}

ModelConfig desk_model(const DatasetSpec& data, const std::string& kind, std::size_t stacks = 2) {
  ModelConfig c;
  c.image_size = data.image_size;
  c.stacks = stacks;
  c.channels = 8;
  c.hidden = 4;
  c.context_channels = 4;
  c.local_hidden = 4;
  c.query_dim = data.query_dim();
  c.num_classes = data.num_classes();
  c.attention = parse_attention(kind);
  c.seed = 9;
  return c;
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Tensor w(Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
  w.set_requires_grad(true);
  TrainConfig cfg;
  cfg.lr = 0.1;
  Adam adam({{"w", w}}, cfg);
  // d/dw of (3 w0 - 0.01 w1 + 0 * w2)
  w.impl().ensure_grad() = {3.0, -0.01, 0.0};
  adam.step();
  // m_hat = g, v_hat = g^2 after one step: the update is lr * g / (|g| + eps).
  EXPECT_NEAR(w.values()[0], 1.0 - 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(w.values()[1], -2.0 + 0.1 * 0.01 / (0.01 + 1e-8), 1e-15);
  EXPECT_EQ(w.values()[2], 0.5);
  EXPECT_FALSE(w.has_grad() && w.grad()[0] != 0.0);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(AdamTest, SecondStepUsesBiasCorrectedMoments) {
  Tensor w(Shape{1}, 0.0);
  w.set_requires_grad(true);
  TrainConfig cfg;
  Adam adam({{"w", w}}, cfg);
  w.impl().ensure_grad() = {1.0};
  adam.step();
  w.impl().ensure_grad() = {-1.0};
  adam.step();
  // m = 0.1 * 0.9 - 0.1 = -0.01, v = 0.001 * 0.999 + 0.001 = 0.001999
  const double m_hat = -0.01 / (1 - 0.81), v_hat = 0.001999 / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w.values()[0], -1e-3 / (1 + 1e-8) - 1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
}

TEST(LogTest, LineFormat) {
  EXPECT_EQ(format_log_line({2, 40, "val", 0.6931471, 0.5}), "2,40,val,0.693147,0.5000");
}

TEST(EvaluateTest, RandomModelIsAtChance) {
  DatasetSpec spec = desk_spec(2000, 41);
  const Dataset data = generate(spec);
  const AttributeNet net(desk_model(spec, "none"));
  const EvalReport rep = evaluate(net, data.train);
  EXPECT_EQ(rep.samples, 2000u);
  EXPECT_NEAR(rep.accuracy, 0.20, 0.03);
  double weighted = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < kScaleBuckets; ++k) {
    weighted += rep.bucket_accuracy[k] * double(rep.bucket_counts[k]);
    counted += rep.bucket_counts[k];
  }
  EXPECT_EQ(counted, 2000u);
  EXPECT_NEAR(weighted / 2000.0, rep.accuracy, 1e-12);
  EXPECT_GE(rep.correctness, 0.0);
  EXPECT_LE(rep.correctness, 1.0);
}

TEST(EvaluateTest, OraclePredictorIsPerfect) {
  const Dataset data = generate(desk_spec(300));
  std::vector<SampleOutcome> outcomes;
  for (const Sample& s : data.train) outcomes.push_back({s.label, 0.0, 1.0});
  const EvalReport rep = summarize(data.train, outcomes);
  EXPECT_EQ(rep.accuracy, 1.0);
  EXPECT_EQ(rep.correctness, 1.0);
  for (std::size_t k = 0; k < kScaleBuckets; ++k) {
    EXPECT_EQ(rep.bucket_accuracy[k], rep.bucket_counts[k] ? 1.0 : 0.0);
  }
  outcomes.pop_back();
  EXPECT_THROW(summarize(data.train, outcomes), ContractError);
}

TEST(EvaluateTest, ReportFormats) {
  EvalReport rep;
  rep.attention = "arnn";
  rep.samples = 10;
  rep.accuracy = 0.5;
  rep.bucket_counts = {2, 2, 2, 2, 2};
  rep.correctness = 0.25;
  const std::string text = rep.text();
  EXPECT_NE(text.find("2.5-3.0"), std::string::npos);
  EXPECT_NE(text.find("Corr       0.2500"), std::string::npos);
  const std::string kv = rep.key_values();
  EXPECT_NE(kv.find("accuracy=0.500000\n"), std::string::npos);
  EXPECT_NE(kv.find("bucket4_count=2\n"), std::string::npos);
  EXPECT_NE(kv.find("corr=0.250000\n"), std::string::npos);
}

TEST(TrainTest, OneEpochOnTenSamplesLowersLoss) {
  const DatasetSpec spec = desk_spec(10);
  const Dataset data = generate(spec);
  for (const auto& kind : {"arnn", "none"}) {
    SCOPED_TRACE(kind);
    AttributeNet net(desk_model(spec, kind));
    const double before = evaluate(net, data.train).loss;
    TrainConfig cfg;
    cfg.epochs = 1;
    const TrainResult r = train(net, data.train, {}, cfg);
    EXPECT_EQ(r.steps, 1u);
    ASSERT_EQ(r.log.size(), 1u);
    EXPECT_EQ(r.log[0].split, "train");
    EXPECT_NEAR(r.log[0].loss, before, 1e-9);  // the single step is taken after the batch
    EXPECT_LT(evaluate(net, data.train).loss, before);
  }
}

TEST(TrainTest, IdenticalSeedsGiveIdenticalParameters) {
  const DatasetSpec spec = desk_spec(24);
  const Dataset data = generate(spec);
  const fs::path dir = scratch("determinism");
  std::string digests[2];
  for (int run = 0; run < 2; ++run) {
    AttributeNet net(desk_model(spec, "arnn-sample"));
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.seed = 5;
    std::ostringstream log;
    train(net, data.train, data.train, cfg, &log);
    const fs::path ckpt = dir / ("run" + std::to_string(run) + ".ckpt");
    save_checkpoint(ckpt, net.parameters());
    digests[run] = file_sha256(ckpt);
    const std::string lines = log.str();
    EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 4);
  }
  EXPECT_EQ(digests[0], digests[1]);
}

TEST(TrainTest, NoneModelTrainsWithoutAttention) {
  const DatasetSpec spec = desk_spec(8);
  const Dataset data = generate(spec);
  AttributeNet net(desk_model(spec, "none"));
  for (std::size_t i = 0; i < net.slots(); ++i) ASSERT_EQ(net.slot(i), nullptr);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 4;
  cfg.log_steps = true;
  const TrainResult r = train(net, data.train, {}, cfg);
  EXPECT_EQ(r.steps, 2u);
  EXPECT_EQ(r.log.size(), 3u);
}

TEST(TrainTest, NonFiniteLossAbortsWithNorms) {
  const DatasetSpec spec = desk_spec(4);
  const Dataset data = generate(spec);
  AttributeNet net(desk_model(spec, "none"));
  Tensor(net.parameters().back().tensor).mutable_values()[0] = std::nan("");  // classifier bias
  TrainConfig cfg;
  try {
    train(net, data.train, {}, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("stack0="), std::string::npos) << what;
    EXPECT_NE(what.find("logits="), std::string::npos) << what;
  }
}

TEST(TrainTest, RejectsMismatchedData) {
  DatasetSpec spec = desk_spec(4);
  const Dataset data = generate(spec);
  ModelConfig c = desk_model(spec, "none");
  c.num_classes = 3;
  c.query_dim = 5;
  AttributeNet net(c);
  EXPECT_THROW(train(net, data.train, {}, TrainConfig{}), ContractError);
  TrainConfig zero_lr;
  zero_lr.lr = 0.0;
  AttributeNet ok(desk_model(spec, "none"));
  EXPECT_THROW(train(ok, data.train, {}, zero_lr), ContractError);
}

TEST(ExportTest, FourSlotModelWritesFourMasksAndFourAttendedMaps) {
  DatasetSpec spec = desk_spec(1);
  spec.image_size = 48;
  const Dataset data = generate(spec);
  const AttributeNet net(desk_model(spec, "arnn", 4));
  const fs::path dir = scratch("export");
  const auto files = export_attended_maps(net, data.train[0], "train", dir);
  std::size_t csv = 0, mask_pgm = 0, attended = 0;
  for (const auto& p : files) {
    ASSERT_TRUE(fs::exists(p)) << p;
    const std::string name = p.filename().string();
    if (p.extension() == ".csv") ++csv;
    else if (name.find("_attended") != std::string::npos) ++attended;
    else ++mask_pgm;
  }
  EXPECT_EQ(csv, 4u);
  EXPECT_EQ(mask_pgm, 4u);
  EXPECT_EQ(attended, 4u);

  const ForwardResult r = net.forward(image_tensor(data.train[0]), query_tensor(data.train[0]), nullptr);
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor back = read_mask_csv(dir / (mask_file_stem("train", 0, i) + ".csv"));
    ASSERT_EQ(back.shape(), r.masks[i].shape());
    for (std::size_t k = 0; k < back.numel(); ++k) {
      EXPECT_NEAR(back.values()[k], r.masks[i].values()[k], 1e-9);
    }
  }
  EXPECT_THROW(export_attended_maps(net, data.train[0], "train", "/proc/arnn_no_such_dir"),
               ExportError);
}

}  // namespace
}  // namespace arnn
