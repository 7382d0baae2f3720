#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arnn/dataset.hpp"
#include "arnn/model.hpp"

namespace arnn {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  bool log_steps = false;  // one train line per optimizer step
};

nlohmann::json to_json(const TrainConfig& c);

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Adam {
 public:
  Adam(ParameterList params, const TrainConfig& config);
  void step();  // consumes and clears accumulated gradients
  std::size_t steps() const { return t_; }

 private:
  ParameterList params_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct LogEntry {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};

// "epoch,step,split,loss,accuracy"
std::string format_log_line(const LogEntry& e);

struct TrainResult {
  std::vector<LogEntry> log;
  std::size_t steps = 0;
  double seconds = 0.0;
};

// Adam on mean softmax cross-entropy over shuffled mini-batches. Writes log
// lines to `log` when given. Throws TrainingError on a non-finite loss.
TrainResult train(AttributeNet& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  std::ostream* log = nullptr);

struct EvalReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  std::array<double, kScaleBuckets> bucket_accuracy{};
  std::array<std::size_t, kScaleBuckets> bucket_counts{};
  double correctness = 0.0;
  double seconds = 0.0;
  std::string attention;
  nlohmann::json fingerprint = nlohmann::json::object();

  std::string text() const;
  std::string key_values() const;
};

struct SampleOutcome {
  std::size_t predicted = 0;
  double loss = 0.0;
  double correctness = 0.0;
};

// Accuracy, per-scale accuracy and mean loss/correctness from per-sample
// outcomes given in sample order.
EvalReport summarize(const std::vector<Sample>& samples, const std::vector<SampleOutcome>& outcomes);

// Deterministic (expectation decoding) pass over the samples.
EvalReport evaluate(const AttributeNet& model, const std::vector<Sample>& samples,
                    const nlohmann::json& fingerprint = nlohmann::json::object());

// Per slot: mask CSV + PGM and a PGM of the channel-mean attended map, named
// <split>_<index>_<slot>[_attended]. Returns the written paths.
std::vector<std::filesystem::path> export_attended_maps(const AttributeNet& model,
                                                        const Sample& sample,
                                                        const std::string& split,
                                                        const std::filesystem::path& dir);

struct GradcheckResult {
  double max_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
  std::size_t skipped = 0;  // coordinates whose +-epsilon passes straddle a kink
  double seconds = 0.0;
};

// One attention layer on a random channels x m x n input feeding sum
// pooling, an affine head and cross-entropy. Checked under both mask
// normalizations (softmax only for san).
GradcheckResult gradcheck_attention(const AttentionSpec& spec, std::size_t channels,
                                    std::size_t m, std::size_t n, std::uint64_t seed,
                                    double epsilon);

// Full AttributeNet on one random sample. Coordinates whose perturbed
// passes change the branch pattern are skipped and counted.
GradcheckResult gradcheck_model(const ModelConfig& config, std::uint64_t seed, double epsilon);

}  // namespace arnn
