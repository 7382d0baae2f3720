#include "arnn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "arnn/gradcheck.hpp"
#include "arnn/mask_export.hpp"
#include "arnn/ops.hpp"

namespace arnn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t argmax(const Tensor& logits) {
  const auto v = logits.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::string describe_norms(const ForwardResult& r) {
  std::ostringstream os;
  for (const auto& [name, value] : r.activation_norms) os << ' ' << name << '=' << value;
  return os.str();
}

void require_compatible(const AttributeNet& model, const Sample& s) {
  const ModelConfig& c = model.config();
  if (s.image_size != c.image_size || s.query.size() != c.query_dim || s.label >= c.num_classes) {
    throw ContractError("sample " + std::to_string(s.index) + " (size " +
                        std::to_string(s.image_size) + ", query " + std::to_string(s.query.size()) +
                        ", label " + std::to_string(int(s.label)) + ") does not fit the model (size " +
                        std::to_string(c.image_size) + ", query " + std::to_string(c.query_dim) +
                        ", classes " + std::to_string(c.num_classes) + ")");
  }
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"lr", c.lr},         {"beta1", c.beta1},   {"beta2", c.beta2},
                        {"eps", c.eps},       {"batch", c.batch},   {"epochs", c.epochs},
                        {"seed", c.seed},     {"log_steps", c.log_steps}};
}

Adam::Adam(ParameterList params, const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.lr),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k].tensor;
    // A parameter the loss never touched still decays its moments.
    const auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
    p.zero_grad();
  }
}

std::string format_log_line(const LogEntry& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.6f,%.4f", e.epoch, e.step, e.split.c_str(), e.loss,
                e.accuracy);
  return buf;
}

TrainResult train(AttributeNet& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  std::ostream* log) {
  if (train_set.empty()) throw TrainingError("train: empty training set");
  if (config.batch == 0) throw ContractError("train: batch size must be positive");
  if (!(config.lr > 0.0)) throw ContractError("train: learning rate must be positive");
  for (const Sample& s : train_set) require_compatible(model, s);
  const auto start = Clock::now();
  TrainResult result;
  Adam adam(model.parameters(), config);
  model.zero_grad();

  auto emit = [&](const LogEntry& e) {
    result.log.push_back(e);
    if (log) *log << format_log_line(e) << '\n' << std::flush;
  };

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed({config.seed, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }

    double epoch_loss = 0.0;
    std::size_t epoch_hits = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      const double weight = 1.0 / double(end - begin);
      double batch_loss = 0.0;
      std::size_t batch_hits = 0;
      for (std::size_t b = begin; b < end; ++b) {
        const Sample& s = train_set[order[b]];
        Rng noise(mix_seed({config.seed, epoch, result.steps, s.index}));
        const ForwardResult r = model.forward(image_tensor(s), query_tensor(s), &noise);
        const Tensor loss = ops::softmax_cross_entropy(r.logits, s.label);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                              std::to_string(result.steps) + " sample " +
                              std::to_string(s.index) + ":" + describe_norms(r));
        }
        ops::scale(loss, weight).backward();
        batch_loss += value;
        batch_hits += argmax(r.logits) == s.label;
      }
      adam.step();
      ++result.steps;
      epoch_loss += batch_loss;
      epoch_hits += batch_hits;
      if (config.log_steps) {
        emit({epoch, result.steps, "step", batch_loss * weight,
              double(batch_hits) * weight});
      }
    }
    emit({epoch, result.steps, "train", epoch_loss / double(order.size()),
          double(epoch_hits) / double(order.size())});
    if (!val_set.empty()) {
      const EvalReport v = evaluate(model, val_set);
      emit({epoch, result.steps, "val", v.loss, v.accuracy});
    }
  }
  result.seconds = seconds_since(start);
  return result;
}

// ---------------------------------------------------------------------------

std::string EvalReport::text() const {
  std::ostringstream os;
  char buf[64];
  os << "attention  " << attention << '\n';
  os << "samples    " << samples << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", accuracy);
  os << "accuracy   " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", loss);
  os << "loss       " << buf << '\n';
  os << "scale     ";
  for (std::size_t k = 0; k < kScaleBuckets; ++k) {
    std::snprintf(buf, sizeof buf, "  %.1f-%.1f", 0.5 + 0.5 * double(k), 1.0 + 0.5 * double(k));
    os << buf;
  }
  os << "\nacc       ";
  for (std::size_t k = 0; k < kScaleBuckets; ++k) {
    std::snprintf(buf, sizeof buf, "  %7.4f", bucket_accuracy[k]);
    os << buf;
  }
  os << "\nn         ";
  for (std::size_t k = 0; k < kScaleBuckets; ++k) {
    std::snprintf(buf, sizeof buf, "  %7zu", bucket_counts[k]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%.4f", correctness);
  os << "\nCorr       " << buf << '\n';
  return os.str();
}

std::string EvalReport::key_values() const {
  std::ostringstream os;
  char buf[64];
  os << "attention=" << attention << '\n' << "samples=" << samples << '\n';
  std::snprintf(buf, sizeof buf, "%.6f", accuracy);
  os << "accuracy=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.6f", loss);
  os << "loss=" << buf << '\n';
  for (std::size_t k = 0; k < kScaleBuckets; ++k) {
    std::snprintf(buf, sizeof buf, "%.6f", bucket_accuracy[k]);
    os << "bucket" << k << "_accuracy=" << buf << '\n';
    os << "bucket" << k << "_count=" << bucket_counts[k] << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6f", correctness);
  os << "corr=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  os << "seconds=" << buf << '\n';
  return os.str();
}

EvalReport summarize(const std::vector<Sample>& samples,
                     const std::vector<SampleOutcome>& outcomes) {
  if (samples.size() != outcomes.size()) {
    throw ContractError("summarize: one outcome per sample required");
  }
  EvalReport rep;
  rep.samples = samples.size();
  std::array<std::size_t, kScaleBuckets> hits{};
  std::size_t total_hits = 0;
  double loss = 0.0, corr = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const bool hit = outcomes[k].predicted == samples[k].label;
    const std::size_t bucket = scale_bucket(samples[k].target_scale);
    ++rep.bucket_counts[bucket];
    hits[bucket] += hit;
    total_hits += hit;
    loss += outcomes[k].loss;
    corr += outcomes[k].correctness;
  }
  if (!samples.empty()) {
    const double n = double(samples.size());
    rep.accuracy = double(total_hits) / n;
    rep.loss = loss / n;
    rep.correctness = corr / n;
  }
  for (std::size_t k = 0; k < kScaleBuckets; ++k) {
    rep.bucket_accuracy[k] =
        rep.bucket_counts[k] ? double(hits[k]) / double(rep.bucket_counts[k]) : 0.0;
  }
  return rep;
}

EvalReport evaluate(const AttributeNet& model, const std::vector<Sample>& samples,
                    const nlohmann::json& fingerprint) {
  const auto start = Clock::now();
  NoGradGuard no_grad;
  std::vector<SampleOutcome> outcomes;
  outcomes.reserve(samples.size());
  for (const Sample& s : samples) {
    require_compatible(model, s);
    const ForwardResult r = model.forward(image_tensor(s), query_tensor(s), nullptr);
    outcomes.push_back({argmax(r.logits), ops::softmax_cross_entropy(r.logits, s.label).item(),
                        mask_correctness(r.masks, s.roi, s.image_size)});
  }
  EvalReport rep = summarize(samples, outcomes);
  rep.attention = model.config().attention.name();
  rep.fingerprint = fingerprint;
  rep.seconds = seconds_since(start);
  return rep;
}

std::vector<std::filesystem::path> export_attended_maps(const AttributeNet& model,
                                                        const Sample& sample,
                                                        const std::string& split,
                                                        const std::filesystem::path& dir) {
  NoGradGuard no_grad;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ExportError("cannot create " + dir.string() + ": " + ec.message());
  const ForwardResult r = model.forward(image_tensor(sample), query_tensor(sample), nullptr);
  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < r.masks.size(); ++i) {
    const std::string stem = mask_file_stem(split, sample.index, i);
    written.push_back(dir / (stem + ".csv"));
    write_mask_csv(written.back(), r.masks[i]);
    written.push_back(dir / (stem + ".pgm"));
    write_pgm(written.back(), r.masks[i]);
    const Tensor& a = r.attended[i];
    const Tensor mean = ops::scale(ops::sum(a, {0}), 1.0 / double(a.dim(0)));
    written.push_back(dir / (stem + "_attended.pgm"));
    write_pgm(written.back(), ops::reshape(mean, Shape{a.dim(1), a.dim(2)}));
  }
  return written;
}

// ---------------------------------------------------------------------------

namespace {

void check_each(const std::function<Tensor()>& f, const ParameterList& params, double epsilon,
                GradcheckResult& out) {
  for (const auto& p : params) {
    const Tensor t = p.tensor;
    const double err = finite_diff_check(f, std::span<const Tensor>(&t, 1), epsilon);
    out.coordinates += t.numel();
    if (std::isnan(err) || err > out.max_error || out.worst_parameter.empty()) {
      out.max_error = err;
      out.worst_parameter = p.name;
    }
    if (std::isnan(err)) return;
  }
}

}  // namespace

GradcheckResult gradcheck_attention(const AttentionSpec& spec, std::size_t channels,
                                    std::size_t m, std::size_t n, std::uint64_t seed,
                                    double epsilon) {
  if (spec.family == AttentionFamily::none) {
    throw ContractError("gradcheck: attention 'none' has no parameters");
  }
  const auto start = Clock::now();
  ModelConfig mc;
  mc.query_dim = 3;
  mc.hidden = 4;
  mc.context_channels = 4;
  mc.local_hidden = 4;
  mc.san_embed = 8;
  constexpr std::size_t kClasses = 3;

  GradcheckResult out;
  std::vector<Normalization> modes{Normalization::softmax};
  if (spec.family != AttentionFamily::san) modes.insert(modes.begin(), Normalization::sigmoid);
  for (const Normalization mode : modes) {
    Rng rng(mix_seed({seed, static_cast<std::uint64_t>(mode)}));
    const auto layer = make_attention(spec, mc, channels, m, n, mode, rng);
    std::vector<double> xs(channels * m * n);
    for (double& v : xs) v = rng.normal();
    const Tensor x(Shape{channels, m, n}, std::move(xs));
    const Tensor query(Shape{3}, std::vector<double>{rng.normal(), rng.normal(), rng.normal()});
    const Tensor head_w = make_parameter(Shape{kClasses, channels}, rng, 0.5);
    const Tensor head_b = make_parameter(Shape{kClasses}, rng, 0.5);
    const std::uint64_t noise_seed = mix_seed({seed, 7});

    const auto f = [&]() {
      Rng noise(noise_seed);
      const AttentionResult r = layer->attend(x, query, &noise);
      const Tensor pooled = ops::reshape(ops::sum(r.attended, {1, 2}), Shape{channels, 1});
      const Tensor logits =
          ops::add(ops::reshape(ops::matmul(head_w, pooled), Shape{kClasses}), head_b);
      return ops::softmax_cross_entropy(logits, 1);
    };
    ParameterList params = layer->parameters(to_string(mode) + ".");
    params.push_back({to_string(mode) + ".head.weight", head_w});
    params.push_back({to_string(mode) + ".head.bias", head_b});
    check_each(f, params, epsilon, out);
    if (std::isnan(out.max_error)) break;
  }
  out.seconds = seconds_since(start);
  return out;
}

GradcheckResult gradcheck_model(const ModelConfig& config, std::uint64_t seed, double epsilon) {
  const auto start = Clock::now();
  const AttributeNet model(config);
  Rng rng(seed);
  std::vector<double> pixels(config.in_channels * config.image_size * config.image_size);
  for (double& v : pixels) v = rng.uniform();
  const Tensor image(Shape{config.in_channels, config.image_size, config.image_size},
                     std::move(pixels));
  Tensor query(Shape{config.query_dim}, 0.0);
  if (config.query_dim > 0) query.mutable_values()[rng.below(config.query_dim)] = 1.0;
  const std::size_t label = rng.below(config.num_classes);
  const std::uint64_t noise_seed = mix_seed({seed, 7});

  const auto run = [&]() {
    Rng noise(noise_seed);
    ForwardResult r = model.forward(image, query, &noise);
    Tensor loss = ops::softmax_cross_entropy(r.logits, label);
    return std::pair{std::move(loss), branch_pattern(r)};
  };

  GradcheckResult out;
  const ParameterList params = model.parameters();
  model.zero_grad();
  const auto [base_loss, base_pattern] = run();
  base_loss.backward();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic = t.has_grad()
                                             ? std::vector<double>(t.grad().begin(), t.grad().end())
                                             : std::vector<double>(t.numel(), 0.0);
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      double loss_at[2];
      bool straddles = false;
      {
        NoGradGuard no_grad;
        for (int k = 0; k < 2; ++k) {
          w[i] = saved + (k == 0 ? epsilon : -epsilon);
          auto [loss, pattern] = run();
          loss_at[k] = loss.item();
          straddles = straddles || pattern != base_pattern;
        }
        w[i] = saved;
      }
      ++out.coordinates;
      if (straddles) {
        ++out.skipped;
        continue;
      }
      const double numeric = (loss_at[0] - loss_at[1]) / (2.0 * epsilon);
      const double err = std::abs(analytic[i] - numeric) /
                         std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      if (std::isnan(err) || err > out.max_error || out.worst_parameter.empty()) {
        out.max_error = err;
        out.worst_parameter = p.name;
      }
      if (std::isnan(err)) break;
    }
  }
  model.zero_grad();
  out.seconds = seconds_since(start);
  return out;
}

}  // namespace arnn
