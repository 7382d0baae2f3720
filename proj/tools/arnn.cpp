// Command-line front end: gen-data, train, eval, export-masks, gradcheck.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "arnn/checkpoint.hpp"
#include "arnn/checksum.hpp"
#include "arnn/dataset.hpp"
#include "arnn/harness.hpp"
#include "arnn/mask_export.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace arnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitVerification = 3;
constexpr double kGradTolerance = 1e-4;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- options

struct GenDataOptions {
  std::string out = "data";
  std::string variant = "ref";
  std::string task = "color-of-digit";
  DatasetSpec spec;
};

struct ModelOptions {
  std::string attention = "arnn";
  std::size_t stacks = 4;
  std::size_t channels = 32;
  std::size_t hidden = 16;
  std::size_t context_channels = 16;
  std::size_t delta = 3;
  double sigma_scale = 1.0;
  std::size_t local_hidden = 16;
  std::size_t san_embed = 64;
};

struct TrainOptions {
  std::string data = "data";
  std::string out = "run";
  ModelOptions model;
  TrainConfig train;
};

struct EvalOptions {
  std::string run = "run";
  std::string data;  // empty: the dataset the run was trained on
  std::string split = "test";
  std::size_t limit = 0;
};

struct ExportOptions {
  std::string run = "run";
  std::string data;
  std::string split = "test";
  std::vector<std::size_t> samples{0};
  std::string out;  // empty: <run>/masks
};

struct GradcheckOptions {
  std::string attention = "arnn";
  std::size_t channels = 1;
  std::size_t m = 4;
  std::size_t n = 4;
  std::uint64_t seed = 0;
  double epsilon = 1e-3;
  bool model = false;
  std::size_t size = 12;
  std::size_t stacks = 2;
  std::size_t model_channels = 8;
};

void add_model_options(CLI::App* app, ModelOptions& o) {
  app->add_option("--attention", o.attention,
                  "arnn, arnn-sample, arnn-ind, arnn-ind-sample, brnn:<g>, ctx, noctx, san, none")
      ->capture_default_str();
  app->add_option("--stacks", o.stacks, "conv + pool stacks, one attention slot each")
      ->capture_default_str();
  app->add_option("--channels", o.channels, "backbone channels")->capture_default_str();
  app->add_option("--hidden", o.hidden, "recurrent units per direction")->capture_default_str();
  app->add_option("--context-channels", o.context_channels)->capture_default_str();
  app->add_option("--delta", o.delta, "recurrent layer's local context size (odd)")
      ->capture_default_str();
  app->add_option("--sigma-scale", o.sigma_scale, "sampling noise multiplier")
      ->capture_default_str();
  app->add_option("--local-hidden", o.local_hidden, "ctx / noctx head width")
      ->capture_default_str();
  app->add_option("--san-embed", o.san_embed)->capture_default_str();
}

// ---------------------------------------------------------------- helpers

fs::path workdir;

fs::path resolve(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : workdir / path;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

// Refuses to reuse a non-empty directory unless forced; with --force only
// the listed outputs of a previous run are removed.
void prepare_output(const fs::path& dir, bool force, const std::vector<fs::path>& owned) {
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw IoError(dir.string() + " exists and is not empty (use --force to overwrite)");
    }
    for (const auto& p : owned) fs::remove_all(dir / p, ec);
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

ModelConfig model_config(const ModelOptions& o, const DatasetSpec& data, std::uint64_t seed) {
  ModelConfig c;
  c.image_size = data.image_size;
  c.stacks = o.stacks;
  c.channels = o.channels;
  c.query_dim = data.query_dim();
  c.num_classes = data.num_classes();
  c.attention = parse_attention(o.attention);
  c.hidden = o.hidden;
  c.context_channels = o.context_channels;
  c.delta = o.delta;
  c.sigma_scale = o.sigma_scale;
  c.local_hidden = o.local_hidden;
  c.san_embed = o.san_embed;
  c.seed = seed;
  return c;
}

struct LoadedRun {
  json manifest;
  ModelConfig config;
  std::unique_ptr<AttributeNet> model;
  fs::path data_dir;
};

LoadedRun load_run(const fs::path& run, const std::string& data_override) {
  LoadedRun r;
  r.manifest = read_json(run / "manifest.json");
  r.config = model_config_from_json(r.manifest.at("model"));
  r.model = std::make_unique<AttributeNet>(r.config);
  const fs::path ckpt = run / "checkpoint.bin";
  if (!fs::exists(ckpt)) throw IoError("missing checkpoint " + ckpt.string());
  load_checkpoint(ckpt, r.model->parameters());
  r.data_dir = data_override.empty() ? fs::path(r.manifest.at("data").at("dir").get<std::string>())
                                     : resolve(data_override);
  return r;
}

const std::vector<Sample>& pick_split(const Dataset& d, const std::string& name) {
  return d.split(parse_split(name));
}

// ---------------------------------------------------------------- commands

int run_gen_data(GenDataOptions o, bool force, const json& flags) {
  o.spec.variant = parse_variant(o.variant);
  o.spec.task = parse_task(o.task);
  const fs::path dir = resolve(o.out);
  prepare_output(dir, force, {"meta.json", "train", "val", "test"});
  const Dataset data = generate(o.spec);
  save_dataset(data, dir, flags);
  std::cout << "wrote " << dir.string() << ": " << data.train.size() << " train, "
            << data.val.size() << " val, " << data.test.size() << " test ("
            << to_string(o.spec.variant) << ", " << o.spec.image_size << "px)\n";
  for (const char* split : {"train", "val", "test"}) {
    std::cout << split << "/samples.bin sha256 " << file_sha256(dir / split / "samples.bin")
              << '\n';
  }
  return kExitOk;
}

int run_train(const TrainOptions& o, bool force, const json& flags) {
  const fs::path data_dir = resolve(o.data);
  const fs::path out = resolve(o.out);
  const Dataset data = load_dataset(data_dir);
  const ModelConfig mc = model_config(o.model, data.spec, o.train.seed);
  AttributeNet model(mc);
  prepare_output(out, force, {"manifest.json", "checkpoint.bin", "train.log"});

  std::ofstream log(out / "train.log");
  if (!log) throw IoError("cannot write " + (out / "train.log").string());
  log << "epoch,step,split,loss,accuracy\n";
  const TrainResult result = train(model, data.train, data.val, o.train, &log);
  save_checkpoint(out / "checkpoint.bin", model.parameters());

  const json manifest{{"command", "train"},
                      {"flags", flags},
                      {"model", to_json(mc)},
                      {"train", to_json(o.train)},
                      {"data",
                       {{"dir", fs::absolute(data_dir).string()},
                        {"meta_sha256", file_sha256(data_dir / "meta.json")}}},
                      {"steps", result.steps},
                      {"seconds", result.seconds},
                      {"checkpoint_sha256", file_sha256(out / "checkpoint.bin")}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  if (!result.log.empty()) {
    std::cout << format_log_line(result.log.back()) << '\n';
  }
  std::printf("trained %s for %zu steps in %.1f s -> %s\n", mc.attention.name().c_str(),
              result.steps, result.seconds, out.string().c_str());
  return kExitOk;
}

int run_eval(const EvalOptions& o, const json& flags) {
  const fs::path run = resolve(o.run);
  const LoadedRun r = load_run(run, o.data);
  const Dataset data = load_dataset(r.data_dir);
  std::vector<Sample> samples = pick_split(data, o.split);
  if (o.limit > 0 && samples.size() > o.limit) samples.resize(o.limit);
  const json fingerprint{{"flags", flags},
                         {"model", r.manifest.at("model")},
                         {"train", r.manifest.at("train")},
                         {"data_meta_sha256", file_sha256(r.data_dir / "meta.json")},
                         {"split", o.split}};
  const EvalReport rep = evaluate(*r.model, samples, fingerprint);
  const std::string text = rep.text();
  std::cout << text;
  write_text(run / ("eval_" + o.split + ".txt"), text);
  write_text(run / ("eval_" + o.split + ".kv"),
             rep.key_values() + "fingerprint=" + fingerprint.dump() + "\n");
  return kExitOk;
}

int run_export(const ExportOptions& o, bool force, const json& flags) {
  const fs::path run = resolve(o.run);
  const LoadedRun r = load_run(run, o.data);
  const Dataset data = load_dataset(r.data_dir);
  const auto& samples = pick_split(data, o.split);
  const fs::path out = o.out.empty() ? run / "masks" : resolve(o.out);
  prepare_output(out, force, {});
  json files = json::array();
  for (std::size_t i : o.samples) {
    if (i >= samples.size()) {
      throw ContractError("sample " + std::to_string(i) + " is out of range for split " + o.split +
                          " (" + std::to_string(samples.size()) + " samples)");
    }
    for (const auto& p : export_attended_maps(*r.model, samples[i], o.split, out)) {
      files.push_back(p.filename().string());
      std::cout << p.string() << '\n';
    }
  }
  const json manifest{{"command", "export-masks"}, {"flags", flags},
                      {"model", r.manifest.at("model")}, {"files", files}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

int run_gradcheck(const GradcheckOptions& o) {
  std::vector<std::string> kinds;
  if (o.attention == "all") {
    kinds = {"arnn", "arnn-ind", "brnn:2", "ctx", "noctx", "san"};
  } else {
    kinds = {o.attention};
  }
  bool ok = true;
  double total = 0.0;
  for (const auto& kind : kinds) {
    const AttentionSpec spec = parse_attention(kind);
    GradcheckResult r;
    if (o.model) {
      ModelConfig c;
      c.image_size = o.size;
      c.stacks = o.stacks;
      c.channels = o.model_channels;
      c.hidden = 4;
      c.context_channels = 4;
      c.local_hidden = 4;
      c.san_embed = 8;
      c.query_dim = 5;
      c.num_classes = 10;
      c.attention = spec;
      c.seed = o.seed;
      r = gradcheck_model(c, o.seed, o.epsilon);
    } else {
      r = gradcheck_attention(spec, o.channels, o.m, o.n, o.seed, o.epsilon);
    }
    const bool pass = r.max_error < kGradTolerance;  // false for NaN
    ok = ok && pass;
    total += r.seconds;
    std::printf("%-6s attention=%s max_rel_error=%.3e worst=%s coordinates=%zu skipped=%zu "
                "seconds=%.2f\n",
                pass ? "PASS" : "FAIL", kind.c_str(), r.max_error, r.worst_parameter.c_str(),
                r.coordinates, r.skipped, r.seconds);
  }
  std::printf("%s total_seconds=%.2f tolerance=%.0e epsilon=%.0e\n", ok ? "PASS" : "FAIL", total,
              kGradTolerance, o.epsilon);
  return ok ? kExitOk : kExitVerification;
}

// ---------------------------------------------------------------- config file

// Reads key=value lines ('#' comments). Keys are long option names without
// the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t number = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError(path.string() + ":" + std::to_string(number) +
                                 ": expected key=value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

// Appends file settings for options not already given on the command line,
// so flags take precedence over the file and the file over defaults.
std::vector<std::string> merge_config(const std::vector<std::string>& args,
                                      const std::vector<std::pair<std::string, std::string>>& kv) {
  std::vector<std::string> merged = args;
  for (const auto& [key, value] : kv) {
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    }
    if (!given) merged.push_back(flag + "=" + value);
  }
  return merged;
}

json collect_flags(const CLI::App* cmd) {
  json flags = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->get_expected_max() == 0) {
      flags[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      flags[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured spatial attention: data generation, training and verification"};
  app.require_subcommand(1);
  std::string workdir_opt = ".";
  std::string config_file;
  bool force = false;
  app.add_option("--workdir", workdir_opt, "base for relative paths")->capture_default_str();
  app.add_option("--config", config_file, "key=value file; command-line flags take precedence");
  app.add_flag("--force", force, "overwrite outputs of a previous run");

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic digit dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();
  gen_cmd->add_option("--variant", gen.variant, "ref, dist or bg")->capture_default_str();
  gen_cmd->add_option("--task", gen.task, "color-of-digit or digit-of-color")
      ->capture_default_str();
  gen_cmd->add_option("--size", gen.spec.image_size, "image side in pixels")->capture_default_str();
  gen_cmd->add_option("--train", gen.spec.train)->capture_default_str();
  gen_cmd->add_option("--val", gen.spec.val)->capture_default_str();
  gen_cmd->add_option("--test", gen.spec.test)->capture_default_str();
  gen_cmd->add_option("--min-digits", gen.spec.min_digits)->capture_default_str();
  gen_cmd->add_option("--max-digits", gen.spec.max_digits)->capture_default_str();
  gen_cmd->add_option("--digits", [&](const CLI::results_t& r) {
    gen.spec.min_digits = gen.spec.max_digits = std::stoul(r.front());
    return true;
  }, "fixed digit count (sets min and max)");
  gen_cmd->add_option("--min-scale", gen.spec.min_scale)->capture_default_str();
  gen_cmd->add_option("--max-scale", gen.spec.max_scale)->capture_default_str();
  gen_cmd->add_option("--seed", gen.spec.seed)->capture_default_str();
  gen_cmd->add_option("--noise-sigma", gen.spec.noise_sigma, "dist variant pixel noise")
      ->capture_default_str();
  gen_cmd->add_option("--max-overlap", gen.spec.max_overlap)->capture_default_str();
  gen_cmd->add_option("--idx-images", gen.spec.idx_images, "optional IDX glyph images");
  gen_cmd->add_option("--idx-labels", gen.spec.idx_labels, "optional IDX glyph labels");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train an attribute classifier");
  train_cmd->add_option("--data", tr.data, "dataset directory")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "run directory")->capture_default_str();
  add_model_options(train_cmd, tr.model);
  train_cmd->add_option("--lr", tr.train.lr)->capture_default_str();
  train_cmd->add_option("--beta1", tr.train.beta1)->capture_default_str();
  train_cmd->add_option("--beta2", tr.train.beta2)->capture_default_str();
  train_cmd->add_option("--adam-eps", tr.train.eps)->capture_default_str();
  train_cmd->add_option("--batch", tr.train.batch)->capture_default_str();
  train_cmd->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train_cmd->add_option("--seed", tr.train.seed, "initialization, shuffling and sampling")
      ->capture_default_str();
  train_cmd->add_flag("--log-steps", tr.train.log_steps, "log every optimizer step");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run");
  eval_cmd->add_option("--run", ev.run, "run directory")->capture_default_str();
  eval_cmd->add_option("--data", ev.data, "dataset directory (default: the training data)");
  eval_cmd->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--limit", ev.limit, "evaluate only the first N samples (0: all)")
      ->capture_default_str();

  ExportOptions ex;
  auto* export_cmd = app.add_subcommand("export-masks", "write per-layer masks and attended maps");
  export_cmd->add_option("--run", ex.run, "run directory")->capture_default_str();
  export_cmd->add_option("--data", ex.data, "dataset directory (default: the training data)");
  export_cmd->add_option("--split", ex.split)->capture_default_str();
  export_cmd->add_option("--samples", ex.samples, "sample positions within the split")
      ->delimiter(',')
      ->capture_default_str();
  export_cmd->add_option("--out", ex.out, "output directory (default: <run>/masks)");

  GradcheckOptions gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare gradients with finite differences");
  grad_cmd->add_option("--attention", gc.attention, "attention kind or 'all'")
      ->capture_default_str();
  grad_cmd->add_option("--channels", gc.channels, "input channels of the layer check")
      ->capture_default_str();
  grad_cmd->add_option("--m", gc.m, "rows")->capture_default_str();
  grad_cmd->add_option("--n", gc.n, "columns")->capture_default_str();
  grad_cmd->add_option("--seed", gc.seed)->capture_default_str();
  grad_cmd->add_option("--epsilon", gc.epsilon, "central-difference step")->capture_default_str();
  grad_cmd->add_flag("--model", gc.model, "check a whole miniature classifier instead");
  grad_cmd->add_option("--size", gc.size, "image side for --model")->capture_default_str();
  grad_cmd->add_option("--stacks", gc.stacks, "stacks for --model")->capture_default_str();
  grad_cmd->add_option("--model-channels", gc.model_channels, "channels for --model")
      ->capture_default_str();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // A first pass finds --config and --workdir; the file is then merged in
    // beneath the explicit flags and everything is parsed again.
    {
      CLI::App probe;
      probe.allow_extras();
      probe.set_help_flag();
      probe.add_option("--config", config_file);
      probe.add_option("--workdir", workdir_opt);
      std::vector<std::string> rev(args.rbegin(), args.rend());
      probe.parse(rev);
    }
    workdir = workdir_opt;
    if (!config_file.empty()) args = merge_config(args, read_config(resolve(config_file)));
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen, force, collect_flags(gen_cmd));
    if (*train_cmd) return run_train(tr, force, collect_flags(train_cmd));
    if (*eval_cmd) return run_eval(ev, collect_flags(eval_cmd));
    if (*export_cmd) return run_export(ex, force, collect_flags(export_cmd));
    if (*grad_cmd) return run_gradcheck(gc);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ExportError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
