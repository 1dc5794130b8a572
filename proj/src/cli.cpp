#include "socnet/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "socnet/log.hpp"
#include "socnet/model.hpp"
#include "socnet/recipe.hpp"
#include "socnet/rng.hpp"
#include "socnet/synth.hpp"
#include "socnet/training.hpp"

namespace socnet::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string command;
  std::string data_root = "data";
  std::string dataset = "panasonic";
  std::string recipe;
  double sampling_hz = 1.0;
  std::size_t window = 500;
  std::string arch = "dense-first";
  std::size_t conv_layers = 2;
  std::string noise = "none";
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::size_t batch = 128;
  std::size_t patience = 10;
  std::size_t threads = 0;
  double keep_prob = 1.0;
  double duration_s = kSynthDurationS;
  std::string model_out = "model.cgm";
  std::string report_out = "report.csv";
  std::string source_model;
  std::string model;
  std::string out = "metrics.csv";
  bool oracle = false;
  bool quiet = false;
  bool tw_given = false;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues config_entries(const RunConfig& c) {
  return {{"command", c.command},
          {"data_root", c.data_root},
          {"dataset", c.dataset},
          {"recipe", c.recipe},
          {"hz", fmt::format("{}", c.sampling_hz)},
          {"tw", fmt::format("{}", c.window)},
          {"arch", c.arch},
          {"conv_layers", fmt::format("{}", c.conv_layers)},
          {"noise", c.noise},
          {"seed", fmt::format("{}", c.seed)},
          {"epochs", fmt::format("{}", c.epochs)},
          {"batch", fmt::format("{}", c.batch)},
          {"patience", fmt::format("{}", c.patience)},
          {"keep_prob", fmt::format("{}", c.keep_prob)},
          {"duration_s", fmt::format("{}", c.duration_s)},
          {"source_model", c.source_model},
          {"model", c.model},
          {"oracle", c.oracle ? "1" : "0"}};
}

void atomic_write(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error(fmt::format("failed writing {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return fmt::format("{:016x}", fnv1a64(buf.str()));
}

// Full resolved config, derived values and artifact hashes as key=value lines.
void write_manifest(const RunConfig& c, const KeyValues& extra, const std::vector<fs::path>& artifacts,
                    const fs::path& path) {
  std::string text;
  for (const auto& [k, v] : config_entries(c)) text += fmt::format("{}={}\n", k, v);
  for (const auto& [k, v] : extra) text += fmt::format("{}={}\n", k, v);
  for (const auto& a : artifacts) text += fmt::format("artifact.{}=fnv1a64:{}\n", a.filename().string(), file_hash(a));
  atomic_write(path, text);
}

fs::path manifest_path_for(const fs::path& artifact) {
  fs::path p = artifact;
  p += ".manifest.txt";
  return p;
}

ArchSpec resolve_arch(const RunConfig& c) {
  ArchSpec spec;
  try {
    spec.kind = parse_arch_kind(c.arch);
    spec.conv_layers = c.conv_layers;
    spec.window = c.window;
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return spec;
}

NoiseSpec resolve_noise(const RunConfig& c) {
  try {
    return NoiseSpec{parse_noise_kind(c.noise)};
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

RecipeManifest resolve_manifest(const RunConfig& c) {
  try {
    if (!c.recipe.empty()) return RecipeManifest::load(c.recipe);
    return RecipeManifest::defaults(c.dataset, fs::path(c.data_root) / c.dataset);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void check_common(const RunConfig& c) {
  if (c.batch == 0) throw UsageError("--batch must be positive");
  if (c.epochs == 0) throw UsageError("--epochs must be positive");
  if (!(c.keep_prob > 0.0 && c.keep_prob <= 1.0)) throw UsageError("--keep-prob must be in (0, 1]");
  if (!(c.sampling_hz > 0.0)) throw UsageError("--hz must be positive");
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.batch_size = c.batch;
  t.max_epochs = c.epochs;
  t.patience = std::min(c.patience, c.epochs);
  t.seed = derive_seed(c.seed, "train");
  t.threads = c.threads;
  return t;
}

std::string report_text(const RunConfig& c, const TrainReport& report, const KeyValues& extra) {
  std::string text;
  for (const auto& [k, v] : config_entries(c)) text += fmt::format("# {}={}\n", k, v);
  for (const auto& [k, v] : extra) text += fmt::format("# {}={}\n", k, v);
  text += fmt::format("# stop_epoch={}\n# best_epoch={}\n# best_val_mse={}\n", report.stop_epoch, report.best_epoch,
                      report.best_val_mse);
  return text + report.to_csv();
}

int cmd_synth(const RunConfig& c) {
  try {
    synth_preset(c.dataset);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(c.duration_s * c.sampling_hz >= 1.0)) throw UsageError("--duration times --hz must be at least 1");
  const fs::path root = fs::path(c.data_root) / c.dataset;
  SynthDatasetOptions opts;
  opts.seed = c.seed;
  opts.duration_s = c.duration_s;
  opts.sampling_hz = c.sampling_hz;
  opts.threads = c.threads;
  auto paths = write_synth_dataset(c.dataset, root, opts);
  paths.push_back(root / "recipe.txt");
  write_manifest(c, {{"files", fmt::format("{}", paths.size() - 1)}}, paths, root / "run.manifest.txt");
  fmt::print("wrote {} cycle files under {}\n", paths.size() - 1, root.string());
  return kExitOk;
}

int cmd_train_like(const RunConfig& c, bool transfer) {
  check_common(c);
  const auto spec = resolve_arch(c);
  const auto noise = resolve_noise(c);
  if (transfer && c.source_model.empty()) throw UsageError("transfer requires --source-model");
  const auto manifest = resolve_manifest(c);
  decimation_factor(manifest.native_hz, c.sampling_hz);

  CnnModel model;
  if (transfer) {
    model = transfer_init(spec, fs::path(c.source_model));
  } else {
    Rng init(derive_seed(c.seed, "init"));
    model = CnnModel::build(spec, init);
  }

  RecipeOptions ro;
  ro.sampling_hz = c.sampling_hz;
  ro.window = c.window;
  ro.noise = noise;
  ro.seed = c.seed;
  ro.keep_prob = c.keep_prob;
  auto recipe = assemble_recipe(manifest, ro);
  if (c.keep_prob < 1.0) {
    std::vector<std::string> kept;
    for (const auto& r : recipe.split.train) kept.push_back(to_string(r));
    info(fmt::format("keep_prob={} retained {} training cycles: {}", c.keep_prob, kept.size(), fmt::join(kept, ", ")));
  }
  info(fmt::format("windows: train={} val={} test={}", recipe.train.windows.size(), recipe.val.windows.size(),
                   recipe.test.windows.size()));
  model.set_norm_stats(recipe.norm);

  auto tc = train_config(c);
  if (transfer) tc.freeze = FreezePolicy::DenseFrozen;
  const auto report = train(model, recipe.train.windows, recipe.val.windows, tc);

  KeyValues extra{{"train_windows", fmt::format("{}", recipe.train.windows.size())},
                  {"train_cycles", fmt::format("{}", recipe.split.train.size())}};
  if (!recipe.test.windows.empty()) {
    const auto groups = group_by_cycle(recipe.test.windows);
    const auto metrics = evaluate(model, groups, c.threads);
    extra.emplace_back("test_mae_pct", fmt::format("{}", metrics.aggregate.mae_pct));
    extra.emplace_back("test_max_pct", fmt::format("{}", metrics.aggregate.max_pct));
    info(fmt::format("test MAE {:.3f}% MAX {:.3f}%", metrics.aggregate.mae_pct, metrics.aggregate.max_pct));
  }

  const fs::path model_path = c.model_out;
  const fs::path report_path = c.report_out;
  save_model(model, model_path);
  atomic_write(report_path, report_text(c, report, extra));
  extra.emplace_back("stop_epoch", fmt::format("{}", report.stop_epoch));
  extra.emplace_back("best_epoch", fmt::format("{}", report.best_epoch));
  write_manifest(c, extra, {model_path, report_path}, manifest_path_for(model_path));
  return kExitOk;
}

int cmd_eval(const RunConfig& c) {
  if (c.model.empty()) throw UsageError("eval requires --model");
  const auto noise = resolve_noise(c);
  const auto model = load_model(c.model);
  if (c.tw_given && c.window != model.spec().window) {
    throw SpecMismatchError(fmt::format("--tw {} does not match the model window {}", c.window, model.spec().window));
  }
  const auto manifest = resolve_manifest(c);
  decimation_factor(manifest.native_hz, c.sampling_hz);

  RecipeOptions ro;
  ro.sampling_hz = c.sampling_hz;
  ro.window = model.spec().window;
  ro.noise = noise;
  ro.seed = c.seed;
  ro.norm = model.norm_stats();
  ro.include_train = false;
  ro.include_val = false;
  const auto recipe = assemble_recipe(manifest, ro);
  const auto groups = group_by_cycle(recipe.test.windows);

  MetricsReport metrics;
  if (c.oracle) {
    metrics = evaluate(
        [](std::span<const FeatureWindow> w) {
          std::vector<double> out;
          out.reserve(w.size());
          for (const auto& x : w) out.push_back(x.label);
          return out;
        },
        groups);
  } else {
    metrics = evaluate(model, groups, c.threads);
  }
  const auto csv = metrics.to_csv();
  fmt::print("{}", csv);
  const fs::path out_path = c.out;
  atomic_write(out_path, csv);
  write_manifest(c, {{"tw", fmt::format("{}", model.spec().window)}}, {out_path}, manifest_path_for(out_path));
  return kExitOk;
}

void add_data_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--data-root", c.data_root, "Parent directory of dataset folders");
  sub->add_option("--dataset", c.dataset, "panasonic, lg, synthA or synthB");
  sub->add_option("--recipe", c.recipe, "Recipe manifest file overriding --dataset/--data-root");
  sub->add_option("--hz", c.sampling_hz, "Sampling rate after decimation");
  sub->add_option("--noise", c.noise, "none, a or b");
  sub->add_option("--seed", c.seed, "Root seed");
  sub->add_option("--threads", c.threads, "Worker threads (0: auto)");
}

void add_model_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--tw", c.window, "Window length in samples");
  sub->add_option("--arch", c.arch, "dense-first or merge-first");
  sub->add_option("--conv-layers", c.conv_layers, "Convolution layers (1 or 2)");
  sub->add_option("--epochs", c.epochs, "Maximum epochs");
  sub->add_option("--batch", c.batch, "Mini-batch size");
  sub->add_option("--patience", c.patience, "Early-stopping patience");
  sub->add_option("--keep-prob", c.keep_prob, "Probability of keeping each training cycle");
  sub->add_option("--model-out", c.model_out, "Output model file");
  sub->add_option("--report-out", c.report_out, "Output training report CSV");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  RunConfig c;
  CLI::App app{"Windowed 1D-CNN state-of-charge estimator"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--quiet", c.quiet, "Suppress progress output");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--data-root", c.data_root, "Parent directory of dataset folders");
  synth->add_option("--dataset", c.dataset, "synthA or synthB")->default_str("synthA");
  synth->add_option("--seed", c.seed, "Root seed");
  synth->add_option("--hz", c.sampling_hz, "Sampling rate");
  synth->add_option("--duration", c.duration_s, "Cycle duration in seconds");
  synth->add_option("--threads", c.threads, "Worker threads (0: auto)");

  auto* train_cmd = app.add_subcommand("train", "Train a model from scratch");
  add_data_options(train_cmd, c);
  add_model_options(train_cmd, c);

  auto* transfer = app.add_subcommand("transfer", "Fine-tune a source model's convolutions on a target dataset");
  add_data_options(transfer, c);
  add_model_options(transfer, c);
  transfer->add_option("--source-model", c.source_model, "Source model file")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset's test split");
  add_data_options(eval, c);
  eval->add_option("--model", c.model, "Model file")->required();
  eval->add_option("--tw", c.window, "Expected window length");
  eval->add_option("--out", c.out, "Output metrics CSV");
  eval->add_flag("--oracle", c.oracle, "Score the labels themselves (pipeline self-check)");

  bool synth_dataset_set = false;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    synth_dataset_set = synth->count("--dataset") > 0;
    c.tw_given = eval->count("--tw") > 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  LogSink previous_info;
  if (!c.quiet) previous_info = set_info_sink([](std::string_view m) { fmt::print(stderr, "{}\n", m); });
  int code = kExitFailure;
  try {
    if (*synth) {
      c.command = "synth";
      if (!synth_dataset_set) c.dataset = "synthA";
      code = cmd_synth(c);
    } else if (*train_cmd) {
      c.command = "train";
      code = cmd_train_like(c, false);
    } else if (*transfer) {
      c.command = "transfer";
      code = cmd_train_like(c, true);
    } else {
      c.command = "eval";
      code = cmd_eval(c);
    }
  } catch (const SpecMismatchError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    code = kExitSpecMismatch;
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    code = kExitUsage;
  } catch (const MissingCyclesError& e) {
    fmt::print(stderr, "error: {} cycle file(s) missing:\n", e.missing().size());
    for (const auto& m : e.missing()) fmt::print(stderr, "  {}\n", m);
    code = kExitMissingCycles;
  } catch (const NonFiniteLossError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    code = kExitNonFiniteLoss;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    code = kExitFailure;
  }
  if (!c.quiet) set_info_sink(std::move(previous_info));
  return code;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace socnet::cli
