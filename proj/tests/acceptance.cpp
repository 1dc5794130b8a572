// Acceptance suite: one PASS/FAIL/SKIP line per criterion, exit status 1 on any FAIL.
// Usage: socnet_acceptance [-v] [criterion ids...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "grad_check.hpp"
#include "socnet/data.hpp"
#include "socnet/layers.hpp"
#include "socnet/log.hpp"
#include "socnet/model.hpp"
#include "socnet/recipe.hpp"
#include "socnet/rng.hpp"
#include "socnet/synth.hpp"
#include "socnet/training.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace socnet;
using socnet::testing::TempDir;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

constexpr std::size_t kSynthWindow = 100;

ArchSpec synth_spec() {
  ArchSpec spec;
  spec.kind = ArchKind::DenseFirst;
  spec.conv_layers = 2;
  spec.window = kSynthWindow;
  return spec;
}

TrainConfig standard_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.max_epochs = 50;
  tc.patience = 10;
  tc.seed = derive_seed(seed, "train");
  return tc;
}

// Synthetic datasets and the synthA source model, built on first use.
class SynthFixture {
 public:
  SynthFixture() : dir_("acceptance") {}

  const Recipe& recipe(const std::string& preset, double keep_prob = 1.0) {
    const auto key = fmt::format("{}@{}", preset, keep_prob);
    auto it = recipes_.find(key);
    if (it != recipes_.end()) return *it->second;
    const auto root = dir_.path() / preset;
    if (!fs::exists(root / "recipe.txt")) write_synth_dataset(preset, root, SynthDatasetOptions{});
    RecipeOptions ro;
    ro.sampling_hz = 1.0;
    ro.window = kSynthWindow;
    ro.keep_prob = keep_prob;
    ro.seed = 0;
    auto recipe = std::make_unique<Recipe>(assemble_recipe(RecipeManifest::load(root / "recipe.txt"), ro));
    return *recipes_.emplace(key, std::move(recipe)).first->second;
  }

  struct SourceRun {
    CnnModel model;
    TrainReport report;
    MetricsReport metrics;
    double seconds = 0.0;
    std::size_t train_windows = 0;
  };

  // Dense-first/2-conv model trained from scratch on synthA with the standard configuration.
  const SourceRun& source() {
    if (source_) return *source_;
    const auto start = Clock::now();
    const auto& data = recipe("synthA");
    Rng init(derive_seed(0, "init"));
    SourceRun run;
    run.model = CnnModel::build(synth_spec(), init);
    run.model.set_norm_stats(data.norm);
    run.report = train(run.model, data.train.windows, data.val.windows, standard_config(0));
    run.metrics = evaluate(run.model, group_by_cycle(data.test.windows));
    run.seconds = seconds_since(start);
    run.train_windows = data.train.windows.size();
    source_ = std::move(run);
    return *source_;
  }

  CnnModel transfer_model(const Recipe& target) {
    auto model = transfer_init(synth_spec(), source().model);
    model.set_norm_stats(target.norm);
    return model;
  }

 private:
  TempDir dir_;
  std::map<std::string, std::unique_ptr<Recipe>> recipes_;
  std::optional<SourceRun> source_;
};

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (auto kind : {ArchKind::DenseFirst, ArchKind::MergeFirst}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ArchSpec spec;
      spec.kind = kind;
      spec.conv_layers = 2;
      spec.window = 20;
      Rng init(seed);
      auto model = CnnModel::build(spec, init);
      Rng data(derive_seed(seed, "window"));
      std::vector<double> window(spec.window * kFeatureChannels);
      for (auto& v : window) v = data.gaussian(0.0, 1.0);
      // Shift the final bias so the ReLU sits at pre-activation 1 under the checked mask.
      Rng mask(derive_seed(seed, "mask"));
      model.params()[model.final_index()].biases[0] += 1.0 - forward(model, window, &mask, true).final_pre;
      const auto r = socnet::testing::whole_model_grad_check(model, window, derive_seed(seed, "mask"));
      if (!(r.output > 0.0)) return {Status::Fail, fmt::format("{} seed {}: inactive output", to_string(kind), seed)};
      worst = std::max(worst, r.max_rel_err);
      checked += r.checked;
    }
  }
  return verdict(worst < 1e-4, fmt::format("max relative error {:.3e} (< 1e-4) over {} parameters, 2 kinds x 5 seeds",
                                           worst, checked));
}

Outcome oracle_equivalence() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + rng.below(300);
    const std::size_t channels = 1 + rng.below(16);
    const std::size_t pick = rng.below(3);
    const std::size_t filters = pick == 0 ? 16 : pick == 1 ? 8 : 1 + rng.below(20);
    const std::size_t width = 1 + rng.below(len);
    const auto input = socnet::testing::random_tensor({len, channels}, rng);
    LayerParams conv{socnet::testing::random_tensor({filters, width, channels}, rng),
                     socnet::testing::random_tensor({filters}, rng)};
    worst = std::max(worst, socnet::testing::max_abs_diff(conv1d_forward(input, conv),
                                                          socnet::testing::naive_conv1d(input, conv)));

    const std::size_t pool = 1 + rng.below(20);
    worst = std::max(worst, socnet::testing::max_abs_diff(avgpool1d_forward(input, pool),
                                                          socnet::testing::naive_avgpool(input, pool)));

    const std::size_t outputs = 1 + rng.below(80);
    const auto flat = input.reshaped({len * channels});
    LayerParams dense{socnet::testing::random_tensor({outputs, len * channels}, rng),
                      socnet::testing::random_tensor({outputs}, rng)};
    worst = std::max(worst, socnet::testing::max_abs_diff(dense_forward(flat, dense),
                                                          socnet::testing::naive_dense(flat, dense)));
  }
  return verdict(worst <= 1e-12, fmt::format("max |diff| {:.3e} (<= 1e-12) on 100 random shapes", worst));
}

Outcome adam_closed_form() {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    AdamConfig cfg;
    cfg.learning_rate = rng.uniform(1e-4, 1e-1);
    cfg.beta1 = rng.uniform(0.5, 0.99);
    cfg.beta2 = rng.uniform(0.9, 0.9999);
    cfg.epsilon = trial % 2 == 0 ? 1e-8 : rng.uniform(1e-8, 1e-2);
    const double theta = rng.uniform(-2.0, 2.0);
    const double g = trial == 0 ? 0.0 : rng.uniform(-3.0, 3.0);

    std::vector<LayerParams> params{{Tensor::vector({theta}), Tensor::vector({0.0}), true}};
    std::vector<ParamGrad> grads{{Tensor::vector({g}), Tensor::vector({0.0})}};
    auto state = AdamState::for_params(params);
    adam_step(params, grads, state, cfg);

    const double m_hat = ((1 - cfg.beta1) * g) / (1 - cfg.beta1);
    const double v_hat = ((1 - cfg.beta2) * g * g) / (1 - cfg.beta2);
    const double expected = theta - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    worst = std::max(worst, std::abs(params[0].weights[0] - expected));
  }
  return verdict(worst <= 1e-12, fmt::format("max |diff| {:.3e} (<= 1e-12) over 200 scalar first steps", worst));
}

Outcome noise_b_bounds() {
  Rng rng(11);
  double lo = 1.0, hi = 0.0;
  std::size_t n = 0;
  for (int seq = 0; seq < 100; ++seq) {
    const auto params = draw_noise_b_params(rng);
    for (double e : noise_b_sequence(10000, params, rng)) {
      lo = std::min(lo, e);
      hi = std::max(hi, e);
      ++n;
    }
  }
  const double at_zero = noise_b_epsilon(0.0);
  const bool ok = n == 1000000 && lo >= 0.4255 && hi <= 0.5745 && at_zero == 0.5;
  return verdict(ok, fmt::format("{} values in [{:.6f}, {:.6f}] (bounds [0.4255, 0.5745]), eps(0) = {}", n, lo, hi,
                                 at_zero));
}

Outcome noise_a_statistics() {
  FeatureCycle cycle;
  cycle.cycle_id = "stat";
  const std::size_t rows = 33334;
  Rng fill(3);
  cycle.features.resize(rows * kFeatureChannels);
  cycle.soc.resize(rows);
  for (auto& v : cycle.features) v = fill.gaussian(0.0, 1.0);
  for (auto& s : cycle.soc) s = fill.uniform();
  const auto before = cycle;

  Rng rng(5);
  inject_noise_a(cycle, rng);
  double sum = 0.0, sq = 0.0;
  const auto n = static_cast<double>(cycle.features.size());
  for (std::size_t i = 0; i < cycle.features.size(); ++i) {
    const double d = cycle.features[i] - before.features[i];
    sum += d;
    sq += d * d;
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1);
  const bool labels_same = std::memcmp(cycle.soc.data(), before.soc.data(), rows * sizeof(double)) == 0;
  const bool ok = std::abs(var - 0.01) <= 0.001 && labels_same;
  return verdict(ok, fmt::format("sample variance {:.6f} over {} elements (0.01 +/- 10%), labels {}", var,
                                 cycle.features.size(), labels_same ? "bit-unchanged" : "CHANGED"));
}

Outcome early_stopping_semantics() {
  struct Case {
    std::vector<double> losses;
    std::size_t expected_stop;  // 0: never stops
    std::size_t expected_best;
  };
  std::vector<double> plateau{5, 4, 3};
  plateau.insert(plateau.end(), 10, 3.0);  // equal losses count as no decrease
  std::vector<double> rebound{5, 4, 3, 4, 4, 4, 4, 4, 4, 4, 4, 2.9};
  rebound.insert(rebound.end(), 10, 3.5);
  std::vector<double> improving;
  for (int i = 0; i < 40; ++i) improving.push_back(1.0 / (i + 1));
  std::vector<double> flat(11, 1.0);
  std::vector<double> nine_misses{1.0};
  nine_misses.insert(nine_misses.end(), 9, 2.0);
  const std::vector<Case> cases{
      {plateau, 13, 3}, {rebound, 22, 12}, {improving, 0, 40}, {flat, 11, 1}, {nine_misses, 0, 1}};

  for (std::size_t c = 0; c < cases.size(); ++c) {
    EarlyStopping stop(10);
    std::size_t stopped = 0;
    for (std::size_t e = 0; e < cases[c].losses.size(); ++e) {
      if (stop.observe(cases[c].losses[e])) {
        stopped = e + 1;
        break;
      }
    }
    if (stopped != cases[c].expected_stop || stop.best_epoch() != cases[c].expected_best) {
      return {Status::Fail, fmt::format("sequence {}: stopped at {} (expected {}), best {} (expected {})", c, stopped,
                                        cases[c].expected_stop, stop.best_epoch(), cases[c].expected_best)};
    }
  }
  return {Status::Pass, fmt::format("{} stubbed sequences stop at the expected epoch with patience 10", cases.size())};
}

Outcome synthetic_end_to_end(SynthFixture& fx) {
  const auto& run = fx.source();
  const double mae = run.metrics.aggregate.mae_pct;
  const bool ok = run.train_windows >= 20000 && run.report.stop_epoch <= 50 && mae <= 2.0 && run.seconds < 900.0;
  return verdict(ok, fmt::format("test MAE {:.3f}% (<= 2.0%), {} train windows (>= 20000), stopped at epoch {} "
                                 "(best {}), {:.0f} s (< 900 s)",
                                 mae, run.train_windows, run.report.stop_epoch, run.report.best_epoch, run.seconds));
}

Outcome transfer_freezing(SynthFixture& fx) {
  const auto& target = fx.recipe("synthB");
  const auto& source = fx.source().model;
  auto model = fx.transfer_model(target);
  auto tc = standard_config(1);
  tc.max_epochs = 5;
  tc.patience = 5;
  tc.freeze = FreezePolicy::DenseFrozen;
  train(model, target.train.windows, target.val.windows, tc);

  std::size_t frozen_total = 0, frozen_same = 0, conv_total = 0, conv_changed = 0;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& now = model.params()[i];
    const auto& was = source.params()[i];
    for (int which = 0; which < 2; ++which) {
      const auto a = which == 0 ? now.weights.data() : now.biases.data();
      const auto b = which == 0 ? was.weights.data() : was.biases.data();
      for (std::size_t k = 0; k < a.size(); ++k) {
        const bool same = bits_equal(a[k], b[k]);
        if (model.role(i) == LayerRole::Conv) {
          ++conv_total;
          conv_changed += !same;
        } else {
          ++frozen_total;
          frozen_same += same;
        }
      }
    }
  }
  const double changed = static_cast<double>(conv_changed) / static_cast<double>(conv_total);
  const bool ok = frozen_same == frozen_total && changed >= 0.99;
  return verdict(ok, fmt::format("dense/final {}/{} bit-identical, conv {:.2f}% changed (>= 99%) after 5 epochs",
                                 frozen_same, frozen_total, 100.0 * changed));
}

std::size_t epochs_to_reach(const TrainReport& report, double threshold) {
  for (const auto& e : report.epochs) {
    if (e.val_mse <= threshold) return e.epoch;
  }
  return report.epochs.size() + 1;
}

template <typename T>
T median3(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome transfer_speedup(SynthFixture& fx) {
  constexpr std::size_t kEpochs = 15;
  const auto& target = fx.recipe("synthB");
  std::vector<std::size_t> scratch_epochs, transfer_epochs;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto tc = standard_config(seed);
    tc.max_epochs = kEpochs;
    tc.patience = kEpochs;

    Rng init(derive_seed(seed, "init"));
    auto scratch = CnnModel::build(synth_spec(), init);
    scratch.set_norm_stats(target.norm);
    const auto scratch_report = train(scratch, target.train.windows, target.val.windows, tc);

    auto transfer = fx.transfer_model(target);
    tc.freeze = FreezePolicy::DenseFrozen;
    const auto transfer_report = train(transfer, target.train.windows, target.val.windows, tc);

    const double threshold = 1.5 * scratch_report.best_val_mse;
    scratch_epochs.push_back(epochs_to_reach(scratch_report, threshold));
    transfer_epochs.push_back(epochs_to_reach(transfer_report, threshold));
    per_seed += fmt::format(" seed{}: {} vs {} (threshold {:.3e});", seed, transfer_epochs.back(),
                            scratch_epochs.back(), threshold);
  }
  const auto t = median3(transfer_epochs), s = median3(scratch_epochs);
  return verdict(t < s, fmt::format("median epochs to 1.5x scratch MSE: transfer {} < scratch {};{}", t, s, per_seed));
}

Outcome transfer_data_efficiency(SynthFixture& fx) {
  const auto& full = fx.recipe("synthB");
  Rng init(derive_seed(0, "init"));
  auto scratch = CnnModel::build(synth_spec(), init);
  scratch.set_norm_stats(full.norm);
  train(scratch, full.train.windows, full.val.windows, standard_config(0));
  const double scratch_mae = evaluate(scratch, group_by_cycle(full.test.windows)).aggregate.mae_pct;

  const auto& part = fx.recipe("synthB", 0.4);
  auto transfer = fx.transfer_model(part);
  auto tc = standard_config(0);
  tc.freeze = FreezePolicy::DenseFrozen;
  train(transfer, part.train.windows, part.val.windows, tc);
  const double transfer_mae = evaluate(transfer, group_by_cycle(part.test.windows)).aggregate.mae_pct;

  const bool ok = transfer_mae <= scratch_mae + 1.5;
  return verdict(ok, fmt::format("transfer on {}/{} cycles MAE {:.3f}% vs full scratch {:.3f}% (within 1.5%)",
                                 part.split.train.size(), full.split.train.size(), transfer_mae, scratch_mae));
}

Outcome serialization_round_trip() {
  const TempDir dir("acceptance_io");
  std::size_t compared = 0;
  for (auto kind : {ArchKind::DenseFirst, ArchKind::MergeFirst}) {
    ArchSpec spec = synth_spec();
    spec.kind = kind;
    Rng rng(derive_seed(99, to_string(kind)));
    auto model = CnnModel::build(spec, rng);
    model.set_norm_stats(NormStats{{3.7, 1.2, 24.0}, {0.2, 2.5, 3.0}});
    std::vector<std::vector<double>> windows(100, std::vector<double>(spec.window * kFeatureChannels));
    for (auto& window : windows) {
      for (auto& v : window) v = rng.gaussian(0.0, 1.0);
    }
    model.params()[model.final_index()].biases[0] += 0.5 - forward(model, windows[0], nullptr, false).final_pre;
    const auto path = dir.path() / fmt::format("{}.cgm", to_string(kind));
    save_model(model, path);
    const auto loaded = load_model(path);
    if (!(loaded.spec() == model.spec()) || !(loaded.norm_stats() == model.norm_stats())) {
      return {Status::Fail, fmt::format("{}: spec or norm stats differ after reload", to_string(kind))};
    }
    std::size_t positive = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const double a = predict(model, windows[w]);
      const double b = predict(loaded, windows[w]);
      if (!bits_equal(a, b)) {
        return {Status::Fail, fmt::format("{} window {}: {:.17g} != {:.17g}", to_string(kind), w, a, b)};
      }
      positive += a > 0.0;
      ++compared;
    }
    if (positive == 0) return {Status::Fail, fmt::format("{}: all predictions zero", to_string(kind))};
  }
  return {Status::Pass, fmt::format("{} predictions bit-identical after save/load (both kinds)", compared)};
}

double cycle_mae(const MetricsReport& report, const std::string& cycle_id) {
  double weighted = 0.0;
  std::size_t samples = 0;
  for (const auto& row : report.rows) {
    if (row.cycle_id != cycle_id) continue;
    weighted += row.mae_pct * static_cast<double>(row.samples);
    samples += row.samples;
  }
  return samples == 0 ? std::nan("") : weighted / static_cast<double>(samples);
}

MetricsReport public_run(const std::string& dataset, const fs::path& root) {
  auto manifest = RecipeManifest::defaults(dataset, root);
  if (fs::exists(root / "recipe.txt")) manifest = RecipeManifest::load(root / "recipe.txt");
  RecipeOptions ro;
  ro.sampling_hz = 1.0;
  ro.window = 500;
  const auto recipe = assemble_recipe(manifest, ro);
  ArchSpec spec;
  spec.window = 500;
  Rng init(derive_seed(0, "init"));
  auto model = CnnModel::build(spec, init);
  model.set_norm_stats(recipe.norm);
  auto tc = standard_config(0);
  tc.max_epochs = 100;
  train(model, recipe.train.windows, recipe.val.windows, tc);
  return evaluate(model, group_by_cycle(recipe.test.windows));
}

Outcome public_reproduction() {
  const char* pana = std::getenv("SOCNET_PANASONIC_ROOT");
  const char* lg = std::getenv("SOCNET_LG_ROOT");
  if (pana == nullptr && lg == nullptr) {
    return {Status::Skip, "set SOCNET_PANASONIC_ROOT and/or SOCNET_LG_ROOT to run (hours of CPU time)"};
  }
  bool ok = true;
  std::string detail;
  if (pana != nullptr) {
    const auto m = public_run("panasonic", pana);
    const double us06 = cycle_mae(m, "US06"), hwfet = cycle_mae(m, "HWFET");
    ok = ok && us06 <= 2.5 && hwfet <= 2.0;
    detail += fmt::format("panasonic US06 {:.3f}% (<= 2.5%), HWFET {:.3f}% (<= 2.0%); ", us06, hwfet);
  }
  if (lg != nullptr) {
    const auto m = public_run("lg", lg);
    const double us06 = cycle_mae(m, "US06");
    ok = ok && us06 <= 2.0;
    detail += fmt::format("lg US06 {:.3f}% (<= 2.0%)", us06);
  }
  return verdict(ok, detail);
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  bool verbose = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "-v") == 0) {
      verbose = true;
    } else {
      selected.insert(std::atoi(argv[i]));
    }
  }
  const ScopedWarningSink quiet_warnings([verbose](std::string_view msg) {
    if (verbose) fmt::print(stderr, "warning: {}\n", msg);
  });
  if (verbose) set_info_sink([](std::string_view msg) { fmt::print(stderr, "  {}\n", msg); });

  SynthFixture fx;
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradient_correctness},
      {2, "layer oracle equivalence", oracle_equivalence},
      {3, "Adam closed form", adam_closed_form},
      {4, "Noise B bounds", noise_b_bounds},
      {5, "Noise A statistics", noise_a_statistics},
      {6, "early stopping semantics", early_stopping_semantics},
      {7, "synthetic end-to-end", [&] { return synthetic_end_to_end(fx); }},
      {8, "transfer freezing", [&] { return transfer_freezing(fx); }},
      {9, "transfer speedup", [&] { return transfer_speedup(fx); }},
      {10, "transfer data efficiency", [&] { return transfer_data_efficiency(fx); }},
      {11, "serialization round-trip", serialization_round_trip},
      {12, "public dataset reproduction", public_reproduction},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && selected.count(c.id) == 0) continue;
    const auto start = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {Status::Fail, fmt::format("exception: {}", e.what())};
    }
    const char* tag = out.status == Status::Pass ? "PASS" : out.status == Status::Fail ? "FAIL" : "SKIP";
    failures += out.status == Status::Fail;
    fmt::print("{} [{:>2}] {}: {} ({:.1f} s)\n", tag, c.id, c.name, out.detail, seconds_since(start));
    std::fflush(stdout);
  }
  fmt::print("{} failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
