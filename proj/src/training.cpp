#include "socnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "socnet/log.hpp"
#include "socnet/parallel.hpp"

namespace socnet {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> target, const char* what) {
  if (pred.empty() || pred.size() != target.size()) {
    throw std::invalid_argument(
        fmt::format("{}: need equal nonempty vectors, got {} and {}", what, pred.size(), target.size()));
  }
}

std::string fmt_real(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

LossResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "mse_loss");
  const double n = static_cast<double>(pred.size());
  LossResult r;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    r.value += e * e;
    r.grad[i] = 2.0 * e / n;
  }
  r.value /= n;
  return r;
}

double mae_percent(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return 100.0 * s / static_cast<double>(pred.size());
}

double max_error_percent(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "max_err");
  double m = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) m = std::max(m, std::abs(pred[i] - target[i]));
  return 100.0 * m;
}

AdamState AdamState::for_params(std::span<const LayerParams> params) {
  AdamState s;
  for (const auto& p : params) {
    s.first.push_back(zero_grad_like(p));
    s.second.push_back(zero_grad_like(p));
  }
  return s;
}

void adam_step(std::span<LayerParams> params, std::span<const ParamGrad> grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].weights.same_shape(params[i].weights) || !grads[i].biases.same_shape(params[i].biases) ||
        !state.first[i].weights.same_shape(params[i].weights) || !state.first[i].biases.same_shape(params[i].biases)) {
      throw ShapeError(fmt::format("adam_step: shape mismatch at parameter {}", i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const double b1 = config.beta1;
  const double b2 = config.beta2;

  auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
    auto pd = p.data();
    auto gd = g.data();
    auto md = m.data();
    auto vd = v.data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      md[j] = b1 * md[j] + (1.0 - b1) * gd[j];
      vd[j] = b2 * vd[j] + (1.0 - b2) * gd[j] * gd[j];
      const double mhat = md[j] / c1;
      const double vhat = vd[j] / c2;
      pd[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    update(params[i].weights, grads[i].weights, state.first[i].weights, state.second[i].weights);
    update(params[i].biases, grads[i].biases, state.first[i].biases, state.second[i].biases);
  }
}

bool EarlyStopping::observe(double val_loss) {
  ++epochs_;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epochs_;
    since_best_ = 0;
    improved_ = true;
  } else {
    ++since_best_;
    improved_ = false;
  }
  return since_best_ >= patience_;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience > max_epochs) throw std::invalid_argument("patience must not exceed max_epochs");
  if (!(l2_coeff >= 0.0)) throw std::invalid_argument("l2_coeff must be >= 0");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_mse,val_mse\n";
  for (const auto& e : epochs) out += fmt::format("{},{},{}\n", e.epoch, fmt_real(e.train_mse), fmt_real(e.val_mse));
  return out;
}

TrainReport train(CnnModel& model, std::span<const FeatureWindow> train_windows,
                  std::span<const FeatureWindow> val_windows, const TrainConfig& config) {
  config.validate();
  if (train_windows.empty()) throw std::invalid_argument("train: no training windows");
  if (val_windows.empty()) throw std::invalid_argument("train: no validation windows");
  if (config.freeze == FreezePolicy::DenseFrozen) {
    model.set_trainable(LayerRole::Dense, false);
    model.set_trainable(LayerRole::Final, false);
  }

  TrainReport report;
  report.adam = config.adam;
  report.batch_size = config.batch_size;
  report.l2_coeff = config.l2_coeff;

  const std::size_t n = train_windows.size();
  const std::size_t threads = resolve_threads(config.threads);
  const std::uint64_t dropout_root = derive_seed(config.seed, "dropout");
  const std::uint64_t shuffle_root = derive_seed(config.seed, "shuffle");

  AdamState adam = AdamState::for_params(model.params());
  EarlyStopping stopper(config.patience);
  std::vector<LayerParams> best(model.params().begin(), model.params().end());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t slots_needed = std::min(config.batch_size, n);
  std::vector<GradientSet> slots(slots_needed, zero_gradients(model));
  std::vector<double> sq(slots_needed);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(shuffle_root, epoch));
    shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t epoch_dropout = derive_seed(dropout_root, epoch);

    double sq_total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      const double inv_count = 1.0 / static_cast<double>(count);
      parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
          for (auto& g : slots[s]) {
            g.weights.fill(0.0);
            g.biases.fill(0.0);
          }
          const auto& w = train_windows[order[start + s]];
          Rng dropout_rng(derive_seed(epoch_dropout, start + s));
          const auto cache = forward(model, w.features, &dropout_rng, true);
          const double err = cache.output - w.label;
          sq[s] = err * err;
          backward_accumulate(model, cache, 2.0 * err * inv_count, slots[s]);
        }
      });
      double batch_sq = 0.0;
      for (std::size_t s = 0; s < count; ++s) batch_sq += sq[s];
      if (!std::isfinite(batch_sq)) {
        throw NonFiniteLossError(fmt::format("non-finite training loss at epoch {}, batch starting at {}", epoch, start));
      }
      sq_total += batch_sq;
      // Fixed reduction order (sample position) keeps results independent of threading.
      for (std::size_t s = 1; s < count; ++s) accumulate(slots[0], slots[s]);
      add_final_l2_gradient(model, config.l2_coeff, slots[0]);
      adam_step(model.params(), slots[0], adam, config.adam);
    }

    const auto preds = predict_all(model, val_windows, threads);
    double val_sq = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const double e = preds[i] - val_windows[i].label;
      val_sq += e * e;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = sq_total / static_cast<double>(n);
    rec.val_mse = val_sq / static_cast<double>(preds.size());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.val_mse)) {
      throw NonFiniteLossError(fmt::format("non-finite validation loss at epoch {}", epoch));
    }
    report.epochs.push_back(rec);
    info(fmt::format("epoch {:3d}  train_mse {:.6e}  val_mse {:.6e}  ({:.1f} s)", epoch, rec.train_mse, rec.val_mse,
                     rec.seconds));
    if (config.on_epoch) config.on_epoch(rec);

    const bool stop = stopper.observe(rec.val_mse);
    if (stopper.improved_last()) std::copy(model.params().begin(), model.params().end(), best.begin());
    report.stop_epoch = epoch;
    if (stop) break;
  }

  std::copy(best.begin(), best.end(), model.params().begin());
  report.best_epoch = stopper.best_epoch();
  report.best_val_mse = stopper.best();
  return report;
}

CnnModel transfer_init(const ArchSpec& target, const CnnModel& source) {
  target.validate();
  if (!(target == source.spec())) {
    const auto& s = source.spec();
    throw SpecMismatchError(fmt::format(
        "source model ({}, {} conv layers, window {}) does not match target ({}, {} conv layers, window {})",
        to_string(s.kind), s.conv_layers, s.window, to_string(target.kind), target.conv_layers, target.window));
  }
  CnnModel model = source;
  model.set_trainable(LayerRole::Conv, true);
  model.set_trainable(LayerRole::Dense, false);
  model.set_trainable(LayerRole::Final, false);
  return model;
}

CnnModel transfer_init(const ArchSpec& target, const std::filesystem::path& source_model) {
  return transfer_init(target, load_model(source_model));
}

std::vector<WindowGroup> group_by_cycle(std::span<const FeatureWindow> windows) {
  std::vector<WindowGroup> groups;
  std::size_t start = 0;
  while (start < windows.size()) {
    std::size_t end = start + 1;
    while (end < windows.size() && windows[end].source == windows[start].source) ++end;
    const auto* src = windows[start].source;
    groups.push_back({src ? src->cycle_id : std::string("?"), src ? src->ambient_c : 0.0,
                      windows.subspan(start, end - start)});
    start = end;
  }
  return groups;
}

std::string MetricsReport::to_csv() const {
  std::string out = "cycle,temp_c,mae_pct,max_pct,mse\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.cycle_id, r.ambient_c, fmt_real(r.mae_pct), fmt_real(r.max_pct),
                       fmt_real(r.mse));
  }
  out += fmt::format("ALL,all,{},{},{}\n", fmt_real(aggregate.mae_pct), fmt_real(aggregate.max_pct),
                     fmt_real(aggregate.mse));
  return out;
}

MetricsReport evaluate(const Predictor& predictor, std::span<const WindowGroup> groups) {
  MetricsReport report;
  report.aggregate.cycle_id = "ALL";
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double max_abs = 0.0;
  std::size_t total = 0;
  for (const auto& g : groups) {
    if (g.windows.empty()) {
      warn(fmt::format("evaluate: group {} at {} C has no windows; skipped", g.cycle_id, g.ambient_c));
      continue;
    }
    const auto pred = predictor(g.windows);
    if (pred.size() != g.windows.size()) throw std::logic_error("evaluate: predictor returned the wrong count");
    std::vector<double> target(g.windows.size());
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = g.windows[i].label;

    MetricsRow row;
    row.cycle_id = g.cycle_id;
    row.ambient_c = g.ambient_c;
    row.samples = pred.size();
    row.mae_pct = mae_percent(pred, target);
    row.max_pct = max_error_percent(pred, target);
    row.mse = mse_loss(pred, target).value;
    report.rows.push_back(row);

    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = std::abs(pred[i] - target[i]);
      abs_sum += e;
      sq_sum += e * e;
      max_abs = std::max(max_abs, e);
    }
    total += pred.size();
  }
  if (total > 0) {
    report.aggregate.samples = total;
    report.aggregate.mae_pct = 100.0 * abs_sum / static_cast<double>(total);
    report.aggregate.max_pct = 100.0 * max_abs;
    report.aggregate.mse = sq_sum / static_cast<double>(total);
  }
  return report;
}

MetricsReport evaluate(const CnnModel& model, std::span<const WindowGroup> groups, std::size_t threads) {
  for (const auto& g : groups) {
    for (const auto& w : g.windows) {
      if (w.features.size() != model.spec().window * kFeatureChannels) {
        throw ShapeError(fmt::format("evaluate: windows of {} rows do not match model window {}",
                                     w.features.size() / kFeatureChannels, model.spec().window));
      }
    }
  }
  return evaluate([&](std::span<const FeatureWindow> ws) { return predict_all(model, ws, threads); }, groups);
}

}  // namespace socnet
