// socnet/training.hpp - objective, optimizer, training loop, transfer and evaluation
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "socnet/data.hpp"
#include "socnet/model.hpp"

namespace socnet {

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SpecMismatchError : public SpecError {
 public:
  using SpecError::SpecError;
};

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d value / d pred
};

// (1/L) sum (pred - target)^2 with gradient 2 (pred - target) / L.
LossResult mse_loss(std::span<const double> pred, std::span<const double> target);
// 100 * mean |pred - target| and 100 * max |pred - target| (SoC fractions -> percent).
double mae_percent(std::span<const double> pred, std::span<const double> target);
double max_error_percent(std::span<const double> pred, std::span<const double> target);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<ParamGrad> first;
  std::vector<ParamGrad> second;
  std::uint64_t step = 0;

  static AdamState for_params(std::span<const LayerParams> params);
};

// Bias-corrected Adam. Parameters with trainable == false are left
// bit-unchanged (their moments too); the step counter always advances.
void adam_step(std::span<LayerParams> params, std::span<const ParamGrad> grads, AdamState& state,
               const AdamConfig& config);

// Patience counter on validation loss. Any epoch that does not strictly
// lower the best value so far counts against patience.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Records one epoch's validation loss; true once patience is exhausted.
  bool observe(double val_loss);

  bool improved_last() const noexcept { return improved_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }  // 1-based, 0 before any epoch
  double best() const noexcept { return best_; }
  std::size_t epochs_seen() const noexcept { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

enum class FreezePolicy { None, DenseFrozen };

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  AdamConfig adam;
  double l2_coeff = 1e-4;
  std::uint64_t seed = 0;
  FreezePolicy freeze = FreezePolicy::None;
  std::size_t threads = 0;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t stop_epoch = 0;
  std::size_t best_epoch = 0;  // the returned parameters are this epoch's
  double best_val_mse = std::numeric_limits<double>::infinity();
  AdamConfig adam;
  std::size_t batch_size = 0;
  double l2_coeff = 0.0;

  // epoch,train_mse,val_mse
  std::string to_csv() const;
};

// Mini-batch Adam on MSE plus the final-layer L2 penalty. Shuffles every
// epoch from `config.seed`, keeps the last partial batch, evaluates validation
// MSE each epoch and leaves `model` at the best-validation parameters.
TrainReport train(CnnModel& model, std::span<const FeatureWindow> train_windows,
                  std::span<const FeatureWindow> val_windows, const TrainConfig& config);

// Copies an identical-architecture source model and freezes its dense blocks
// and final neuron; convolution parameters stay trainable.
CnnModel transfer_init(const ArchSpec& target, const CnnModel& source);
CnnModel transfer_init(const ArchSpec& target, const std::filesystem::path& source_model);

struct WindowGroup {
  std::string cycle_id;
  double ambient_c = 0.0;
  std::span<const FeatureWindow> windows;
};

// Contiguous runs of windows sharing a source cycle.
std::vector<WindowGroup> group_by_cycle(std::span<const FeatureWindow> windows);

struct MetricsRow {
  std::string cycle_id;
  double ambient_c = 0.0;
  std::size_t samples = 0;
  double mae_pct = 0.0;
  double max_pct = 0.0;
  double mse = 0.0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  MetricsRow aggregate;

  // cycle,temp_c,mae_pct,max_pct,mse with a final "ALL" row.
  std::string to_csv() const;
};

using Predictor = std::function<std::vector<double>(std::span<const FeatureWindow>)>;

MetricsReport evaluate(const Predictor& predictor, std::span<const WindowGroup> groups);
MetricsReport evaluate(const CnnModel& model, std::span<const WindowGroup> groups, std::size_t threads = 0);

}  // namespace socnet
