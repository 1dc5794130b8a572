// socnet/model.hpp - windowed 1-D CNN state-of-charge estimator
//
// Three parallel convolution branches read the same [t_w x 3] window. Each
// branch stacks one or two valid convolutions (leaky ReLU, dropout) and one
// average pooling layer. The head is either
//   dense-first: one dense block per branch, concatenated into the final neuron
//   merge-first: branches flattened and concatenated into one dense block
// and the final neuron applies ReLU, so every prediction is >= 0.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "socnet/data.hpp"
#include "socnet/layers.hpp"
#include "socnet/rng.hpp"
#include "socnet/tensor.hpp"

namespace socnet {

inline constexpr std::size_t kBranches = 3;

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class ArchKind { MergeFirst, DenseFirst };

std::string_view to_string(ArchKind kind);
ArchKind parse_arch_kind(std::string_view text);

struct ArchSpec {
  ArchKind kind = ArchKind::DenseFirst;
  std::size_t conv_layers = 2;
  std::size_t window = 500;
  std::size_t filters_l1 = 16;
  std::size_t filters_l2 = 8;
  std::size_t dense_units = 64;
  std::size_t pool_width = 10;
  double dropout_rate = 0.2;
  double final_l2 = 1e-4;
  double leaky_slope = 0.01;

  // Throws SpecError for a window not divisible by 10 or an unsupported combination.
  void validate() const;
  // Branch widths and channel counts of convolution depth 0 or 1.
  Conv1dBranchSpec conv_layer(std::size_t depth) const;
  // Sequence length entering the pooling layer, per branch.
  std::array<std::size_t, kBranches> pre_pool_lengths() const;
  // Flattened pooled features per branch.
  std::array<std::size_t, kBranches> pooled_sizes() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

enum class LayerRole { Conv, Dense, Final };

class CnnModel {
 public:
  CnnModel() = default;

  // Random fan-in initialization from `rng`; records rng.seed() as the creation seed.
  static CnnModel build(const ArchSpec& spec, Rng& rng);
  // All-zero parameters with the shapes implied by `spec`.
  static CnnModel zeros(const ArchSpec& spec);
  // Weight and bias shapes, in build order, implied by `spec` alone.
  static std::vector<std::pair<Shape, Shape>> parameter_shapes(const ArchSpec& spec);

  const ArchSpec& spec() const noexcept { return spec_; }
  std::span<LayerParams> params() noexcept { return params_; }
  std::span<const LayerParams> params() const noexcept { return params_; }

  // Build order: conv depth 0 branches 0..2, conv depth 1 branches 0..2 (if
  // present), dense blocks (3 or 1), final neuron.
  std::size_t conv_index(std::size_t depth, std::size_t branch) const;
  std::size_t dense_index(std::size_t branch) const;
  std::size_t final_index() const noexcept { return params_.size() - 1; }
  LayerRole role(std::size_t index) const;
  std::string layer_name(std::size_t index) const;

  std::size_t parameter_count() const noexcept;
  void set_trainable(LayerRole role, bool trainable);

  const NormStats& norm_stats() const noexcept { return norm_; }
  void set_norm_stats(const NormStats& stats) noexcept { norm_ = stats; }
  std::uint64_t creation_seed() const noexcept { return creation_seed_; }
  void set_creation_seed(std::uint64_t seed) noexcept { creation_seed_ = seed; }

 private:
  ArchSpec spec_;
  std::vector<LayerParams> params_;
  NormStats norm_;
  std::uint64_t creation_seed_ = 0;
};

struct ConvStageCache {
  Tensor pre;   // convolution output before activation
  Tensor mask;  // dropout mask, empty outside training
  Tensor out;   // activation after dropout, input to the next stage
};

struct BranchCache {
  std::vector<ConvStageCache> stages;
  Tensor pooled;
  Tensor dense_pre;  // dense-first only
};

// Everything the reverse pass needs from one forward evaluation.
struct ForwardCache {
  bool valid = false;
  bool training = false;
  ArchSpec spec;
  Tensor input;
  std::array<BranchCache, kBranches> branches;
  Tensor merged;     // merge-first only
  Tensor dense_pre;  // merge-first only
  Tensor head;       // input to the final neuron
  double final_pre = 0.0;
  double output = 0.0;
};

using GradientSet = std::vector<ParamGrad>;

GradientSet zero_gradients(const CnnModel& model);
void accumulate(GradientSet& into, const GradientSet& from);
void scale(GradientSet& grads, double factor);

// `window` is [t_w x 3] normalized features. `rng` drives dropout and is
// required only when `training` is set.
ForwardCache forward(const CnnModel& model, std::span<const double> window, Rng* rng, bool training);

double predict(const CnnModel& model, std::span<const double> window);
std::vector<double> predict_all(const CnnModel& model, std::span<const FeatureWindow> windows,
                                std::size_t threads = 0);
// Normalizes raw [t_w x 3] (V, I, T) rows with the model's embedded stats first.
double predict_raw(const CnnModel& model, std::span<const double> raw_window);

// Gradient of loss with respect to every parameter, given dloss/dprediction,
// including the final-layer penalty gradient 2 * final_l2 * w.
GradientSet backward(const CnnModel& model, const ForwardCache& cache, double loss_grad);
// Data term only, added into `grads`.
void backward_accumulate(const CnnModel& model, const ForwardCache& cache, double loss_grad, GradientSet& grads);
// l2 * ||w_final||^2 and its gradient (biases excluded).
double final_l2_penalty(const CnnModel& model, double l2);
void add_final_l2_gradient(const CnnModel& model, double l2, GradientSet& grads);

// CGM1 model files: magic, length-prefixed key=value header, then every
// parameter tensor (weights, biases) as little-endian float64 in build order.
std::string serialize_model(const CnnModel& model);
CnnModel deserialize_model(std::string_view bytes);
void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

}  // namespace socnet
