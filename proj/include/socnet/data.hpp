// socnet/data.hpp - drive-cycle ingestion, labelling, normalization, noise and windowing
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "socnet/rng.hpp"

namespace socnet {

inline constexpr std::size_t kFeatureChannels = 3;  // voltage, current, temperature

class CycleFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One discharge test. Columns are parallel arrays of equal length.
struct DriveCycle {
  std::string cycle_id;
  double ambient_c = 25.0;
  double sampling_hz = 1.0;
  std::vector<double> time_s;
  std::vector<double> voltage_v;
  std::vector<double> current_a;  // discharge positive
  std::vector<double> temp_c;
  std::vector<double> soc;        // fraction in [0, 1]

  std::size_t size() const noexcept { return time_s.size(); }

  // Throws CycleFormatError unless columns agree in length, time increases
  // with spacing 1/sampling_hz (1% tolerance) and every soc is in [0, 1].
  void validate() const;
};

struct CycleMeta {
  std::string cycle_id;
  double ambient_c = 25.0;
  double sampling_hz = 0.0;  // 0: infer from the first time step
  double capacity_ah = 0.0;  // needed only when the file carries no soc column
  double current_sign = 1.0; // multiplied into current and ah_discharged on load
  double soc0 = 1.0;
};

// CSV header: time_s,voltage_v,current_a,temp_c[,soc][,ah_discharged] in any
// order. Labels come from soc if present, else 1 - ah/capacity, else coulomb
// counting of the current column.
DriveCycle parse_cycle_csv(std::string_view text, const CycleMeta& meta);
DriveCycle load_cycle(const std::filesystem::path& path, const CycleMeta& meta);

// Writes time_s,voltage_v,current_a,temp_c,soc with shortest round-trip
// formatting, so a reload reproduces every value exactly.
std::string format_cycle_csv(const DriveCycle& cycle);
void write_cycle_csv(const DriveCycle& cycle, const std::filesystem::path& path);

// soc_k = soc0 - (sum_{j<=k} I_j * dt) / (3600 * capacity), clamped to [0, 1]
// with a warning when clamping happens.
std::vector<double> derive_soc(std::span<const double> current_a, double dt_s, double capacity_ah, double soc0);

// Decimation: keeps records 0, factor, 2*factor, ...
DriveCycle downsample(const DriveCycle& cycle, std::size_t factor);

struct NormStats {
  std::array<double, kFeatureChannels> mean{0.0, 0.0, 0.0};
  std::array<double, kFeatureChannels> stddev{1.0, 1.0, 1.0};

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

// Per-channel z-score statistics (population std) pooled over all samples of
// the given cycles. Throws on an empty input or a zero-variance channel.
NormStats fit_norm(std::span<const DriveCycle> train_cycles);

// A cycle in model-input form: normalized (V, I, T) rows plus labels.
struct FeatureCycle {
  std::string cycle_id;
  double ambient_c = 25.0;
  double sampling_hz = 1.0;
  std::vector<double> features;  // [size x 3], row-major
  std::vector<double> soc;

  std::size_t size() const noexcept { return soc.size(); }
  double feature(std::size_t t, std::size_t channel) const { return features[t * kFeatureChannels + channel]; }
};

FeatureCycle apply_norm(const DriveCycle& cycle, const NormStats& stats);

enum class NoiseKind { None, A, B };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view text);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double gaussian_std = 0.1;  // Noise A: N(0, 0.01) read as variance 0.01
};

// Adds an independent N(0, stddev^2) draw to every feature element.
void inject_noise_a(FeatureCycle& cycle, Rng& rng, double stddev = 0.1);

// Per-channel parameters of the bounded sigmoid-of-sine perturbation.
struct NoiseBParams {
  double z0 = 0.0;   // mean of x
  double z1 = 0.0;   // variance of x
  double eta = 0.0;
};

double noise_b_epsilon(double a);
NoiseBParams draw_noise_b_params(Rng& rng);
// a_t = sin(a_{t-1} * eta + tanh(x_t)), a_0 = 0, x_t ~ N(z0, z1); returns eps_t.
std::vector<double> noise_b_sequence(std::size_t n, const NoiseBParams& params, Rng& rng);
void inject_noise_b(FeatureCycle& cycle, Rng& rng);

void inject_noise(FeatureCycle& cycle, const NoiseSpec& spec, Rng& rng);

// t_w consecutive normalized rows ending at `end_index`, labelled with the
// soc at `end_index`. The feature span views the source cycle's storage.
struct FeatureWindow {
  std::span<const double> features;  // [t_w x 3]
  double label = 0.0;
  const FeatureCycle* source = nullptr;
  std::size_t end_index = 0;
};

// All len - t_w + 1 windows of a cycle, in order of end index. A cycle
// shorter than t_w yields none and emits a warning.
std::vector<FeatureWindow> make_windows(const FeatureCycle& cycle, std::size_t window);

}  // namespace socnet
