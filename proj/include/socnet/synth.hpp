// socnet/synth.hpp - zero-order equivalent-circuit drive-cycle generator
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "socnet/data.hpp"

namespace socnet {

struct SynthTone {
  double amplitude_a = 0.0;
  double freq_hz = 0.0;
  double phase_rad = 0.0;
};

struct SynthCurrentProfile {
  double dc_a = 0.0;
  std::vector<SynthTone> tones;
  double jitter_a = 0.0;  // half-width of the uniform jitter
};

struct SynthTempProfile {
  double base_c = 25.0;
  double drift_c_per_hour = 0.0;
};

struct SynthCellSpec {
  double capacity_ah = 2.9;
  double resistance_ohm = 0.03;
  std::vector<double> ocv_coeffs;  // ascending powers of soc
  SynthTempProfile temp;
  SynthCurrentProfile current;
  std::uint64_t seed = 0;
  double soc_floor = 0.02;

  // Throws std::invalid_argument on a non-positive capacity, a negative
  // resistance or an OCV curve that is not strictly increasing on [0, 1].
  void validate() const;
  double ocv(double soc) const;
};

// Discharge-positive current, clipped so soc stays at or above soc_floor.
// soc comes from derive_soc on the generated current with soc0 = 1, and
// voltage = ocv(soc) - I * R.
DriveCycle synth_generate(const SynthCellSpec& spec, double duration_s, double sampling_hz);

struct SynthPreset {
  std::string name;
  double capacity_ah = 0.0;
  double resistance_ohm = 0.0;
  std::vector<double> ocv_coeffs;
};

// "synthA" or "synthB"; throws std::invalid_argument otherwise.
SynthPreset synth_preset(std::string_view name);

inline constexpr double kSynthDurationS = 3500.0;

// Cell spec for one named cycle of a preset. Tone periods, phases and
// amplitudes are drawn from a seed derived from (seed, cycle_id, ambient_c).
SynthCellSpec synth_cycle_spec(const SynthPreset& preset, std::string_view cycle_id, double ambient_c,
                               std::uint64_t seed, double duration_s = kSynthDurationS);

struct SynthDatasetOptions {
  std::uint64_t seed = 0;
  double duration_s = kSynthDurationS;
  double sampling_hz = 1.0;
  std::size_t threads = 0;
};

// Writes <out_root>/<temp>/<cycle>.csv for every cycle of the preset's
// default manifest plus <out_root>/recipe.txt. Returns the written CSV paths
// in manifest order.
std::vector<std::filesystem::path> write_synth_dataset(std::string_view preset, const std::filesystem::path& out_root,
                                                       const SynthDatasetOptions& options);

}  // namespace socnet
