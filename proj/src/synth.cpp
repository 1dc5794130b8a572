#include "socnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "socnet/parallel.hpp"
#include "socnet/recipe.hpp"
#include "socnet/rng.hpp"

namespace socnet {

void SynthCellSpec::validate() const {
  if (!(capacity_ah > 0.0)) throw std::invalid_argument(fmt::format("synth: capacity {} Ah must be positive", capacity_ah));
  if (!(resistance_ohm >= 0.0)) throw std::invalid_argument(fmt::format("synth: resistance {} must be >= 0", resistance_ohm));
  if (!(soc_floor >= 0.0 && soc_floor < 1.0)) throw std::invalid_argument("synth: soc_floor must be in [0, 1)");
  if (ocv_coeffs.size() < 2) throw std::invalid_argument("synth: OCV curve needs at least two coefficients");
  if (!(current.jitter_a >= 0.0)) throw std::invalid_argument("synth: jitter must be >= 0");
  constexpr int kGrid = 1000;
  for (int i = 0; i <= kGrid; ++i) {
    const double s = static_cast<double>(i) / kGrid;
    double slope = 0.0;
    double p = 1.0;
    for (std::size_t k = 1; k < ocv_coeffs.size(); ++k) {
      slope += static_cast<double>(k) * ocv_coeffs[k] * p;
      p *= s;
    }
    if (!(slope > 0.0)) throw std::invalid_argument(fmt::format("synth: OCV curve not strictly increasing at soc={}", s));
  }
}

double SynthCellSpec::ocv(double soc) const {
  double v = 0.0;
  for (auto it = ocv_coeffs.rbegin(); it != ocv_coeffs.rend(); ++it) v = v * soc + *it;
  return v;
}

DriveCycle synth_generate(const SynthCellSpec& spec, double duration_s, double sampling_hz) {
  spec.validate();
  if (!(sampling_hz > 0.0) || !(duration_s * sampling_hz >= 1.0)) {
    throw std::invalid_argument(fmt::format("synth: duration {} s at {} Hz yields no samples", duration_s, sampling_hz));
  }
  const auto n = static_cast<std::size_t>(std::floor(duration_s * sampling_hz));
  const double dt = 1.0 / sampling_hz;
  const double budget_as = (1.0 - spec.soc_floor) * 3600.0 * spec.capacity_ah;
  Rng rng(spec.seed);

  DriveCycle c;
  c.ambient_c = spec.temp.base_c;
  c.sampling_hz = sampling_hz;
  c.time_s.resize(n);
  c.current_a.resize(n);
  c.temp_c.resize(n);
  c.voltage_v.resize(n);
  double moved = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    double i = spec.current.dc_a;
    for (const auto& tone : spec.current.tones) {
      i += tone.amplitude_a * std::sin(2.0 * std::numbers::pi * tone.freq_hz * t + tone.phase_rad);
    }
    if (spec.current.jitter_a > 0.0) i += rng.uniform(-spec.current.jitter_a, spec.current.jitter_a);
    i = std::clamp(i, 0.0, std::max(0.0, (budget_as - moved) / dt));
    moved += i * dt;
    c.time_s[k] = t;
    c.current_a[k] = i;
    c.temp_c[k] = spec.temp.base_c + spec.temp.drift_c_per_hour * t / 3600.0;
  }
  c.soc = derive_soc(c.current_a, dt, spec.capacity_ah, 1.0);
  for (std::size_t k = 0; k < n; ++k) c.voltage_v[k] = spec.ocv(c.soc[k]) - c.current_a[k] * spec.resistance_ohm;
  return c;
}

SynthPreset synth_preset(std::string_view name) {
  if (name == "synthA") return {"synthA", 2.9, 0.03, {3.0, 1.2, -0.9, 0.9}};
  if (name == "synthB") return {"synthB", 3.0, 0.06, {3.25, 0.5, 0.25, 0.2}};
  throw std::invalid_argument(fmt::format("unknown synthetic preset '{}' (expected synthA or synthB)", name));
}

SynthCellSpec synth_cycle_spec(const SynthPreset& preset, std::string_view cycle_id, double ambient_c,
                               std::uint64_t seed, double duration_s) {
  const std::uint64_t cycle_seed =
      derive_seed(derive_seed(seed, preset.name), fmt::format("{}@{}", cycle_id, ambient_c));
  Rng shape(derive_seed(cycle_seed, "profile"));
  SynthCellSpec spec;
  spec.capacity_ah = preset.capacity_ah;
  spec.resistance_ohm = preset.resistance_ohm;
  spec.ocv_coeffs = preset.ocv_coeffs;
  spec.seed = derive_seed(cycle_seed, "jitter");
  spec.temp.base_c = ambient_c;
  spec.temp.drift_c_per_hour = shape.uniform(0.5, 3.0);
  const double dc = 0.8 * preset.capacity_ah * 3600.0 / duration_s;
  spec.current.dc_a = dc;
  spec.current.jitter_a = 0.3;
  for (double rel : {0.6, 0.4, 0.3}) {
    const double period = shape.uniform(30.0, 600.0);
    spec.current.tones.push_back({rel * dc * shape.uniform(0.5, 1.0), 1.0 / period,
                                  shape.uniform(0.0, 2.0 * std::numbers::pi)});
  }
  return spec;
}

std::vector<std::filesystem::path> write_synth_dataset(std::string_view preset_name, const std::filesystem::path& out_root,
                                                       const SynthDatasetOptions& options) {
  const auto preset = synth_preset(preset_name);
  auto manifest = RecipeManifest::defaults(preset_name, out_root);
  manifest.native_hz = options.sampling_hz;
  const auto split = make_split(manifest);
  std::vector<CycleRef> refs;
  for (const auto* list : {&split.train, &split.val, &split.test}) refs.insert(refs.end(), list->begin(), list->end());

  std::vector<std::filesystem::path> paths;
  for (const auto& r : refs) {
    paths.push_back(cycle_path(out_root, r));
    std::filesystem::create_directories(paths.back().parent_path());
  }
  parallel_for(refs.size(), resolve_threads(options.threads), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto spec = synth_cycle_spec(preset, refs[i].cycle_id, refs[i].ambient_c, options.seed, options.duration_s);
      auto cycle = synth_generate(spec, options.duration_s, options.sampling_hz);
      cycle.cycle_id = refs[i].cycle_id;
      write_cycle_csv(cycle, paths[i]);
    }
  });

  std::ofstream out(out_root / "recipe.txt", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", (out_root / "recipe.txt").string()));
  out << manifest.to_text();
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", (out_root / "recipe.txt").string()));
  return paths;
}

}  // namespace socnet
