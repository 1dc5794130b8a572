// socnet/recipe.hpp - train/validation/test assembly for a dataset on disk
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "socnet/data.hpp"
#include "socnet/rng.hpp"

namespace socnet {

class MissingCyclesError : public std::runtime_error {
 public:
  explicit MissingCyclesError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

struct CycleRef {
  std::string cycle_id;
  double ambient_c = 25.0;

  friend bool operator==(const CycleRef&, const CycleRef&) = default;
};

std::string to_string(const CycleRef& ref);

// Dataset layout and split lists. Text form is key=value lines:
//   dataset, root, capacity_ah, current_sign, native_hz,
//   temperatures, train, val, test (comma-separated lists)
struct RecipeManifest {
  std::string dataset;
  std::filesystem::path root;  // directory holding <temp>/<cycle>.csv
  double capacity_ah = 0.0;
  double current_sign = 1.0;
  double native_hz = 10.0;
  std::vector<double> temperatures;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  // Built-in layouts for "panasonic", "lg", "synthA" and "synthB".
  static RecipeManifest defaults(std::string_view dataset, const std::filesystem::path& root);
  static RecipeManifest parse(std::string_view text, const std::filesystem::path& base_dir);
  static RecipeManifest load(const std::filesystem::path& path);
  std::string to_text() const;
};

// Directory name used for an ambient temperature, e.g. "-10" or "25".
std::string temperature_dir(double ambient_c);
std::filesystem::path cycle_path(const std::filesystem::path& root, const CycleRef& ref);

struct RecipeSplit {
  std::vector<CycleRef> train;
  std::vector<CycleRef> val;
  std::vector<CycleRef> test;
};

// Cross product of each split's cycle names with the manifest temperatures,
// sorted by (name, temperature). Throws if the splits share a cycle name.
RecipeSplit make_split(const RecipeManifest& manifest);

struct SubsampleResult {
  std::vector<CycleRef> kept;
  std::size_t retries = 0;  // redraws after an all-dropped outcome
};

// Keeps each cycle independently with probability keep_prob.
SubsampleResult subsample_cycles(std::span<const CycleRef> cycles, double keep_prob, Rng& rng);

// Normalized cycles of one split plus their windows. Windows view the cycles'
// storage, so the set is move-only.
struct SplitData {
  std::vector<FeatureCycle> cycles;
  std::vector<FeatureWindow> windows;

  SplitData() = default;
  SplitData(SplitData&&) noexcept = default;
  SplitData& operator=(SplitData&&) noexcept = default;
  SplitData(const SplitData&) = delete;
  SplitData& operator=(const SplitData&) = delete;

  // Takes ownership of `cycles` and windows each of them.
  static SplitData from_cycles(std::vector<FeatureCycle> cycles, std::size_t window);
};

struct RecipeOptions {
  double sampling_hz = 1.0;
  std::size_t window = 500;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  double keep_prob = 1.0;               // applied to training cycles only
  std::optional<NormStats> norm;        // given: reuse instead of fitting on train
  bool include_train = true;
  bool include_val = true;
  bool include_test = true;
};

struct Recipe {
  RecipeSplit split;  // training list after subsampling
  NormStats norm;
  SplitData train;
  SplitData val;
  SplitData test;
  std::size_t subsample_retries = 0;
};

// Loads, decimates to `sampling_hz`, normalizes with train-only statistics,
// injects the configured noise into every split and windows the result.
// Throws MissingCyclesError naming every absent file before loading any.
Recipe assemble_recipe(const RecipeManifest& manifest, const RecipeOptions& options);

// Decimation factor from the manifest's native rate to `sampling_hz`.
std::size_t decimation_factor(double native_hz, double sampling_hz);

}  // namespace socnet
