#include "socnet/recipe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "socnet/log.hpp"

namespace socnet {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto pos = s.find(',', start);
    auto item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view text, std::string_view key) {
  double v = 0.0;
  text = trim(text);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument(fmt::format("recipe manifest: '{}' is not a number for key '{}'", text, key));
  }
  return v;
}

std::vector<CycleRef> cross(const std::vector<std::string>& names, const std::vector<double>& temps) {
  std::vector<CycleRef> refs;
  for (const auto& n : names) {
    for (double t : temps) refs.push_back({n, t});
  }
  std::sort(refs.begin(), refs.end(), [](const CycleRef& a, const CycleRef& b) {
    return a.cycle_id != b.cycle_id ? a.cycle_id < b.cycle_id : a.ambient_c < b.ambient_c;
  });
  return refs;
}

}  // namespace

MissingCyclesError::MissingCyclesError(std::vector<std::string> missing)
    : std::runtime_error(fmt::format("missing cycle files: {}", fmt::join(missing, ", "))),
      missing_(std::move(missing)) {}

std::string to_string(const CycleRef& ref) { return fmt::format("{}@{}C", ref.cycle_id, ref.ambient_c); }

std::string temperature_dir(double ambient_c) { return fmt::format("{}", ambient_c); }

std::filesystem::path cycle_path(const std::filesystem::path& root, const CycleRef& ref) {
  return root / temperature_dir(ref.ambient_c) / (ref.cycle_id + ".csv");
}

RecipeManifest RecipeManifest::defaults(std::string_view dataset, const std::filesystem::path& root) {
  RecipeManifest m;
  m.dataset = std::string(dataset);
  m.root = root;
  m.val = {"LA92"};
  m.test = {"US06", "HWFET"};
  if (dataset == "panasonic") {
    m.capacity_ah = 2.9;
    m.current_sign = -1.0;
    m.native_hz = 10.0;
    m.temperatures = {-20, -10, 0, 10, 25};
    m.train = {"Cycle1", "Cycle2", "Cycle3", "Cycle4", "UDDS"};
  } else if (dataset == "lg") {
    m.capacity_ah = 3.0;
    m.current_sign = 1.0;
    m.native_hz = 10.0;
    m.temperatures = {-20, -10, 0, 10, 25};
    m.train = {"Mixed1", "Mixed2", "Mixed3", "Mixed4", "Mixed5", "Mixed6", "Mixed7", "Mixed8", "UDDS"};
  } else if (dataset == "synthA" || dataset == "synthB") {
    m.capacity_ah = dataset == "synthA" ? 2.9 : 3.0;
    m.current_sign = 1.0;
    m.native_hz = 1.0;
    m.temperatures = {10, 25};
    m.train = {"Mixed1", "Mixed2", "UDDS"};
  } else {
    throw std::invalid_argument(
        fmt::format("unknown dataset '{}' (expected panasonic, lg, synthA or synthB)", dataset));
  }
  return m;
}

RecipeManifest RecipeManifest::parse(std::string_view text, const std::filesystem::path& base_dir) {
  RecipeManifest m;
  m.root = base_dir;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(fmt::format("recipe manifest line {}: expected key=value", line_no));
    }
    auto key = trim(l.substr(0, eq));
    auto value = trim(l.substr(eq + 1));
    if (key == "dataset") m.dataset = std::string(value);
    else if (key == "root") m.root = std::filesystem::path(std::string(value)).is_absolute()
                                          ? std::filesystem::path(std::string(value))
                                          : base_dir / std::string(value);
    else if (key == "capacity_ah") m.capacity_ah = parse_number(value, key);
    else if (key == "current_sign") m.current_sign = parse_number(value, key);
    else if (key == "native_hz") m.native_hz = parse_number(value, key);
    else if (key == "temperatures") {
      m.temperatures.clear();
      for (const auto& t : split_list(value)) m.temperatures.push_back(parse_number(t, key));
    } else if (key == "train") m.train = split_list(value);
    else if (key == "val") m.val = split_list(value);
    else if (key == "test") m.test = split_list(value);
    else throw std::invalid_argument(fmt::format("recipe manifest line {}: unknown key '{}'", line_no, key));
  }
  if (m.temperatures.empty() || m.train.empty() || m.val.empty() || m.test.empty()) {
    throw std::invalid_argument("recipe manifest needs temperatures, train, val and test lists");
  }
  if (!(m.native_hz > 0.0)) throw std::invalid_argument("recipe manifest: native_hz must be positive");
  return m;
}

RecipeManifest RecipeManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open recipe manifest {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

std::string RecipeManifest::to_text() const {
  std::vector<std::string> temps;
  for (double t : temperatures) temps.push_back(temperature_dir(t));
  return fmt::format(
      "dataset={}\nroot=.\ncapacity_ah={}\ncurrent_sign={}\nnative_hz={}\ntemperatures={}\ntrain={}\nval={}\ntest={}\n",
      dataset, capacity_ah, current_sign, native_hz, fmt::join(temps, ","), fmt::join(train, ","),
      fmt::join(val, ","), fmt::join(test, ","));
}

RecipeSplit make_split(const RecipeManifest& manifest) {
  std::set<std::string> seen;
  for (const auto* list : {&manifest.train, &manifest.val, &manifest.test}) {
    for (const auto& name : *list) {
      if (!seen.insert(name).second) {
        throw std::invalid_argument(fmt::format("cycle '{}' appears in more than one split", name));
      }
    }
  }
  return {cross(manifest.train, manifest.temperatures), cross(manifest.val, manifest.temperatures),
          cross(manifest.test, manifest.temperatures)};
}

SubsampleResult subsample_cycles(std::span<const CycleRef> cycles, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw std::invalid_argument(fmt::format("keep probability {} outside (0, 1]", keep_prob));
  }
  SubsampleResult result;
  if (cycles.empty()) return result;
  while (true) {
    result.kept.clear();
    for (const auto& c : cycles) {
      if (rng.bernoulli(keep_prob)) result.kept.push_back(c);
    }
    if (!result.kept.empty()) break;
    ++result.retries;
    warn("subsample_cycles: every cycle was dropped; redrawing");
  }
  return result;
}

SplitData SplitData::from_cycles(std::vector<FeatureCycle> cycles, std::size_t window) {
  SplitData data;
  data.cycles = std::move(cycles);
  for (const auto& c : data.cycles) {
    auto w = make_windows(c, window);
    data.windows.insert(data.windows.end(), w.begin(), w.end());
  }
  return data;
}

std::size_t decimation_factor(double native_hz, double sampling_hz) {
  if (!(native_hz > 0.0 && sampling_hz > 0.0)) throw std::invalid_argument("sampling rates must be positive");
  const double ratio = native_hz / sampling_hz;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
    throw std::invalid_argument(
        fmt::format("cannot reach {} Hz from {} Hz by integer decimation", sampling_hz, native_hz));
  }
  return static_cast<std::size_t>(rounded);
}

Recipe assemble_recipe(const RecipeManifest& manifest, const RecipeOptions& options) {
  const auto factor = decimation_factor(manifest.native_hz, options.sampling_hz);
  Recipe recipe;
  recipe.split = make_split(manifest);
  if (options.keep_prob < 1.0) {
    Rng rng(derive_seed(options.seed, "subsample"));
    auto sub = subsample_cycles(recipe.split.train, options.keep_prob, rng);
    recipe.split.train = std::move(sub.kept);
    recipe.subsample_retries = sub.retries;
  }

  const bool need_train = options.include_train || !options.norm;
  std::vector<std::string> missing;
  auto check = [&](const std::vector<CycleRef>& refs) {
    for (const auto& r : refs) {
      if (!std::filesystem::is_regular_file(cycle_path(manifest.root, r))) {
        missing.push_back(cycle_path(manifest.root, r).string());
      }
    }
  };
  if (need_train) check(recipe.split.train);
  if (options.include_val) check(recipe.split.val);
  if (options.include_test) check(recipe.split.test);
  if (!missing.empty()) throw MissingCyclesError(std::move(missing));

  auto load_all = [&](const std::vector<CycleRef>& refs) {
    std::vector<DriveCycle> cycles;
    for (const auto& r : refs) {
      CycleMeta meta;
      meta.cycle_id = r.cycle_id;
      meta.ambient_c = r.ambient_c;
      meta.capacity_ah = manifest.capacity_ah;
      meta.current_sign = manifest.current_sign;
      cycles.push_back(downsample(load_cycle(cycle_path(manifest.root, r), meta), factor));
    }
    return cycles;
  };

  std::vector<DriveCycle> train_raw;
  if (need_train) train_raw = load_all(recipe.split.train);
  recipe.norm = options.norm ? *options.norm : fit_norm(train_raw);

  const std::uint64_t noise_root = derive_seed(options.seed, "noise");
  auto prepare = [&](std::vector<DriveCycle> raw, std::string_view split_name) {
    std::vector<FeatureCycle> out;
    out.reserve(raw.size());
    for (const auto& c : raw) {
      auto fc = apply_norm(c, recipe.norm);
      Rng rng(derive_seed(noise_root, fmt::format("{}:{}@{}", split_name, c.cycle_id, c.ambient_c)));
      inject_noise(fc, options.noise, rng);
      out.push_back(std::move(fc));
    }
    return SplitData::from_cycles(std::move(out), options.window);
  };

  if (options.include_train) recipe.train = prepare(std::move(train_raw), "train");
  if (options.include_val) recipe.val = prepare(load_all(recipe.split.val), "val");
  if (options.include_test) recipe.test = prepare(load_all(recipe.split.test), "test");
  return recipe;
}

}  // namespace socnet
