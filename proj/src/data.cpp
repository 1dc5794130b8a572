#include "socnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "socnet/log.hpp"

namespace socnet {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view field, std::size_t line_no, std::string_view column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw CycleFormatError(fmt::format("line {}: column '{}' holds non-numeric value '{}'", line_no, column, field));
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void DriveCycle::validate() const {
  const auto n = size();
  if (voltage_v.size() != n || current_a.size() != n || temp_c.size() != n || soc.size() != n) {
    throw CycleFormatError(fmt::format("cycle '{}': column lengths disagree", cycle_id));
  }
  if (!(sampling_hz > 0.0)) throw CycleFormatError(fmt::format("cycle '{}': sampling rate must be positive", cycle_id));
  const double spacing = 1.0 / sampling_hz;
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = time_s[i] - time_s[i - 1];
    if (!(dt > 0.0)) {
      throw CycleFormatError(
          fmt::format("cycle '{}': time is not strictly increasing at row {} ({} -> {})", cycle_id, i,
                      time_s[i - 1], time_s[i]));
    }
    if (std::abs(dt - spacing) > 0.01 * spacing) {
      throw CycleFormatError(fmt::format("cycle '{}': time step {} at row {} deviates from 1/{} Hz by more than 1%",
                                         cycle_id, dt, i, sampling_hz));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(soc[i] >= 0.0 && soc[i] <= 1.0)) {
      throw CycleFormatError(fmt::format("cycle '{}': soc {} at row {} outside [0, 1]", cycle_id, soc[i], i));
    }
  }
}

std::vector<double> derive_soc(std::span<const double> current_a, double dt_s, double capacity_ah, double soc0) {
  if (!(capacity_ah > 0.0)) throw std::invalid_argument(fmt::format("derive_soc: capacity {} Ah must be positive", capacity_ah));
  if (!(soc0 >= 0.0 && soc0 <= 1.0)) throw std::invalid_argument(fmt::format("derive_soc: soc0 {} outside [0, 1]", soc0));
  const double charge_as = 3600.0 * capacity_ah;
  std::vector<double> soc(current_a.size());
  double moved = 0.0;
  std::size_t clamped = 0;
  for (std::size_t k = 0; k < current_a.size(); ++k) {
    moved += current_a[k] * dt_s;
    double s = soc0 - moved / charge_as;
    if (s < 0.0 || s > 1.0) {
      ++clamped;
      s = std::clamp(s, 0.0, 1.0);
    }
    soc[k] = s;
  }
  if (clamped > 0) warn(fmt::format("derive_soc: {} samples fell outside [0, 1] and were clamped", clamped));
  return soc;
}

DriveCycle parse_cycle_csv(std::string_view text, const CycleMeta& meta) {
  std::vector<std::string_view> lines;
  for (auto line : split(text, '\n')) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw CycleFormatError(fmt::format("cycle '{}': empty file", meta.cycle_id));

  std::map<std::string, std::size_t> columns;
  const auto header = split(lines[0], ',');
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name(header[i]);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    columns[name] = i;
  }
  std::vector<std::string> missing;
  for (const char* required : {"time_s", "voltage_v", "current_a", "temp_c"}) {
    if (!columns.contains(required)) missing.emplace_back(required);
  }
  if (!missing.empty()) {
    throw CycleFormatError(fmt::format("cycle '{}': missing required columns: {}", meta.cycle_id, fmt::join(missing, ", ")));
  }
  const auto col_soc = columns.contains("soc") ? std::optional(columns["soc"]) : std::nullopt;
  const auto col_ah = columns.contains("ah_discharged") ? std::optional(columns["ah_discharged"]) : std::nullopt;

  DriveCycle cycle;
  cycle.cycle_id = meta.cycle_id;
  cycle.ambient_c = meta.ambient_c;
  std::vector<double> ah;
  const auto rows = lines.size() - 1;
  cycle.time_s.reserve(rows);
  cycle.voltage_v.reserve(rows);
  cycle.current_a.reserve(rows);
  cycle.temp_c.reserve(rows);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split(lines[r], ',');
    if (fields.size() != header.size()) {
      throw CycleFormatError(fmt::format("cycle '{}' line {}: expected {} fields, got {}", meta.cycle_id, r + 1,
                                         header.size(), fields.size()));
    }
    auto get = [&](const char* name) { return parse_double(fields[columns[name]], r + 1, name); };
    cycle.time_s.push_back(get("time_s"));
    cycle.voltage_v.push_back(get("voltage_v"));
    cycle.current_a.push_back(meta.current_sign * get("current_a"));
    cycle.temp_c.push_back(get("temp_c"));
    if (col_soc) cycle.soc.push_back(parse_double(fields[*col_soc], r + 1, "soc"));
    if (col_ah) ah.push_back(meta.current_sign * parse_double(fields[*col_ah], r + 1, "ah_discharged"));
  }

  if (meta.sampling_hz > 0.0) {
    cycle.sampling_hz = meta.sampling_hz;
  } else if (cycle.size() >= 2 && cycle.time_s[1] > cycle.time_s[0]) {
    cycle.sampling_hz = 1.0 / (cycle.time_s[1] - cycle.time_s[0]);
  } else {
    cycle.sampling_hz = 1.0;
  }

  if (!col_soc) {
    if (!(meta.capacity_ah > 0.0)) {
      throw CycleFormatError(
          fmt::format("cycle '{}': no soc column and no positive capacity to derive one", meta.cycle_id));
    }
    if (col_ah) {
      cycle.soc.resize(ah.size());
      for (std::size_t i = 0; i < ah.size(); ++i) cycle.soc[i] = meta.soc0 - ah[i] / meta.capacity_ah;
    } else {
      cycle.soc = derive_soc(cycle.current_a, 1.0 / cycle.sampling_hz, meta.capacity_ah, meta.soc0);
    }
  }
  cycle.validate();
  return cycle;
}

DriveCycle load_cycle(const std::filesystem::path& path, const CycleMeta& meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CycleFormatError(fmt::format("cannot open cycle file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  CycleMeta m = meta;
  if (m.cycle_id.empty()) m.cycle_id = path.stem().string();
  return parse_cycle_csv(buf.str(), m);
}

std::string format_cycle_csv(const DriveCycle& cycle) {
  std::string out = "time_s,voltage_v,current_a,temp_c,soc\n";
  out.reserve(cycle.size() * 80);
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    out += format_double(cycle.time_s[i]);
    out += ',';
    out += format_double(cycle.voltage_v[i]);
    out += ',';
    out += format_double(cycle.current_a[i]);
    out += ',';
    out += format_double(cycle.temp_c[i]);
    out += ',';
    out += format_double(cycle.soc[i]);
    out += '\n';
  }
  return out;
}

void write_cycle_csv(const DriveCycle& cycle, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write cycle file {}", path.string()));
  out << format_cycle_csv(cycle);
  if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
}

DriveCycle downsample(const DriveCycle& cycle, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("downsample: factor must be positive");
  if (cycle.size() == 0) throw std::invalid_argument(fmt::format("downsample: cycle '{}' is empty", cycle.cycle_id));
  if (factor == 1) return cycle;
  DriveCycle out;
  out.cycle_id = cycle.cycle_id;
  out.ambient_c = cycle.ambient_c;
  out.sampling_hz = cycle.sampling_hz / static_cast<double>(factor);
  for (std::size_t i = 0; i < cycle.size(); i += factor) {
    out.time_s.push_back(cycle.time_s[i]);
    out.voltage_v.push_back(cycle.voltage_v[i]);
    out.current_a.push_back(cycle.current_a[i]);
    out.temp_c.push_back(cycle.temp_c[i]);
    out.soc.push_back(cycle.soc[i]);
  }
  return out;
}

NormStats fit_norm(std::span<const DriveCycle> train_cycles) {
  std::array<double, kFeatureChannels> sum{};
  std::size_t n = 0;
  auto channel = [](const DriveCycle& c, std::size_t ch) -> const std::vector<double>& {
    return ch == 0 ? c.voltage_v : (ch == 1 ? c.current_a : c.temp_c);
  };
  for (const auto& c : train_cycles) {
    for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) {
      for (double v : channel(c, ch)) sum[ch] += v;
    }
    n += c.size();
  }
  if (n == 0) throw std::invalid_argument("fit_norm: no training samples");
  NormStats stats;
  std::array<double, kFeatureChannels> sq{};
  for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) stats.mean[ch] = sum[ch] / static_cast<double>(n);
  for (const auto& c : train_cycles) {
    for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) {
      for (double v : channel(c, ch)) {
        const double d = v - stats.mean[ch];
        sq[ch] += d * d;
      }
    }
  }
  static constexpr const char* kNames[] = {"voltage", "current", "temperature"};
  for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) {
    stats.stddev[ch] = std::sqrt(sq[ch] / static_cast<double>(n));
    if (!(stats.stddev[ch] > 0.0)) {
      throw std::invalid_argument(fmt::format("fit_norm: {} channel has zero variance", kNames[ch]));
    }
  }
  return stats;
}

FeatureCycle apply_norm(const DriveCycle& cycle, const NormStats& stats) {
  FeatureCycle out;
  out.cycle_id = cycle.cycle_id;
  out.ambient_c = cycle.ambient_c;
  out.sampling_hz = cycle.sampling_hz;
  out.soc = cycle.soc;
  out.features.resize(cycle.size() * kFeatureChannels);
  for (std::size_t t = 0; t < cycle.size(); ++t) {
    double* row = out.features.data() + t * kFeatureChannels;
    row[0] = (cycle.voltage_v[t] - stats.mean[0]) / stats.stddev[0];
    row[1] = (cycle.current_a[t] - stats.mean[1]) / stats.stddev[1];
    row[2] = (cycle.temp_c[t] - stats.mean[2]) / stats.stddev[2];
  }
  return out;
}

std::vector<FeatureWindow> make_windows(const FeatureCycle& cycle, std::size_t window) {
  if (window == 0) throw std::invalid_argument("make_windows: window must be positive");
  std::vector<FeatureWindow> out;
  if (cycle.size() < window) {
    warn(fmt::format("cycle '{}' at {} C has {} samples, fewer than the window of {}; no windows produced",
                     cycle.cycle_id, cycle.ambient_c, cycle.size(), window));
    return out;
  }
  const std::size_t count = cycle.size() - window + 1;
  out.reserve(count);
  const std::span<const double> all(cycle.features);
  for (std::size_t k = window - 1; k < cycle.size(); ++k) {
    out.push_back({all.subspan((k + 1 - window) * kFeatureChannels, window * kFeatureChannels), cycle.soc[k], &cycle, k});
  }
  return out;
}

}  // namespace socnet
