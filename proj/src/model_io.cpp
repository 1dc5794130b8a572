#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "socnet/model.hpp"

namespace socnet {

namespace {

constexpr std::string_view kMagic = "CGM1";
constexpr int kFormatVersion = 1;

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

using Header = std::map<std::string, std::string, std::less<>>;

const std::string& require(const Header& h, std::string_view key) {
  auto it = h.find(key);
  if (it == h.end()) throw ModelFormatError(fmt::format("model header is missing '{}'", key));
  return it->second;
}

double parse_real(std::string_view text, std::string_view key) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ModelFormatError(fmt::format("model header field '{}' is not a number: '{}'", key, text));
  }
  return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view key) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ModelFormatError(fmt::format("model header field '{}' is not an integer: '{}'", key, text));
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::array<double, kFeatureChannels> parse_triplet(std::string_view text, std::string_view key) {
  auto parts = split_commas(text);
  if (parts.size() != kFeatureChannels) throw ModelFormatError(fmt::format("'{}' must hold 3 values", key));
  std::array<double, kFeatureChannels> out{};
  for (std::size_t i = 0; i < kFeatureChannels; ++i) out[i] = parse_real(parts[i], key);
  return out;
}

}  // namespace

std::string serialize_model(const CnnModel& model) {
  const auto& s = model.spec();
  const auto& n = model.norm_stats();
  std::vector<int> trainable;
  for (const auto& p : model.params()) trainable.push_back(p.trainable ? 1 : 0);

  std::string header;
  header += fmt::format("version={}\n", kFormatVersion);
  header += fmt::format("arch={}\n", to_string(s.kind));
  header += fmt::format("conv_layers={}\n", s.conv_layers);
  header += fmt::format("window={}\n", s.window);
  header += fmt::format("in_channels={}\n", kFeatureChannels);
  header += fmt::format("filters_l1={}\n", s.filters_l1);
  header += fmt::format("filters_l2={}\n", s.filters_l2);
  header += fmt::format("dense_units={}\n", s.dense_units);
  header += fmt::format("pool_width={}\n", s.pool_width);
  header += fmt::format("dropout_rate={}\n", fmt_double(s.dropout_rate));
  header += fmt::format("final_l2={}\n", fmt_double(s.final_l2));
  header += fmt::format("leaky_slope={}\n", fmt_double(s.leaky_slope));
  header += fmt::format("norm_mean={},{},{}\n", fmt_double(n.mean[0]), fmt_double(n.mean[1]), fmt_double(n.mean[2]));
  header += fmt::format("norm_std={},{},{}\n", fmt_double(n.stddev[0]), fmt_double(n.stddev[1]), fmt_double(n.stddev[2]));
  header += fmt::format("creation_seed={}\n", model.creation_seed());
  header += fmt::format("param_tensors={}\n", 2 * model.params().size());
  header += fmt::format("param_values={}\n", model.parameter_count());
  header += fmt::format("trainable={}\n", fmt::join(trainable, ","));

  std::string out;
  out.reserve(kMagic.size() + 8 + header.size() + 8 * model.parameter_count());
  out += kMagic;
  put_u64(out, header.size());
  out += header;
  for (const auto& p : model.params()) {
    for (const Tensor* t : {&p.weights, &p.biases}) {
      for (double v : t->data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

CnnModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ModelFormatError("not a CGM1 model file (bad magic)");
  }
  const auto header_len = get_u64(bytes.substr(kMagic.size(), 8));
  const std::size_t header_start = kMagic.size() + 8;
  if (header_len > bytes.size() - header_start) throw ModelFormatError("model file truncated inside header");
  const std::string_view header_text = bytes.substr(header_start, header_len);

  Header header;
  std::size_t pos = 0;
  while (pos < header_text.size()) {
    auto eol = header_text.find('\n', pos);
    if (eol == std::string_view::npos) eol = header_text.size();
    auto line = header_text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ModelFormatError(fmt::format("malformed header line '{}'", line));
    header.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }

  const auto version = parse_uint(require(header, "version"), "version");
  if (version != kFormatVersion) throw ModelFormatError(fmt::format("unsupported model version {}", version));
  if (parse_uint(require(header, "in_channels"), "in_channels") != kFeatureChannels) {
    throw ModelFormatError("model expects a feature count other than 3");
  }

  ArchSpec spec;
  try {
    spec.kind = parse_arch_kind(require(header, "arch"));
  } catch (const SpecError& e) {
    throw ModelFormatError(e.what());
  }
  spec.conv_layers = parse_uint(require(header, "conv_layers"), "conv_layers");
  spec.window = parse_uint(require(header, "window"), "window");
  spec.filters_l1 = parse_uint(require(header, "filters_l1"), "filters_l1");
  spec.filters_l2 = parse_uint(require(header, "filters_l2"), "filters_l2");
  spec.dense_units = parse_uint(require(header, "dense_units"), "dense_units");
  spec.pool_width = parse_uint(require(header, "pool_width"), "pool_width");
  spec.dropout_rate = parse_real(require(header, "dropout_rate"), "dropout_rate");
  spec.final_l2 = parse_real(require(header, "final_l2"), "final_l2");
  spec.leaky_slope = parse_real(require(header, "leaky_slope"), "leaky_slope");

  CnnModel model;
  try {
    model = CnnModel::zeros(spec);
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(fmt::format("model header describes an invalid architecture: {}", e.what()));
  }
  NormStats norm;
  norm.mean = parse_triplet(require(header, "norm_mean"), "norm_mean");
  norm.stddev = parse_triplet(require(header, "norm_std"), "norm_std");
  model.set_norm_stats(norm);
  model.set_creation_seed(parse_uint(require(header, "creation_seed"), "creation_seed"));

  const auto declared_values = parse_uint(require(header, "param_values"), "param_values");
  const auto declared_tensors = parse_uint(require(header, "param_tensors"), "param_tensors");
  if (declared_values != model.parameter_count() || declared_tensors != 2 * model.params().size()) {
    throw ModelFormatError(fmt::format("parameter count {} in header does not match architecture ({} expected)",
                                       declared_values, model.parameter_count()));
  }
  if (auto it = header.find("trainable"); it != header.end()) {
    auto flags = split_commas(it->second);
    if (flags.size() != model.params().size()) throw ModelFormatError("trainable flag count mismatch");
    for (std::size_t i = 0; i < flags.size(); ++i) model.params()[i].trainable = flags[i] != "0";
  }

  const std::size_t payload_start = header_start + header_len;
  const std::size_t expected = payload_start + 8 * model.parameter_count();
  if (bytes.size() < expected) {
    throw ModelFormatError(
        fmt::format("model file truncated: {} bytes, {} expected", bytes.size(), expected));
  }
  if (bytes.size() > expected) throw ModelFormatError("model file has trailing bytes after the parameters");

  std::size_t offset = payload_start;
  for (auto& p : model.params()) {
    for (Tensor* t : {&p.weights, &p.biases}) {
      for (auto& v : t->data()) {
        v = std::bit_cast<double>(get_u64(bytes.substr(offset, 8)));
        offset += 8;
      }
    }
  }
  return model;
}

void save_model(const CnnModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling temp file and rename so a failed write leaves no partial model.
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write model file {}", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error(fmt::format("write failed for {}", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path);
}

CnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError(fmt::format("cannot open model file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace socnet
