#include <cmath>

#include <fmt/format.h>

#include "socnet/data.hpp"

namespace socnet {

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::None: return "none";
    case NoiseKind::A: return "a";
    case NoiseKind::B: return "b";
  }
  return "none";
}

NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "none" || text.empty()) return NoiseKind::None;
  if (text == "a" || text == "A") return NoiseKind::A;
  if (text == "b" || text == "B") return NoiseKind::B;
  throw std::invalid_argument(fmt::format("unknown noise kind '{}' (expected none, a or b)", text));
}

void inject_noise_a(FeatureCycle& cycle, Rng& rng, double stddev) {
  if (!(stddev >= 0.0)) throw std::invalid_argument("inject_noise_a: negative stddev");
  for (auto& v : cycle.features) v += rng.gaussian(0.0, stddev);
}

double noise_b_epsilon(double a) { return 1.0 / (1.0 + std::exp(0.3 * a)); }

NoiseBParams draw_noise_b_params(Rng& rng) {
  NoiseBParams p;
  p.z0 = rng.uniform(1.0, 10.0);
  p.z1 = rng.uniform(1.0, 10.0);
  p.eta = rng.uniform(1.0, 5.0);
  return p;
}

std::vector<double> noise_b_sequence(std::size_t n, const NoiseBParams& params, Rng& rng) {
  std::vector<double> eps(n);
  const double x_std = std::sqrt(params.z1);
  double a = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = rng.gaussian(params.z0, x_std);
    a = std::sin(a * params.eta + std::tanh(x));
    eps[t] = noise_b_epsilon(a);
  }
  return eps;
}

void inject_noise_b(FeatureCycle& cycle, Rng& rng) {
  const auto n = cycle.size();
  for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) {
    const auto params = draw_noise_b_params(rng);
    const auto eps = noise_b_sequence(n, params, rng);
    for (std::size_t t = 0; t < n; ++t) cycle.features[t * kFeatureChannels + ch] += eps[t];
  }
}

void inject_noise(FeatureCycle& cycle, const NoiseSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case NoiseKind::None: break;
    case NoiseKind::A: inject_noise_a(cycle, rng, spec.gaussian_std); break;
    case NoiseKind::B: inject_noise_b(cycle, rng); break;
  }
}

}  // namespace socnet
