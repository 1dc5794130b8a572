// socnet/rng.hpp - seeded, platform-independent random streams
#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "socnet/tensor.hpp"

namespace socnet {

// xoshiro256** seeded through splitmix64. Integer arithmetic only, so the
// raw stream is identical on every platform. Gaussian draws use Box-Muller
// on the uniform stream and cache the second variate of each pair.
class Rng {
 public:
  struct State {
    std::array<std::uint64_t, 4> s{};
    bool has_spare = false;
    double spare = 0.0;
    std::uint64_t seed = 0;
  };

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return state_.seed; }

  std::uint64_t next_u64() noexcept {
    auto& s = state_.s;
    const std::uint64_t result = std::rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = std::rotl(s[3], 45);
    return result;
  }
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on [lo, hi); lo == hi yields lo.
  double uniform(double lo, double hi);
  double gaussian(double mean, double stddev);
  bool bernoulli(double p);
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  const State& state() const noexcept { return state_; }
  static Rng from_state(const State& state);

  // Text form: "seed s0 s1 s2 s3 has_spare spare_bits", all hex.
  std::string serialize() const;
  static Rng deserialize(std::string_view text);

 private:
  State state_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

Tensor draw_gaussian(Rng& rng, double mean, double stddev, std::size_t n);
Tensor draw_uniform(Rng& rng, double lo, double hi, std::size_t n);

// Fisher-Yates over [first, last) using Rng::below, so the permutation does
// not depend on the standard library implementation.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    auto j = rng.below(i);
    using std::swap;
    swap(first[i - 1], first[j]);
  }
}

}  // namespace socnet
