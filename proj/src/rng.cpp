#include "socnet/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace socnet {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(parent) ^ (index * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept {
  return derive_seed(parent, fnv1a64(tag));
}

Rng::Rng(std::uint64_t seed) {
  state_.seed = seed;
  std::uint64_t x = seed;
  for (auto& word : state_.s) {
    word = splitmix64(x);
    x += 0x9e3779b97f4a7c15ULL;
  }
}

double Rng::uniform(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument(fmt::format("uniform: lo {} > hi {}", lo, hi));
  if (lo == hi) return lo;
  double v = lo + (hi - lo) * uniform();
  return v < hi ? v : std::nextafter(hi, lo);
}

double Rng::gaussian(double mean, double stddev) {
  if (!(stddev >= 0.0)) throw std::invalid_argument(fmt::format("gaussian: negative stddev {}", stddev));
  double z;
  if (state_.has_spare) {
    state_.has_spare = false;
    z = state_.spare;
  } else {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    z = r * std::cos(theta);
    state_.spare = r * std::sin(theta);
    state_.has_spare = true;
  }
  return mean + stddev * z;
}

bool Rng::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(fmt::format("bernoulli: p {} outside [0,1]", p));
  return uniform() < p;
}

__extension__ using u128 = unsigned __int128;

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below: empty range");
  // Lemire's nearly-divisionless rejection method.
  u128 m = static_cast<u128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<u128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

Rng Rng::from_state(const State& state) {
  Rng rng;
  rng.state_ = state;
  return rng;
}

std::string Rng::serialize() const {
  return fmt::format("{:x} {:x} {:x} {:x} {:x} {:d} {:x}", state_.seed, state_.s[0], state_.s[1], state_.s[2],
                     state_.s[3], state_.has_spare ? 1 : 0, std::bit_cast<std::uint64_t>(state_.spare));
}

Rng Rng::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  State st;
  int spare_flag = 0;
  std::uint64_t spare_bits = 0;
  in >> std::hex >> st.seed >> st.s[0] >> st.s[1] >> st.s[2] >> st.s[3] >> std::dec >> spare_flag >> std::hex >>
      spare_bits;
  if (!in) throw std::invalid_argument("malformed Rng state: " + std::string(text));
  st.has_spare = spare_flag != 0;
  st.spare = std::bit_cast<double>(spare_bits);
  return from_state(st);
}

Tensor draw_gaussian(Rng& rng, double mean, double stddev, std::size_t n) {
  if (!(stddev >= 0.0)) throw std::invalid_argument(fmt::format("draw_gaussian: negative stddev {}", stddev));
  if (n == 0) return {};
  Tensor out({n});
  for (auto& v : out.data()) v = rng.gaussian(mean, stddev);
  return out;
}

Tensor draw_uniform(Rng& rng, double lo, double hi, std::size_t n) {
  if (!(lo <= hi)) throw std::invalid_argument(fmt::format("draw_uniform: lo {} > hi {}", lo, hi));
  if (n == 0) return {};
  Tensor out({n});
  for (auto& v : out.data()) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace socnet
