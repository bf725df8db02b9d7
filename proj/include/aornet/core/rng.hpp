#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "aornet/core/common.hpp"

namespace aornet {

// splitmix64 step. Small, fast, and fully specified here so streams are
// byte-identical across compilers — std::mt19937 + std::*_distribution are
// not, and reproducibility of generated datasets and training runs is a
// contract in this codebase.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // [0,1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0,n) via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    require(n > 0, "uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Box–Muller; the spare value is cached so consecutive draws cost one
  // transform per pair.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1], keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Standard Gumbel(0,1): -log(-log(u)).
  double gumbel() {
    double u = 1.0 - uniform();  // (0,1]
    if (u >= 1.0) u = 1.0 - 1e-16;
    return -std::log(-std::log(u));
  }

  // Fisher–Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Named substream: hash the parent seed with a label path so e.g. the scene
  // stream and the motion stream of one clip never alias, and adding draws to
  // one cannot shift the other.
  Rng fork(std::string_view label) const {
    std::uint64_t h = fnv1a64(&state_, sizeof(state_));
    h = fnv1a64(label, h);
    std::uint64_t s = h;
    (void)splitmix64(s);  // scramble so nearby labels decorrelate
    return Rng(s);
  }

  Rng fork(std::string_view label, std::uint64_t index) const {
    std::uint64_t h = fnv1a64(&state_, sizeof(state_));
    h = fnv1a64(label, h);
    h = fnv1a64(&index, sizeof(index), h);
    std::uint64_t s = h;
    (void)splitmix64(s);
    return Rng(s);
  }

  std::uint64_t seed_state() const { return state_; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace aornet
