#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fskd {

// splitmix64; used to derive independent stream seeds from one run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::mt19937_64& engine() { return gen_; }
  const std::mt19937_64& engine() const { return gen_; }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(gen_);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(gen_);
  }

  void fill_uniform(std::vector<double>& v, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& x : v) x = d(gen_);
  }

  // Kaiming-uniform fan-in init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
  void fill_kaiming_uniform(std::vector<double>& v, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    fill_uniform(v, -bound, bound);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fskd
