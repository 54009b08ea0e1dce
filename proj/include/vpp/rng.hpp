#pragma once

#include <cstdint>
#include <numbers>
#include <random>

#include "vpp/geometry.hpp"

namespace vpp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded generator. Distribution code lives here instead of <random> so
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  /// Child generator on an independent stream; does not advance this one.
  Rng split(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ ((stream + 1) * 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * n);
    return v < n ? v : n - 1;
  }

  /// Uniformly distributed direction on the unit sphere.
  Vec3 unit_vector() {
    double z = 2.0 * uniform() - 1.0;
    double phi = 2.0 * std::numbers::pi * uniform();
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace vpp
