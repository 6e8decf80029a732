#include "iac/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace iac {
namespace {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (0x9E3779B97F4A7C15ULL + (b << 6) + (b >> 2));
  splitmix64(s);
  return splitmix64(s);
}

}  // namespace

Rng::Rng(uint64_t seed) : seed_(seed), state_(seed) {}

Rng Rng::fork(uint64_t stream) const { return Rng(mix(seed_, stream + 1)); }

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double sd) {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return mean + sd * cached_normal_;
  }
  // Box-Muller; u clamped away from 0 so log stays finite.
  double u = uniform();
  if (u < 1e-300) u = 1e-300;
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * M_PI * v;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return mean + sd * r * std::cos(theta);
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
  const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
  const auto wide = static_cast<unsigned __int128>(next_u64()) * range;
  return lo + static_cast<int>(static_cast<uint64_t>(wide >> 64));
}

}  // namespace iac
