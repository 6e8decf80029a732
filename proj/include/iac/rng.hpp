#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace iac {

// Deterministic PRNG (splitmix64 core) used everywhere weights, masks or
// shuffles are drawn. Streams are forked by hashing a stream id into the
// construction seed, so substreams stay decoupled from how much the parent
// has been consumed.
class Rng {
public:
  explicit Rng(uint64_t seed);

  // Independent child stream; derived from the construction seed only.
  Rng fork(uint64_t stream) const;

  uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal(double mean, double sd);
  int uniform_int(int lo, int hi);       // inclusive bounds

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)],
                v[static_cast<size_t>(uniform_int(0, i))]);
    }
  }

private:
  uint64_t seed_;
  uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace iac
