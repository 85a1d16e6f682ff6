#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace manip {

// Deterministic PRNG with hand-rolled distributions. std distributions are
// implementation-defined, so every draw here goes through our own code to
// keep runs byte-reproducible on a given platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed == 0 ? 0x9e3779b97f4a7c15ull : seed) {
    // warm up past low-entropy seeds
    for (int i = 0; i < 4; ++i) next();
  }

  std::uint64_t next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  double gauss() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller; 1-u avoids log(0)
    double u = 1.0 - uniform();
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 6.283185307179586 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gauss(double mu, double sigma) { return mu + sigma * gauss(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  // index drawn from unnormalized non-negative weights
  std::size_t choice(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    double c = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      c += weights[i];
      if (r < c) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  // independent child stream; (seed, tag) -> new stream
  Rng fork(std::uint64_t tag) const {
    std::uint64_t z = state_ ^ (0x632be59bd9b4e019ull * (tag + 1));
    return Rng(z);
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace manip
