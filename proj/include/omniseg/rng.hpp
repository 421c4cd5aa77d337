#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

namespace omniseg {

/// Stateless mix, used to derive independent per-record / per-cell seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed for independent stream `index` under a master seed: records, split
/// shuffles and ablation cells each get their own stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index));
}

/// mt19937_64 wrapper with hand-rolled variate mappings so that sequences do
/// not depend on the standard library's distribution implementations. State
/// round-trips through a string for checkpointing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double u01() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  /// Uniform integer in [lo, hi], both ends inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + int(engine_() % span);
  }

  bool bernoulli(double p) { return u01() < p; }

  /// Single standard normal draw (Marsaglia polar, partner discarded).
  double normal() {
    double a, b;
    polar_pair(a, b);
    return a;
  }

  /// Fills `out` with standard normals, consuming both values of each
  /// generated pair so arrays cost half the draws of repeated normal().
  void fill_normal(std::span<double> out) {
    std::size_t i = 0;
    while (i + 2 <= out.size()) {
      polar_pair(out[i], out[i + 1]);
      i += 2;
    }
    if (i < out.size()) out[i] = normal();
  }

  std::string save_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw std::invalid_argument("Rng::load_state: malformed state string");
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  void polar_pair(double& a, double& b) {
    double x, y, s;
    do {
      x = 2.0 * u01() - 1.0;
      y = 2.0 * u01() - 1.0;
      s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    a = x * f;
    b = y * f;
  }

  std::mt19937_64 engine_;
};

}  // namespace omniseg
