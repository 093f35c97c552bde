#ifndef CHARGESIM_RNG_HPP
#define CHARGESIM_RNG_HPP

#include <cmath>
#include <cstdint>

namespace chargesim {

/// 64-bit finalizer (Stafford mix13, as used by splitmix64).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

/// Combine a purpose tag and up to two indices into a stream id.
constexpr std::uint64_t streamId(std::uint64_t purpose, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
  return mix64(purpose + kGolden * (a + 1)) ^ mix64(b + kGolden);
}

namespace stream {
constexpr std::uint64_t kPlacement = 0x706c6163;   // measurement placements
constexpr std::uint64_t kOutcome = 0x6f757463;     // trajectory outcomes
constexpr std::uint64_t kPercolation = 0x70657263; // percolation realizations
constexpr std::uint64_t kBootstrap = 0x626f6f74;   // resampling
} // namespace stream

/// Counter-based random stream: the state is (key, counter) and each draw is
/// a pure function of the pair. Streams keyed by (master seed, stream id) are
/// reproducible independent of scheduling; the sequence is the splitmix64
/// sequence started at a per-stream key.
class CounterRng {
public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed ^ mix64(stream + kGolden)) + (stream << 1) + 1) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ull; }

  result_type operator()() { return mix64(key_ + kGolden * ++counter_); }

  std::uint64_t counter() const { return counter_; }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return (*this)() % n; }

  /// Standard normal via Box-Muller (hand-rolled for bit-reproducibility).
  double normal() {
    if (haveSpare_) {
      haveSpare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0)
      u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    haveSpare_ = true;
    return r * std::cos(a);
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool haveSpare_ = false;
  double spare_ = 0.0;
};

} // namespace chargesim

#endif // CHARGESIM_RNG_HPP
