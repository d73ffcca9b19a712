#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace swarmchain {

/// SplitMix64 stream. The standard <random> distributions are
/// implementation-defined, so every draw below is built from raw 64-bit
/// outputs to keep traces identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open0() noexcept { return 1.0 - uniform(); }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % bound;
  }

  /// Number of Bernoulli(p) trials up to and including the first success.
  std::uint64_t geometric(double p) noexcept {
    if (p >= 1.0) return 1;
    const double u = uniform_open0();
    const double k = std::ceil(std::log(u) / std::log1p(-p));
    if (!(k < 1.8e19)) return std::numeric_limits<std::uint64_t>::max();
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(k));
  }

  /// Binomial(n, p) by chunked inverse transform; each chunk keeps its mean
  /// small enough that pmf(0) does not underflow.
  std::uint64_t binomial(std::uint64_t n, double p) noexcept {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    constexpr double kChunkMean = 64.0;
    const auto chunk = static_cast<std::uint64_t>(std::max(1.0, std::floor(kChunkMean / p)));
    std::uint64_t total = 0;
    for (std::uint64_t done = 0; done < n;) {
      const std::uint64_t m = std::min(chunk, n - done);
      total += binomial_small(m, p);
      done += m;
    }
    return total;
  }

  double normal() noexcept {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Weighted sampling without replacement (successive draws, weights
  /// renormalized after each pick). Returns indices into `weights`.
  std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t k) {
    std::vector<std::size_t> remaining(weights.size());
    std::iota(remaining.begin(), remaining.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    while (picked.size() < k && !remaining.empty()) {
      double total = 0.0;
      for (auto i : remaining) total += weights[i];
      double target = uniform() * total;
      std::size_t pos = remaining.size() - 1;
      for (std::size_t r = 0; r < remaining.size(); ++r) {
        target -= weights[remaining[r]];
        if (target < 0.0) {
          pos = r;
          break;
        }
      }
      picked.push_back(remaining[pos]);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    return picked;
  }

 private:
  std::uint64_t binomial_small(std::uint64_t n, double p) noexcept {
    const double q = 1.0 - p;
    double pmf = std::exp(static_cast<double>(n) * std::log1p(-p));
    double cdf = pmf;
    const double u = uniform();
    std::uint64_t k = 0;
    while (u > cdf && k < n) {
      pmf *= (static_cast<double>(n - k) / static_cast<double>(k + 1)) * (p / q);
      ++k;
      cdf += pmf;
    }
    return k;
  }

  std::uint64_t state_;
};

/// Mixes several integers into one seed so per-(node, epoch) streams are
/// independent of iteration order.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) noexcept {
  Rng r(a ^ 0x6a09e667f3bcc908ULL);
  r.next();
  Rng s(r.next() ^ (b * 0xd1b54a32d192ed03ULL));
  s.next();
  Rng t(s.next() ^ (c * 0x8cb92ba72f3d8dd7ULL));
  return t.next();
}

}  // namespace swarmchain
