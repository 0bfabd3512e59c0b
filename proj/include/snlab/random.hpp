#pragma once

#include <snlab/errors.hpp>
#include <snlab/matrix.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace snlab {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based random stream. Every draw is a pure function of
/// (seed, stream_id, counter), so identical streams reproduce bit-for-bit and
/// substreams are addressed by id rather than by advancing shared state.
class RngStream {
 public:
  constexpr RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept
      : seed_(seed), stream_id_(stream_id),
        key_(detail::splitmix64(detail::splitmix64(seed) ^
                                detail::splitmix64(stream_id ^ 0xD1B54A32D192ED03ULL))) {}

  [[nodiscard]] constexpr std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] constexpr std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Independent child stream; the (seed, child) pair is itself a valid stream.
  [[nodiscard]] constexpr RngStream child(std::uint64_t id) const noexcept {
    return {detail::splitmix64(key_ ^ 0xA0761D6478BD642FULL), id};
  }

  [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return detail::splitmix64(detail::splitmix64(key_ + counter * 0x9E3779B97F4A7C15ULL) ^ key_);
  }

  /// Uniform on the open interval (0, 1).
  [[nodiscard]] constexpr double uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal; counters 2k and 2k+1 share one Box-Muller pair.
  [[nodiscard]] double normal(std::uint64_t counter) const noexcept {
    const std::uint64_t pair = counter & ~std::uint64_t{1};
    const double u1 = uniform(pair);
    const double u2 = uniform(pair + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (counter & 1U) ? r * std::sin(angle) : r * std::cos(angle);
  }

  /// Uniform integer in [0, bound) by rejection.
  [[nodiscard]] std::uint64_t below(std::uint64_t bound, std::uint64_t& counter) const noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
      const std::uint64_t b = bits(counter++);
      if (b < limit) return b % bound;
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
};

/// i.i.d. N(0, std^2) entries; entry (r, c) uses counter r * cols + c.
inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std_dev,
                              const RngStream& rng) {
  if (!(std_dev >= 0.0) || !std::isfinite(std_dev))
    throw ArgumentError("gaussian_matrix: standard deviation must be finite and >= 0");
  Matrix m(rows, cols);
  if (std_dev == 0.0) return m;
  auto d = m.data();
  for (std::size_t i = 0; i < d.size(); i += 2) {
    const double u1 = rng.uniform(i);
    const double u2 = rng.uniform(i + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    d[i] = std_dev * r * std::cos(angle);
    if (i + 1 < d.size()) d[i + 1] = std_dev * r * std::sin(angle);
  }
  return m;
}

/// Fisher-Yates permutation of [0, n) drawn from `rng`.
inline std::vector<std::size_t> random_permutation(std::size_t n, const RngStream& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::uint64_t counter = 0;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i, counter));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace snlab
