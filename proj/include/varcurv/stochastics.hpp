#pragma once
// Deterministic hierarchical random streams.
//
// A stream is addressed by (base_seed, path) where path is a list of
// (label, index) pairs. The address is hashed with SplitMix64 into the
// 256-bit state of a xoshiro256++ generator, so any stream can be
// reconstructed independently of draw order or thread schedule. Normal
// variates use Box-Muller on 53-bit uniforms; the whole pipeline is fixed
// so identical addresses give bit-identical draws everywhere.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace varcurv {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Address of a random stream. Children extend the path, never mutate the
// parent, so a key can be shared freely across workers.
struct StreamKey {
  std::uint64_t base_seed = 0;
  std::vector<std::pair<std::string, std::uint64_t>> path;

  StreamKey() = default;
  explicit StreamKey(std::uint64_t seed) : base_seed(seed) {}

  StreamKey child(std::string label, std::uint64_t index) const {
    StreamKey k = *this;
    k.path.emplace_back(std::move(label), index);
    return k;
  }

  // Order-sensitive 64-bit digest of (base_seed, path).
  std::uint64_t digest() const {
    std::uint64_t h = base_seed ^ 0x6a09e667f3bcc908ULL;
    (void)detail::splitmix64(h);
    for (const auto& [label, index] : path) {
      h ^= detail::fnv1a64(label);
      (void)detail::splitmix64(h);
      h ^= index;
      (void)detail::splitmix64(h);
    }
    return h;
  }
};

// xoshiro256++ seeded from a StreamKey digest via SplitMix64.
class RandomStream {
 public:
  explicit RandomStream(const StreamKey& key) : key_(key) {
    std::uint64_t h = key.digest();
    for (auto& word : state_) word = detail::splitmix64(h);
    // All-zero state is invalid for xoshiro; unreachable in practice.
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  const StreamKey& key() const { return key_; }

  std::uint64_t next_u64() {
    const std::uint64_t result =
        detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; pairs are cached.
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd gaussian_vector(int dimension) {
    if (dimension <= 0) {
      throw std::invalid_argument(
          "gaussian_vector: dimension must be positive, got " +
          std::to_string(dimension));
    }
    Eigen::VectorXd v(dimension);
    for (int i = 0; i < dimension; ++i) v[i] = gaussian();
    return v;
  }

  // Entries are +-1 with equal probability.
  Eigen::VectorXd rademacher_vector(int dimension) {
    if (dimension <= 0) {
      throw std::invalid_argument(
          "rademacher_vector: dimension must be positive, got " +
          std::to_string(dimension));
    }
    Eigen::VectorXd v(dimension);
    for (int i = 0; i < dimension; ++i)
      v[i] = (next_u64() >> 63) ? 1.0 : -1.0;
    return v;
  }

  // Uniform integer in [0, bound) by rejection, bias-free.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0)
      throw std::invalid_argument("uniform_below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  StreamKey key_;
  std::uint64_t state_[4] = {};
  double cached_ = 0.0;
  bool has_cached_ = false;
};

inline RandomStream derive_stream(const StreamKey& key) {
  return RandomStream(key);
}

inline Eigen::VectorXd sample_gaussian_vector(RandomStream& stream,
                                              int dimension) {
  return stream.gaussian_vector(dimension);
}

}  // namespace varcurv
