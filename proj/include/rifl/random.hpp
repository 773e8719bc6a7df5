#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>
#include <vector>

namespace rifl {

// Philox4x32-10 (Salmon et al. 2011). Pure function of (counter, key).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += W0;
      key[1] += W1;
    }
    std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
    std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
    auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

// splitmix64 finalizer, used to derive independent seeds per purpose.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the tag
  for (unsigned char c : tag) h = (h ^ c) * 0x100000001B3ull;
  return mix64(seed ^ mix64(h));
}

// Replication r, resample m -> stream r * 2^20 + m.
inline std::uint64_t stream_index(std::uint64_t rep, std::uint64_t item) { return (rep << 20) + item; }

// Counter-based stream: the key is the seed, the upper counter half is the
// stream id and the lower half counts 128-bit blocks.  Two streams with
// equal (seed, stream_id) emit identical sequences on every platform.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  result_type operator()() {
    if (avail_ == 0) refill();
    --avail_;
    return buf_[avail_];
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    double t = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do x = (*this)(); while (x >= limit);
    return x % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  void refill() {
    std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                        static_cast<std::uint32_t>(seed_ >> 32)};
    auto out = philox4x32(ctr, key);
    ++block_;
    // buf_ is consumed from the back
    buf_[1] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    buf_[0] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    avail_ = 2;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buf_{};
  int avail_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rifl
