#pragma once

// Counter-based random numbers (Philox4x32-10) with keyed streams.
//
// Every random quantity in the library is drawn from a stream whose key is
// derived from a tuple such as (master_seed, replication, variable_tag).
// Because Philox is counter-based, draw i of a stream is a pure function of
// (key, i), which makes results independent of thread scheduling.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <utility>
#include <vector>

namespace rpiv {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a, used to turn readable stream tags into integers.
constexpr std::uint64_t tag(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Derives a stream key from an ordered tuple of integers.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMul0 = 0xD2511F53U;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57U;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9U;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85U;

constexpr Counter round(const Counter& c, const Key& k) noexcept {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

/// Philox4x32 with 10 rounds.
constexpr Counter block(Counter ctr, Key key) noexcept {
  ctr = round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += kWeyl0;
    key[1] += kWeyl1;
    ctr = round(ctr, key);
  }
  return ctr;
}

}  // namespace philox

/// A sequential view over one Philox stream. Cheap to construct; copyable.
class RandomStream {
 public:
  explicit constexpr RandomStream(std::uint64_t key) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  RandomStream(std::initializer_list<std::uint64_t> parts) noexcept : RandomStream(derive_key(parts)) {}

  /// Raw 64 bits at absolute position `index` of the stream, independent of
  /// the sequential cursor. Each Philox block supplies two consecutive words.
  std::uint64_t at(std::uint64_t index) const noexcept {
    const auto out = block_at(index >> 1);
    return word(out, index & 1U);
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t block_index = position_ >> 1;
    if (!cached_ || cached_index_ != block_index) {
      cache_ = block_at(block_index);
      cached_index_ = block_index;
      cached_ = true;
    }
    return word(cache_, position_++ & 1U);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return to_unit(next_u64()); }

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept { return to_open_unit(next_u64()); }

  /// Unbiased integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    for (;;) {
      const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  std::uint64_t position() const noexcept { return position_; }

  static constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }
  static constexpr double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
  }

 private:
  philox::Counter block_at(std::uint64_t block_index) const noexcept {
    const philox::Counter ctr{static_cast<std::uint32_t>(block_index), static_cast<std::uint32_t>(block_index >> 32),
                              0U, 0U};
    return philox::block(ctr, key_);
  }

  static std::uint64_t word(const philox::Counter& c, std::uint64_t half) noexcept {
    return half ? (static_cast<std::uint64_t>(c[3]) << 32) | c[2] : (static_cast<std::uint64_t>(c[1]) << 32) | c[0];
  }

  philox::Key key_;
  std::uint64_t position_ = 0;
  philox::Counter cache_{};
  std::uint64_t cached_index_ = 0;
  bool cached_ = false;
};

/// Fisher-Yates shuffle driven by a RandomStream (std::shuffle is not
/// portable across standard libraries).
template <typename T>
void shuffle(std::vector<T>& values, RandomStream& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace rpiv
