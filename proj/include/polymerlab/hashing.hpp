#pragma once

#include <sodium.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <string_view>

namespace polymerlab {

/// 128-bit keyed hash output, split into two 64-bit words (little-endian
/// halves of the SipHash-2-4-128 digest).
struct Hash128 {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};

// Domain separators for the different consumers of the keyed hash.
inline constexpr std::uint64_t kDomainOmega = 0x6f6d656761000001ull;
inline constexpr std::uint64_t kDomainBond = 0x626f6e6400000002ull;
inline constexpr std::uint64_t kDomainOffspring = 0x6f66667370000003ull;
inline constexpr std::uint64_t kDomainSeed = 0x7365656400000004ull;

namespace detail {

inline void store_le64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline std::uint64_t load_le64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void ensure_sodium() {
  static const bool ok = [] { return sodium_init() >= 0; }();
  (void)ok;
}

}  // namespace detail

/// SipHash-2-4 with 128-bit output. The 16-byte key is
/// little-endian(seed) || little-endian(domain).
inline Hash128 keyed_hash128(std::uint64_t seed, std::uint64_t domain, std::string_view msg) {
  detail::ensure_sodium();
  unsigned char key[crypto_shorthash_siphashx24_KEYBYTES];
  detail::store_le64(key, seed);
  detail::store_le64(key + 8, domain);
  unsigned char out[crypto_shorthash_siphashx24_BYTES];
  crypto_shorthash_siphashx24(out, reinterpret_cast<const unsigned char*>(msg.data()), msg.size(), key);
  return {detail::load_le64(out), detail::load_le64(out + 8)};
}

/// Uniform double in the open interval (0,1) from the top 53 bits of a word.
inline double open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Appends a non-negative counter as a big-endian base-128 varint.
inline void append_counter(std::string& out, std::uint64_t v) {
  int groups = 1;
  for (auto t = v >> 7; t != 0; t >>= 7) ++groups;
  for (int g = groups - 1; g >= 0; --g) {
    auto byte = static_cast<unsigned char>((v >> (7 * g)) & 0x7f);
    if (g != 0) byte |= 0x80;
    out.push_back(static_cast<char>(byte));
  }
}

/// Derives an independent 64-bit seed for stream `index` of kind `tag`.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index) {
  std::string msg(tag);
  msg.push_back('\0');
  append_counter(msg, index);
  return keyed_hash128(base, kDomainSeed, msg).lo;
}

/// Sequential generator for walk sampling and path-level Monte Carlo.
/// std::mt19937_64 is fully specified by the standard; doubles are formed
/// by open_unit so results do not depend on library distributions.
class WalkRng {
 public:
  explicit WalkRng(std::uint64_t seed) : engine_(derive_seed(seed, "walk", 0)) {}
  double uniform() { return open_unit(engine_()); }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace polymerlab
