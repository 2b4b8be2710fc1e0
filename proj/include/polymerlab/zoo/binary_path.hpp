#pragma once

#include <cstdint>
#include <vector>

namespace polymerlab::detail {

// A path in the binary tree stored as the tail of a key payload starting at
// `off`: [depth, w_0, w_1, ...], child bits packed 62 per word, LSB first.
inline constexpr int kPathBitsPerWord = 62;

inline std::int64_t path_depth(const std::vector<std::int64_t>& p, std::size_t off) { return p[off]; }

inline int path_bit(const std::vector<std::int64_t>& p, std::size_t off, std::int64_t i) {
  return static_cast<int>((p[off + 1 + i / kPathBitsPerWord] >> (i % kPathBitsPerWord)) & 1);
}

inline std::vector<std::int64_t> path_child(std::vector<std::int64_t> p, std::size_t off, int bit) {
  const auto depth = p[off];
  if (depth % kPathBitsPerWord == 0) p.push_back(0);
  if (bit) p[off + 1 + depth / kPathBitsPerWord] |= std::int64_t{1} << (depth % kPathBitsPerWord);
  ++p[off];
  return p;
}

inline std::vector<std::int64_t> path_parent(std::vector<std::int64_t> p, std::size_t off) {
  const auto depth = --p[off];
  p[off + 1 + depth / kPathBitsPerWord] &= ~(std::int64_t{1} << (depth % kPathBitsPerWord));
  if (depth % kPathBitsPerWord == 0) p.pop_back();
  return p;
}

inline bool path_valid(const std::vector<std::int64_t>& p, std::size_t off) {
  if (p.size() <= off) return false;
  const auto depth = p[off];
  if (depth < 0) return false;
  const auto words = static_cast<std::size_t>((depth + kPathBitsPerWord - 1) / kPathBitsPerWord);
  if (p.size() != off + 1 + words) return false;
  for (std::size_t w = 0; w < words; ++w) {
    auto v = p[off + 1 + w];
    if (v < 0 || v >= (std::int64_t{1} << kPathBitsPerWord)) return false;
    if (w + 1 == words && depth % kPathBitsPerWord != 0 && (v >> (depth % kPathBitsPerWord)) != 0) return false;
  }
  return true;
}

}  // namespace polymerlab::detail
