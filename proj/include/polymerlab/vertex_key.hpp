#pragma once

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polymerlab/error.hpp"

namespace polymerlab {

/// Graph family discriminant. The numeric values are part of the frozen
/// byte encoding of vertex keys and must never be renumbered.
enum class Family : std::uint8_t {
  Lattice = 1,
  HalfLattice = 2,
  PercolationCluster = 3,
  GWTree = 4,
  Canopy = 5,
  PipesLattice = 6,
  DoubleExpRayTree = 7,
  T2TimesZ2 = 8,
  SierpinskiGasket = 9,
  ConductanceSegment = 10,
  ExplicitFinite = 11,
};

std::string_view family_name(Family f);

/// Canonical structural address of a vertex: a family tag plus a
/// variable-length sequence of signed integers (coordinates, tree paths).
///
/// Byte encoding (frozen, hashed by the disorder field):
///   byte 0      family tag
///   then, for each payload integer v, the zigzag value
///   u = (v << 1) ^ (v >> 63) written as a big-endian base-128 varint:
///   7-bit groups from most to least significant, every byte except the
///   last of a number carries the 0x80 continuation bit.
class VertexKey {
 public:
  VertexKey() = default;
  VertexKey(Family family, std::initializer_list<std::int64_t> payload)
      : family_(family), payload_(payload) {}
  VertexKey(Family family, std::vector<std::int64_t> payload)
      : family_(family), payload_(std::move(payload)) {}

  Family family() const noexcept { return family_; }
  std::span<const std::int64_t> payload() const noexcept { return payload_; }
  const std::vector<std::int64_t>& values() const noexcept { return payload_; }
  std::size_t size() const noexcept { return payload_.size(); }
  std::int64_t operator[](std::size_t i) const { return payload_[i]; }

  std::string bytes() const;
  void append_bytes(std::string& out) const;
  static VertexKey decode(std::string_view bytes);

  std::string to_string() const;
  std::size_t hash() const noexcept;

  friend bool operator==(const VertexKey&, const VertexKey&) = default;
  friend std::strong_ordering operator<=>(const VertexKey& a, const VertexKey& b) {
    if (auto c = a.family_ <=> b.family_; c != 0) return c;
    return a.payload_ <=> b.payload_;
  }

 private:
  Family family_ = Family::ExplicitFinite;
  std::vector<std::int64_t> payload_;
};

struct VertexKeyHash {
  std::size_t operator()(const VertexKey& k) const noexcept { return k.hash(); }
};

// ---------------------------------------------------------------------------

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::Lattice: return "lattice";
    case Family::HalfLattice: return "half_lattice";
    case Family::PercolationCluster: return "percolation_cluster";
    case Family::GWTree: return "gw_tree";
    case Family::Canopy: return "canopy";
    case Family::PipesLattice: return "pipes_lattice";
    case Family::DoubleExpRayTree: return "double_exp_ray_tree";
    case Family::T2TimesZ2: return "t2_times_z2";
    case Family::SierpinskiGasket: return "sierpinski_gasket";
    case Family::ConductanceSegment: return "conductance_segment";
    case Family::ExplicitFinite: return "explicit_finite";
  }
  return "unknown";
}

namespace detail {

inline void put_varint(std::string& out, std::int64_t v) {
  auto u = (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
  int groups = 1;
  for (auto t = u >> 7; t != 0; t >>= 7) ++groups;
  for (int g = groups - 1; g >= 0; --g) {
    auto byte = static_cast<unsigned char>((u >> (7 * g)) & 0x7f);
    if (g != 0) byte |= 0x80;
    out.push_back(static_cast<char>(byte));
  }
}

}  // namespace detail

inline void VertexKey::append_bytes(std::string& out) const {
  out.push_back(static_cast<char>(family_));
  for (auto v : payload_) detail::put_varint(out, v);
}

inline std::string VertexKey::bytes() const {
  std::string out;
  out.reserve(1 + 2 * payload_.size());
  append_bytes(out);
  return out;
}

inline VertexKey VertexKey::decode(std::string_view bytes) {
  if (bytes.empty()) fail(ErrorKind::InvalidVertex, "empty key encoding");
  auto tag = static_cast<std::uint8_t>(bytes[0]);
  if (tag < 1 || tag > 11) fail(ErrorKind::InvalidVertex, "unknown family tag");
  std::vector<std::int64_t> payload;
  std::uint64_t u = 0;
  int groups = 0;
  for (std::size_t i = 1; i < bytes.size(); ++i) {
    auto b = static_cast<unsigned char>(bytes[i]);
    if (++groups > 10) fail(ErrorKind::InvalidVertex, "varint too long");
    u = (u << 7) | (b & 0x7f);
    if ((b & 0x80) == 0) {
      payload.push_back(static_cast<std::int64_t>((u >> 1) ^ (~(u & 1) + 1)));
      u = 0;
      groups = 0;
    }
  }
  if (groups != 0) fail(ErrorKind::InvalidVertex, "truncated varint");
  return VertexKey(static_cast<Family>(tag), std::move(payload));
}

inline std::string VertexKey::to_string() const {
  std::string s(family_name(family_));
  s += '[';
  for (std::size_t i = 0; i < payload_.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(payload_[i]);
  }
  s += ']';
  return s;
}

inline std::size_t VertexKey::hash() const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ull ^ static_cast<std::uint64_t>(family_);
  for (auto v : payload_) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 31;
  }
  return static_cast<std::size_t>(h);
}

}  // namespace polymerlab
