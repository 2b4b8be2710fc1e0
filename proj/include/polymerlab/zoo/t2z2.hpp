#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polymerlab/graph.hpp"
#include "polymerlab/zoo/binary_path.hpp"

namespace polymerlab {

/// Product walk S = (T, X) on T_2 x Z^2: X is simple random walk on Z^2;
/// when X moves to y != 0, T moves to a uniform child, and when X moves to
/// 0, T jumps back to the tree root o.
///
/// Keys: (x_1, x_2, depth, packed path bits...). The kernel is defined on
/// the full product; T is never moved toward its parent except by a reset.
class T2TimesZ2 final : public RootedGraph {
 public:
  static VertexKey vertex(std::int64_t x1, std::int64_t x2, std::vector<std::int64_t> path = {0}) {
    path.insert(path.begin(), {x1, x2});
    return VertexKey(Family::T2TimesZ2, std::move(path));
  }

  static std::int64_t depth(const VertexKey& v) { return v[2]; }

  /// Same tree vertex, child `bit`, at lattice point (x1, x2).
  static VertexKey descend(const VertexKey& v, int bit, std::int64_t x1, std::int64_t x2) {
    auto p = detail::path_child(v.values(), 2, bit);
    p[0] = x1;
    p[1] = x2;
    return VertexKey(Family::T2TimesZ2, std::move(p));
  }

  Family family() const override { return Family::T2TimesZ2; }
  VertexKey root() const override { return vertex(0, 0); }

  bool contains(const VertexKey& v) const override {
    return v.family() == Family::T2TimesZ2 && v.size() >= 3 && detail::path_valid(v.values(), 2);
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    require(v);
    static constexpr std::int64_t dx[4] = {1, -1, 0, 0};
    static constexpr std::int64_t dy[4] = {0, 0, 1, -1};
    TransitionRow row;
    for (int k = 0; k < 4; ++k) {
      const auto y1 = v[0] + dx[k], y2 = v[1] + dy[k];
      if (y1 == 0 && y2 == 0) {
        row.entries.push_back({vertex(0, 0), 0.25, std::log(0.25)});
        continue;
      }
      for (int bit = 0; bit < 2; ++bit) row.entries.push_back({descend(v, bit, y1, y2), 0.125, std::log(0.125)});
    }
    return row;
  }

  nlohmann::json metadata() const override {
    return {{"family", "t2_times_z2"}, {"recurrent", true}};
  }
};

}  // namespace polymerlab
