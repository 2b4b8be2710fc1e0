#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polymerlab/graph.hpp"

namespace polymerlab {

/// Level-`levels` Sierpinski gasket pre-fractal with simple random walk,
/// rooted at a corner.
///
/// Vertices are points (i, j) of the triangular lattice (basis e_1, e_2 at
/// 60 degrees). The unit up-triangle with lower-left corner (a, b) belongs
/// to the gasket iff a, b >= 0, a + b < 2^levels and (a & b) == 0, which is
/// Pascal's triangle mod 2.
class SierpinskiGasket final : public RootedGraph {
 public:
  explicit SierpinskiGasket(int levels) : levels_(levels) {
    if (levels < 1 || levels > 40) fail(ErrorKind::ConfigError, "gasket levels must be in [1, 40]");
    side_ = std::int64_t{1} << levels;
  }

  int levels() const { return levels_; }
  std::int64_t side() const { return side_; }

  static VertexKey vertex(std::int64_t i, std::int64_t j) { return VertexKey(Family::SierpinskiGasket, {i, j}); }

  bool triangle(std::int64_t a, std::int64_t b) const { return a >= 0 && b >= 0 && a + b < side_ && (a & b) == 0; }

  Family family() const override { return Family::SierpinskiGasket; }
  VertexKey root() const override { return vertex(0, 0); }

  bool contains(const VertexKey& v) const override {
    if (v.family() != Family::SierpinskiGasket || v.size() != 2) return false;
    const auto i = v[0], j = v[1];
    return triangle(i, j) || triangle(i - 1, j) || triangle(i, j - 1);
  }

  std::vector<VertexKey> neighbors(const VertexKey& v) const {
    require(v);
    const auto i = v[0], j = v[1];
    std::vector<VertexKey> nb;
    if (triangle(i, j)) {
      nb.push_back(vertex(i + 1, j));
      nb.push_back(vertex(i, j + 1));
    }
    if (triangle(i - 1, j)) {
      nb.push_back(vertex(i - 1, j));
      nb.push_back(vertex(i - 1, j + 1));
    }
    if (triangle(i, j - 1)) {
      nb.push_back(vertex(i, j - 1));
      nb.push_back(vertex(i + 1, j - 1));
    }
    return nb;
  }

  TransitionRow transition_row(const VertexKey& v) const override { return uniform_row(neighbors(v)); }

  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    return std::log(static_cast<double>(neighbors(v).size()));
  }

  /// Walks of n <= 2^{levels-2} steps from the corner never see the far
  /// corners of the pre-fractal.
  std::optional<std::int64_t> safe_horizon(const VertexKey& from) const override {
    return std::max<std::int64_t>(0, (side_ >> 2) - (from[0] + from[1]));
  }

  nlohmann::json metadata() const override {
    return {{"family", "sierpinski_gasket"},
            {"levels", levels_},
            {"spectral_dimension", 2.0 * std::log(3.0) / std::log(5.0)},
            {"fractal_dimension", std::log(3.0) / std::log(2.0)}};
  }

 private:
  int levels_;
  std::int64_t side_;
};

}  // namespace polymerlab
