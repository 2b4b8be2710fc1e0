#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polymerlab/graph.hpp"

namespace polymerlab {

/// Z^d with a pipe of length k glued at (k, 0, ..., 0) for every k >= 1.
///
/// Keys: lattice point x is (0, x_1, ..., x_d); the j-th vertex of pipe k
/// is (k, j) with 1 <= j <= k, (k, 1) adjacent to the lattice and (k, k)
/// a dead end. Simple random walk on the union.
class PipesLattice final : public RootedGraph {
 public:
  explicit PipesLattice(int d) : d_(d) {
    if (d < 1) fail(ErrorKind::ConfigError, "dimension must be >= 1");
  }

  int dimension() const { return d_; }

  VertexKey lattice_point(std::vector<std::int64_t> x) const {
    x.insert(x.begin(), 0);
    return VertexKey(Family::PipesLattice, std::move(x));
  }
  static VertexKey pipe_vertex(std::int64_t k, std::int64_t j) { return VertexKey(Family::PipesLattice, {k, j}); }
  static VertexKey pipe_center(std::int64_t k) { return pipe_vertex(k, (k + 1) / 2); }

  bool is_pipe(const VertexKey& v) const { return v[0] != 0; }

  Family family() const override { return Family::PipesLattice; }
  VertexKey root() const override { return lattice_point(std::vector<std::int64_t>(d_, 0)); }

  bool contains(const VertexKey& v) const override {
    if (v.family() != Family::PipesLattice || v.size() == 0) return false;
    if (v[0] == 0) return v.size() == static_cast<std::size_t>(d_) + 1;
    return v.size() == 2 && v[0] >= 1 && v[1] >= 1 && v[1] <= v[0];
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    return uniform_row(neighbors(v));
  }

  std::vector<VertexKey> neighbors(const VertexKey& v) const {
    require(v);
    std::vector<VertexKey> nb;
    if (is_pipe(v)) {
      const auto k = v[0], j = v[1];
      if (j == 1) {
        std::vector<std::int64_t> x(d_, 0);
        x[0] = k;
        nb.push_back(lattice_point(x));
      } else {
        nb.push_back(pipe_vertex(k, j - 1));
      }
      if (j < k) nb.push_back(pipe_vertex(k, j + 1));
      return nb;
    }
    auto p = v.values();
    for (int i = 1; i <= d_; ++i)
      for (int s : {-1, 1}) {
        p[i] += s;
        nb.emplace_back(Family::PipesLattice, p);
        p[i] -= s;
      }
    bool on_axis = v[1] >= 1;
    for (int i = 2; i <= d_ && on_axis; ++i)
      if (v[i] != 0) on_axis = false;
    if (on_axis) nb.push_back(pipe_vertex(v[1], 1));
    return nb;
  }

  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    return std::log(static_cast<double>(neighbors(v).size()));
  }

  nlohmann::json metadata() const override {
    return {{"family", "pipes_lattice"}, {"d", d_}, {"high_dim_regime", d_ >= 4}};
  }

 private:
  int d_;
};

}  // namespace polymerlab
