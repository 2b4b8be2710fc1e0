#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polymerlab/graph.hpp"

namespace polymerlab {

/// Simple random walk on Z^d, or on the orthant Z_+^d when `half` is set
/// (boundary vertices just have fewer neighbours).
class LatticeGraph final : public RootedGraph {
 public:
  explicit LatticeGraph(int d, bool half = false) : d_(d), half_(half) {
    if (d < 1) fail(ErrorKind::ConfigError, "lattice dimension must be >= 1");
  }

  int dimension() const { return d_; }
  bool half() const { return half_; }

  Family family() const override { return half_ ? Family::HalfLattice : Family::Lattice; }
  VertexKey root() const override { return VertexKey(family(), std::vector<std::int64_t>(d_, 0)); }

  VertexKey point(std::vector<std::int64_t> x) const { return VertexKey(family(), std::move(x)); }

  bool contains(const VertexKey& v) const override {
    if (v.family() != family() || v.size() != static_cast<std::size_t>(d_)) return false;
    if (half_)
      for (auto c : v.payload())
        if (c < 0) return false;
    return true;
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    require(v);
    std::vector<VertexKey> nb;
    nb.reserve(2 * d_);
    std::vector<std::int64_t> x = v.values();
    for (int i = 0; i < d_; ++i) {
      for (int s : {-1, 1}) {
        x[i] += s;
        if (!half_ || x[i] >= 0) nb.emplace_back(family(), x);
        x[i] -= s;
      }
    }
    return uniform_row(std::move(nb));
  }

  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    require(v);
    int deg = 2 * d_;
    if (half_)
      for (auto c : v.payload())
        if (c == 0) --deg;
    return std::log(static_cast<double>(deg));
  }

  nlohmann::json metadata() const override {
    return {{"family", std::string(family_name(family()))}, {"d", d_}, {"recurrent", d_ <= 2}};
  }

 private:
  int d_;
  bool half_;
};

}  // namespace polymerlab
