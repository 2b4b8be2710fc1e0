#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "polymerlab/graph.hpp"

namespace polymerlab {

/// Canopy tree of arity d with bias lambda toward the parent.
///
/// Key (level, index): level 0 are the leaves; vertex (l, j) has parent
/// (l+1, j/d) and children (l-1, j*d + c). Level l carries every index
/// j >= 0, so (l, 0) for l = 0, 1, ... is the distinguished leftmost ray.
/// Edge conductances are lambda^l between levels l and l+1.
class CanopyTree final : public RootedGraph {
 public:
  CanopyTree(int d, double lambda) : d_(d), lambda_(lambda) {
    if (d < 2) fail(ErrorKind::ConfigError, "canopy arity must be >= 2");
    if (!(lambda > 0.0)) fail(ErrorKind::ConfigError, "canopy lambda must be > 0");
    // Largest level whose index range fits comfortably in 62 bits.
    max_level_ = static_cast<std::int64_t>(std::floor(61.0 / std::log2(static_cast<double>(d))));
  }

  int arity() const { return d_; }
  double lambda() const { return lambda_; }
  std::int64_t max_level() const { return max_level_; }

  static VertexKey vertex(std::int64_t level, std::int64_t index) { return VertexKey(Family::Canopy, {level, index}); }

  VertexKey parent(const VertexKey& v) const { return vertex(v[0] + 1, v[1] / d_); }
  VertexKey child(const VertexKey& v, int c) const { return vertex(v[0] - 1, v[1] * d_ + c); }

  Family family() const override { return Family::Canopy; }
  VertexKey root() const override { return vertex(0, 0); }

  bool contains(const VertexKey& v) const override {
    if (v.family() != Family::Canopy || v.size() != 2) return false;
    if (v[0] < 0 || v[1] < 0) return false;
    // Indices at level l must have a parent chain; bound the level.
    return v[0] < max_level_ && v[1] <= (std::numeric_limits<std::int64_t>::max() >> 2) / d_;
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    require(v);
    if (v[0] + 1 >= max_level_) fail(ErrorKind::BudgetExceeded, "canopy level overflow at " + v.to_string());
    if (v[0] == 0) return uniform_row({parent(v)});
    std::vector<std::pair<VertexKey, double>> w;
    w.reserve(d_ + 1);
    w.emplace_back(parent(v), std::log(lambda_));
    for (int c = 0; c < d_; ++c) w.emplace_back(child(v, c), 0.0);
    return row_from_log_weights(std::move(w));
  }

  /// pi = 1 on leaves, lambda^{l-1} (lambda + d) at level l >= 1.
  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    require(v);
    if (v[0] == 0) return 0.0;
    return static_cast<double>(v[0] - 1) * std::log(lambda_) + std::log(lambda_ + d_);
  }

  nlohmann::json metadata() const override {
    return {{"family", "canopy"}, {"d", d_}, {"lambda", lambda_}, {"transient", lambda_ > 1.0}};
  }

 private:
  int d_;
  double lambda_;
  std::int64_t max_level_;
};

}  // namespace polymerlab
