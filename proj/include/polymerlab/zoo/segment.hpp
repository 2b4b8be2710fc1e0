#pragma once

#include <cmath>
#include <cstdint>

#include "polymerlab/graph.hpp"

namespace polymerlab {

/// Birth-death chain on {0, ..., length} with conductance gamma^i on the
/// edge {i, i+1}; both ends reflect. length == 0 means the half-line Z_+.
class ConductanceSegment final : public RootedGraph {
 public:
  ConductanceSegment(std::int64_t length, double gamma) : length_(length), gamma_(gamma) {
    if (length < 0) fail(ErrorKind::ConfigError, "segment length must be >= 0 (0 = half-line)");
    if (!(gamma > 0.0)) fail(ErrorKind::ConfigError, "gamma must be > 0");
  }

  std::int64_t length() const { return length_; }
  double gamma() const { return gamma_; }
  bool infinite() const { return length_ == 0; }

  static VertexKey site(std::int64_t i) { return VertexKey(Family::ConductanceSegment, {i}); }

  Family family() const override { return Family::ConductanceSegment; }
  VertexKey root() const override { return site(0); }

  bool contains(const VertexKey& v) const override {
    return v.family() == Family::ConductanceSegment && v.size() == 1 && v[0] >= 0 && (infinite() || v[0] <= length_);
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    require(v);
    const auto i = v[0];
    if (i == 0) return uniform_row({site(1)});
    if (!infinite() && i == length_) return uniform_row({site(i - 1)});
    const double lg = std::log(gamma_);
    return row_from_log_weights({{site(i - 1), static_cast<double>(i - 1) * lg}, {site(i + 1), static_cast<double>(i) * lg}});
  }

  /// pi(i) = gamma^{i-1} + gamma^i, with the missing edge dropped at the ends.
  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    require(v);
    const auto i = v[0];
    const double lg = std::log(gamma_);
    if (i == 0) return 0.0;
    if (!infinite() && i == length_) return static_cast<double>(i - 1) * lg;
    return static_cast<double>(i - 1) * lg + std::log1p(gamma_);
  }

  nlohmann::json metadata() const override {
    return {{"family", "conductance_segment"}, {"length", length_}, {"gamma", gamma_}};
  }

 private:
  std::int64_t length_;
  double gamma_;
};

}  // namespace polymerlab
