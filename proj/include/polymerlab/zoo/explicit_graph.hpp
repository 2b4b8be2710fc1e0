#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polymerlab/graph.hpp"

namespace polymerlab {

/// Small finite graph given by a non-negative weight matrix. Rows are the
/// normalized weights. A symmetric matrix is a conductance model and gets
/// pi(i) = sum_j w(i, j); otherwise no reversing measure is declared.
class ExplicitGraph final : public RootedGraph {
 public:
  ExplicitGraph(std::vector<std::vector<double>> weights, std::int64_t root = 0) : w_(std::move(weights)), root_(root) {
    const auto n = w_.size();
    if (n == 0) fail(ErrorKind::ConfigError, "explicit graph needs at least one vertex");
    if (root < 0 || static_cast<std::size_t>(root) >= n) fail(ErrorKind::ConfigError, "root out of range");
    symmetric_ = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (w_[i].size() != n) fail(ErrorKind::ConfigError, "weight matrix must be square");
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!(w_[i][j] >= 0.0) || !std::isfinite(w_[i][j])) fail(ErrorKind::ConfigError, "weights must be finite and >= 0");
        s += w_[i][j];
      }
      if (!(s > 0.0)) fail(ErrorKind::ConfigError, "vertex " + std::to_string(i) + " has no outgoing weight");
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (w_[i][j] != w_[j][i]) symmetric_ = false;
  }

  std::size_t size() const { return w_.size(); }
  bool symmetric() const { return symmetric_; }
  static VertexKey node(std::int64_t i) { return VertexKey(Family::ExplicitFinite, {i}); }

  Family family() const override { return Family::ExplicitFinite; }
  VertexKey root() const override { return node(root_); }

  bool contains(const VertexKey& v) const override {
    return v.family() == Family::ExplicitFinite && v.size() == 1 && v[0] >= 0 &&
           static_cast<std::size_t>(v[0]) < w_.size();
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    require(v);
    std::vector<std::pair<VertexKey, double>> lw;
    const auto& r = w_[static_cast<std::size_t>(v[0])];
    for (std::size_t j = 0; j < r.size(); ++j)
      if (r[j] > 0.0) lw.emplace_back(node(static_cast<std::int64_t>(j)), std::log(r[j]));
    return row_from_log_weights(std::move(lw));
  }

  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    if (!symmetric_) return std::nullopt;
    require(v);
    double s = 0.0;
    for (double x : w_[static_cast<std::size_t>(v[0])]) s += x;
    return std::log(s);
  }

  nlohmann::json metadata() const override {
    return {{"family", "explicit_finite"}, {"vertices", w_.size()}, {"symmetric", symmetric_}};
  }

  const std::vector<std::vector<double>>& weights() const { return w_; }

 private:
  std::vector<std::vector<double>> w_;
  std::int64_t root_;
  bool symmetric_ = false;
};

}  // namespace polymerlab
