#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polymerlab/graph.hpp"
#include "polymerlab/zoo/binary_path.hpp"

namespace polymerlab {

/// Binary tree T_2 rooted at o with a copy of Z_+ attached at o.
///
/// Tree edges have unit conductance; the i-th ray edge {r_{i-1}, r_i}
/// (r_0 = o, i >= 1) has log-conductance e^i, stored as such. Rows are
/// normalized by log-sum-exp, so entries whose probability underflows are
/// still carried with their exact log-probability.
///
/// Keys: tree vertex (0, depth, packed path bits...); ray vertex (1, i), i >= 1.
class DoubleExpRayTree final : public RootedGraph {
 public:
  static VertexKey tree_vertex(std::vector<std::int64_t> path_payload) {
    path_payload.insert(path_payload.begin(), 0);
    return VertexKey(Family::DoubleExpRayTree, std::move(path_payload));
  }
  static VertexKey ray_vertex(std::int64_t i) {
    if (i == 0) return VertexKey(Family::DoubleExpRayTree, {0, 0});
    return VertexKey(Family::DoubleExpRayTree, {1, i});
  }
  /// Child `bit` of the tree vertex v.
  static VertexKey tree_child(const VertexKey& v, int bit) {
    return VertexKey(Family::DoubleExpRayTree, detail::path_child(v.values(), 1, bit));
  }

  static bool is_ray(const VertexKey& v) { return v[0] == 1; }
  /// Ray index (0 for the root o), or -1 for other tree vertices.
  static std::int64_t ray_index(const VertexKey& v) {
    if (is_ray(v)) return v[1];
    return v[1] == 0 ? 0 : -1;
  }

  /// log C_i for the i-th ray edge.
  static double log_ray_conductance(std::int64_t i) { return std::exp(static_cast<double>(i)); }

  Family family() const override { return Family::DoubleExpRayTree; }
  VertexKey root() const override { return VertexKey(Family::DoubleExpRayTree, {0, 0}); }

  bool contains(const VertexKey& v) const override {
    if (v.family() != Family::DoubleExpRayTree || v.size() < 2) return false;
    if (v[0] == 1) return v.size() == 2 && v[1] >= 1 && v[1] < 700;
    return v[0] == 0 && detail::path_valid(v.values(), 1);
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    return row_from_log_weights(log_weights(v));
  }

  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    auto w = log_weights(v);
    std::vector<double> l;
    for (auto& e : w) l.push_back(e.second);
    return log_sum_exp(l);
  }

  nlohmann::json metadata() const override {
    return {{"family", "double_exp_ray_tree"}, {"ray_log_conductance", "e^i"}};
  }

 private:
  std::vector<std::pair<VertexKey, double>> log_weights(const VertexKey& v) const {
    require(v);
    std::vector<std::pair<VertexKey, double>> w;
    if (is_ray(v)) {
      const auto i = v[1];
      w.emplace_back(ray_vertex(i - 1), log_ray_conductance(i));
      w.emplace_back(ray_vertex(i + 1), log_ray_conductance(i + 1));
      return w;
    }
    const auto depth = detail::path_depth(v.values(), 1);
    if (depth == 0) w.emplace_back(ray_vertex(1), log_ray_conductance(1));
    else w.emplace_back(VertexKey(Family::DoubleExpRayTree, detail::path_parent(v.values(), 1)), 0.0);
    w.emplace_back(tree_child(v, 0), 0.0);
    w.emplace_back(tree_child(v, 1), 0.0);
    return w;
  }
};

}  // namespace polymerlab
