#pragma once

#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "polymerlab/graph.hpp"
#include "polymerlab/hashing.hpp"

namespace polymerlab {

/// Galton-Watson tree with a lambda-biased walk.
///
/// Vertex key: the path of child indices from the root. The number of
/// children of v is drawn from the offspring law with the keyed hash of
/// (graph seed, attempt, key bytes), so the tree is a pure function of the
/// seed and independent of traversal order. With survival_depth D the draw
/// is redone (attempt = 0, 1, ...) until the root's subtree reaches depth D.
///
/// Kernel: from a vertex with c children, the parent gets lambda/(lambda+c)
/// and each child 1/(lambda+c); the root's children are uniform.
class GaltonWatsonTree final : public RootedGraph {
 public:
  GaltonWatsonTree(std::vector<double> offspring, double lambda, std::uint64_t seed,
                   std::optional<std::int64_t> survival_depth = std::nullopt, int max_attempts = 1000)
      : law_(std::move(offspring)), lambda_(lambda), seed_(seed), depth_(survival_depth) {
    double total = std::accumulate(law_.begin(), law_.end(), 0.0);
    if (law_.empty() || !(total > 0.0)) fail(ErrorKind::ConfigError, "offspring law is empty");
    for (double q : law_)
      if (!(q >= 0.0)) fail(ErrorKind::ConfigError, "offspring probabilities must be >= 0");
    cdf_.resize(law_.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < law_.size(); ++k) {
      law_[k] /= total;
      acc += law_[k];
      cdf_[k] = acc;
      mean_ += static_cast<double>(k) * law_[k];
    }
    if (!(mean_ > 1.0)) fail(ErrorKind::ConfigError, "offspring mean must exceed 1");
    if (!(lambda >= 0.0)) fail(ErrorKind::ConfigError, "bias lambda must be >= 0");
    if (law_[0] > 0.0 && !depth_) fail(ErrorKind::ConfigError, "p_0 > 0 requires survival_depth");
    if (lambda == 0.0 && law_[0] > 0.0) fail(ErrorKind::ConfigError, "lambda = 0 requires p_0 = 0");
    for (std::size_t k = 0; k < law_.size(); ++k)
      if (law_[k] == 1.0) fixed_ = static_cast<int>(k);
    if (depth_) {
      for (attempt_ = 0; attempt_ < static_cast<std::uint64_t>(max_attempts); ++attempt_) {
        {
          std::unique_lock lock(mu_);
          memo_.clear();
        }
        if (survives(*depth_)) return;
      }
      fail(ErrorKind::ExtinctTree, "no surviving tree after " + std::to_string(max_attempts) + " attempts");
    }
  }

  double mean() const { return mean_; }
  double lambda() const { return lambda_; }
  std::uint64_t attempt() const { return attempt_; }
  const std::vector<double>& offspring() const { return law_; }
  /// Offspring count when the law is a point mass (a regular tree).
  std::optional<int> fixed_offspring() const { return fixed_ >= 0 ? std::optional<int>(fixed_) : std::nullopt; }

  /// "transient" (lambda < m), "null_recurrent" (lambda = m), "positive_recurrent".
  std::string regime() const {
    if (lambda_ < mean_) return "transient";
    if (lambda_ == mean_) return "null_recurrent";
    return "positive_recurrent";
  }

  int children(const VertexKey& v) const {
    if (fixed_ >= 0) return fixed_;
    {
      std::shared_lock lock(mu_);
      if (auto it = memo_.find(v); it != memo_.end()) return it->second;
    }
    std::string msg;
    append_counter(msg, attempt_);
    v.append_bytes(msg);
    double u = open_unit(keyed_hash128(seed_, kDomainOffspring, msg).lo);
    int c = static_cast<int>(std::upper_bound(cdf_.begin(), cdf_.end() - 1, u) - cdf_.begin());
    std::unique_lock lock(mu_);
    memo_.emplace(v, c);
    return c;
  }

  static VertexKey child(const VertexKey& v, int i) {
    auto p = v.values();
    p.push_back(i);
    return VertexKey(Family::GWTree, std::move(p));
  }

  static VertexKey parent(const VertexKey& v) {
    auto p = v.values();
    p.pop_back();
    return VertexKey(Family::GWTree, std::move(p));
  }

  Family family() const override { return Family::GWTree; }
  VertexKey root() const override { return VertexKey(Family::GWTree, std::vector<std::int64_t>{}); }

  bool contains(const VertexKey& v) const override {
    if (v.family() != Family::GWTree) return false;
    std::vector<std::int64_t> path;
    path.reserve(v.size());
    for (auto i : v.payload()) {
      if (i < 0 || i >= children(VertexKey(Family::GWTree, path))) return false;
      path.push_back(i);
    }
    return true;
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    require(v);
    const int c = children(v);
    std::vector<std::pair<VertexKey, double>> w;
    if (v.size() == 0) {
      if (c == 0) fail(ErrorKind::ExtinctTree, "root has no children");
      for (int i = 0; i < c; ++i) w.emplace_back(child(v, i), 0.0);
      return row_from_log_weights(std::move(w));
    }
    if (lambda_ > 0.0) w.emplace_back(parent(v), std::log(lambda_));
    for (int i = 0; i < c; ++i) w.emplace_back(child(v, i), 0.0);
    if (w.empty()) fail(ErrorKind::NumericalError, "vertex without moves: " + v.to_string());
    return row_from_log_weights(std::move(w));
  }

  /// pi(root) = c_root, pi(v) = lambda^{-|v|} (lambda + c_v); none when lambda = 0.
  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    if (lambda_ == 0.0) return std::nullopt;
    require(v);
    const double c = children(v);
    if (v.size() == 0) return std::log(c);
    return -static_cast<double>(v.size()) * std::log(lambda_) + std::log(lambda_ + c);
  }

  std::optional<std::int64_t> safe_horizon(const VertexKey& from) const override {
    if (!depth_) return std::nullopt;
    // Beyond depth D the survival conditioning no longer holds.
    return std::max<std::int64_t>(0, *depth_ - static_cast<std::int64_t>(from.size()));
  }

  nlohmann::json metadata() const override {
    nlohmann::json j{{"family", "gw_tree"},     {"offspring", law_}, {"mean", mean_},
                     {"lambda", lambda_},      {"graph_seed", seed_}, {"attempt", attempt_},
                     {"regime", regime()}};
    if (depth_) j["survival_depth"] = *depth_;
    return j;
  }

 private:
  bool survives(std::int64_t D) const {
    // Depth-first search for one path of length D.
    std::vector<std::pair<VertexKey, int>> stack{{root(), 0}};
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (static_cast<std::int64_t>(v.size()) >= D) return true;
      if (next >= children(v)) {
        stack.pop_back();
        continue;
      }
      auto c = child(v, next++);
      stack.emplace_back(std::move(c), 0);
    }
    return false;
  }

  std::vector<double> law_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double lambda_;
  std::uint64_t seed_;
  std::optional<std::int64_t> depth_;
  std::uint64_t attempt_ = 0;
  int fixed_ = -1;
  mutable std::shared_mutex mu_;
  mutable std::unordered_map<VertexKey, int, VertexKeyHash> memo_;
};

}  // namespace polymerlab
