#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "polymerlab/error.hpp"
#include "polymerlab/hashing.hpp"
#include "polymerlab/numeric.hpp"
#include "polymerlab/vertex_key.hpp"

namespace polymerlab {

/// Default cap on the number of states held by any exact front.
inline constexpr std::size_t kDefaultFrontCap = 5'000'000;

struct TransitionEntry {
  VertexKey to;
  double prob = 0.0;
  double log_prob = kNegInf;
};

/// One row P(x, .) of the kernel. Zero-probability entries are omitted.
/// An entry whose probability underflows double precision is kept with
/// prob == 0 and its exact log_prob (double-exponential conductances).
struct TransitionRow {
  std::vector<TransitionEntry> entries;

  std::size_t size() const { return entries.size(); }
  double total() const {
    NeumaierSum s;
    for (const auto& e : entries) s.add(e.prob);
    return s.value();
  }
};

/// Builds a normalized row from unnormalized log-weights (log-sum-exp).
/// Differences are taken against the largest weight before normalizing, so
/// huge log-weights (double-exponential conductances) keep full precision.
inline TransitionRow row_from_log_weights(std::vector<std::pair<VertexKey, double>> weights) {
  TransitionRow row;
  if (weights.empty()) return row;
  std::size_t imax = 0;
  for (std::size_t i = 1; i < weights.size(); ++i)
    if (weights[i].second > weights[imax].second) imax = i;
  const double m = weights[imax].second;
  if (m == kNegInf) return row;
  double rest = 0.0;  // sum of exp(lw - m) over all but the argmax
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (i != imax) rest += std::exp(weights[i].second - m);
  const double log_norm = std::log1p(rest);
  row.entries.reserve(weights.size());
  for (auto& [key, lw] : weights) {
    double lp = (lw - m) - log_norm;
    if (lp == kNegInf) continue;
    row.entries.push_back({std::move(key), std::exp(lp), lp});
  }
  return row;
}

/// Uniform row over the given neighbors.
inline TransitionRow uniform_row(std::vector<VertexKey> neighbors) {
  TransitionRow row;
  const double p = 1.0 / static_cast<double>(neighbors.size());
  const double lp = -std::log(static_cast<double>(neighbors.size()));
  row.entries.reserve(neighbors.size());
  for (auto& n : neighbors) row.entries.push_back({std::move(n), p, lp});
  return row;
}

/// A rooted, locally finite graph with a nearest-neighbour Markov kernel.
///
/// Implementations are immutable after construction apart from internal
/// memo tables, which must be safe under concurrent readers.
class RootedGraph {
 public:
  virtual ~RootedGraph() = default;

  virtual Family family() const = 0;
  virtual VertexKey root() const = 0;
  virtual bool contains(const VertexKey& v) const = 0;

  /// Throws InvalidVertex if `v` is not a vertex of this graph.
  virtual TransitionRow transition_row(const VertexKey& v) const = 0;

  /// log pi(v) for a reversing measure, when the kernel is reversible.
  virtual std::optional<double> log_reversing_measure(const VertexKey& /*v*/) const { return std::nullopt; }

  /// Largest horizon for which walks from `from` are exact on this
  /// (possibly truncated) graph. nullopt means unbounded.
  virtual std::optional<std::int64_t> safe_horizon(const VertexKey& /*from*/) const { return std::nullopt; }

  virtual nlohmann::json metadata() const = 0;

  std::optional<double> reversing_measure(const VertexKey& v) const {
    if (auto l = log_reversing_measure(v)) return std::exp(*l);
    return std::nullopt;
  }

  void require(const VertexKey& v) const {
    if (!contains(v)) fail(ErrorKind::InvalidVertex, v.to_string() + " is not a vertex of " + std::string(family_name(family())));
  }

  void require_horizon(const VertexKey& from, std::int64_t n) const {
    if (auto h = safe_horizon(from); h && n > *h)
      fail(ErrorKind::HorizonExceedsGraph, "horizon " + std::to_string(n) + " exceeds safe horizon " +
                                               std::to_string(*h) + " from " + from.to_string());
  }
};

/// Vertices reachable from x in exactly n steps with positive probability.
inline std::vector<VertexKey> reachable_front(const RootedGraph& g, const VertexKey& x, std::int64_t n,
                                              std::size_t cap = kDefaultFrontCap) {
  if (n < 0) fail(ErrorKind::ConfigError, "negative step count");
  g.require(x);
  std::unordered_set<VertexKey, VertexKeyHash> cur{x};
  for (std::int64_t k = 0; k < n; ++k) {
    std::unordered_set<VertexKey, VertexKeyHash> next;
    for (const auto& v : cur) {
      for (auto& e : g.transition_row(v).entries) {
        next.insert(std::move(e.to));
        if (next.size() > cap)
          fail(ErrorKind::BudgetExceeded, "reachable front exceeds cap " + std::to_string(cap));
      }
    }
    cur = std::move(next);
  }
  std::vector<VertexKey> out(cur.begin(), cur.end());
  std::sort(out.begin(), out.end());
  return out;
}

/// Draws the index of an entry of `row` using uniform u in (0,1).
inline std::size_t pick_entry(const TransitionRow& row, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < row.entries.size(); ++i) {
    acc += row.entries[i].prob;
    if (u < acc) return i;
  }
  std::size_t last = row.entries.size() - 1;
  while (last > 0 && row.entries[last].prob == 0.0) --last;
  return last;
}

/// An n-step path of the walk from x, fully determined by `seed`.
inline std::vector<VertexKey> sample_walk(const RootedGraph& g, const VertexKey& x, std::int64_t n, std::uint64_t seed) {
  if (n < 0) fail(ErrorKind::ConfigError, "negative step count");
  g.require(x);
  WalkRng rng(seed);
  std::vector<VertexKey> path;
  path.reserve(static_cast<std::size_t>(n) + 1);
  path.push_back(x);
  for (std::int64_t k = 0; k < n; ++k) {
    auto row = g.transition_row(path.back());
    if (row.entries.empty()) fail(ErrorKind::NumericalError, "empty transition row at " + path.back().to_string());
    path.push_back(std::move(row.entries[pick_entry(row, rng.uniform())].to));
  }
  return path;
}

/// |sum_y P(v,y) - 1|.
inline double row_normalization_error(const RootedGraph& g, const VertexKey& v) {
  return std::abs(g.transition_row(v).total() - 1.0);
}

/// Largest relative detailed-balance violation over the edges out of v:
/// |pi(v)P(v,y) - pi(y)P(y,v)| / max(.,.), computed in log space.
/// The measure may be unnormalized and astronomically large.
/// Returns nullopt when the graph declares no reversing measure.
inline std::optional<double> detailed_balance_error(const RootedGraph& g, const VertexKey& v) {
  auto lpv = g.log_reversing_measure(v);
  if (!lpv) return std::nullopt;
  double worst = 0.0;
  for (const auto& e : g.transition_row(v).entries) {
    auto lpy = g.log_reversing_measure(e.to);
    if (!lpy) return std::nullopt;
    double back = kNegInf;
    for (const auto& b : g.transition_row(e.to).entries)
      if (b.to == v) back = b.log_prob;
    double lhs = *lpv + e.log_prob;
    double rhs = *lpy + back;
    if (rhs == kNegInf) return std::numeric_limits<double>::infinity();
    // Log-weights far beyond 1e3 (double-exponential conductances) carry
    // absolute rounding of their own magnitude; compare those relatively.
    const double scale = std::max(1.0, 1e-3 * std::max(std::abs(lhs), std::abs(rhs)));
    worst = std::max(worst, -std::expm1(-std::abs(lhs - rhs) / scale));
  }
  return worst;
}

}  // namespace polymerlab
