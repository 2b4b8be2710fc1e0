#pragma once

// Independent reference computations used by the tests. They deliberately
// avoid the library's DP machinery: plain recursion over paths, plain
// union-find, plain linear algebra.

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "polymerlab/graph.hpp"
#include "polymerlab/zoo/percolation.hpp"

namespace oracle {

using polymerlab::RootedGraph;
using polymerlab::VertexKey;

/// Calls visit(path, probability) for every n-step path from x.
inline void for_each_path(const RootedGraph& g, const VertexKey& x, int n,
                          const std::function<void(const std::vector<VertexKey>&, double)>& visit) {
  std::vector<VertexKey> path{x};
  std::function<void(double)> rec = [&](double prob) {
    if (static_cast<int>(path.size()) == n + 1) {
      visit(path, prob);
      return;
    }
    for (const auto& e : g.transition_row(path.back()).entries) {
      path.push_back(e.to);
      rec(prob * e.prob);
      path.pop_back();
    }
  };
  rec(1.0);
}

/// p_n(x, .) by path enumeration.
inline std::map<VertexKey, double> heat_kernel(const RootedGraph& g, const VertexKey& x, int n) {
  std::map<VertexKey, double> out;
  for_each_path(g, x, n, [&](const std::vector<VertexKey>& p, double pr) { out[p.back()] += pr; });
  return out;
}

struct UnionFind {
  std::vector<std::size_t> parent, size;
  explicit UnionFind(std::size_t n) : parent(n), size(n, 1) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size[a] < size[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
  }
};

/// Largest component (as sorted box indices) of the bond draw of `g`,
/// recomputed from bond_open with union-find.
inline std::vector<std::size_t> largest_component(const polymerlab::PercolationCluster& g) {
  const auto n = g.box_volume();
  UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = g.coords_of(i);
    for (int a = 0; a < g.dimension(); ++a) {
      if (x[a] == g.box_side()) continue;
      if (!g.bond_open(x, a)) continue;
      auto y = x;
      ++y[a];
      uf.unite(i, g.index_of(y));
    }
  }
  std::size_t best = 0, best_size = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (uf.find(i) == i && uf.size[i] > best_size) {
      best_size = uf.size[i];
      best = i;
    }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (uf.find(i) == best) out.push_back(i);
  return out;
}

/// Probability that SRW on Z started at 0 is at 0 after k steps.
inline double z1_return(int k) {
  if (k % 2) return 0.0;
  return std::exp(std::lgamma(k + 1.0) - 2.0 * std::lgamma(k / 2 + 1.0) - k * std::log(2.0));
}

}  // namespace oracle
