#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "polymerlab/graph.hpp"
#include "polymerlab/hashing.hpp"

namespace polymerlab {

/// A pipe: a chain v_1..v_L of adjacent vertices whose interior vertices
/// v_2..v_{L-1} all have degree 2.
struct Pipe {
  std::vector<VertexKey> vertices;
  std::size_t length() const { return vertices.size(); }
  const VertexKey& center() const { return vertices[(vertices.size() - 1) / 2]; }
};

/// Bernoulli bond percolation on the box [-L, L]^d with free boundary;
/// the largest open cluster is kept and carries the simple random walk.
///
/// Bond {x, x + e_a} is open iff open_unit(SipHash(graph_seed, bond domain,
/// lattice-key-bytes(x) || varint(a)).lo) < p, so the draw is a pure
/// function of the seed and independent oracles can recompute it.
class PercolationCluster final : public RootedGraph {
 public:
  PercolationCluster(int d, double p, std::int64_t box, std::uint64_t seed, std::size_t min_cluster = 1)
      : d_(d), p_(p), L_(box), seed_(seed) {
    if (d < 1 || d > 8) fail(ErrorKind::ConfigError, "percolation dimension must be in [1, 8]");
    if (!(p > 0.0 && p <= 1.0)) fail(ErrorKind::ConfigError, "percolation p must be in (0, 1]");
    if (box < 1) fail(ErrorKind::ConfigError, "box side must be >= 1");
    side_ = 2 * L_ + 1;
    double vol = std::pow(static_cast<double>(side_), d_);
    if (vol > 5e7) fail(ErrorKind::BudgetExceeded, "percolation box too large");
    volume_ = static_cast<std::size_t>(vol);
    build(min_cluster);
  }

  int dimension() const { return d_; }
  double p() const { return p_; }
  std::int64_t box_side() const { return L_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t box_volume() const { return volume_; }
  std::size_t cluster_size() const { return cluster_size_; }

  /// Whether the bond {x, x + e_axis} is open (both ends must lie in the box).
  bool bond_open(const std::vector<std::int64_t>& x, int axis) const {
    std::string msg = VertexKey(Family::Lattice, x).bytes();
    append_counter(msg, static_cast<std::uint64_t>(axis));
    return open_unit(keyed_hash128(seed_, kDomainBond, msg).lo) < p_;
  }

  bool in_box(const std::vector<std::int64_t>& x) const {
    if (x.size() != static_cast<std::size_t>(d_)) return false;
    for (auto c : x)
      if (c < -L_ || c > L_) return false;
    return true;
  }

  std::size_t index_of(const std::vector<std::int64_t>& x) const {
    std::size_t idx = 0;
    for (int i = d_ - 1; i >= 0; --i) idx = idx * static_cast<std::size_t>(side_) + static_cast<std::size_t>(x[i] + L_);
    return idx;
  }

  std::vector<std::int64_t> coords_of(std::size_t idx) const {
    std::vector<std::int64_t> x(d_);
    for (int i = 0; i < d_; ++i) {
      x[i] = static_cast<std::int64_t>(idx % static_cast<std::size_t>(side_)) - L_;
      idx /= static_cast<std::size_t>(side_);
    }
    return x;
  }

  /// Cluster vertices in box-index order.
  std::vector<VertexKey> cluster_vertices() const {
    std::vector<VertexKey> out;
    out.reserve(cluster_size_);
    for (std::size_t i = 0; i < volume_; ++i)
      if (in_cluster_[i]) out.emplace_back(Family::PercolationCluster, coords_of(i));
    return out;
  }

  int degree(const VertexKey& v) const {
    require(v);
    return std::popcount(static_cast<unsigned>(mask_[index_of(v.values())]));
  }

  Family family() const override { return Family::PercolationCluster; }
  VertexKey root() const override { return root_; }

  bool contains(const VertexKey& v) const override {
    if (v.family() != Family::PercolationCluster || !in_box(v.values())) return false;
    return in_cluster_[index_of(v.values())];
  }

  TransitionRow transition_row(const VertexKey& v) const override {
    require(v);
    const auto m = mask_[index_of(v.values())];
    std::vector<VertexKey> nb;
    std::vector<std::int64_t> x = v.values();
    for (int a = 0; a < d_; ++a) {
      for (int s = 0; s < 2; ++s) {
        if (!(m & (1u << (2 * a + s)))) continue;
        x[a] += s ? 1 : -1;
        nb.emplace_back(Family::PercolationCluster, x);
        x[a] -= s ? 1 : -1;
      }
    }
    return uniform_row(std::move(nb));
  }

  std::optional<double> log_reversing_measure(const VertexKey& v) const override {
    return std::log(static_cast<double>(degree(v)));
  }

  /// Walks of n steps from x stay within sup-distance L/2 of the origin,
  /// away from the free boundary.
  std::optional<std::int64_t> safe_horizon(const VertexKey& from) const override {
    std::int64_t far = 0;
    for (auto c : from.payload()) far = std::max(far, std::abs(c));
    return std::max<std::int64_t>(0, L_ / 2 - far);
  }

  /// All maximal pipes of the cluster with at least `min_length` vertices,
  /// longest first (ties by first vertex). A pipe's end vertices are the
  /// non-degree-2 neighbours closing a maximal chain of degree-2 vertices.
  std::vector<Pipe> find_pipes(std::size_t min_length) const {
    std::vector<Pipe> out;
    std::vector<bool> seen(volume_, false);
    auto deg = [&](std::size_t i) { return std::popcount(static_cast<unsigned>(mask_[i])); };
    auto nbrs = [&](std::size_t i) {
      std::vector<std::size_t> r;
      auto x = coords_of(i);
      for (int a = 0; a < d_; ++a)
        for (int s = 0; s < 2; ++s)
          if (mask_[i] & (1u << (2 * a + s))) {
            x[a] += s ? 1 : -1;
            r.push_back(index_of(x));
            x[a] -= s ? 1 : -1;
          }
      return r;
    };
    for (std::size_t s = 0; s < volume_; ++s) {
      if (!in_cluster_[s] || seen[s] || deg(s) != 2) continue;
      seen[s] = true;
      auto ends = nbrs(s);
      // Extend in both directions from s.
      std::deque<std::size_t> chain{s};
      bool cycle = false;
      for (int dir = 0; dir < 2 && !cycle; ++dir) {
        std::size_t prev = s, cur = ends[dir];
        while (true) {
          if (cur == s) {
            cycle = true;
            break;
          }
          if (dir == 0)
            chain.push_back(cur);
          else
            chain.push_front(cur);
          if (deg(cur) != 2) break;
          seen[cur] = true;
          auto nb = nbrs(cur);
          std::size_t next = nb[0] == prev ? nb[1] : nb[0];
          prev = cur;
          cur = next;
        }
      }
      if (cycle || chain.size() < min_length) continue;
      Pipe pipe;
      for (auto i : chain) pipe.vertices.emplace_back(Family::PercolationCluster, coords_of(i));
      out.push_back(std::move(pipe));
    }
    std::stable_sort(out.begin(), out.end(), [](const Pipe& a, const Pipe& b) { return a.length() > b.length(); });
    return out;
  }

  nlohmann::json metadata() const override {
    return {{"family", "percolation_cluster"},
            {"d", d_},
            {"p", p_},
            {"box_side", L_},
            {"graph_seed", seed_},
            {"cluster_size", cluster_size_},
            {"density", static_cast<double>(cluster_size_) / static_cast<double>(volume_)},
            {"root", root_.to_string()}};
  }

 private:
  void build(std::size_t min_cluster) {
    // Open-bond masks over the whole box: bit 2a is -e_a, bit 2a+1 is +e_a.
    std::vector<std::uint16_t> all(volume_, 0);
    for (std::size_t i = 0; i < volume_; ++i) {
      auto x = coords_of(i);
      for (int a = 0; a < d_; ++a) {
        if (x[a] == L_) continue;
        if (!bond_open(x, a)) continue;
        all[i] |= static_cast<std::uint16_t>(1u << (2 * a + 1));
        auto y = x;
        ++y[a];
        all[index_of(y)] |= static_cast<std::uint16_t>(1u << (2 * a));
      }
    }
    // Connected components by BFS; the first largest one in index order wins.
    std::vector<std::int32_t> label(volume_, -1);
    std::vector<std::size_t> queue;
    std::int32_t best = -1, next_label = 0;
    std::size_t best_size = 0;
    for (std::size_t s = 0; s < volume_; ++s) {
      if (label[s] >= 0) continue;
      const std::int32_t lab = next_label++;
      label[s] = lab;
      queue.assign(1, s);
      for (std::size_t q = 0; q < queue.size(); ++q) {
        auto i = queue[q];
        auto x = coords_of(i);
        for (int a = 0; a < d_; ++a)
          for (int sgn = 0; sgn < 2; ++sgn) {
            if (!(all[i] & (1u << (2 * a + sgn)))) continue;
            x[a] += sgn ? 1 : -1;
            auto j = index_of(x);
            x[a] -= sgn ? 1 : -1;
            if (label[j] < 0) {
              label[j] = lab;
              queue.push_back(j);
            }
          }
      }
      if (queue.size() > best_size) {
        best_size = queue.size();
        best = lab;
      }
    }
    if (best_size < std::max<std::size_t>(min_cluster, 1) || best_size < 2)
      fail(ErrorKind::EmptyCluster, "largest cluster has " + std::to_string(best_size) + " vertices");
    in_cluster_.assign(volume_, false);
    mask_.assign(volume_, 0);
    cluster_size_ = best_size;
    std::int64_t best_r2 = -1;
    std::vector<std::int64_t> root;
    for (std::size_t i = 0; i < volume_; ++i) {
      if (label[i] != best) continue;
      in_cluster_[i] = true;
      mask_[i] = all[i];
      auto x = coords_of(i);
      std::int64_t r2 = 0;
      for (auto c : x) r2 += c * c;
      if (best_r2 < 0 || r2 < best_r2 || (r2 == best_r2 && x < root)) {
        best_r2 = r2;
        root = x;
      }
    }
    root_ = VertexKey(Family::PercolationCluster, root);
  }

  int d_;
  double p_;
  std::int64_t L_;
  std::int64_t side_ = 0;
  std::uint64_t seed_;
  std::size_t volume_ = 0;
  std::size_t cluster_size_ = 0;
  std::vector<bool> in_cluster_;
  std::vector<std::uint16_t> mask_;
  VertexKey root_;
};

}  // namespace polymerlab
