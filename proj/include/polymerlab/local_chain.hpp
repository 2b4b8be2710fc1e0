#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "polymerlab/graph.hpp"

namespace polymerlab {

/// Interned, lazily expanded view of a RootedGraph: vertices get dense ids
/// and rows are cached as (id, probability) lists for the DP hot loops.
/// Single-writer; the graph must outlive the chain.
class LocalChain {
 public:
  using Id = std::uint32_t;

  struct Edge {
    Id to;
    double prob;
  };

  explicit LocalChain(const RootedGraph& g, std::size_t cap = kDefaultFrontCap) : graph_(&g), cap_(cap) {}

  const RootedGraph& graph() const { return *graph_; }
  std::size_t size() const { return keys_.size(); }
  std::size_t cap() const { return cap_; }

  Id intern(const VertexKey& v) {
    if (auto it = ids_.find(v); it != ids_.end()) return it->second;
    if (keys_.size() >= cap_)
      fail(ErrorKind::BudgetExceeded, "interned vertex count exceeds cap " + std::to_string(cap_));
    auto id = static_cast<Id>(keys_.size());
    ids_.emplace(v, id);
    keys_.push_back(v);
    bytes_.push_back(v.bytes());
    rows_.emplace_back();
    expanded_.push_back(false);
    return id;
  }

  std::optional<Id> find(const VertexKey& v) const {
    if (auto it = ids_.find(v); it != ids_.end()) return it->second;
    return std::nullopt;
  }

  const VertexKey& key(Id id) const { return keys_[id]; }
  const std::string& key_bytes(Id id) const { return bytes_[id]; }

  /// Cached row of vertex `id`. May intern new vertices; references to
  /// previously returned rows stay valid.
  const std::vector<Edge>& row(Id id) {
    if (!expanded_[id]) {
      auto tr = graph_->transition_row(keys_[id]);
      std::vector<Edge> edges;
      edges.reserve(tr.entries.size());
      for (const auto& e : tr.entries)
        if (e.prob > 0.0) edges.push_back({intern(e.to), e.prob});
      rows_[id] = std::move(edges);
      expanded_[id] = true;
    }
    return rows_[id];
  }

 private:
  const RootedGraph* graph_;
  std::size_t cap_;
  std::unordered_map<VertexKey, Id, VertexKeyHash> ids_;
  std::deque<VertexKey> keys_;
  std::deque<std::string> bytes_;
  std::deque<std::vector<Edge>> rows_;
  std::vector<bool> expanded_;
};

/// Sparse vector over chain ids backed by a dense scratch array.
class SparseMass {
 public:
  void clear() {
    for (auto id : active_) {
      dense_[id] = 0.0;
      present_[id] = false;
    }
    active_.clear();
  }

  void add(LocalChain::Id id, double m) {
    if (id >= dense_.size()) {
      dense_.resize(static_cast<std::size_t>(id) + 1 + dense_.size() / 2, 0.0);
      present_.resize(dense_.size(), false);
    }
    if (!present_[id]) {
      present_[id] = true;
      active_.push_back(id);
    }
    dense_[id] += m;
  }

  double get(LocalChain::Id id) const { return id < dense_.size() ? dense_[id] : 0.0; }
  void set(LocalChain::Id id, double m) {
    add(id, 0.0);
    dense_[id] = m;
  }
  void scale(double f) {
    for (auto id : active_) dense_[id] *= f;
  }

  const std::vector<LocalChain::Id>& active() const { return active_; }
  std::size_t size() const { return active_.size(); }

  double max() const {
    double m = 0.0;
    for (auto id : active_) m = std::max(m, dense_[id]);
    return m;
  }

  double sum() const {
    NeumaierSum s;
    for (auto id : active_) s.add(dense_[id]);
    return s.value();
  }

  /// Active (id, mass) pairs sorted by id, zeros dropped.
  std::vector<std::pair<LocalChain::Id, double>> entries() const {
    std::vector<std::pair<LocalChain::Id, double>> out;
    out.reserve(active_.size());
    for (auto id : active_)
      if (dense_[id] != 0.0) out.emplace_back(id, dense_[id]);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::vector<double> dense_;
  std::vector<bool> present_;
  std::vector<LocalChain::Id> active_;
};

/// One step of mass propagation: out[y] = sum_z in[z] P(z,y).
inline void propagate(LocalChain& chain, const SparseMass& in, SparseMass& out) {
  out.clear();
  for (auto z : in.active()) {
    double m = in.get(z);
    if (m == 0.0) continue;
    for (const auto& e : chain.row(z)) out.add(e.to, m * e.prob);
  }
}

}  // namespace polymerlab
