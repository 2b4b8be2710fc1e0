#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "polymerlab/local_chain.hpp"

namespace polymerlab {

struct PairHash {
  std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& p) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(p.first) * 0x9e3779b97f4a7c15ull;
    h ^= static_cast<std::uint64_t>(p.second) + 0x7f4a7c159e3779b9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// Finite-state view of a Markov chain given by a row function over small
/// value states (orbit / level reductions). Same interface shape as
/// LocalChain, so SparseMass works on both.
template <class State, class Hash = std::hash<State>>
class LumpedChain {
 public:
  using Id = LocalChain::Id;
  using Edge = LocalChain::Edge;
  using RowFn = std::function<std::vector<std::pair<State, double>>(const State&)>;

  explicit LumpedChain(RowFn rows, std::size_t cap = kDefaultFrontCap) : fn_(std::move(rows)), cap_(cap) {}

  Id intern(const State& s) {
    if (auto it = ids_.find(s); it != ids_.end()) return it->second;
    if (states_.size() >= cap_) fail(ErrorKind::BudgetExceeded, "reduced chain exceeds cap " + std::to_string(cap_));
    auto id = static_cast<Id>(states_.size());
    ids_.emplace(s, id);
    states_.push_back(s);
    rows_.emplace_back();
    expanded_.push_back(false);
    return id;
  }

  std::optional<Id> find(const State& s) const {
    if (auto it = ids_.find(s); it != ids_.end()) return it->second;
    return std::nullopt;
  }

  const State& state(Id id) const { return states_[id]; }
  std::size_t size() const { return states_.size(); }

  const std::vector<Edge>& row(Id id) {
    if (!expanded_[id]) {
      std::vector<Edge> edges;
      for (auto& [s, p] : fn_(states_[id]))
        if (p > 0.0) edges.push_back({intern(s), p});
      rows_[id] = std::move(edges);
      expanded_[id] = true;
    }
    return rows_[id];
  }

  /// One step: out = in P.
  void step(const SparseMass& in, SparseMass& out) {
    out.clear();
    for (auto z : in.active()) {
      double m = in.get(z);
      if (m == 0.0) continue;
      for (const auto& e : row(z)) out.add(e.to, m * e.prob);
    }
  }

 private:
  RowFn fn_;
  std::size_t cap_;
  std::unordered_map<State, Id, Hash> ids_;
  std::deque<State> states_;
  std::deque<std::vector<Edge>> rows_;
  std::vector<bool> expanded_;
};

}  // namespace polymerlab
