#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "polymerlab/disorder.hpp"
#include "polymerlab/graph.hpp"
#include "polymerlab/local_chain.hpp"
#include "polymerlab/lumped_chain.hpp"
#include "polymerlab/numeric.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/walk_diagnostics.hpp"
#include "polymerlab/zoo/canopy.hpp"
#include "polymerlab/zoo/gw_tree.hpp"
#include "polymerlab/zoo/lattice.hpp"
#include "polymerlab/zoo/t2z2.hpp"

namespace polymerlab {

// ---------------------------------------------------------------------------
// Pair fronts: the law of two independent walks (S, S') weighted by
// e^{Lambda_2} at every collision S_k = S'_k.
// ---------------------------------------------------------------------------

class PairFront {
 public:
  PairFront(std::shared_ptr<LocalChain> chain, const VertexKey& x, const VertexKey& x2, double lambda2)
      : chain_(std::move(chain)), lambda2_(lambda2) {
    chain_->graph().require(x);
    chain_->graph().require(x2);
    auto a = chain_->intern(x), b = chain_->intern(x2);
    symmetric_ = a == b;  // exchangeable: keep unordered pairs only
    masses_[key(a, b)] = 1.0;
  }

  std::int64_t n() const { return n_; }
  double log_offset() const { return log_offset_; }
  std::size_t size() const { return masses_.size(); }
  bool symmetric() const { return symmetric_; }

  /// log E^{x,x'}[e^{Lambda_2 N_n}] = log E[W_n(x) W_n(x')].
  double log_total() const {
    NeumaierSum s;
    for (auto& [k, m] : masses_) s.add(m);
    return log_offset_ + std::log(s.value());
  }

  /// Probability mass on the diagonal (with weights) relative to e^{log_offset}.
  double diagonal_mass() const {
    NeumaierSum s;
    for (auto& [k, m] : masses_)
      if ((k >> 32) == (k & 0xffffffffull)) s.add(m);
    return s.value();
  }

  void step(std::size_t cap = kDefaultFrontCap) {
    std::unordered_map<std::uint64_t, double> next;
    next.reserve(masses_.size() * 4);
    const double boost = std::exp(lambda2_);
    for (auto& [k, m] : masses_) {
      const auto a = static_cast<LocalChain::Id>(k >> 32), b = static_cast<LocalChain::Id>(k & 0xffffffffull);
      const auto& ra = chain_->row(a);
      const auto& rb = chain_->row(b);
      // An unordered state {a, b} carries both orders, and both orders map
      // to the same unordered successors; so one ordered sweep suffices.
      for (const auto& ea : ra)
        for (const auto& eb : rb) next[key(ea.to, eb.to)] += m * ea.prob * eb.prob;
      if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "pair front exceeds cap " + std::to_string(cap));
    }
    double mx = 0.0;
    for (auto& [k, m] : next) {
      if ((k >> 32) == (k & 0xffffffffull)) m *= boost;
      mx = std::max(mx, m);
    }
    if (!(mx > 0.0)) fail(ErrorKind::NumericalError, "pair front vanished");
    for (auto& [k, m] : next) m /= mx;
    log_offset_ += std::log(mx);
    masses_ = std::move(next);
    ++n_;
  }

 private:
  std::uint64_t key(LocalChain::Id a, LocalChain::Id b) const {
    if (symmetric_ && b < a) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::shared_ptr<LocalChain> chain_;
  double lambda2_;
  bool symmetric_ = false;
  std::int64_t n_ = 0;
  double log_offset_ = 0.0;
  std::unordered_map<std::uint64_t, double> masses_;
};

struct ArrayHash {
  std::size_t operator()(const std::array<std::int64_t, 3>& a) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ull;
    for (auto v : a) h = (h ^ static_cast<std::uint64_t>(v)) * 0x100000001b3ull;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Exact lumping of two canopy walks started at one vertex: state
/// (l1, l2, m) with l1 <= l2 <= m the levels of the walkers and of their
/// lowest common ancestor. l1 == l2 == m is a collision.
inline LumpedChain<std::array<std::int64_t, 3>, ArrayHash>::RowFn canopy_pair_rows(double d, double lam) {
  using S = std::array<std::int64_t, 3>;
  return [d, lam](const S& s) {
    const auto [l1, l2, m] = s;
    auto pu = [&](std::int64_t l) { return l == 0 ? 1.0 : lam / (lam + d); };
    auto pc = [&](std::int64_t l) { return l == 0 ? 0.0 : 1.0 / (lam + d); };  // one given child
    std::vector<std::pair<S, double>> out;
    auto emit = [&](std::int64_t a, std::int64_t b, std::int64_t mm, double p) {
      if (p <= 0.0) return;
      if (b < a) std::swap(a, b);
      out.push_back({S{a, b, mm}, p});
    };
    if (l1 == m) {  // same vertex
      const double u = pu(m), c = pc(m);
      emit(m + 1, m + 1, m + 1, u * u);
      emit(m - 1, m + 1, m + 1, 2.0 * u * d * c);
      emit(m - 1, m - 1, m - 1, d * c * c);
      emit(m - 1, m - 1, m, d * (d - 1.0) * c * c);
    } else if (l2 == m) {  // walker 2 is the common ancestor of walker 1
      const double u2 = pu(m), c2 = pc(m);
      for (int up1 = 0; up1 < 2; ++up1) {
        const double p1 = up1 ? pu(l1) : d * pc(l1);
        const auto a = up1 ? l1 + 1 : l1 - 1;
        if (p1 <= 0.0) continue;
        emit(a, m + 1, m + 1, p1 * u2);
        // down toward walker 1
        if (a == m)
          emit(m - 1, m, m, p1 * c2);
        else
          emit(a, m - 1, m - 1, p1 * c2);
        // down into another branch
        if (a == m)
          emit(m - 1, m, m, p1 * (d - 1.0) * c2);
        else
          emit(a, m - 1, m, p1 * (d - 1.0) * c2);
      }
    } else {  // different branches below the common ancestor
      for (int up1 = 0; up1 < 2; ++up1)
        for (int up2 = 0; up2 < 2; ++up2) {
          const double p = (up1 ? pu(l1) : d * pc(l1)) * (up2 ? pu(l2) : d * pc(l2));
          emit(up1 ? l1 + 1 : l1 - 1, up2 ? l2 + 1 : l2 - 1, m, p);
        }
    }
    // merge duplicates
    std::sort(out.begin(), out.end());
    std::vector<std::pair<S, double>> merged;
    for (auto& e : out) {
      if (!merged.empty() && merged.back().first == e.first)
        merged.back().second += e.second;
      else
        merged.push_back(e);
    }
    return merged;
  };
}

enum class MomentRoute { Auto, PairDp, Renewal, CanopyOrbit };

inline std::string to_string(MomentRoute r) {
  switch (r) {
    case MomentRoute::Auto: return "auto";
    case MomentRoute::PairDp: return "pair_dp";
    case MomentRoute::Renewal: return "renewal";
    case MomentRoute::CanopyOrbit: return "canopy_orbit";
  }
  return "auto";
}

struct SecondMomentOptions {
  MomentRoute route = MomentRoute::Auto;
  std::size_t cap = kDefaultFrontCap;
  /// Reduced chains drop states lighter than prune * (max state mass); the
  /// total dropped mass is reported. Unused by the pair DP and renewal.
  double prune = 1e-15;
};

struct SecondMomentSeries {
  std::vector<double> log_values;  // log E[W_k^2], k = 0..n
  MomentRoute route = MomentRoute::Auto;
  double pruned_mass = 0.0;  // upper bound on neglected (weighted) probability

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(log_values.size());
    for (double l : log_values) v.push_back(std::exp(l));
    return v;
  }
  /// E[W_k^2] - E[W_{k-1}^2], k = 0..n (first entry 0).
  std::vector<double> increments() const {
    auto v = values();
    std::vector<double> inc(v.size(), 0.0);
    for (std::size_t k = 1; k < v.size(); ++k) inc[k] = v[k] - v[k - 1];
    return inc;
  }
};

inline void to_json(nlohmann::json& j, const SecondMomentSeries& s) {
  j = {{"route", to_string(s.route)}, {"log_values", s.log_values}, {"pruned_mass", s.pruned_mass}};
}

/// a_n = E[e^{eps-weighted collisions}] from the collision probabilities
/// u_k = P(S_k = S'_k) of a pair that restarts identically after every
/// collision: a_n = 1 + (e^{L2} - 1) sum_{k=1}^n u_k a_{n-k}.
inline std::vector<double> renewal_log_moments(const std::vector<double>& u, double lambda2, std::int64_t n) {
  const double eps = std::expm1(lambda2);
  std::vector<double> a(static_cast<std::size_t>(n) + 1, 1.0);
  for (std::int64_t t = 1; t <= n; ++t) {
    NeumaierSum s;
    for (std::int64_t k = 1; k <= t; ++k) s.add(u[k] * a[t - k]);
    a[t] = 1.0 + eps * s.value();
  }
  std::vector<double> out;
  for (double v : a) out.push_back(std::log(v));
  return out;
}

/// E[W_k(x)^2] = E^{x,x}[e^{Lambda_2(beta) N_k}] for k = 0..n.
///
/// Routes: full lattices use the collision renewal (exact, O(n^2));
/// canopies use the (l1, l2, lca) orbit chain; everything else runs the
/// pair DP over unordered vertex pairs.
inline SecondMomentSeries second_moment_exact(const RootedGraph& g, const DisorderLaw& law, const VertexKey& x,
                                              double beta, std::int64_t n, const SecondMomentOptions& opt = {}) {
  if (n < 0) fail(ErrorKind::ConfigError, "negative horizon");
  g.require(x);
  const double l2 = law.lambda2(beta);
  SecondMomentSeries out;
  auto* lat = dynamic_cast<const LatticeGraph*>(&g);
  auto* can = dynamic_cast<const CanopyTree*>(&g);
  MomentRoute route = opt.route;
  if (route == MomentRoute::Auto)
    route = (lat && !lat->half()) ? MomentRoute::Renewal : can ? MomentRoute::CanopyOrbit : MomentRoute::PairDp;
  out.route = route;
  if (l2 == 0.0) {
    out.log_values.assign(static_cast<std::size_t>(n) + 1, 0.0);
    return out;
  }
  switch (route) {
    case MomentRoute::Renewal: {
      if (!lat || lat->half()) fail(ErrorKind::WrongFamily, "renewal route needs a full lattice");
      auto p = lattice_return_probabilities(lat->dimension(), 2 * n);
      std::vector<double> u(static_cast<std::size_t>(n) + 1);
      for (std::int64_t k = 0; k <= n; ++k) u[k] = p[2 * k];  // sum_y p_k(0,y)^2 = p_2k(0,0)
      out.log_values = renewal_log_moments(u, l2, n);
      return out;
    }
    case MomentRoute::CanopyOrbit: {
      if (!can) fail(ErrorKind::WrongFamily, "orbit route needs a canopy graph");
      using S = std::array<std::int64_t, 3>;
      LumpedChain<S, ArrayHash> chain(canopy_pair_rows(can->arity(), can->lambda()), opt.cap);
      const auto l = x[0];
      SparseMass cur, next;
      cur.add(chain.intern(S{l, l, l}), 1.0);
      double log_offset = 0.0;
      const double boost = std::exp(l2);
      out.log_values.push_back(0.0);
      for (std::int64_t k = 1; k <= n; ++k) {
        chain.step(cur, next);
        cur.clear();
        double mx = 0.0;
        for (auto id : next.active()) {
          double m = next.get(id);
          const auto& s = chain.state(id);
          if (s[0] == s[2]) m *= boost;
          mx = std::max(mx, m);
        }
        const double floor = opt.prune * mx;
        for (auto id : next.active()) {
          double m = next.get(id);
          const auto& s = chain.state(id);
          if (s[0] == s[2]) m *= boost;
          if (m < floor) {
            out.pruned_mass += m * std::exp(log_offset - out.log_values.back());
            continue;
          }
          cur.add(id, m / mx);
        }
        log_offset += std::log(mx);
        out.log_values.push_back(log_offset + std::log(cur.sum()));
      }
      return out;
    }
    case MomentRoute::PairDp:
    case MomentRoute::Auto: {
      g.require_horizon(x, n);
      PairFront front(std::make_shared<LocalChain>(g, opt.cap), x, x, l2);
      out.log_values.push_back(0.0);
      for (std::int64_t k = 1; k <= n; ++k) {
        front.step(opt.cap);
        out.log_values.push_back(front.log_total());
      }
      return out;
    }
  }
  return out;
}

/// Every n-step path from x with its probability (ids into `chain`).
inline std::vector<std::pair<std::vector<LocalChain::Id>, double>> enumerate_paths(LocalChain& chain,
                                                                                  const VertexKey& x, int n,
                                                                                  std::size_t cap) {
  std::vector<std::pair<std::vector<LocalChain::Id>, double>> cur{{{chain.intern(x)}, 1.0}};
  for (int k = 0; k < n; ++k) {
    std::vector<std::pair<std::vector<LocalChain::Id>, double>> next;
    for (auto& [p, pr] : cur)
      for (const auto& e : chain.row(p.back())) {
        auto q = p;
        q.push_back(e.to);
        next.emplace_back(std::move(q), pr * e.prob);
        if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "path enumeration exceeds cap");
      }
    cur = std::move(next);
  }
  return cur;
}

/// c_k(n) = sum_{1 <= n_1 < ... < n_k <= n} P(S, S' meet at n_1..n_k),
/// for k = 0..n, by enumerating pairs of paths.
inline std::vector<double> chaos_terms(const RootedGraph& g, const VertexKey& x, int n, std::size_t cap = 200'000) {
  if (n < 0) fail(ErrorKind::ConfigError, "negative horizon");
  g.require(x);
  LocalChain chain(g);
  auto paths = enumerate_paths(chain, x, n, cap);
  if (paths.size() * paths.size() > cap * cap) fail(ErrorKind::BudgetExceeded, "too many path pairs");
  std::vector<double> by_meetings(static_cast<std::size_t>(n) + 1, 0.0);
  for (auto& [p, pp] : paths)
    for (auto& [q, pq] : paths) {
      int m = 0;
      for (int k = 1; k <= n; ++k) m += p[k] == q[k];
      by_meetings[m] += pp * pq;
    }
  std::vector<double> out(static_cast<std::size_t>(n) + 1, 0.0);
  for (int k = 0; k <= n; ++k)
    for (int m = k; m <= n; ++m) out[k] += by_meetings[m] * std::exp(detail::log_choose(m, k));
  return out;
}

inline double chaos_term(const RootedGraph& g, const VertexKey& x, int k, int n) {
  if (k > n) return 0.0;
  if (k < 0) fail(ErrorKind::ConfigError, "negative chaos order");
  return chaos_terms(g, x, n)[k];
}

/// Right-hand side of the chaos identity: 1 + sum_k (e^{L2} - 1)^k c_k(n).
inline double chaos_second_moment(const std::vector<double>& terms, double lambda2) {
  const double eps = std::expm1(lambda2);
  NeumaierSum s;
  s.add(1.0);
  double f = 1.0;
  for (std::size_t k = 1; k < terms.size(); ++k) {
    f *= eps;
    s.add(f * terms[k]);
  }
  return s.value();
}

struct CollisionSum {
  std::vector<double> increments;  // increments[k] for k = 0..K (k = 0 holds 0)
  std::vector<double> partial;     // sum over 1..k
  std::optional<LinearFit> log_fit;  // partial vs log K at dyadic K >= 2^6
  ConvergenceVerdict verdict;
};

inline void to_json(nlohmann::json& j, const CollisionSum& c) {
  j = {{"K", c.partial.empty() ? 0 : c.partial.size() - 1},
       {"truncated", c.partial.empty() ? 0.0 : c.partial.back()},
       {"log_fit", c.log_fit ? nlohmann::json(*c.log_fit) : nlohmann::json(nullptr)},
       {"verdict", c.verdict}};
}

inline CollisionSum summarize_collisions(std::vector<double> inc, const ConvergenceTest& test, std::int64_t fit_from = 64) {
  CollisionSum c;
  c.increments = std::move(inc);
  if (!c.increments.empty()) c.increments[0] = 0.0;
  NeumaierSum s;
  for (double v : c.increments) {
    s.add(v);
    c.partial.push_back(s.value());
  }
  std::vector<double> lk, ps;
  for (std::int64_t K = fit_from; K < static_cast<std::int64_t>(c.partial.size()); K *= 2) {
    lk.push_back(std::log(static_cast<double>(K)));
    ps.push_back(c.partial[K]);
  }
  if (lk.size() >= 2) c.log_fit = least_squares(lk, ps);
  c.verdict = assess_convergence(c.increments, test);
  return c;
}

/// sum_{1 <= k <= K} p_k(x,x)^2 with log-growth fit and tail verdict.
inline CollisionSum diagonal_collision_sum(const RootedGraph& g, const VertexKey& x, std::int64_t K,
                                           const ConvergenceTest& test = {}, std::size_t cap = kDefaultFrontCap) {
  auto p = return_probabilities(g, x, K, cap);
  for (double& v : p) v *= v;
  return summarize_collisions(std::move(p), test);
}

// ---------------------------------------------------------------------------
// u_k(x) = P^{x,x}(S_k = S'_k) = sum_y p_k(x,y)^2 by family.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> collision_probs_generic(const RootedGraph& g, const VertexKey& x, std::int64_t K,
                                                   std::size_t cap) {
  g.require_horizon(x, K);
  LocalChain chain(g, cap);
  SparseMass cur, next;
  cur.add(chain.intern(x), 1.0);
  std::vector<double> u{1.0};
  for (std::int64_t k = 1; k <= K; ++k) {
    propagate(chain, cur, next);
    if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "collision front exceeds cap");
    std::swap(cur, next);
    NeumaierSum s;
    for (auto id : cur.active()) s.add(cur.get(id) * cur.get(id));
    u.push_back(s.value());
  }
  return u;
}

/// Canopy: p_k(x, .) is constant on the orbits of the glued chain relative
/// to x, so sum_y p_k(x,y)^2 = sum_s P_k(s)^2 / |s|.
inline std::vector<double> collision_probs_canopy(const CanopyTree& c, const VertexKey& x, std::int64_t K,
                                                  double prune, std::size_t cap, double* pruned) {
  const auto ell = x[0];
  const double m = c.arity();
  LumpedChain<std::pair<std::int64_t, std::int64_t>, PairHash> chain(canopy_glued_rows(m, c.lambda(), ell), cap);
  SparseMass cur, next;
  cur.add(chain.intern({ell, ell}), 1.0);
  std::vector<double> u{1.0};
  for (std::int64_t k = 1; k <= K; ++k) {
    chain.step(cur, next);
    const double floor = prune * next.max();
    cur.clear();
    NeumaierSum s;
    for (auto id : next.active()) {
      const double p = next.get(id);
      if (p < floor) {
        if (pruned) *pruned += p;
        continue;
      }
      cur.add(id, p);
      const auto& st = chain.state(id);
      s.add(p * p / canopy_orbit_size(m, ell, st.first, st.second));
    }
    u.push_back(s.value());
  }
  return u;
}

/// log p_r(x -> 0) for SRW on Z^2 via the rotation (X1+X2, X1-X2) into two
/// independent SRWs on Z.
inline double z2_log_heat(std::int64_t r, std::int64_t x1, std::int64_t x2) {
  auto one = [r](std::int64_t m) {
    m = m < 0 ? -m : m;
    if (m > r || (r + m) % 2) return kNegInf;
    return log_choose(static_cast<double>(r), static_cast<double>((r + m) / 2)) - static_cast<double>(r) * std::log(2.0);
  };
  return one(x1 + x2) + one(x1 - x2);
}

/// T2 x Z^2. Two copies coincide at time k iff their lattice parts agree and
/// either (i) neither hit 0 in (0,k] and all k tree steps agree, or (ii)
/// both were last at 0 at the same time k - j and their j fresh tree steps
/// agree:
///   u_k = 2^-k Q^x_k + sum_j p_{k-j}(x,0)^2 2^-j Q_j,
/// Q_j = sum_z P_0(no return to 0 by j, X_j = z)^2 (Q^x_k from x). Terms
/// with j > J are below 2^-J and are dropped.
inline std::vector<double> collision_probs_t2z2(const VertexKey& x, std::int64_t K, int J = 64) {
  LatticeGraph z2(2);
  auto killed = [&](const VertexKey& from, int steps) {
    LocalChain chain(z2);
    const auto o = chain.intern(z2.root());
    SparseMass cur, next;
    cur.add(chain.intern(from), 1.0);
    std::vector<double> q{cur.get(chain.intern(from)) * cur.get(chain.intern(from))};
    for (int j = 1; j <= steps; ++j) {
      propagate(chain, cur, next);
      next.set(o, 0.0);
      std::swap(cur, next);
      NeumaierSum s;
      for (auto id : cur.active()) s.add(cur.get(id) * cur.get(id));
      q.push_back(s.value());
    }
    return q;
  };
  const auto x1 = x[0], x2 = x[1];
  const int jmax = static_cast<int>(std::min<std::int64_t>(J, K));
  auto Q = killed(z2.root(), jmax);
  auto Qx = killed(z2.point({x1, x2}), jmax);
  std::vector<double> u{1.0};
  for (std::int64_t k = 1; k <= K; ++k) {
    NeumaierSum s;
    if (k <= jmax) s.add(std::ldexp(Qx[k], -static_cast<int>(k)));
    for (std::int64_t j = 0; j <= std::min<std::int64_t>(k - 1, jmax); ++j) {
      const double lp = z2_log_heat(k - j, x1, x2);
      if (lp == kNegInf) continue;
      s.add(std::exp(2.0 * lp) * std::ldexp(Q[j], -static_cast<int>(j)));
    }
    u.push_back(s.value());
  }
  return u;
}

}  // namespace detail

struct CollisionOptions {
  std::size_t cap = kDefaultFrontCap;
  double prune = 1e-15;  // canopy orbit chain only
  bool force_generic = false;
};

/// u_k(x) = sum_y p_k(x,y)^2 for k = 0..K (u_0 = 1), using the exact
/// reduction available for the family.
inline std::vector<double> collision_probabilities(const RootedGraph& g, const VertexKey& x, std::int64_t K,
                                                   const CollisionOptions& opt = {}, double* pruned = nullptr) {
  if (K < 0) fail(ErrorKind::ConfigError, "negative horizon");
  g.require(x);
  if (!opt.force_generic) {
    if (auto* lat = dynamic_cast<const LatticeGraph*>(&g); lat && !lat->half()) {
      auto p = lattice_return_probabilities(lat->dimension(), 2 * K);
      std::vector<double> u;
      for (std::int64_t k = 0; k <= K; ++k) u.push_back(p[2 * k]);
      return u;
    }
    if (auto* c = dynamic_cast<const CanopyTree*>(&g)) return detail::collision_probs_canopy(*c, x, K, opt.prune, opt.cap, pruned);
    if (dynamic_cast<const T2TimesZ2*>(&g)) return detail::collision_probs_t2z2(x, K);
  }
  return detail::collision_probs_generic(g, x, K, opt.cap);
}

struct KhasminskiiVertex {
  VertexKey x;
  double truncated = 0.0;  // sum_{1<=k<=K} u_k(x) = E^{x,x}[N_K]
  ConvergenceVerdict verdict;
};

struct KhasminskiiReport {
  std::int64_t K = 0;
  std::vector<KhasminskiiVertex> per_vertex;
  double max = 0.0;
  bool all_cauchy = true;
  double pruned_mass = 0.0;
};

inline void to_json(nlohmann::json& j, const KhasminskiiReport& r) {
  nlohmann::json pv = nlohmann::json::array();
  for (auto& v : r.per_vertex)
    pv.push_back({{"vertex", v.x.to_string()}, {"truncated", v.truncated}, {"verdict", v.verdict}});
  j = {{"K", r.K}, {"max", r.max}, {"all_cauchy", r.all_cauchy}, {"pruned_mass", r.pruned_mass}, {"per_vertex", pv}};
}

/// Truncated E^{x,x}[N_K] over a finite vertex sample, with the tail test
/// applied per vertex. The supremum over all vertices is not claimed.
inline KhasminskiiReport khasminskii_sup(const RootedGraph& g, const std::vector<VertexKey>& sample, std::int64_t K,
                                         const ConvergenceTest& test = {}, const CollisionOptions& opt = {}) {
  if (sample.empty()) fail(ErrorKind::ConfigError, "empty vertex sample");
  KhasminskiiReport r;
  r.K = K;
  for (auto& x : sample) {
    auto u = collision_probabilities(g, x, K, opt, &r.pruned_mass);
    auto cs = summarize_collisions(std::move(u), test);
    KhasminskiiVertex v{x, cs.partial.back(), cs.verdict};
    r.max = std::max(r.max, v.truncated);
    r.all_cauchy = r.all_cauchy && v.verdict.converged;
    r.per_vertex.push_back(std::move(v));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Birkner: V_n(S) = E^{S'}[e^{Lambda_2 sum_{k<=n} 1{S'_k = S_k}} | S].
// ---------------------------------------------------------------------------

struct BirknerTrajectory {
  std::vector<double> log_values;  // log V_k, k = 0..n
  double growth_ratio = 1.0;       // V_n / V_{n/2}
  bool stable = false;             // growth_ratio < 1 + tol
  double escaped_mass = 0.0;       // lumped route: mass cut at depth H (never returns)
};

struct BirknerSummary {
  std::int64_t n = 0;
  std::string route;
  std::vector<BirknerTrajectory> trajectories;
  double q_min = 0, q25 = 0, median = 0, q75 = 0, q_max = 0;  // of log V_n
  double fraction_stable = 0.0;
};

inline void to_json(nlohmann::json& j, const BirknerSummary& s) {
  nlohmann::json ratios = nlohmann::json::array();
  for (auto& t : s.trajectories) ratios.push_back(t.growth_ratio);
  j = {{"n", s.n},           {"route", s.route},   {"log_V_min", s.q_min},
       {"log_V_q25", s.q25}, {"log_V_median", s.median}, {"log_V_q75", s.q75},
       {"log_V_max", s.q_max}, {"fraction_stable", s.fraction_stable}, {"growth_ratios", ratios}};
}

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
}

/// One-replica DP along a fixed trajectory on the full graph.
inline BirknerTrajectory birkner_generic(LocalChain& chain, const std::vector<VertexKey>& S, double lambda2,
                                         std::size_t cap) {
  BirknerTrajectory t;
  const double boost = std::exp(lambda2);
  SparseMass cur, next;
  cur.add(chain.intern(S[0]), 1.0);
  double log_offset = 0.0;
  t.log_values.push_back(0.0);
  for (std::size_t k = 1; k < S.size(); ++k) {
    propagate(chain, cur, next);
    if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "Birkner front exceeds cap");
    auto s = chain.intern(S[k]);
    next.set(s, next.get(s) * boost);
    const double mx = next.max();
    next.scale(1.0 / mx);
    log_offset += std::log(mx);
    std::swap(cur, next);
    t.log_values.push_back(log_offset + std::log(cur.sum()));
  }
  return t;
}

/// Regular tree (fixed offspring k, bias lambda): S' is tracked exactly on
/// the trace of S; off the trace only the depth h below the trace vertex it
/// left from matters. Depths beyond H are dropped into `escaped_mass`
/// (return probability (lambda/k)^H).
inline BirknerTrajectory birkner_regular_tree(const GaltonWatsonTree& g, const std::vector<VertexKey>& S,
                                              double lambda2, int H = 64) {
  const int k = *g.fixed_offspring();
  const double lam = g.lambda();
  const double up = lam / (lam + k), down = static_cast<double>(k) / (lam + k);
  LocalChain chain(g);
  std::vector<LocalChain::Id> sid;
  std::unordered_set<LocalChain::Id> trace;
  for (auto& v : S) {
    sid.push_back(chain.intern(v));
    trace.insert(sid.back());
  }
  // trace neighbours: on-trace targets and the off-trace child mass
  struct TraceRow {
    std::vector<LocalChain::Edge> on;
    double off = 0.0;
  };
  std::unordered_map<LocalChain::Id, TraceRow> rows;
  for (auto u : trace) {
    TraceRow r;
    for (const auto& e : chain.row(u)) {
      if (trace.count(e.to))
        r.on.push_back(e);
      else
        r.off += e.prob;
    }
    rows.emplace(u, std::move(r));
  }
  const double boost = std::exp(lambda2);
  std::unordered_map<LocalChain::Id, double> on{{sid[0], 1.0}};
  std::unordered_map<LocalChain::Id, std::vector<double>> off;  // depth 1..H
  BirknerTrajectory t;
  double log_offset = 0.0;
  t.log_values.push_back(0.0);
  for (std::size_t step = 1; step < S.size(); ++step) {
    std::unordered_map<LocalChain::Id, double> on2;
    std::unordered_map<LocalChain::Id, std::vector<double>> off2;
    for (auto& [u, m] : on) {
      const auto& r = rows.at(u);
      for (const auto& e : r.on) on2[e.to] += m * e.prob;
      if (r.off > 0.0) {
        auto& v = off2[u];
        v.resize(H + 1, 0.0);
        v[1] += m * r.off;
      }
    }
    for (auto& [u, v] : off) {
      auto& w = off2[u];
      w.resize(H + 1, 0.0);
      for (int h = 1; h <= H; ++h) {
        if (v[h] == 0.0) continue;
        if (h == 1)
          on2[u] += v[h] * up;
        else
          w[h - 1] += v[h] * up;
        if (h < H)
          w[h + 1] += v[h] * down;
        else
          t.escaped_mass += v[h] * down * std::exp(log_offset);
      }
    }
    if (auto it = on2.find(sid[step]); it != on2.end()) it->second *= boost;
    double mx = 0.0;
    for (auto& [u, m] : on2) mx = std::max(mx, m);
    for (auto& [u, v] : off2)
      for (double m : v) mx = std::max(mx, m);
    NeumaierSum tot;
    for (auto& [u, m] : on2) tot.add(m /= mx);
    for (auto& [u, v] : off2)
      for (double& m : v) tot.add(m /= mx);
    log_offset += std::log(mx);
    on = std::move(on2);
    off = std::move(off2);
    // escaped mass never collides again: it stays in the total as weight 1
    const double esc = t.escaped_mass * std::exp(-log_offset);
    t.log_values.push_back(log_offset + std::log(tot.value() + esc));
  }
  return t;
}

}  // namespace detail

/// Per-trajectory exact conditional second moments V_n(S) for n_traj walks
/// S sampled from x, with growth diagnosis V_n / V_{n/2} < 1 + tol.
inline BirknerSummary birkner_conditional(const RootedGraph& g, const DisorderLaw& law, const VertexKey& x, double beta,
                                          std::size_t n_traj, std::int64_t n, std::uint64_t seed, double tol = 1e-3,
                                          std::size_t cap = kDefaultFrontCap, unsigned workers = worker_count()) {
  if (n < 2) fail(ErrorKind::ConfigError, "Birkner horizon must be >= 2");
  if (n_traj < 1) fail(ErrorKind::ConfigError, "need at least one trajectory");
  g.require(x);
  g.require_horizon(x, n);
  const double l2 = law.lambda2(beta);
  BirknerSummary s;
  s.n = n;
  auto* gw = dynamic_cast<const GaltonWatsonTree*>(&g);
  // from the root every ancestor of a visited vertex is on the trace
  const bool lumped = gw && gw->fixed_offspring() && *gw->fixed_offspring() >= 1 && x == g.root();
  s.route = lumped ? "regular_tree_trace" : "generic";
  s.trajectories.resize(n_traj);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_traj)));
  parallel_for(
      n_traj,
      [&](std::size_t i, unsigned) {
        auto S = sample_walk(g, x, n, derive_seed(seed, "birkner", i));
        BirknerTrajectory t;
        if (l2 == 0.0) {
          t.log_values.assign(static_cast<std::size_t>(n) + 1, 0.0);
        } else if (lumped) {
          t = detail::birkner_regular_tree(*gw, S, l2);
        } else {
          LocalChain chain(g, cap);
          t = detail::birkner_generic(chain, S, l2, cap);
        }
        t.growth_ratio = std::exp(t.log_values[n] - t.log_values[n / 2]);
        t.stable = t.growth_ratio < 1.0 + tol;
        s.trajectories[i] = std::move(t);
      },
      workers);
  std::vector<double> finals;
  std::size_t stable = 0;
  for (auto& t : s.trajectories) {
    finals.push_back(t.log_values.back());
    stable += t.stable;
  }
  std::sort(finals.begin(), finals.end());
  s.q_min = finals.front();
  s.q25 = detail::quantile_sorted(finals, 0.25);
  s.median = detail::quantile_sorted(finals, 0.5);
  s.q75 = detail::quantile_sorted(finals, 0.75);
  s.q_max = finals.back();
  s.fraction_stable = static_cast<double>(stable) / static_cast<double>(n_traj);
  return s;
}

}  // namespace polymerlab
