#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "polymerlab/graph.hpp"
#include "polymerlab/local_chain.hpp"
#include "polymerlab/lumped_chain.hpp"
#include "polymerlab/numeric.hpp"
#include "polymerlab/zoo/canopy.hpp"
#include "polymerlab/zoo/lattice.hpp"

namespace polymerlab {

/// p_n(x, .) as (vertex, probability) sorted by vertex.
using KernelMap = std::vector<std::pair<VertexKey, double>>;

/// Exact heat kernel by forward propagation of the walk law.
inline KernelMap heat_kernel(const RootedGraph& g, const VertexKey& x, std::int64_t n,
                             std::size_t cap = kDefaultFrontCap) {
  if (n < 0) fail(ErrorKind::ConfigError, "negative step count");
  g.require(x);
  g.require_horizon(x, n);
  LocalChain chain(g, cap);
  SparseMass cur, next;
  cur.add(chain.intern(x), 1.0);
  for (std::int64_t k = 0; k < n; ++k) {
    propagate(chain, cur, next);
    if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "heat kernel front exceeds cap");
    std::swap(cur, next);
  }
  KernelMap out;
  for (auto& [id, m] : cur.entries()) out.emplace_back(chain.key(id), m);
  std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.first < b.first; });
  return out;
}

namespace detail {
inline double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}
}  // namespace detail

/// p_k(0,0), k = 0..K, for SRW on Z^d. Each step moves one of d coordinates,
/// so p^{(d)}_n = sum_k Bin(n, 1/d)(k) p^{(1)}_k p^{(d-1)}_{n-k}; done in log
/// space, O(d K^2).
inline std::vector<double> lattice_return_probabilities(int d, std::int64_t K) {
  if (d < 1) fail(ErrorKind::ConfigError, "dimension must be >= 1");
  const auto n_max = static_cast<std::size_t>(K);
  std::vector<double> log1(n_max + 1, kNegInf);
  for (std::size_t k = 0; k <= n_max; k += 2)
    log1[k] = detail::log_choose(static_cast<double>(k), static_cast<double>(k / 2)) - static_cast<double>(k) * std::log(2.0);
  std::vector<double> logd = log1;
  for (int dim = 2; dim <= d; ++dim) {
    const double a = -std::log(static_cast<double>(dim));
    const double b = std::log(static_cast<double>(dim - 1) / dim);
    std::vector<double> next(n_max + 1, kNegInf);
    std::vector<double> terms;
    for (std::size_t n = 0; n <= n_max; n += 2) {
      terms.clear();
      for (std::size_t k = 0; k <= n; k += 2) {
        if (logd[n - k] == kNegInf) continue;
        terms.push_back(detail::log_choose(static_cast<double>(n), static_cast<double>(k)) + static_cast<double>(k) * a +
                        static_cast<double>(n - k) * b + log1[k] + logd[n - k]);
      }
      next[n] = log_sum_exp(terms);
    }
    logd = std::move(next);
  }
  std::vector<double> out(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) out[n] = std::exp(logd[n]);
  return out;
}

/// p_k(x, x) for k = 0..K. Full lattices use the closed recursion; other
/// graphs propagate the exact walk law.
inline std::vector<double> return_probabilities(const RootedGraph& g, const VertexKey& x, std::int64_t K,
                                                std::size_t cap = kDefaultFrontCap) {
  if (K < 0) fail(ErrorKind::ConfigError, "negative horizon");
  g.require(x);
  if (auto* lat = dynamic_cast<const LatticeGraph*>(&g); lat && !lat->half())
    return lattice_return_probabilities(lat->dimension(), K);
  g.require_horizon(x, K);
  LocalChain chain(g, cap);
  SparseMass cur, next;
  const auto xi = chain.intern(x);
  cur.add(xi, 1.0);
  std::vector<double> out{1.0};
  for (std::int64_t k = 1; k <= K; ++k) {
    propagate(chain, cur, next);
    if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "return-probability front exceeds cap");
    std::swap(cur, next);
    out.push_back(cur.get(xi));
  }
  return out;
}

struct GreenEstimate {
  std::vector<double> partial;  // sum_{k<=K'} p_k(x,x), K' = 0..K
  ConvergenceVerdict verdict;
  bool divergent = false;  // tail test failed: recurrent or inconclusive
  std::optional<double> extrapolated;
  std::optional<double> error_bound;
};

inline void to_json(nlohmann::json& j, const GreenEstimate& e) {
  j = {{"K", e.partial.empty() ? 0 : e.partial.size() - 1},
       {"truncated", e.partial.empty() ? 0.0 : e.partial.back()},
       {"divergent", e.divergent},
       {"verdict", e.verdict},
       {"extrapolated", e.extrapolated ? nlohmann::json(*e.extrapolated) : nlohmann::json(nullptr)},
       {"error_bound", e.error_bound ? nlohmann::json(*e.error_bound) : nlohmann::json(nullptr)}};
}

/// Tail extrapolation of a partial-sum sequence from its increments. The
/// error bound is the spread between fits over the full and half window
/// plus 5% of the tail.
inline GreenEstimate extrapolate_series(const std::vector<double>& increments, const ConvergenceTest& test) {
  GreenEstimate e;
  NeumaierSum s;
  for (double p : increments) {
    s.add(p);
    e.partial.push_back(s.value());
  }
  e.verdict = assess_convergence(increments, test);
  if (!e.verdict.converged) {
    e.divergent = true;
    return e;
  }
  ConvergenceTest half = test;
  half.window = std::max<std::size_t>(4, test.window / 2);
  auto alt = assess_convergence(increments, half);
  const double tail = e.verdict.tail_estimate;
  double spread = alt.converged ? std::abs(alt.tail_estimate - tail) : std::abs(tail);
  e.extrapolated = e.partial.back() + tail;
  e.error_bound = spread + 0.05 * std::abs(tail);
  return e;
}

/// Default tail window for Green functions: the last eighth of the run.
inline ConvergenceTest green_test(std::int64_t K) {
  ConvergenceTest t;
  t.window = std::max<std::size_t>(8, static_cast<std::size_t>(K / 16));
  return t;
}

/// Truncated Green function G_K(x,x) with tail extrapolation.
inline GreenEstimate green_truncated(const RootedGraph& g, const VertexKey& x, std::int64_t K,
                                     std::optional<ConvergenceTest> test = std::nullopt,
                                     std::size_t cap = kDefaultFrontCap) {
  auto p = return_probabilities(g, x, K, cap);
  return extrapolate_series(p, test ? *test : green_test(K));
}

struct HittingDistribution {
  std::vector<double> probs;  // probs[t] = P(tau = t), probs[0] = 0
  double survival = 0.0;      // P(tau > T)
  double total() const {
    NeumaierSum s;
    for (double p : probs) s.add(p);
    return s.value();
  }
};

/// Law of tau = inf{k > 0 : S_k in targets} up to T, by absorbing DP.
/// A start inside the target set counts its first return (tau > 0).
inline HittingDistribution hitting_time_distribution(const RootedGraph& g, const VertexKey& start,
                                                     const std::vector<VertexKey>& targets, std::int64_t T,
                                                     std::size_t cap = kDefaultFrontCap) {
  if (T < 0) fail(ErrorKind::ConfigError, "negative horizon");
  if (targets.empty()) fail(ErrorKind::ConfigError, "empty target set");
  g.require(start);
  LocalChain chain(g, cap);
  std::unordered_set<LocalChain::Id> absorb;
  for (auto& t : targets) {
    g.require(t);
    absorb.insert(chain.intern(t));
  }
  HittingDistribution h;
  h.probs.assign(static_cast<std::size_t>(T) + 1, 0.0);
  SparseMass cur, next;
  cur.add(chain.intern(start), 1.0);
  for (std::int64_t t = 1; t <= T; ++t) {
    propagate(chain, cur, next);
    if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "hitting-time front exceeds cap");
    NeumaierSum hit;
    cur.clear();
    for (auto y : next.active()) {
      double m = next.get(y);
      if (absorb.count(y))
        hit.add(m);
      else if (m != 0.0)
        cur.add(y, m);
    }
    h.probs[t] = hit.value();
  }
  h.survival = cur.sum();
  return h;
}

enum class VolumeMeasure { Counting, Reversing };

inline std::string to_string(VolumeMeasure m) { return m == VolumeMeasure::Counting ? "counting" : "reversing"; }

struct VolumeGrowth {
  VolumeMeasure measure = VolumeMeasure::Counting;
  std::vector<double> spheres;  // mu(S(x, r)), r = 0..r_max
  std::vector<double> balls;    // mu(B(x, r))
  std::optional<LinearFit> power_fit;  // log mu(B) vs log r at dyadic r >= r_min
  double d_f = std::numeric_limits<double>::quiet_NaN();
  double power_r2 = 0.0;        // log mu(B) vs log r, all r >= 1
  double exponential_r2 = 0.0;  // log mu(B) vs r, all r >= 1
  bool exponential = false;     // exponential fit beats the power law
};

inline void to_json(nlohmann::json& j, const VolumeGrowth& v) {
  j = {{"measure", to_string(v.measure)},
       {"spheres", v.spheres},
       {"d_f", std::isfinite(v.d_f) ? nlohmann::json(v.d_f) : nlohmann::json(nullptr)},
       {"d_f_stderr", v.power_fit ? nlohmann::json(v.power_fit->slope_stderr) : nlohmann::json(nullptr)},
       {"power_r2", v.power_r2},
       {"exponential_r2", v.exponential_r2},
       {"exponential", v.exponential}};
}

/// Sphere measures by breadth-first search along the kernel's support.
/// d_f is fitted on dyadic balls from r_min on; small balls carry additive
/// constants that bias the slope.
inline VolumeGrowth volume_growth(const RootedGraph& g, const VertexKey& x, std::int64_t r_max,
                                  VolumeMeasure measure = VolumeMeasure::Counting,
                                  std::size_t cap = kDefaultFrontCap, std::int64_t r_min = 4) {
  if (r_max < 1) fail(ErrorKind::ConfigError, "r_max must be >= 1");
  g.require(x);
  g.require_horizon(x, r_max);
  VolumeGrowth v;
  v.measure = measure;
  auto mu = [&](const VertexKey& y) {
    if (measure == VolumeMeasure::Counting) return 1.0;
    auto l = g.log_reversing_measure(y);
    if (!l) fail(ErrorKind::ConfigError, "graph declares no reversing measure");
    return std::exp(*l);
  };
  LocalChain chain(g, cap);
  std::unordered_set<LocalChain::Id> seen{chain.intern(x)};
  std::vector<LocalChain::Id> layer{chain.intern(x)};
  v.spheres.push_back(mu(x));
  for (std::int64_t r = 1; r <= r_max; ++r) {
    std::vector<LocalChain::Id> next;
    NeumaierSum s;
    for (auto z : layer)
      for (const auto& e : chain.row(z))
        if (seen.insert(e.to).second) {
          next.push_back(e.to);
          s.add(mu(chain.key(e.to)));
        }
    if (seen.size() > cap) fail(ErrorKind::BudgetExceeded, "volume BFS exceeds cap");
    v.spheres.push_back(s.value());
    layer.swap(next);
  }
  NeumaierSum b;
  for (double s : v.spheres) {
    b.add(s);
    v.balls.push_back(b.value());
  }
  std::vector<double> lr, lb, rr;
  // start low enough to keep at least two dyadic points
  std::int64_t r0 = std::bit_floor(static_cast<std::uint64_t>(std::max<std::int64_t>(r_min, 1)));
  while (r0 > 1 && 2 * r0 > r_max) r0 /= 2;
  for (std::int64_t r = r0; r <= r_max; r *= 2) {
    lr.push_back(std::log(static_cast<double>(r)));
    lb.push_back(std::log(v.balls[r]));
  }
  if (lr.size() >= 2) {
    v.power_fit = least_squares(lr, lb);
    v.d_f = v.power_fit->slope;
  }
  lr.clear();
  lb.clear();
  for (std::int64_t r = 1; r <= r_max; ++r) {
    rr.push_back(static_cast<double>(r));
    lr.push_back(std::log(static_cast<double>(r)));
    lb.push_back(std::log(v.balls[r]));
  }
  if (rr.size() >= 3) {
    v.power_r2 = least_squares(lr, lb).r2;
    v.exponential_r2 = least_squares(rr, lb).r2;
    v.exponential = v.exponential_r2 > v.power_r2;
  }
  return v;
}

struct SpectralFit {
  double d_hat = 0.0;
  double stderr_ = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

inline void to_json(nlohmann::json& j, const SpectralFit& f) {
  j = {{"d_hat", f.d_hat}, {"stderr", f.stderr_}, {"r2", f.r2}, {"points", f.points}};
}

/// d_hat = -2 * slope of log p_{2n}(x,x) against log n at dyadic n >= 2^j_min.
inline SpectralFit spectral_dimension_fit(const std::vector<double>& return_probs, int j_min = 2,
                                          std::size_t min_points = 8) {
  std::vector<double> ln, lp;
  for (std::int64_t n = std::int64_t{1} << j_min; 2 * n < static_cast<std::int64_t>(return_probs.size()); n *= 2) {
    double p = return_probs[2 * n];
    if (!(p > 0.0)) continue;
    ln.push_back(std::log(static_cast<double>(n)));
    lp.push_back(std::log(p));
  }
  if (ln.size() < min_points)
    fail(ErrorKind::InsufficientData, "spectral fit needs " + std::to_string(min_points) + " dyadic points, have " +
                                          std::to_string(ln.size()));
  auto fit = least_squares(ln, lp);
  return {-2.0 * fit.slope, 2.0 * fit.slope_stderr, fit.r2, fit.points};
}

struct KernelProfile {
  VertexKey origin;
  std::int64_t K = 0;
  std::vector<double> return_probs;
  std::vector<double> green_partial;
  std::optional<SpectralFit> spectral_fit;
  std::optional<VolumeGrowth> volume;
};

inline void to_json(nlohmann::json& j, const KernelProfile& p) {
  j = {{"origin", p.origin.to_string()},
       {"K", p.K},
       {"return_probs", p.return_probs},
       {"green_partial", p.green_partial},
       {"spectral_fit", p.spectral_fit ? nlohmann::json(*p.spectral_fit) : nlohmann::json(nullptr)},
       {"volume_fit", p.volume ? nlohmann::json(*p.volume) : nlohmann::json(nullptr)}};
}

/// Return probabilities, Green partial sums and the fits that the data
/// supports (fits that lack data are left empty rather than guessed).
inline KernelProfile kernel_profile(const RootedGraph& g, const VertexKey& x, std::int64_t K, std::int64_t r_max = 0,
                                    VolumeMeasure measure = VolumeMeasure::Counting,
                                    std::size_t cap = kDefaultFrontCap) {
  KernelProfile p;
  p.origin = x;
  p.K = K;
  p.return_probs = return_probabilities(g, x, K, cap);
  NeumaierSum s;
  for (double v : p.return_probs) {
    s.add(v);
    p.green_partial.push_back(s.value());
  }
  try {
    p.spectral_fit = spectral_dimension_fit(p.return_probs);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InsufficientData) throw;
  }
  if (r_max > 0) p.volume = volume_growth(g, x, r_max, measure, cap);
  return p;
}

inline void write_kernel_csv(std::ostream& os, const KernelMap& k) {
  os << "vertex,probability\n";
  os.precision(17);
  for (auto& [y, p] : k) os << '"' << y.to_string() << "\"," << p << '\n';
}

inline void write_spheres_csv(std::ostream& os, const VolumeGrowth& v) {
  os << "r,sphere,ball\n";
  os.precision(17);
  for (std::size_t r = 0; r < v.spheres.size(); ++r) os << r << ',' << v.spheres[r] << ',' << v.balls[r] << '\n';
}

struct CarneVaropoulosReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // max p_n(x,y) / bound
};

inline void to_json(nlohmann::json& j, const CarneVaropoulosReport& r) {
  j = {{"checked", r.checked}, {"violations", r.violations}, {"worst_ratio", r.worst_ratio}};
}

/// Monitors p_n(x,y) <= 2 sqrt(d_max) exp(-d(x,y)^2 / 2n) on every entry of
/// the exact kernel; d_max is the largest degree seen in the front.
inline CarneVaropoulosReport carne_varopoulos_monitor(const RootedGraph& g, const VertexKey& x, std::int64_t n,
                                                      std::size_t cap = kDefaultFrontCap) {
  if (n < 1) fail(ErrorKind::ConfigError, "monitor needs n >= 1");
  auto kernel = heat_kernel(g, x, n, cap);
  LocalChain chain(g, cap);
  auto xi = chain.intern(x);
  std::unordered_map<LocalChain::Id, std::int64_t> dist{{xi, 0}};
  std::vector<LocalChain::Id> layer{xi};
  std::size_t dmax = chain.row(xi).size();
  for (std::int64_t r = 1; r <= n; ++r) {
    std::vector<LocalChain::Id> next;
    for (auto z : layer)
      for (const auto& e : chain.row(z))
        if (dist.emplace(e.to, r).second) {
          next.push_back(e.to);
          dmax = std::max(dmax, chain.row(e.to).size());
        }
    layer.swap(next);
  }
  CarneVaropoulosReport rep;
  for (auto& [y, p] : kernel) {
    const double d = static_cast<double>(dist.at(*chain.find(y)));
    const double bound = 2.0 * std::sqrt(static_cast<double>(dmax)) * std::exp(-d * d / (2.0 * static_cast<double>(n)));
    ++rep.checked;
    rep.worst_ratio = std::max(rep.worst_ratio, p / bound);
    if (p > bound * (1.0 + 1e-12)) ++rep.violations;
  }
  return rep;
}

/// Rows of the canopy walk lumped relative to the ray vertex at level l:
/// state (a, j) = (level of the lowest ray ancestor, own level), a >= l.
/// Vertices of the subtree T^(l) are (l, j); (a, a) is a ray vertex.
inline std::function<std::vector<std::pair<std::pair<std::int64_t, std::int64_t>, double>>(
    const std::pair<std::int64_t, std::int64_t>&)>
canopy_glued_rows(double m, double lam, std::int64_t ell) {
  using State = std::pair<std::int64_t, std::int64_t>;
  return [m, lam, ell](const State& s) {
    auto [a, j] = s;
    std::vector<std::pair<State, double>> r;
    if (j == 0) return std::vector<std::pair<State, double>>{{a <= 1 ? State{1, 1} : State{a, 1}, 1.0}};
    const double up = lam / (lam + m), down = 1.0 / (lam + m);
    if (j == a) {
      r.push_back({{a + 1, a + 1}, up});
      if (a == ell) {
        r.push_back({{a, a - 1}, m * down});
      } else {
        r.push_back({{a - 1, a - 1}, down});
        r.push_back({{a, a - 1}, (m - 1) * down});
      }
    } else {
      r.push_back({{a, j + 1}, up});
      r.push_back({{a, j - 1}, m * down});
    }
    return r;
  };
}

/// Number of canopy vertices in the lumped state (a, j) relative to level l.
inline double canopy_orbit_size(double m, std::int64_t ell, std::int64_t a, std::int64_t j) {
  if (a == ell) return std::pow(m, static_cast<double>(ell - j));
  if (j == a) return 1.0;
  return (m - 1.0) * std::pow(m, static_cast<double>(a - 1 - j));
}

/// The canopy walk with the levels of the subtree T^(l) below the ray vertex
/// at level l glued together. This is an exact lumping: a state is
/// (a, j) = (level of the lowest ray ancestor, own level); all vertices of
/// T^(l) share a = l, and depth w in T^(l) is the state (l, l - w).
class CanopyLevelChain {
 public:
  using State = std::pair<std::int64_t, std::int64_t>;

  CanopyLevelChain(const RootedGraph& g, std::int64_t ell) : ell_(ell), chain_(make_rows(g, ell)) {
    if (ell < 1) fail(ErrorKind::ConfigError, "glued chain needs l >= 1");
  }

  std::int64_t ell() const { return ell_; }
  double arity() const { return m_; }
  double lambda() const { return lambda_; }

  /// p_bar_t(w, w') for t = 0..t_max and w' = 0..l.
  std::vector<std::vector<double>> kernel_from(std::int64_t w, std::int64_t t_max) {
    if (w < 0 || w > ell_) fail(ErrorKind::InvalidVertex, "depth outside [0, l]");
    std::vector<std::vector<double>> out;
    SparseMass cur, next;
    cur.add(chain_.intern({ell_, ell_ - w}), 1.0);
    for (std::int64_t t = 0;; ++t) {
      std::vector<double> row(static_cast<std::size_t>(ell_) + 1, 0.0);
      for (std::int64_t v = 0; v <= ell_; ++v)
        if (auto id = chain_.find({ell_, ell_ - v})) row[v] = cur.get(*id);
      out.push_back(std::move(row));
      if (t == t_max) break;
      chain_.step(cur, next);
      std::swap(cur, next);
    }
    return out;
  }

  /// max over t <= t_max, 0 <= w <= w_max of |p_bar_t(0,w) - (m/lambda)^w p_bar_t(w,0)|.
  double reversibility_deviation(std::int64_t t_max, std::int64_t w_max) {
    if (w_max >= ell_) fail(ErrorKind::ConfigError, "identity holds for depths below l only");
    auto from0 = kernel_from(0, t_max);
    double worst = 0.0;
    for (std::int64_t w = 0; w <= w_max; ++w) {
      auto fromw = kernel_from(w, t_max);
      const double f = std::pow(m_ / lambda_, static_cast<double>(w));
      for (std::int64_t t = 0; t <= t_max; ++t) worst = std::max(worst, std::abs(from0[t][w] - f * fromw[t][0]));
    }
    return worst;
  }

 private:
  LumpedChain<State, PairHash>::RowFn make_rows(const RootedGraph& g, std::int64_t ell) {
    auto* c = dynamic_cast<const CanopyTree*>(&g);
    if (!c) fail(ErrorKind::WrongFamily, "glued level chain needs a canopy graph");
    m_ = c->arity();
    lambda_ = c->lambda();
    return canopy_glued_rows(m_, lambda_, ell);
  }

  std::int64_t ell_;
  double m_ = 0.0, lambda_ = 0.0;
  LumpedChain<State, PairHash> chain_;
};

}  // namespace polymerlab
