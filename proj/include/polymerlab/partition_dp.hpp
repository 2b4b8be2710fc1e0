#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "polymerlab/disorder.hpp"
#include "polymerlab/graph.hpp"
#include "polymerlab/local_chain.hpp"
#include "polymerlab/parallel.hpp"

namespace polymerlab {

/// Point-to-point normalized partition masses after n steps:
///   W_n(x, y) = masses[y] * exp(log_offset),   W_n(x) = sum_y W_n(x, y).
/// Masses are kept at max 1 by renormalization; nothing is lost.
struct WeightFront {
  std::shared_ptr<LocalChain> chain;
  LocalChain::Id origin = 0;
  std::int64_t n = 0;
  double beta = 0.0;
  double log_offset = 0.0;
  std::vector<std::pair<LocalChain::Id, double>> masses;

  bool empty() const { return masses.empty(); }

  /// log W_n(x); -inf when every path was removed by a step filter.
  double log_total() const {
    NeumaierSum s;
    for (auto& [id, m] : masses) s.add(m);
    double t = s.value();
    return t > 0.0 ? log_offset + std::log(t) : kNegInf;
  }

  /// (vertex, W_n(x, y)) sorted by vertex key.
  std::vector<std::pair<VertexKey, double>> entries() const {
    std::vector<std::pair<VertexKey, double>> out;
    out.reserve(masses.size());
    for (auto& [id, m] : masses) out.emplace_back(chain->key(id), m * std::exp(log_offset));
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.first < b.first; });
    return out;
  }

  /// W_n(x, y) for one vertex (0 off the support).
  double weight(const VertexKey& y) const {
    auto id = chain->find(y);
    if (!id) return 0.0;
    for (auto& [i, m] : masses)
      if (i == *id) return m * std::exp(log_offset);
    return 0.0;
  }
};

/// Keeps (true) or removes (false) the mass arriving at vertex y at time t.
/// Used for restricted partition functions W_n[1_A] with A an event on paths
/// that is decided step by step.
using StepFilter = std::function<bool(std::int64_t t, const VertexKey& y)>;

struct EvolveOptions {
  /// Renormalize every k steps (k >= 1). Results do not depend on k.
  int renormalize_every = 1;
  StepFilter filter;
  /// Called after every step with the new front (e.g. to record history).
  std::function<void(const WeightFront&)> on_step;
};

inline WeightFront make_front(std::shared_ptr<LocalChain> chain, const VertexKey& x, double beta) {
  chain->graph().require(x);
  WeightFront f;
  f.origin = chain->intern(x);
  f.chain = std::move(chain);
  f.beta = beta;
  f.masses = {{f.origin, 1.0}};
  return f;
}

namespace detail {
inline void renormalize(WeightFront& front) {
  double mx = 0.0;
  for (auto& [id, m] : front.masses) mx = std::max(mx, m);
  if (mx == 0.0) {
    front.masses.clear();
    return;
  }
  if (!std::isfinite(mx)) fail(ErrorKind::NumericalError, "front mass overflow");
  for (auto& [id, m] : front.masses) m /= mx;
  front.log_offset += std::log(mx);
}
}  // namespace detail

/// Advances the front by `steps` steps in the environment `field`:
///   m'(y) = sum_z m(z) P(z, y) exp(beta omega(n+1, y) - Lambda(beta)).
inline void evolve_front(WeightFront& front, const FieldSampler& field, std::int64_t steps,
                         const EvolveOptions& opt = {}, std::size_t cap = kDefaultFrontCap) {
  if (steps < 0) fail(ErrorKind::ConfigError, "negative step count");
  if (opt.renormalize_every < 1) fail(ErrorKind::ConfigError, "renormalize_every must be >= 1");
  auto& chain = *front.chain;
  const double beta = front.beta;
  const double lam = field.law().lambda(beta);
  SparseMass next;
  for (std::int64_t s = 0; s < steps; ++s) {
    next.clear();
    for (auto& [z, m] : front.masses) {
      if (m == 0.0) continue;
      for (const auto& e : chain.row(z)) next.add(e.to, m * e.prob);
    }
    if (next.size() > cap) fail(ErrorKind::BudgetExceeded, "weight front exceeds cap " + std::to_string(cap));
    const std::int64_t t = front.n + 1;
    front.masses.clear();
    front.masses.reserve(next.size());
    for (auto y : next.active()) {
      double m = next.get(y);
      if (opt.filter && !opt.filter(t, chain.key(y))) continue;
      if (beta != 0.0) m *= std::exp(beta * field.omega_bytes(t, chain.key_bytes(y)) - lam);
      front.masses.emplace_back(y, m);
    }
    front.n = t;
    if (front.masses.empty()) {
      if (!opt.filter) fail(ErrorKind::NumericalError, "front vanished without a filter");
    } else if (front.n % opt.renormalize_every == 0) {
      detail::renormalize(front);
      if (front.masses.empty() && !opt.filter) fail(ErrorKind::NumericalError, "all masses underflowed");
    }
    if (opt.on_step) opt.on_step(front);
  }
  if (!front.masses.empty()) detail::renormalize(front);
}

/// log W_n(x) in one environment.
inline double log_partition(const RootedGraph& g, const FieldSampler& field, const VertexKey& x, std::int64_t n,
                            double beta, std::size_t cap = kDefaultFrontCap) {
  g.require_horizon(x, n);
  g.require(x);
  if (beta == 0.0) return 0.0;  // e_n == 1
  auto front = make_front(std::make_shared<LocalChain>(g, cap), x, beta);
  evolve_front(front, field, n, {}, cap);
  return front.log_total();
}

struct EndpointStats {
  double overlap = 0.0;  // I_n = sum_y q(y)^2
  double max_mass = 0.0;
  VertexKey argmax;
  double mean_displacement = 0.0;  // E_q[graph distance from the origin]
};

inline void to_json(nlohmann::json& j, const EndpointStats& s) {
  j = {{"I_n", s.overlap}, {"max_mass", s.max_mass}, {"argmax", s.argmax.to_string()},
       {"mean_displacement", s.mean_displacement}};
}

/// Step distances from `origin` in the chain, up to `radius`.
inline std::unordered_map<LocalChain::Id, std::int64_t> chain_distances(LocalChain& chain, LocalChain::Id origin,
                                                                         std::int64_t radius) {
  std::unordered_map<LocalChain::Id, std::int64_t> dist{{origin, 0}};
  std::vector<LocalChain::Id> layer{origin};
  for (std::int64_t r = 1; r <= radius && !layer.empty(); ++r) {
    std::vector<LocalChain::Id> nextl;
    for (auto z : layer)
      for (const auto& e : chain.row(z))
        if (dist.emplace(e.to, r).second) nextl.push_back(e.to);
    layer.swap(nextl);
  }
  return dist;
}

/// Endpoint law q = W_n(x, .) / W_n(x) summaries. The argmax tie-break is
/// the smallest VertexKey.
inline EndpointStats endpoint_stats(const WeightFront& front, bool with_displacement = true) {
  EndpointStats st;
  NeumaierSum tot;
  for (auto& [id, m] : front.masses) tot.add(m);
  const double z = tot.value();
  if (!(z > 0.0)) fail(ErrorKind::NumericalError, "empty front has no endpoint law");
  NeumaierSum ov;
  for (auto& [id, m] : front.masses) {
    double q = m / z;
    ov.add(q * q);
    const auto& key = front.chain->key(id);
    if (q > st.max_mass || (q == st.max_mass && key < st.argmax)) {
      st.max_mass = q;
      st.argmax = key;
    }
  }
  st.overlap = ov.value();
  if (with_displacement) {
    auto dist = chain_distances(*front.chain, front.origin, front.n);
    NeumaierSum md;
    for (auto& [id, m] : front.masses) md.add(m / z * static_cast<double>(dist.at(id)));
    st.mean_displacement = md.value();
  }
  return st;
}

/// Fronts W_k(x, .) for k = 0..n, enough to sample polymer paths backwards.
struct FrontHistory {
  std::shared_ptr<LocalChain> chain;
  std::vector<std::vector<std::pair<LocalChain::Id, double>>> masses;

  std::int64_t horizon() const { return static_cast<std::int64_t>(masses.size()) - 1; }
};

/// Runs the DP for n steps recording every front.
inline FrontHistory record_history(std::shared_ptr<LocalChain> chain, const FieldSampler& field, const VertexKey& x,
                                   std::int64_t n, double beta, std::size_t cap = kDefaultFrontCap) {
  FrontHistory h;
  h.chain = chain;
  auto front = make_front(std::move(chain), x, beta);
  h.masses.push_back(front.masses);
  EvolveOptions opt;
  opt.on_step = [&](const WeightFront& f) { h.masses.push_back(f.masses); };
  evolve_front(front, field, n, opt, cap);
  return h;
}

/// One path from the polymer measure P^{n,beta}_x, by backward sampling:
/// S_n ~ W_n(x, .), then S_{k-1} ~ W_{k-1}(x, z) P(z, S_k) given S_k.
inline std::vector<VertexKey> sample_polymer_path(const FrontHistory& h, std::uint64_t seed) {
  if (h.masses.empty() || !h.chain) fail(ErrorKind::MissingHistory, "no fronts recorded");
  for (std::size_t k = 0; k < h.masses.size(); ++k)
    if (h.masses[k].empty()) fail(ErrorKind::MissingHistory, "front " + std::to_string(k) + " missing");
  auto& chain = *h.chain;
  WalkRng rng(seed);
  auto draw = [&](const std::vector<std::pair<LocalChain::Id, double>>& w) {
    NeumaierSum s;
    for (auto& [id, m] : w) s.add(m);
    double u = rng.uniform() * s.value(), acc = 0.0;
    for (auto& [id, m] : w) {
      acc += m;
      if (u < acc) return id;
    }
    for (auto it = w.rbegin(); it != w.rend(); ++it)
      if (it->second > 0.0) return it->first;
    return w.back().first;
  };
  const auto n = h.horizon();
  std::vector<LocalChain::Id> ids(static_cast<std::size_t>(n) + 1);
  ids[n] = draw(h.masses[n]);
  for (std::int64_t k = n; k >= 1; --k) {
    const auto y = ids[k];
    std::vector<std::pair<LocalChain::Id, double>> cand;
    for (auto& [z, m] : h.masses[k - 1]) {
      if (m == 0.0) continue;
      for (const auto& e : chain.row(z))
        if (e.to == y) cand.emplace_back(z, m * e.prob);
    }
    if (cand.empty()) fail(ErrorKind::MissingHistory, "history is inconsistent at step " + std::to_string(k));
    ids[k - 1] = draw(cand);
  }
  std::vector<VertexKey> path;
  path.reserve(ids.size());
  for (auto id : ids) path.push_back(chain.key(id));
  return path;
}

struct FreeEnergyEstimate {
  double p_hat = 0.0;
  double std_error = 0.0;
  double ci_half_width = 0.0;  // at the requested confidence, from the empirical SE
  double confidence = 0.99;
  /// Conservative single-replica envelope sqrt(log(2/alpha) / (C n)) from the
  /// concentration inequality; C is not known, so this is indicative only.
  double concentration_envelope = 0.0;
  double concentration_C = 1.0;
  std::vector<double> per_replica;  // (1/n) log W_n per environment
  double ci_low() const { return p_hat - ci_half_width; }
  double ci_high() const { return p_hat + ci_half_width; }
};

inline void to_json(nlohmann::json& j, const FreeEnergyEstimate& e) {
  j = {{"p_hat", e.p_hat},
       {"std_error", e.std_error},
       {"ci_half_width", e.ci_half_width},
       {"confidence", e.confidence},
       {"concentration_envelope", e.concentration_envelope},
       {"concentration_C", e.concentration_C},
       {"replicas", e.per_replica.size()}};
}

/// Two-sided normal quantile for the given confidence level.
inline double normal_critical(double confidence) { return normal_quantile(0.5 + 0.5 * confidence); }

inline std::uint64_t environment_seed(std::uint64_t base, std::size_t replica) {
  return derive_seed(base, "env", replica);
}

/// Applies fn(replica, log W_n(x)) over R independent environments; values
/// are returned by replica index regardless of the worker schedule.
inline std::vector<double> log_partition_replicas(const RootedGraph& g, const DisorderLaw& law, const VertexKey& x,
                                                  double beta, std::int64_t n, std::size_t replicas,
                                                  std::uint64_t seed, std::size_t cap = kDefaultFrontCap,
                                                  unsigned workers = worker_count()) {
  g.require_horizon(x, n);
  std::vector<double> out(replicas);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(replicas, 1))));
  std::vector<std::shared_ptr<LocalChain>> chains(workers);
  for (auto& c : chains) c = std::make_shared<LocalChain>(g, cap);
  parallel_for(
      replicas,
      [&](std::size_t r, unsigned w) {
        if (beta == 0.0) {
          out[r] = 0.0;
          return;
        }
        FieldSampler f(law, environment_seed(seed, r));
        auto front = make_front(chains[w], x, beta);
        evolve_front(front, f, n, {}, cap);
        out[r] = front.log_total();
      },
      workers);
  return out;
}

/// Free-energy estimate from per-environment log W_n values.
inline FreeEnergyEstimate summarize_free_energy(const std::vector<double>& logs, std::int64_t n,
                                                double confidence = 0.99, double concentration_C = 1.0) {
  if (logs.size() < 2) fail(ErrorKind::ConfigError, "free energy needs at least 2 replicas");
  if (n < 1) fail(ErrorKind::ConfigError, "free energy needs n >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) fail(ErrorKind::ConfigError, "confidence must be in (0, 1)");
  FreeEnergyEstimate e;
  e.confidence = confidence;
  e.concentration_C = concentration_C;
  e.per_replica.resize(logs.size());
  NeumaierSum s;
  for (std::size_t r = 0; r < logs.size(); ++r) {
    e.per_replica[r] = logs[r] / static_cast<double>(n);
    s.add(e.per_replica[r]);
  }
  const auto R = static_cast<double>(logs.size());
  e.p_hat = s.value() / R;
  NeumaierSum v;
  for (double p : e.per_replica) v.add((p - e.p_hat) * (p - e.p_hat));
  e.std_error = std::sqrt(v.value() / (R - 1.0) / R);
  e.ci_half_width = normal_critical(confidence) * e.std_error;
  e.concentration_envelope = std::sqrt(std::log(2.0 / (1.0 - confidence)) / (concentration_C * static_cast<double>(n)));
  return e;
}

/// p_hat_n = (1/R) sum_r (1/n) log W_n^{(r)}(x) with an empirical-SE CI.
inline FreeEnergyEstimate free_energy_mc(const RootedGraph& g, const DisorderLaw& law, const VertexKey& x, double beta,
                                         std::int64_t n, std::size_t replicas, std::uint64_t seed,
                                         double confidence = 0.99, double concentration_C = 1.0,
                                         std::size_t cap = kDefaultFrontCap) {
  if (replicas < 2) fail(ErrorKind::ConfigError, "free energy needs at least 2 replicas");
  if (n < 1) fail(ErrorKind::ConfigError, "free energy needs n >= 1");
  return summarize_free_energy(log_partition_replicas(g, law, x, beta, n, replicas, seed, cap), n, confidence,
                               concentration_C);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Binary, little-endian:
//   "PLFRONT1"                      8 bytes magic
//   spec hash                       16 ASCII hex digits
//   env seed                        u64
//   n                               i64
//   beta, log_offset                f64, f64
//   count                           u64
//   count x { u32 key length, key bytes, f64 mass }   sorted by key bytes
// ---------------------------------------------------------------------------

struct CheckpointHeader {
  std::string spec_hash;
  std::uint64_t env_seed = 0;
  std::int64_t n = 0;
  double beta = 0.0;
  double log_offset = 0.0;
};

namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) fail(ErrorKind::IoError, "truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}
}  // namespace detail

inline void save_front(const WeightFront& front, const std::string& path, const std::string& spec_hash,
                       std::uint64_t env_seed) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot write " + path);
  os.write("PLFRONT1", 8);
  std::string h = spec_hash;
  h.resize(16, '0');
  os.write(h.data(), 16);
  detail::put_le<std::uint64_t>(os, env_seed);
  detail::put_le<std::int64_t>(os, front.n);
  detail::put_le<double>(os, front.beta);
  detail::put_le<double>(os, front.log_offset);
  std::vector<std::pair<std::string, double>> rows;
  rows.reserve(front.masses.size());
  for (auto& [id, m] : front.masses) rows.emplace_back(front.chain->key_bytes(id), m);
  std::sort(rows.begin(), rows.end());
  detail::put_le<std::uint64_t>(os, rows.size());
  for (auto& [k, m] : rows) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(k.size()));
    os.write(k.data(), static_cast<std::streamsize>(k.size()));
    detail::put_le<double>(os, m);
  }
  if (!os) fail(ErrorKind::IoError, "write failed for " + path);
}

/// Loads a checkpoint into a front on `chain` (origin is set to the graph root
/// unless given). The graph-spec hash must match when `expect_hash` is non-empty.
inline std::pair<WeightFront, CheckpointHeader> load_front(std::shared_ptr<LocalChain> chain, const std::string& path,
                                                           const std::string& expect_hash = {},
                                                           std::optional<VertexKey> origin = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot read " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != "PLFRONT1") fail(ErrorKind::IoError, "not a front checkpoint");
  CheckpointHeader h;
  h.spec_hash.resize(16);
  if (!is.read(h.spec_hash.data(), 16)) fail(ErrorKind::IoError, "truncated checkpoint");
  if (!expect_hash.empty() && h.spec_hash != expect_hash)
    fail(ErrorKind::ConfigError, "checkpoint belongs to graph " + h.spec_hash);
  h.env_seed = detail::get_le<std::uint64_t>(is);
  h.n = detail::get_le<std::int64_t>(is);
  h.beta = detail::get_le<double>(is);
  h.log_offset = detail::get_le<double>(is);
  auto count = detail::get_le<std::uint64_t>(is);
  WeightFront f;
  f.chain = chain;
  f.origin = chain->intern(origin ? *origin : chain->graph().root());
  f.n = h.n;
  f.beta = h.beta;
  f.log_offset = h.log_offset;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto len = detail::get_le<std::uint32_t>(is);
    std::string k(len, '\0');
    if (!is.read(k.data(), len)) fail(ErrorKind::IoError, "truncated checkpoint");
    double m = detail::get_le<double>(is);
    auto key = VertexKey::decode(k);
    chain->graph().require(key);
    f.masses.emplace_back(chain->intern(key), m);
  }
  return {std::move(f), h};
}

}  // namespace polymerlab
