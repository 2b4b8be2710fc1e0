#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "polymerlab/error.hpp"
#include "polymerlab/hashing.hpp"
#include "polymerlab/numeric.hpp"
#include "polymerlab/vertex_key.hpp"

namespace polymerlab {

/// Inverse standard normal CDF, Wichura's AS241 (PPND16). Relative error
/// about 1e-16 over (0,1); frozen so the Gaussian field is bit-reproducible.
inline double normal_quantile(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r + 6.7265770927008700853e+4) * r +
                4.5921953931549871457e+4) * r + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r + 3.9307895800092710610e+4) * r +
                2.1213794301586595867e+4) * r + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
               1.27045825245236838258e+0) * r + 3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
               1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
               2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
               7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

enum class LawKind { StandardGaussian, Rademacher, CenteredUniform, BoundedCustom };

inline std::string_view to_string(LawKind k) {
  switch (k) {
    case LawKind::StandardGaussian: return "gaussian";
    case LawKind::Rademacher: return "rademacher";
    case LawKind::CenteredUniform: return "uniform";
    case LawKind::BoundedCustom: return "custom";
  }
  return "gaussian";
}

/// Law of a single environment value, normalized to mean 0 and variance 1.
///
/// BoundedCustom takes a piecewise-linear density on equally spaced nodes
/// over [lo, hi]; the variable is standardized affinely after normalization.
/// Sampling inverts the exact (piecewise-quadratic) CDF; Lambda uses
/// adaptive Gauss-Kronrod quadrature per segment.
class DisorderLaw {
 public:
  DisorderLaw() = default;
  static DisorderLaw gaussian() { return DisorderLaw(LawKind::StandardGaussian); }
  static DisorderLaw rademacher() { return DisorderLaw(LawKind::Rademacher); }
  static DisorderLaw uniform() { return DisorderLaw(LawKind::CenteredUniform); }
  static DisorderLaw custom(double lo, double hi, std::vector<double> density);

  LawKind kind() const { return kind_; }

  /// log E exp(beta * omega).
  double lambda(double beta) const;
  /// Lambda(2 beta) - 2 Lambda(beta).
  double lambda2(double beta) const { return lambda(2.0 * beta) - 2.0 * lambda(beta); }

  /// Transforms uniform bits into a sample of the law.
  double transform(std::uint64_t bits) const;

  nlohmann::json to_json() const;
  static DisorderLaw from_json(const nlohmann::json& j);

 private:
  explicit DisorderLaw(LawKind k) : kind_(k) {}

  struct Custom {
    double lo, hi, h;
    std::vector<double> f;    // normalized density at the nodes
    std::vector<double> cdf;  // CDF at the nodes
    std::vector<double> raw;  // density as given
    double mean, sd;
  };

  double custom_lambda(double beta) const;
  double custom_quantile(double u) const;

  LawKind kind_ = LawKind::StandardGaussian;
  std::shared_ptr<const Custom> custom_;
};

inline DisorderLaw DisorderLaw::custom(double lo, double hi, std::vector<double> density) {
  if (!(hi > lo) || density.size() < 2) fail(ErrorKind::ConfigError, "custom law needs hi > lo and >= 2 density nodes");
  for (double v : density)
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::ConfigError, "custom density must be finite and >= 0");
  auto c = std::make_shared<Custom>();
  c->lo = lo;
  c->hi = hi;
  c->raw = density;
  const std::size_t m = density.size() - 1;
  c->h = (hi - lo) / static_cast<double>(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += 0.5 * c->h * (density[i] + density[i + 1]);
  if (!(total > 0.0)) fail(ErrorKind::ConfigError, "custom density integrates to zero");
  c->f.resize(density.size());
  for (std::size_t i = 0; i <= m; ++i) c->f[i] = density[i] / total;
  c->cdf.assign(density.size(), 0.0);
  // Exact moments of a piecewise-linear density, segment by segment.
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double a = lo + c->h * static_cast<double>(i), b = a + c->h;
    double fa = c->f[i], fb = c->f[i + 1];
    c->cdf[i + 1] = c->cdf[i] + 0.5 * c->h * (fa + fb);
    // f(x) = fa + (fb - fa)(x - a)/h
    double s = (fb - fa) / c->h;
    double k0 = fa - s * a;
    auto p = [&](double x, int n) { return std::pow(x, n); };
    m1 += k0 * (p(b, 2) - p(a, 2)) / 2 + s * (p(b, 3) - p(a, 3)) / 3;
    m2 += k0 * (p(b, 3) - p(a, 3)) / 3 + s * (p(b, 4) - p(a, 4)) / 4;
  }
  c->mean = m1;
  double var = m2 - m1 * m1;
  if (!(var > 0.0)) fail(ErrorKind::ConfigError, "custom law is degenerate");
  c->sd = std::sqrt(var);
  DisorderLaw law(LawKind::BoundedCustom);
  law.custom_ = std::move(c);
  return law;
}

inline double DisorderLaw::lambda(double beta) const {
  switch (kind_) {
    case LawKind::StandardGaussian: return 0.5 * beta * beta;
    case LawKind::Rademacher: {
      // log cosh, stable for large |beta|
      double a = std::abs(beta);
      return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
    }
    case LawKind::CenteredUniform: {
      double a = std::sqrt(3.0) * std::abs(beta);
      if (a < 1e-3) {
        double a2 = a * a;
        return a2 / 6.0 - a2 * a2 / 180.0 + a2 * a2 * a2 / 2835.0;
      }
      return a + std::log1p(-std::exp(-2.0 * a)) - std::numbers::ln2 - std::log(a);
    }
    case LawKind::BoundedCustom: return custom_lambda(beta);
  }
  return 0.0;
}

/// Smallest beta >= 0 with lambda2(beta) = target (lambda2 is non-decreasing
/// on [0, inf) by convexity of Lambda).
inline double beta_for_lambda2(const DisorderLaw& law, double target) {
  if (!(target >= 0.0)) fail(ErrorKind::ConfigError, "target Lambda_2 must be >= 0");
  if (target == 0.0) return 0.0;
  double hi = 1.0;
  while (law.lambda2(hi) < target) {
    hi *= 2.0;
    if (hi > 1e4) fail(ErrorKind::ConfigError, "Lambda_2 never reaches " + std::to_string(target) + " for this law");
  }
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (law.lambda2(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

inline double DisorderLaw::custom_lambda(double beta) const {
  if (beta == 0.0) return 0.0;
  const auto& c = *custom_;
  const double zlo = (c.lo - c.mean) / c.sd, zhi = (c.hi - c.mean) / c.sd;
  const double shift = std::max(beta * zlo, beta * zhi);
  const std::size_t m = c.f.size() - 1;
  NeumaierSum total;
  for (std::size_t i = 0; i < m; ++i) {
    double a = c.lo + c.h * static_cast<double>(i), b = a + c.h;
    double fa = c.f[i], fb = c.f[i + 1];
    auto integrand = [&](double x) {
      double dens = fa + (fb - fa) * (x - a) / c.h;
      return dens * std::exp(beta * (x - c.mean) / c.sd - shift);
    };
    double err = 0.0;
    double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, b, 15, 1e-14, &err);
    if (!std::isfinite(v) || err > 1e-12 * std::max(1.0, std::abs(v)) + 1e-300)
      fail(ErrorKind::NumericalError, "quadrature for custom Lambda did not converge");
    total.add(v);
  }
  double s = total.value();
  if (!(s > 0.0)) fail(ErrorKind::NumericalError, "custom Lambda underflow");
  return shift + std::log(s);
}

inline double DisorderLaw::custom_quantile(double u) const {
  const auto& c = *custom_;
  auto it = std::upper_bound(c.cdf.begin(), c.cdf.end(), u);
  std::size_t i = it == c.cdf.begin() ? 0 : static_cast<std::size_t>(it - c.cdf.begin()) - 1;
  i = std::min(i, c.f.size() - 2);
  double r = u - c.cdf[i];
  double fa = c.f[i], slope = (c.f[i + 1] - fa) / c.h;
  // Solve fa s + slope s^2 / 2 = r in the cancellation-free form.
  double disc = std::max(0.0, fa * fa + 2.0 * slope * r);
  double denom = fa + std::sqrt(disc);
  double s = denom > 0.0 ? 2.0 * r / denom : 0.0;
  s = std::clamp(s, 0.0, c.h);
  double x = c.lo + c.h * static_cast<double>(i) + s;
  return (x - c.mean) / c.sd;
}

inline double DisorderLaw::transform(std::uint64_t bits) const {
  switch (kind_) {
    case LawKind::StandardGaussian: return normal_quantile(open_unit(bits));
    case LawKind::Rademacher: return (bits >> 63) ? 1.0 : -1.0;
    case LawKind::CenteredUniform: return std::sqrt(3.0) * (2.0 * open_unit(bits) - 1.0);
    case LawKind::BoundedCustom: return custom_quantile(open_unit(bits));
  }
  return 0.0;
}

inline nlohmann::json DisorderLaw::to_json() const {
  nlohmann::json j{{"kind", std::string(to_string(kind_))}};
  if (kind_ == LawKind::BoundedCustom) {
    j["lo"] = custom_->lo;
    j["hi"] = custom_->hi;
    j["density"] = custom_->raw;
  }
  return j;
}

inline DisorderLaw DisorderLaw::from_json(const nlohmann::json& j) {
  std::string kind = j.is_string() ? j.get<std::string>() : j.value("kind", std::string("gaussian"));
  if (kind == "gaussian") return gaussian();
  if (kind == "rademacher") return rademacher();
  if (kind == "uniform") return uniform();
  if (kind == "custom") {
    if (!j.is_object() || !j.contains("density")) fail(ErrorKind::ConfigError, "custom law needs a density array");
    return custom(j.value("lo", -1.0), j.value("hi", 1.0), j.at("density").get<std::vector<double>>());
  }
  fail(ErrorKind::ConfigError, "unknown disorder law '" + kind + "'");
}

struct LawMoments {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t samples = 0;
};

/// Empirical mean and variance of `samples` field values at distinct
/// (time, vertex) pairs. Used to validate a law before a run.
LawMoments sample_moments(const DisorderLaw& law, std::uint64_t seed, std::size_t samples);

/// Throws ConfigError unless the sampled mean is within 0.004 of 0 and the
/// variance within 0.01 of 1 over 10^6 samples.
void validate_law(const DisorderLaw& law, std::uint64_t seed = 0x5eed);

/// The environment omega(i, x) as a pure function of (seed, i, key bytes).
///
///   bits  = SipHash-2-4-128(key = LE64(seed) || LE64(omega domain),
///                           msg = varint(i) || VertexKey bytes).lo
///   omega = law.transform(bits)
///
/// `time_offset` shifts the time axis: the sampler with offset m returns
/// omega(i + m, x), i.e. the environment seen after m steps.
class FieldSampler {
 public:
  FieldSampler(DisorderLaw law, std::uint64_t seed, std::int64_t time_offset = 0)
      : law_(std::move(law)), seed_(seed), offset_(time_offset) {}

  const DisorderLaw& law() const { return law_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t time_offset() const { return offset_; }

  FieldSampler shifted(std::int64_t m) const { return FieldSampler(law_, seed_, offset_ + m); }

  double omega_bytes(std::int64_t i, std::string_view key_bytes) const {
    if (i < 1) fail(ErrorKind::ConfigError, "environment time must be >= 1");
    std::string msg;
    msg.reserve(10 + key_bytes.size());
    append_counter(msg, static_cast<std::uint64_t>(i + offset_));
    msg.append(key_bytes);
    return law_.transform(keyed_hash128(seed_, kDomainOmega, msg).lo);
  }

  double omega(std::int64_t i, const VertexKey& x) const { return omega_bytes(i, x.bytes()); }

 private:
  DisorderLaw law_;
  std::uint64_t seed_;
  std::int64_t offset_;
};

inline LawMoments sample_moments(const DisorderLaw& law, std::uint64_t seed, std::size_t samples) {
  FieldSampler f(law, seed);
  NeumaierSum s1, s2;
  for (std::size_t k = 0; k < samples; ++k) {
    auto i = static_cast<std::int64_t>(k % 1000) + 1;
    VertexKey x(Family::Lattice, {static_cast<std::int64_t>(k / 1000)});
    double w = f.omega(i, x);
    s1.add(w);
    s2.add(w * w);
  }
  LawMoments m;
  m.samples = samples;
  const auto n = static_cast<double>(samples);
  m.mean = s1.value() / n;
  m.variance = s2.value() / n - m.mean * m.mean;
  return m;
}

inline void validate_law(const DisorderLaw& law, std::uint64_t seed) {
  auto m = sample_moments(law, seed, 1'000'000);
  if (std::abs(m.mean) > 0.004 || std::abs(m.variance - 1.0) > 0.01)
    fail(ErrorKind::ConfigError, "law " + std::string(to_string(law.kind())) + " fails normalization: mean " +
                                     std::to_string(m.mean) + ", variance " + std::to_string(m.variance));
}

}  // namespace polymerlab
