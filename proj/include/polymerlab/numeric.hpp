#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "polymerlab/error.hpp"

namespace polymerlab {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Compensated (Neumaier) summation; totals are independent of the
/// magnitude ordering of the terms up to a few ulps.
class NeumaierSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

inline void to_json(nlohmann::json& j, const LinearFit& f) {
  j = {{"slope", f.slope}, {"intercept", f.intercept}, {"slope_stderr", f.slope_stderr},
       {"r2", f.r2}, {"points", f.points}};
}

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    fail(ErrorKind::InsufficientData, "least squares needs at least two points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) fail(ErrorKind::InsufficientData, "degenerate abscissae");
  LinearFit fit;
  fit.points = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double r = y[i] - fit.intercept - fit.slope * x[i];
    sse += r * r;
  }
  fit.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  fit.slope_stderr = x.size() > 2 ? std::sqrt(sse / (n - 2) / sxx) : 0.0;
  return fit;
}

/// Parameters of the truncation-convergence test applied to increment
/// sequences (collision sums, Green functions, second moments).
///
/// Increments are first aggregated in consecutive pairs so that bipartite
/// period-2 zeros do not break the test. Over the final `window` aggregated
/// increments two tail models are fitted: geometric (log inc linear in k)
/// and power law (log inc linear in log k). The better-fitting model
/// decides: geometric converges iff its per-step ratio is <= `ratio`,
/// power law converges iff its decay exponent is >= `min_power`.
struct ConvergenceTest {
  std::size_t window = 50;
  double ratio = 0.995;
  double min_power = 1.2;
  double min_r2 = 0.9;
};

inline void to_json(nlohmann::json& j, const ConvergenceTest& t) {
  j = {{"window", t.window}, {"ratio", t.ratio}, {"min_power", t.min_power}, {"min_r2", t.min_r2}};
}

inline void from_json(const nlohmann::json& j, ConvergenceTest& t) {
  t.window = j.value("window", t.window);
  t.ratio = j.value("ratio", t.ratio);
  t.min_power = j.value("min_power", t.min_power);
  t.min_r2 = j.value("min_r2", t.min_r2);
}

enum class TailModel { Vanishing, Geometric, PowerLaw, Growing, Undetermined };

inline std::string to_string(TailModel m) {
  switch (m) {
    case TailModel::Vanishing: return "vanishing";
    case TailModel::Geometric: return "geometric";
    case TailModel::PowerLaw: return "power_law";
    case TailModel::Growing: return "growing";
    case TailModel::Undetermined: return "undetermined";
  }
  return "undetermined";
}

struct ConvergenceVerdict {
  bool converged = false;
  TailModel model = TailModel::Undetermined;
  double geometric_ratio = std::numeric_limits<double>::quiet_NaN();
  double geometric_r2 = 0.0;
  double power_exponent = std::numeric_limits<double>::quiet_NaN();
  double power_r2 = 0.0;
  /// Estimated sum of the increments beyond the last one (inf if divergent).
  double tail_estimate = std::numeric_limits<double>::infinity();
};

inline void to_json(nlohmann::json& j, const ConvergenceVerdict& v) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  j = {{"converged", v.converged},
       {"model", to_string(v.model)},
       {"geometric_ratio", num(v.geometric_ratio)},
       {"geometric_r2", v.geometric_r2},
       {"power_exponent", num(v.power_exponent)},
       {"power_r2", v.power_r2},
       {"tail_estimate", num(v.tail_estimate)}};
}

/// `increments[k]` is the k-th increment of a partial-sum sequence whose
/// index k is the time (k = 0 allowed; it is ignored by the fit).
inline ConvergenceVerdict assess_convergence(std::span<const double> increments, const ConvergenceTest& test) {
  ConvergenceVerdict v;
  // Pair aggregation: block b covers times 2b+1, 2b+2 (time 0 excluded).
  std::vector<double> blocks;
  for (std::size_t k = 1; k + 1 < increments.size(); k += 2) blocks.push_back(increments[k] + increments[k + 1]);
  if (blocks.empty()) {
    v.model = TailModel::Undetermined;
    return v;
  }
  const std::size_t w = std::min(test.window, blocks.size());
  const std::size_t first = blocks.size() - w;
  bool all_zero = true;
  for (std::size_t b = first; b < blocks.size(); ++b)
    if (blocks[b] != 0.0) all_zero = false;
  if (all_zero) {
    v.converged = true;
    v.model = TailModel::Vanishing;
    v.tail_estimate = 0.0;
    return v;
  }
  std::vector<double> ks, logks, logs;
  for (std::size_t b = first; b < blocks.size(); ++b) {
    if (!(blocks[b] > 0.0)) continue;
    // Block b is centred at time 2b + 1.5.
    double t = 2.0 * static_cast<double>(b) + 1.5;
    ks.push_back(t);
    logks.push_back(std::log(t));
    logs.push_back(std::log(blocks[b]));
  }
  if (ks.size() < 3) {
    v.model = TailModel::Undetermined;
    return v;
  }
  auto geo = least_squares(ks, logs);
  auto pow = least_squares(logks, logs);
  // Per-time-step geometric ratio.
  v.geometric_ratio = std::exp(geo.slope);
  v.geometric_r2 = geo.r2;
  v.power_exponent = -pow.slope;
  v.power_r2 = pow.r2;
  const double last = blocks.back();
  const double t_last = 2.0 * static_cast<double>(blocks.size() - 1) + 1.5;
  if (geo.slope >= 0.0 && pow.slope >= 0.0) {
    v.model = TailModel::Growing;
    return v;
  }
  if (geo.r2 >= pow.r2) {
    v.model = TailModel::Geometric;
    if (v.geometric_ratio <= test.ratio && geo.r2 >= test.min_r2) {
      v.converged = true;
      double rho2 = v.geometric_ratio * v.geometric_ratio;
      v.tail_estimate = last * rho2 / (1.0 - rho2);
    }
  } else {
    v.model = TailModel::PowerLaw;
    if (v.power_exponent >= test.min_power && pow.r2 >= test.min_r2) {
      v.converged = true;
      // sum_{blocks after last} C t^{-a} ~ last * (t_last/2) / (a - 1)
      v.tail_estimate = last * (t_last / 2.0) / (v.power_exponent - 1.0);
    }
  }
  return v;
}

}  // namespace polymerlab
