#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

#include "polymerlab/disorder.hpp"

using namespace polymerlab;

namespace {
std::vector<DisorderLaw> all_laws() {
  return {DisorderLaw::gaussian(), DisorderLaw::rademacher(), DisorderLaw::uniform(),
          DisorderLaw::custom(0.0, 2.0, {0.0, 1.0, 3.0, 1.0, 0.5})};
}
}  // namespace

TEST(Disorder, NormalQuantileAgainstBoost) {
  boost::math::normal n;
  for (double p : {1e-300, 1e-20, 1e-8, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97575, 0.999, 1 - 1e-12}) {
    double ref = boost::math::quantile(n, p);
    EXPECT_NEAR(normal_quantile(p), ref, 1e-9 * std::max(1.0, std::abs(ref))) << p;
  }
}

TEST(Disorder, ClosedForms) {
  EXPECT_DOUBLE_EQ(DisorderLaw::gaussian().lambda(1.0), 0.5);
  EXPECT_DOUBLE_EQ(DisorderLaw::gaussian().lambda2(1.0), 1.0);
  EXPECT_NEAR(DisorderLaw::rademacher().lambda(1.0), std::log(std::cosh(1.0)), 1e-15);
  EXPECT_NEAR(DisorderLaw::rademacher().lambda(1.0), std::log(0.5 * std::exp(1.0) + 0.5 * std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(DisorderLaw::rademacher().lambda(1.0), 0.4337808, 1e-7);
  double a = std::sqrt(3.0) * 0.8;
  EXPECT_NEAR(DisorderLaw::uniform().lambda(0.8), std::log(std::sinh(a) / a), 1e-14);
  EXPECT_NEAR(DisorderLaw::rademacher().lambda(400.0), 400.0 - std::log(2.0), 1e-12);
  for (auto& law : all_laws()) {
    EXPECT_EQ(law.lambda(0.0), 0.0);
    EXPECT_EQ(law.lambda2(0.0), 0.0);
  }
}

TEST(Disorder, LambdaShape) {
  const double h = 1e-4;
  for (auto& law : all_laws()) {
    double d1 = (law.lambda(h) - law.lambda(-h)) / (2 * h);
    double d2 = (law.lambda(h) - 2 * law.lambda(0) + law.lambda(-h)) / (h * h);
    EXPECT_NEAR(d1, 0.0, 1e-6) << to_string(law.kind());
    EXPECT_NEAR(d2, 1.0, 1e-6) << to_string(law.kind());
    double prev = 0.0;
    for (double b = 0.1; b <= 3.0; b += 0.1) {
      double l2 = law.lambda2(b);
      EXPECT_GE(l2, prev);
      prev = l2;
      // convexity
      EXPECT_LE(law.lambda(b), 0.5 * (law.lambda(b - 0.05) + law.lambda(b + 0.05)) + 1e-14);
    }
  }
}

TEST(Disorder, CustomLawQuadratureMatchesExplicitSum) {
  // A flat density on [-1, 1] standardizes to the centered uniform law.
  auto flat = DisorderLaw::custom(-1.0, 1.0, {1.0, 1.0, 1.0});
  for (double b : {0.3, 1.0, 2.5}) EXPECT_NEAR(flat.lambda(b), DisorderLaw::uniform().lambda(b), 1e-12);
  EXPECT_THROW(DisorderLaw::custom(1.0, 0.0, {1, 1}), Error);
}

TEST(Disorder, FieldIsPureAndNormalized) {
  for (auto& law : all_laws()) {
    FieldSampler f(law, 99);
    VertexKey x(Family::Canopy, {3, 7});
    EXPECT_EQ(f.omega(5, x), f.omega(5, x));
    EXPECT_EQ(f.shifted(3).omega(2, x), f.omega(5, x));
    EXPECT_NE(f.omega(5, x), FieldSampler(law, 100).omega(5, x));
    auto m = sample_moments(law, 1234, 1'000'000);
    EXPECT_NEAR(m.mean, 0.0, 0.004) << to_string(law.kind());
    EXPECT_NEAR(m.variance, 1.0, 0.01) << to_string(law.kind());
  }
  FieldSampler r(DisorderLaw::rademacher(), 1);
  for (int i = 1; i < 200; ++i) {
    double w = r.omega(i, VertexKey(Family::Lattice, {i % 7}));
    EXPECT_TRUE(w == 1.0 || w == -1.0);
  }
  EXPECT_THROW(r.omega(0, VertexKey(Family::Lattice, {0})), Error);
}

TEST(Disorder, PairwiseDecorrelation) {
  // Neighbouring (i, x) pairs: correlation of omega(i,x), omega(i,x+1) and
  // omega(i,x), omega(i+1,x) is within noise.
  FieldSampler f(DisorderLaw::gaussian(), 5);
  const int N = 200000;
  double sx = 0, st = 0;
  for (int k = 0; k < N; ++k) {
    auto i = k % 100 + 1;
    auto x = k / 100;
    double w = f.omega(i, VertexKey(Family::Lattice, {x}));
    sx += w * f.omega(i, VertexKey(Family::Lattice, {x + 1}));
    st += w * f.omega(i + 1, VertexKey(Family::Lattice, {x}));
  }
  EXPECT_LT(std::abs(sx / N), 4.0 / std::sqrt(N));
  EXPECT_LT(std::abs(st / N), 4.0 / std::sqrt(N));
}

TEST(Disorder, JsonRoundTrip) {
  for (auto& law : all_laws()) {
    auto back = DisorderLaw::from_json(law.to_json());
    EXPECT_EQ(back.kind(), law.kind());
    EXPECT_EQ(back.lambda(0.7), law.lambda(0.7));
  }
  EXPECT_THROW(DisorderLaw::from_json({{"kind", "cauchy"}}), Error);
  EXPECT_NO_THROW(validate_law(DisorderLaw::rademacher()));
}
