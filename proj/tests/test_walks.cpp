#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "polymerlab/graph_spec.hpp"
#include "polymerlab/walk_diagnostics.hpp"

using namespace polymerlab;

TEST(HeatKernel, Z1IsBinomial) {
  LatticeGraph z1(1);
  for (int n : {1, 7, 30}) {
    auto k = heat_kernel(z1, z1.root(), n);
    double total = 0;
    for (auto& [y, p] : k) {
      auto x = y[0];
      double expect = std::exp(detail::log_choose(n, (n + x) / 2.0) - n * std::log(2.0));
      EXPECT_NEAR(p, expect, 1e-14);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(HeatKernel, RowsSumToOneAndMatchEnumeration) {
  std::vector<std::shared_ptr<const RootedGraph>> gs{
      std::make_shared<CanopyTree>(2, 1.5), std::make_shared<SierpinskiGasket>(6),
      std::make_shared<GaltonWatsonTree>(std::vector<double>{0.2, 0.3, 0.5}, 1.1, 9, 30),
      std::make_shared<ConductanceSegment>(5, 2.0)};
  for (auto& g : gs) {
    auto k = heat_kernel(*g, g->root(), 5);
    auto ref = oracle::heat_kernel(*g, g->root(), 5);
    double total = 0;
    ASSERT_EQ(k.size(), ref.size());
    for (auto& [y, p] : k) {
      EXPECT_NEAR(p, ref.at(y), 1e-14);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(HeatKernel, CanopyLeafStepsToParent) {
  CanopyTree c(2, 1.5);
  auto k = heat_kernel(c, CanopyTree::vertex(0, 5), 1);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k[0].first, CanopyTree::vertex(1, 2));
  EXPECT_EQ(k[0].second, 1.0);
}

TEST(ReturnProbabilities, LatticeRecursionMatchesDp) {
  for (int d : {1, 2, 3}) {
    auto fast = lattice_return_probabilities(d, 24);
    LatticeGraph full(d);
    LocalChain chain(full);
    SparseMass cur, next;
    auto o = chain.intern(full.root());
    cur.add(o, 1.0);
    for (int k = 1; k <= 24; ++k) {
      propagate(chain, cur, next);
      std::swap(cur, next);
      EXPECT_NEAR(fast[k], cur.get(o), 1e-14) << "d=" << d << " k=" << k;
    }
  }
}

TEST(ReturnProbabilities, Z2LocalLimit) {
  auto p = lattice_return_probabilities(2, 2048);
  EXPECT_NEAR(p[2048] * 1024 * std::numbers::pi, 1.0, 0.05);
}

TEST(Green, Z3WatsonConstant) {
  // G(0,0) for SRW on Z^3 is Watson's constant 1.516386...
  LatticeGraph z3(3);
  auto g = green_truncated(z3, z3.root(), 2000);
  ASSERT_FALSE(g.divergent);
  EXPECT_NEAR(*g.extrapolated, 1.516386, 0.01);
  EXPECT_LT(*g.error_bound, 0.01);
  EXPECT_LT(g.partial.back(), *g.extrapolated);
}

TEST(Green, Z1IsDivergent) {
  LatticeGraph z1(1);
  auto g = green_truncated(z1, z1.root(), 2000);
  EXPECT_TRUE(g.divergent);
  EXPECT_FALSE(g.extrapolated.has_value());
}

TEST(Green, BiasedRayMatchesBirthDeath) {
  // From 0 the walk steps to 1, then returns with probability q/p = 1/2,
  // so G(0,0) = 1 / (1 - 1/2) = 2.
  ConductanceSegment ray(0, 2.0);
  auto g = green_truncated(ray, ray.root(), 600);
  ASSERT_FALSE(g.divergent);
  EXPECT_NEAR(*g.extrapolated, 2.0, 1e-6);
}

TEST(Green, IncrementsAreDiagonalKernel) {
  SierpinskiGasket s(6);
  auto g = green_truncated(s, s.root(), 12);
  for (int k = 1; k <= 12; ++k) {
    auto hk = heat_kernel(s, s.root(), k);
    double diag = 0;
    for (auto& [y, p] : hk)
      if (y == s.root()) diag = p;
    EXPECT_NEAR(g.partial[k] - g.partial[k - 1], diag, 1e-15);
  }
}

TEST(Hitting, SegmentBoundIsUniformInLength) {
  std::vector<double> cs;
  for (int l = 6; l <= 12; ++l) {
    ConductanceSegment seg(l, 2.0);
    auto h = hitting_time_distribution(seg, ConductanceSegment::site(l), {ConductanceSegment::site(0)}, 4000);
    EXPECT_NEAR(h.total() + h.survival, 1.0, 1e-12);
    cs.push_back(*std::max_element(h.probs.begin(), h.probs.end()) * std::pow(2.0, l));
  }
  auto [lo, hi] = std::minmax_element(cs.begin(), cs.end());
  EXPECT_LT((*hi - *lo) / *hi, 0.25);
}

TEST(Hitting, StartInTargetCountsFirstReturn) {
  LatticeGraph z1(1);
  auto h = hitting_time_distribution(z1, z1.root(), {z1.root()}, 6);
  EXPECT_EQ(h.probs[0], 0.0);
  EXPECT_DOUBLE_EQ(h.probs[2], 0.5);
  EXPECT_DOUBLE_EQ(h.probs[4], 0.125);
  EXPECT_NEAR(h.total() + h.survival, 1.0, 1e-15);
  EXPECT_THROW(hitting_time_distribution(z1, z1.root(), {}, 6), Error);
}

TEST(Volume, Z2Spheres) {
  LatticeGraph z2(2);
  auto v = volume_growth(z2, z2.root(), 32);
  for (int r = 1; r <= 32; ++r) EXPECT_EQ(v.spheres[r], 4.0 * r);
  EXPECT_FALSE(v.exponential);
  EXPECT_NEAR(v.d_f, 2.0, 0.15);
  auto rv = volume_growth(z2, z2.root(), 4, VolumeMeasure::Reversing);
  EXPECT_EQ(rv.spheres[3], 4.0 * 12);
}

TEST(Volume, GasketFractalDimension) {
  SierpinskiGasket s(10);
  auto v = volume_growth(s, s.root(), 128);
  EXPECT_GE(v.d_f, 1.5);
  EXPECT_LE(v.d_f, 1.7);
  EXPECT_FALSE(v.exponential);
}

TEST(Volume, BinaryTreeIsExponential) {
  GaltonWatsonTree t({0, 0, 1}, 1.0, 1);
  auto v = volume_growth(t, t.root(), 16);
  EXPECT_EQ(v.spheres[5], 32.0);
  EXPECT_TRUE(v.exponential);
  EXPECT_THROW(volume_growth(T2TimesZ2(), T2TimesZ2().root(), 3, VolumeMeasure::Reversing), Error);
}

TEST(Spectral, Lattices) {
  auto f1 = spectral_dimension_fit(lattice_return_probabilities(1, 2048));
  EXPECT_GE(f1.d_hat, 0.95);
  EXPECT_LE(f1.d_hat, 1.05);
  auto f2 = spectral_dimension_fit(lattice_return_probabilities(2, 2048));
  EXPECT_GE(f2.d_hat, 1.9);
  EXPECT_LE(f2.d_hat, 2.1);
  EXPECT_THROW(spectral_dimension_fit(lattice_return_probabilities(1, 64)), Error);
}

TEST(Spectral, ProfileJson) {
  LatticeGraph z1(1);
  auto p = kernel_profile(z1, z1.root(), 1024, 8);
  nlohmann::json j = p;
  EXPECT_EQ(j["K"], 1024);
  EXPECT_TRUE(j["spectral_fit"].is_object());
  EXPECT_TRUE(j["volume_fit"].is_object());
  for (std::size_t k = 1; k < p.green_partial.size(); ++k) EXPECT_GE(p.green_partial[k], p.green_partial[k - 1]);
  auto short_p = kernel_profile(z1, z1.root(), 10);
  EXPECT_FALSE(short_p.spectral_fit.has_value());
}

TEST(CanopyChain, ReversibilityIdentity) {
  CanopyTree c(2, 1.5);
  CanopyLevelChain chain(c, 7);
  EXPECT_LT(chain.reversibility_deviation(200, 6), 1e-10);
  // w = 0: trivially equal
  CanopyLevelChain c3(c, 3);
  EXPECT_EQ(c3.reversibility_deviation(50, 0), 0.0);
  // rows of the glued chain are distributions over depths plus the outside
  auto k = chain.kernel_from(3, 40);
  for (auto& row : k) {
    double s = 0;
    for (double p : row) s += p;
    EXPECT_LE(s, 1.0 + 1e-12);
  }
}

TEST(CanopyChain, MatchesFullTreeReturnProbabilities) {
  CanopyTree c(2, 1.5);
  for (int ell : {1, 3}) {
    CanopyLevelChain chain(c, ell);
    auto glued = chain.kernel_from(0, 16);
    auto full = return_probabilities(c, CanopyTree::vertex(ell, 0), 16);
    for (int t = 0; t <= 16; ++t) EXPECT_NEAR(glued[t][0], full[t], 1e-14) << "l=" << ell << " t=" << t;
    // depth-w mass is spread evenly over the 2^w vertices at that depth
    auto hk = heat_kernel(c, CanopyTree::vertex(ell, 0), 9);
    std::vector<double> by_depth(ell + 1, 0.0);
    for (auto& [y, p] : hk) {
      auto lvl = y[0], idx = y[1];
      if (lvl <= ell && (idx >> (ell - lvl)) == 0) by_depth[ell - lvl] += p;
    }
    for (int w = 0; w <= ell; ++w) EXPECT_NEAR(glued[9][w], by_depth[w], 1e-14);
  }
}

TEST(CanopyChain, WrongFamily) {
  LatticeGraph z1(1);
  try {
    CanopyLevelChain chain(z1, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WrongFamily);
  }
}

TEST(CarneVaropoulos, NoViolationsOnBoundedDegreeGraphs) {
  std::vector<std::shared_ptr<const RootedGraph>> gs{std::make_shared<LatticeGraph>(2),
                                                     std::make_shared<SierpinskiGasket>(7),
                                                     std::make_shared<PipesLattice>(2),
                                                     std::make_shared<PercolationCluster>(2, 0.7, 40, 2)};
  for (auto& g : gs) {
    auto r = carne_varopoulos_monitor(*g, g->root(), 16);
    EXPECT_EQ(r.violations, 0u) << family_name(g->family());
    EXPECT_GT(r.checked, 0u);
  }
}

TEST(WalkCsv, Streams) {
  LatticeGraph z1(1);
  std::ostringstream os;
  write_kernel_csv(os, heat_kernel(z1, z1.root(), 1));
  EXPECT_EQ(os.str().substr(0, 19), "vertex,probability\n");
  std::ostringstream vs;
  write_spheres_csv(vs, volume_growth(z1, z1.root(), 2));
  EXPECT_NE(vs.str().find("2,2,5"), std::string::npos);
}
