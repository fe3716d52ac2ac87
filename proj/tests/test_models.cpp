#include "darwinbounds/correlations.hpp"
#include "darwinbounds/models.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace darwinbounds;

namespace {

struct LongForms {
  long double H_S, H_eps, J, D, delta;
};

/// The closed forms evaluated directly in long double.
LongForms long_forms(long double a, unsigned n) {
  const long double an = std::pow(a, static_cast<long double>(n));
  const long double hx = oracle::h(std::sqrt(an * an - a * a + 1));
  const long double hs = oracle::h(an);
  return {hs, oracle::h(a), hs - hx, oracle::h(a) - oracle::h(std::pow(a, static_cast<long double>(n - 1))) + hx,
          hs < 1e-9L ? 0.0L : hx / hs};
}

std::vector<FragmentSpec> all_subsets(std::size_t n) {
  std::vector<FragmentSpec> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) idx.push_back(i);
    out.emplace_back(std::move(idx));
  }
  return out;
}

}  // namespace

TEST(CMaybeGate, Endpoints) {
  CMatrix cz = CMatrix::Identity(4, 4);
  cz(3, 3) = -1.0;
  EXPECT_LT((cmaybe_gate(1.0) - cz).cwiseAbs().maxCoeff(), 1e-15);

  CMatrix flip = CMatrix::Zero(4, 4);
  flip(0, 0) = 1.0;
  flip(1, 1) = 1.0;
  flip(2, 3) = 1.0;
  flip(3, 2) = 1.0;
  EXPECT_LT((cmaybe_gate(0.0) - flip).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CMaybeGate, UnitaryAndBlockDiagonal) {
  for (double a : {0.0, 0.1, 0.6, 0.99, 1.0}) {
    const CMatrix g = cmaybe_gate(a);
    EXPECT_LT((g.adjoint() * g - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12) << a;
    EXPECT_LT((g.topLeftCorner(2, 2) - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(g.topRightCorner(2, 2).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.bottomLeftCorner(2, 2).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_THROW(cmaybe_gate(-0.1), Error);
  EXPECT_THROW(cmaybe_gate(1.5), Error);
  EXPECT_THROW(cmaybe_gate(std::nan("")), Error);
}

TEST(CMaybeUniverse, ZeroCouplingGivesGhz) {
  const auto u = cmaybe_universe({0.0, 5}, true);
  const auto g = to_dense(ghz(6));
  EXPECT_NEAR(std::abs(u.dense->amplitudes().dot(g.amplitudes())), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(to_dense(u.branching).amplitudes().dot(g.amplitudes())), 1.0, 1e-12);
}

TEST(CMaybeUniverse, FullCouplingGivesProduct) {
  const auto u = cmaybe_universe({1.0, 4}, true);
  CVector expect = CVector::Zero(32);
  expect[0] = std::numbers::sqrt2 / 2;
  expect[16] = std::numbers::sqrt2 / 2;
  EXPECT_LT((u.dense->amplitudes() - expect).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t i = 0; i <= 4; ++i) EXPECT_NEAR(entropy(u.branching, FragmentSpec{i}), 0.0, 1e-12);
}

TEST(CMaybeUniverse, DenseMatchesBranchingOnAllFragments) {
  const CMaybeParams p{0.5, 3};
  const auto u = cmaybe_universe(p, true);
  EXPECT_LT((u.dense->amplitudes() - to_dense(u.branching).amplitudes()).cwiseAbs().maxCoeff(), 1e-12);
  for (const auto& f : all_subsets(4)) {
    const std::vector<std::size_t> keep(f.begin(), f.end());
    const double ref = oracle::entropy_of(u.dense->amplitudes(), u.dense->dims(), keep);
    EXPECT_NEAR(entropy(u.branching, f), ref, 1e-10);
    EXPECT_NEAR(entropy(*u.dense, f), ref, 1e-10);
  }
}

TEST(CMaybeUniverse, DenseAndBranchingAgreeUpToTenEnvironmentQubits) {
  for (std::size_t n = 1; n <= 10; ++n) {
    for (double a : {0.15, 0.5, 0.85}) {
      const auto u = cmaybe_universe({a, n}, true);
      for (const auto& f : {FragmentSpec{0}, FragmentSpec{1}, FragmentSpec::range(1, n + 1), FragmentSpec::range(0, (n + 2) / 2),
                            FragmentSpec{0, n}}) {
        EXPECT_NEAR(entropy(u.branching, f), entropy(*u.dense, f), 1e-10) << a << " " << n;
      }
    }
  }
}

TEST(CMaybeUniverse, Errors) {
  EXPECT_THROW(cmaybe_universe({0.5, 14}, true), Error);
  EXPECT_NO_THROW(cmaybe_universe({0.5, 14}, false));
  EXPECT_THROW(cmaybe_universe({1.2, 3}), Error);
  EXPECT_THROW(cmaybe_universe({0.5, 0}), Error);
}

TEST(ClosedForms, Endpoints) {
  const auto z = closed_forms({0.0, 4});
  EXPECT_NEAR(z.H_S, 1.0, 1e-15);
  EXPECT_NEAR(z.H_eps, 1.0, 1e-15);
  EXPECT_NEAR(z.J_bar, 1.0, 1e-15);
  EXPECT_NEAR(z.D_bar, 0.0, 1e-15);
  EXPECT_NEAR(z.delta, 0.0, 1e-15);
  EXPECT_FALSE(z.degenerate);

  const auto one = closed_forms({1.0, 4});
  EXPECT_EQ(one.H_S, 0.0);
  EXPECT_EQ(one.H_eps, 0.0);
  EXPECT_NEAR(one.J_bar, 0.0, 1e-15);
  EXPECT_NEAR(one.D_bar, 0.0, 1e-15);
  EXPECT_EQ(one.delta, 0.0);
  EXPECT_TRUE(one.degenerate);
}

TEST(ClosedForms, HighPrecisionEvaluation) {
  for (double a : {0.5, 0.01, 0.3, 0.77, 0.999}) {
    for (unsigned n : {1U, 2U, 4U, 9U}) {
      const auto v = closed_forms({a, n});
      const auto r = long_forms(a, n);
      EXPECT_NEAR(v.H_S, static_cast<double>(r.H_S), 1e-12) << a << " " << n;
      EXPECT_NEAR(v.H_eps, static_cast<double>(r.H_eps), 1e-12);
      EXPECT_NEAR(v.J_bar, static_cast<double>(r.J), 1e-12);
      EXPECT_NEAR(v.D_bar, static_cast<double>(r.D), 1e-12);
      if (r.H_S > 1e-6L) EXPECT_NEAR(v.delta, static_cast<double>(r.delta), 1e-9);
    }
  }
  // a = 0.5, N = 4 worked through by hand: a^N = 1/16, sqrt(1/256 - 1/4 + 1).
  const auto v = closed_forms({0.5, 4});
  const long double x = std::sqrt(1.0L / 256 - 0.25L + 1);
  EXPECT_NEAR(v.J_bar, static_cast<double>(oracle::h_bin((1 + 1.0L / 16) / 2) - oracle::h_bin((1 + x) / 2)), 1e-12);
}

TEST(ClosedForms, AgreeWithPipelineOnGrid) {
  const auto grid = linear_grid(0.0, 1.0, 101);
  ASSERT_EQ(grid.size(), 101U);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 1.0);
  for (std::size_t n = 2; n <= 10; ++n) {
    for (double a : grid) {
      const CMaybeParams p{a, n};
      const auto cf = closed_forms(p);
      const auto u = cmaybe_branching(p);
      EXPECT_NEAR(h_s(u), cf.H_S, 1e-9) << a << " " << n;
      EXPECT_NEAR(entropy(u, FragmentSpec{1}), cf.H_eps, 1e-9) << a << " " << n;
      const auto r = classical_correlations(u, FragmentSpec{1});
      EXPECT_NEAR(r.classical_J, cf.J_bar, 1e-6) << a << " " << n;
      EXPECT_NEAR(r.discord_D, cf.D_bar, 1e-6) << a << " " << n;
      EXPECT_NEAR(deficit_report(u).average_delta, cf.delta, 1e-6) << a << " " << n;
    }
  }
}

TEST(ClosedForms, DiscordSaturatesForTwoEnvironmentQubits) {
  for (double a : linear_grid(0.0, 1.0, 101)) {
    const auto cf = closed_forms({a, 2});
    EXPECT_NEAR(cf.D_bar, cf.delta * cf.H_S, 1e-6) << a;
  }
}

TEST(ClosedForms, DiscordPlusClassicalBoundedByEntropy) {
  // From N = 2 on; N = 1 is the pure bipartite case with D = J = H(S).
  for (std::size_t n = 2; n <= 12; ++n)
    for (double a : linear_grid(0.0, 1.0, 201)) {
      const auto cf = closed_forms({a, n});
      EXPECT_LE(cf.D_bar + cf.J_bar, cf.H_S + 1e-9) << a << " " << n;
      for (double x : {cf.H_S, cf.H_eps, cf.J_bar, cf.D_bar, cf.delta}) {
        EXPECT_GE(x, -1e-12);
        EXPECT_LE(x, 1.0 + 1e-12);
      }
    }
}

TEST(ClosedForms, LinearGridErrors) {
  EXPECT_THROW(linear_grid(0.0, 1.0, 0), Error);
  EXPECT_EQ(linear_grid(0.3, 1.0, 1).size(), 1U);
}

TEST(Ghz, EntropiesAndDeficit) {
  const auto g = ghz(5);
  for (const auto& f : all_subsets(5)) {
    const double expect = (f.empty() || f.size() == 5) ? 0.0 : 1.0;
    EXPECT_NEAR(entropy(g, f), expect, 1e-12);
  }
  EXPECT_NEAR(deficit_report(g).average_delta, 0.0, 1e-12);
  EXPECT_NEAR(classical_correlations(g, FragmentSpec{2}).discord_D, 0.0, 1e-10);
  EXPECT_THROW(ghz(1), Error);
}

TEST(HaarRandom, DeterministicAndNormalized) {
  const auto a = haar_random_pure({2, 3, 2}, 77);
  const auto b = haar_random_pure({2, 3, 2}, 77);
  const auto c = haar_random_pure({2, 3, 2}, 78);
  EXPECT_EQ(a.amplitudes(), b.amplitudes());
  EXPECT_GT((a.amplitudes() - c.amplitudes()).norm(), 1e-3);
  EXPECT_NEAR(a.amplitudes().squaredNorm(), 1.0, 1e-12);
  EXPECT_THROW(haar_random_pure({2, 2}, 1, 3), Error);
  EXPECT_THROW(haar_random_pure({}, 1), Error);
}

TEST(RandomBranching, DeterministicNormalizedAndDenseConsistent) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (auto w : {BranchWeights::equal, BranchWeights::random}) {
      const auto a = random_branching(4, seed, w);
      const auto b = random_branching(4, seed, w);
      const auto da = to_dense(a);
      EXPECT_EQ(da.amplitudes(), to_dense(b).amplitudes());
      EXPECT_NEAR(da.amplitudes().squaredNorm(), 1.0, 1e-12);
      for (const auto& f : all_subsets(5)) {
        const std::vector<std::size_t> keep(f.begin(), f.end());
        EXPECT_NEAR(entropy(a, f), oracle::entropy_of(da.amplitudes(), da.dims(), keep), 1e-10) << seed;
      }
    }
  }
  EXPECT_THROW(random_branching(1, 3), Error);
}
