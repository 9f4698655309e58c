#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmpsnn/memory_kernel.hpp"
#include "oracles.hpp"

using namespace dmpsnn;

namespace {

StateSpaceConfig cfg(std::size_t d, double theta, double dt, bool scaling) {
  StateSpaceConfig c;
  c.d = d;
  c.theta = theta;
  c.dt = dt;
  c.theta_scaling = scaling;
  return c;
}

}  // namespace

TEST(BuildPade, SmallOrdersMatchClosedForm) {
  auto s1 = build_pade(1);
  EXPECT_EQ(s1.A(0, 0), -1.0);
  EXPECT_EQ(s1.B(0), 1.0);

  auto s2 = build_pade(2);
  Eigen::MatrixXd A2(2, 2);
  A2 << -1, -1, 3, -3;
  EXPECT_EQ(s2.A, A2);
  EXPECT_EQ(s2.B, Eigen::Vector2d(1, -3));

  auto s3 = build_pade(3);
  Eigen::MatrixXd A3(3, 3);
  A3 << -1, -1, -1, 3, -3, -3, -5, 5, -5;
  EXPECT_EQ(s3.A, A3);
  EXPECT_EQ(s3.B, Eigen::Vector3d(1, -3, 5));
}

TEST(BuildPade, ZeroDimensionRejected) { EXPECT_THROW(build_pade(0), DimensionError); }

TEST(BuildPade, IntegerOddEntriesAlternatingInput) {
  for (std::size_t d : {1, 4, 17, 40}) {
    auto sys = build_pade(d);
    for (Eigen::Index i = 0; i < sys.A.rows(); ++i) {
      for (Eigen::Index j = 0; j < sys.A.cols(); ++j) {
        const double a = sys.A(i, j);
        EXPECT_EQ(a, std::round(a));
        EXPECT_EQ(static_cast<long>(std::abs(a)) % 2, 1);
      }
      if (i > 0) {
        EXPECT_LT(sys.B(i) * sys.B(i - 1), 0.0);
      }
    }
  }
}

TEST(BuildPade, ContinuousSystemIsStable) {
  for (std::size_t d : {1, 2, 3, 10, 40}) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(build_pade(d).A, false);
    EXPECT_LT(es.eigenvalues().real().maxCoeff(), 0.0) << "d=" << d;
  }
}

TEST(DiscretizeZoh, ScalarHalfLife) {
  auto mem = discretize_zoh(build_pade(1), cfg(1, 1.0, std::log(2.0), false));
  EXPECT_NEAR(mem.A_bar(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(mem.B_bar(0), 0.5, 1e-15);
}

TEST(DiscretizeZoh, ZeroStepIsIdentity) {
  for (std::size_t d : {1, 3, 10}) {
    auto mem = discretize_zoh(build_pade(d), cfg(d, 40.0, 0.0, true));
    EXPECT_TRUE(mem.A_bar.isIdentity(0.0));
    EXPECT_TRUE(mem.B_bar.isZero(0.0));
  }
}

TEST(DiscretizeZoh, ScaledWindowSpectralRadius) {
  auto mem = make_memory(cfg(10, 40.0, 1.0, true));
  // independent route: eigenvalues of the series-oracle exponential
  Eigen::MatrixXd oracleA = oracle::expm_series(build_pade(10).A / 40.0);
  Eigen::EigenSolver<Eigen::MatrixXd> es(oracleA, false);
  const double rho_oracle = es.eigenvalues().cwiseAbs().maxCoeff();
  const double rho = spectral_radius(mem.A_bar);
  // frozen from the oracle (also scipy.linalg.expm): 0.87753684652342
  EXPECT_NEAR(rho_oracle, 0.87753684652342, 1e-12);
  EXPECT_GT(rho, 0.85);
  EXPECT_LT(rho, 1.0);
  EXPECT_NEAR(rho, rho_oracle, 1e-12);
}

TEST(DiscretizeZoh, MatchesSeriesOracle) {
  const std::pair<std::size_t, double> cases[] = {{1, 10.0}, {2, 10.0}, {3, 10.0}, {10, 40.0}, {40, 300.0}};
  for (auto [d, theta] : cases) {
    auto sys = build_pade(d);
    auto mem = discretize_zoh(sys, cfg(d, theta, 1.0, true));
    const Eigen::MatrixXd As = sys.A / theta;
    const Eigen::MatrixXd ref = oracle::expm_series(As);
    const double errA = oracle::inf_norm(Eigen::MatrixXd(mem.A_bar) - ref) / oracle::inf_norm(ref);
    EXPECT_LE(errA, 1e-12) << "d=" << d;
    const Eigen::VectorXd refB = oracle::zoh_input_closed_form(As, sys.B / theta);
    const double errB = (mem.B_bar - refB).cwiseAbs().maxCoeff() / refB.cwiseAbs().maxCoeff();
    EXPECT_LE(errB, 1e-10) << "d=" << d;
  }
}

TEST(DiscretizeZoh, OverflowReported) {
  EXPECT_THROW(discretize_zoh(build_pade(4), cfg(4, 1.0, 1e308, false)), NumericError);
}

TEST(MemoryStep, ImpulseResponse) {
  auto mem = make_memory(cfg(6, 20.0, 1.0, true));
  auto zero = MemoryState::zeros(6);
  EXPECT_TRUE(memory_step(zero, 0.0, mem).m.isZero(0.0));
  auto s1 = memory_step(zero, 1.0, mem);
  EXPECT_EQ(s1.m, mem.B_bar);
  auto s2 = memory_step(s1, 0.0, mem);
  EXPECT_LT((s2.m - mem.A_bar * mem.B_bar).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MemoryStep, Linearity) {
  auto mem = make_memory(cfg(10, 40.0, 1.0, true));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    MemoryState m1{Vec(10), 0}, m2{Vec(10), 0};
    for (int i = 0; i < 10; ++i) {
      m1.m[i] = n01(rng);
      m2.m[i] = n01(rng);
    }
    const double x1 = n01(rng), x2 = n01(rng), a = n01(rng), b = n01(rng);
    MemoryState mix{a * m1.m + b * m2.m, 0};
    const Vec lhs = memory_step(mix, a * x1 + b * x2, mem).m;
    const Vec rhs = a * memory_step(m1, x1, mem).m + b * memory_step(m2, x2, mem).m;
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MemoryStep, DimensionMismatch) {
  auto mem = make_memory(cfg(3, 10.0, 1.0, true));
  EXPECT_THROW(memory_step(MemoryState::zeros(4), 1.0, mem), DimensionError);
}

TEST(FoldReadout, IdentityAndZero) {
  auto mem = make_memory(cfg(5, 10.0, 1.0, true));
  auto f = fold_readout(Mat::Identity(5, 5), mem);
  EXPECT_EQ(f.P, mem.A_bar);
  EXPECT_EQ(f.v, mem.B_bar);
  auto z = fold_readout(Mat::Zero(7, 5), mem);
  EXPECT_TRUE(z.P.isZero(0.0));
  EXPECT_TRUE(z.v.isZero(0.0));
  EXPECT_THROW(fold_readout(Mat::Zero(7, 4), mem), DimensionError);
}

TEST(FoldReadout, TrajectoryIdentity) {
  auto mem = make_memory(cfg(10, 40.0, 1.0, true));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Mat W(32, 10);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = n01(rng);
  auto f = fold_readout(W, mem);
  Vec m = Vec::Zero(10);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double x = n01(rng);
    const Vec folded = f.P * m + f.v * x;
    m = memory_step(MemoryState{m, 0}, x, mem).m;
    worst = std::max(worst, (W * m - folded).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Dilation, IndexExamples) {
  EXPECT_EQ(dilated_index(7, 3), 6);
  EXPECT_EQ(dilated_index(6, 3), 6);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(dilated_index(k, 1), k);
  EXPECT_THROW(dilated_index(4, 0), ConfigError);
}

TEST(Dilation, UpdateCountIsCeil) {
  for (std::int64_t T : {1, 7, 100, 101}) {
    for (std::int64_t ds : {1, 2, 3, 5, 10, 200}) {
      std::int64_t n = 0;
      for (std::int64_t k = 0; k < T; ++k) n += is_memory_update_step(k, ds) ? 1 : 0;
      EXPECT_EQ(n, memory_update_count(T, ds));
      EXPECT_EQ(n, (T + ds - 1) / ds);
    }
  }
}
