// Copyright 2026 The sgflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace sgflow {
namespace {

using testing::brute_force;
using testing::free_instance;
using testing::pair_instance;
using testing::rel_err;

constexpr double kLn2 = std::numbers::ln2;

double offdiag_variance(const DisorderRealization& d, double* std_error) {
  const int n = d.n_spins;
  double sum = 0, sum2 = 0;
  long m = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      sum += d.couplings(i, j);
      sum2 += d.couplings(i, j) * d.couplings(i, j);
      ++m;
    }
  const double var = sum2 / m - (sum / m) * (sum / m);
  *std_error = var * std::sqrt(2.0 / (m - 1));
  return var;
}

// ---- disorder ------------------------------------------------------------

TEST(Disorder, SymmetricZeroDiagonalWithExpectedVariance) {
  const auto d = draw_sk_disorder(256, 1.0, 7);
  EXPECT_NO_THROW(d.validate());
  EXPECT_TRUE(d.fields.isZero(0.0));
  double se = 0;
  const double var = offdiag_variance(d, &se);
  EXPECT_NEAR(var, 1.0 / 256, 5 * se);
}

TEST(Disorder, TwoSpinsHaveOneFreeCoupling) {
  const auto d = draw_sk_disorder(2, 1.0, 0);
  EXPECT_EQ(d.couplings(0, 1), d.couplings(1, 0));
  EXPECT_EQ(d.couplings(0, 0), 0.0);
  EXPECT_EQ(d.couplings(1, 1), 0.0);
  EXPECT_NE(d.couplings(0, 1), 0.0);
}

TEST(Disorder, VarianceScalesWithCouplingScale) {
  const auto d = draw_sk_disorder(64, 2.0, 1);
  double se = 0;
  const double var = offdiag_variance(d, &se);
  EXPECT_NEAR(var, 4.0 / 64, 5 * se);
}

TEST(Disorder, DeterministicGivenSeed) {
  EXPECT_EQ(draw_sk_disorder(16, 1.0, 3).couplings, draw_sk_disorder(16, 1.0, 3).couplings);
  EXPECT_NE(draw_sk_disorder(16, 1.0, 3).couplings, draw_sk_disorder(16, 1.0, 4).couplings);
}

TEST(Disorder, RejectsTooFewSpins) {
  EXPECT_THROW(draw_sk_disorder(1, 1.0, 0), InvalidArgument);
  EXPECT_THROW(draw_sk_disorder(4, 0.0, 0), InvalidArgument);
}

// ---- discrete energy -----------------------------------------------------

TEST(DiscreteEnergy, TwoSpinValues) {
  const auto d = pair_instance(1.0);
  EXPECT_DOUBLE_EQ(discrete_energy(Vector::Constant(2, 1.0), d), -1.0);
  Vector s(2);
  s << 1, -1;
  EXPECT_DOUBLE_EQ(discrete_energy(s, d), 1.0);
}

TEST(DiscreteEnergy, MatchesDoubleLoop) {
  auto d = draw_sk_disorder(8, 1.0, 11);
  Rng rng(5);
  std::normal_distribution<double> g(0, 0.5);
  for (int i = 0; i < 8; ++i) d.fields[i] = g(rng);
  for (std::uint64_t k = 0; k < 256; ++k) {
    const auto s = testing::spins_of_index(k, 8);
    EXPECT_NEAR(discrete_energy(s, d), testing::loop_energy(s, d), 1e-12);
  }
}

TEST(DiscreteEnergy, SpinFlipSymmetryAtZeroField) {
  const auto d = draw_sk_disorder(12, 1.0, 2);
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    SpinConfig s(12);
    for (int i = 0; i < 12; ++i) s[i] = uniform01(rng) < 0.5 ? 1 : -1;
    EXPECT_EQ(discrete_energy(s, d), discrete_energy(-s, d));
  }
}

TEST(DiscreteEnergy, RejectsDimensionMismatch) {
  EXPECT_THROW(discrete_energy(Vector::Ones(3), pair_instance(1.0)), InvalidArgument);
}

// ---- shifted coupling ----------------------------------------------------

TEST(ShiftedCoupling, ShiftRule) {
  EXPECT_NEAR(coupling_shift(-1.2, 0.01), 1.21, 1e-15);
  EXPECT_EQ(coupling_shift(0.5, 0.01), 0.0);
  const auto sc = shift_coupling(pair_instance(1.2), 0.01);  // eigenvalues +-1.2
  EXPECT_NEAR(sc.lambda_min(), -1.2, 1e-12);
  EXPECT_NEAR(sc.shift(), 1.21, 1e-12);
}

TEST(ShiftedCoupling, SmallestEigenvalueIsEpsilon) {
  const auto d = draw_sk_disorder(64, 1.0, 1);
  const auto sc = shift_coupling(d, 0.01);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sc.matrix());
  EXPECT_NEAR(eig.eigenvalues().minCoeff(), 0.01, 1e-6);
  EXPECT_NEAR(sc.shift(), 0.01 - sc.lambda_min(), 1e-12);
  Matrix expect = d.couplings;
  expect.diagonal().array() += sc.shift();
  EXPECT_EQ(sc.matrix(), expect);
  EXPECT_NEAR(sc.log_det(), eig.eigenvalues().array().log().sum(), 1e-8);
}

TEST(ShiftedCoupling, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(shift_coupling(pair_instance(1.0), 0.0), InvalidArgument);
}

// ---- Hamiltonian density ------------------------------------------------

TEST(HamiltonianDensity, OriginValue) {
  const auto sc = shift_coupling(draw_sk_disorder(10, 1.0, 4), 0.01);
  for (double beta : {0.2, 1.0, 5.0})
    EXPECT_NEAR(hamiltonian_density(Vector::Zero(10), sc, beta), -10 * kLn2 / beta, 1e-12);
}

TEST(HamiltonianDensity, UnitKernelScalarValue) {
  // Jt = I (no couplings, epsilon 1); the first coordinate contributes
  // 1/2 x^2 - ln 2cosh(x), the second (x = 0) contributes -ln 2.
  const auto sc = shift_coupling(free_instance(2), 1.0);
  Vector x(2);
  x << 2.0, 0.0;
  const double scalar = 2.0 - std::log(std::exp(2.0) + std::exp(-2.0));
  EXPECT_NEAR(hamiltonian_density(x, sc, 1.0), scalar - kLn2, 1e-12);
}

TEST(HamiltonianDensity, LargeArgumentStaysFinite) {
  const auto sc = shift_coupling(free_instance(3), 1.0);
  const Vector x = Vector::Constant(3, 800.0);
  const double h = hamiltonian_density(x, sc, 1.0);
  EXPECT_TRUE(std::isfinite(h));
  // 1/2 x^2 - |x| per coordinate once cosh saturates
  EXPECT_NEAR(h, 3 * (0.5 * 800 * 800 - 800), 1e-6);
  EXPECT_TRUE(grad_hamiltonian_density(x, sc, 1.0).allFinite());
}

TEST(HamiltonianDensity, EvenUnderReflectionAtZeroField) {
  const auto sc = shift_coupling(draw_sk_disorder(9, 1.0, 8), 0.01);
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const Vector x = standard_normal(9, rng);
    EXPECT_NEAR(hamiltonian_density(x, sc, 0.7), hamiltonian_density(-x, sc, 0.7), 1e-12);
  }
}

TEST(HamiltonianDensity, BatchMatchesSingle) {
  const auto sc = shift_coupling(draw_sk_disorder(6, 1.0, 8), 0.01);
  Rng rng(3);
  const Matrix xs = standard_normal(6, 7, rng);
  const Vector hb = hamiltonian_density_batch(xs, sc, 1.3);
  const Matrix gb = grad_hamiltonian_density_batch(xs, sc, 1.3);
  for (int c = 0; c < 7; ++c) {
    EXPECT_NEAR(hb[c], hamiltonian_density(xs.col(c), sc, 1.3), 1e-12);
    EXPECT_LT((gb.col(c) - grad_hamiltonian_density(xs.col(c), sc, 1.3)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HamiltonianDensity, RejectsNonFiniteInput) {
  const auto sc = shift_coupling(free_instance(2), 1.0);
  Vector x(2);
  x << 1.0, std::nan("");
  EXPECT_THROW(hamiltonian_density(x, sc, 1.0), InvalidArgument);
  EXPECT_THROW(hamiltonian_density(Vector::Zero(2), sc, 0.0), InvalidArgument);
}

TEST(Gradient, ZeroAtOrigin) {
  const auto sc = shift_coupling(draw_sk_disorder(8, 1.0, 5), 0.01);
  EXPECT_TRUE(grad_hamiltonian_density(Vector::Zero(8), sc, 2.0).isZero(0.0));
}

TEST(Gradient, MatchesCentralDifferences) {
  const auto sc = shift_coupling(draw_sk_disorder(8, 1.0, 5), 0.01);
  Rng rng(9);
  const double h = 1e-5;
  for (int rep = 0; rep < 100; ++rep) {
    const double beta = 0.3 + 2.0 * uniform01(rng);
    const Vector x = standard_normal(8, rng);
    const Vector g = grad_hamiltonian_density(x, sc, beta);
    Vector fd(8);
    for (int i = 0; i < 8; ++i) {
      Vector xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd[i] = (hamiltonian_density(xp, sc, beta) - hamiltonian_density(xm, sc, beta)) / (2 * h);
    }
    EXPECT_LT((g - fd).norm() / std::max(g.norm(), 1e-8), 1e-5) << "rep " << rep;
  }
}

TEST(Gradient, SmallBetaLinearization) {
  const auto sc = shift_coupling(draw_sk_disorder(8, 1.0, 5), 0.01);
  Rng rng(10);
  const double beta = 1e-6;
  const Vector x = standard_normal(8, rng);
  const Vector expect = sc.matrix() * x - beta * sc.matrix() * sc.matrix() * x;
  EXPECT_LT((grad_hamiltonian_density(x, sc, beta) - expect).cwiseAbs().maxCoeff(), 1e-6);
}

// ---- Hessian -------------------------------------------------------------

TEST(Hessian, SpectralMappingAtOrigin) {
  const auto sc = shift_coupling(draw_sk_disorder(10, 1.0, 6), 0.01);
  const double beta = 0.8;
  const Matrix hess = hessian_hamiltonian_density(Vector::Zero(10), sc, beta);
  EXPECT_EQ(hess, hess.transpose());
  const Matrix expect = sc.matrix() - beta * sc.matrix() * sc.matrix();
  EXPECT_LT((hess - expect).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> ej(sc.matrix()), eh(hess);
  Vector mapped = (ej.eigenvalues().array() * (1.0 - beta * ej.eigenvalues().array())).matrix();
  std::sort(mapped.data(), mapped.data() + mapped.size());
  EXPECT_LT((eh.eigenvalues() - mapped).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Hessian, LowTemperatureOriginIsNotConvex) {
  const auto sc = shift_coupling(draw_sk_disorder(32, 1.0, 6), 0.01);
  const double t = 0.2;
  ASSERT_GT(sc.matrix().selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff(), t);
  Eigen::SelfAdjointEigenSolver<Matrix> eh(hessian_hamiltonian_density(Vector::Zero(32), sc, 1.0 / t));
  EXPECT_LT(eh.eigenvalues().minCoeff(), 0.0);
}

TEST(Hessian, ConvexAboveFourTimesScale) {
  const auto sc = shift_coupling(draw_sk_disorder(32, 1.0, 6), 0.01);
  Rng rng(12);
  for (int rep = 0; rep < 1000; ++rep) {
    const Vector x = standard_normal(32, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> eh(hessian_hamiltonian_density(x, sc, 1.0 / 5.0), Eigen::EigenvaluesOnly);
    ASSERT_GE(eh.eigenvalues().minCoeff(), -1e-12) << "point " << rep;
  }
}

TEST(Hessian, MatchesDifferencesOfGradient) {
  const auto sc = shift_coupling(draw_sk_disorder(8, 1.0, 5), 0.01);
  Rng rng(13);
  const double h = 1e-5;
  for (int rep = 0; rep < 100; ++rep) {
    const double beta = 0.3 + 2.0 * uniform01(rng);
    const Vector x = standard_normal(8, rng);
    const Matrix hess = hessian_hamiltonian_density(x, sc, beta);
    Matrix fd(8, 8);
    for (int i = 0; i < 8; ++i) {
      Vector xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd.col(i) = (grad_hamiltonian_density(xp, sc, beta) - grad_hamiltonian_density(xm, sc, beta)) / (2 * h);
    }
    EXPECT_LT((hess - fd).norm() / hess.norm(), 1e-4) << "rep " << rep;
  }
}

// ---- conditionals --------------------------------------------------------

TEST(SampleXGivenS, UnitKernelMeanIsSpin) {
  const auto sc = shift_coupling(free_instance(3), 1.0);
  Vector s(3);
  s << 1, -1, 1;
  Rng rng(4);
  const int draws = 100000;
  Vector sum = Vector::Zero(3);
  for (int k = 0; k < draws; ++k) sum += sample_x_given_s(s, sc, 1.0, rng);
  const double se = 1.0 / std::sqrt(draws);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sum[i] / draws, s[i], 5 * se);
}

TEST(SampleXGivenS, CovarianceIsInverseKernel) {
  const auto sc = shift_coupling(draw_sk_disorder(4, 1.0, 21), 0.01);
  const double beta = 1.5;
  const Matrix sigma = (beta * sc.matrix()).inverse();
  const SpinConfig s = Vector::Ones(4);
  Rng rng(5);
  const int draws = 1000000;
  Matrix acc = Matrix::Zero(4, 4);
  for (int k = 0; k < draws; ++k) {
    const Vector dx = sample_x_given_s(s, sc, beta, rng) - s;
    acc.noalias() += dx * dx.transpose();
  }
  acc /= draws;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / draws);
      EXPECT_NEAR(acc(i, j), sigma(i, j), 5 * se) << i << "," << j;
    }
}

TEST(SampleXGivenS, DeterministicGivenSeed) {
  const auto sc = shift_coupling(draw_sk_disorder(6, 1.0, 2), 0.01);
  const SpinConfig s = Vector::Ones(6);
  Rng a(77), b(77);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(sample_x_given_s(s, sc, 2.0, a), sample_x_given_s(s, sc, 2.0, b));
}

TEST(SampleSGivenX, ZeroFieldIsFairCoin) {
  EXPECT_EQ(logistic(0.0), 0.5);
  const auto sc = shift_coupling(free_instance(4), 1.0);
  Rng rng(6);
  long plus = 0;
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) plus += (sample_s_given_x(Vector::Zero(4), sc, 1.0, rng).array() > 0).count();
  const double n = 4.0 * draws;
  EXPECT_NEAR(plus / n, 0.5, 5 * 0.5 / std::sqrt(n));
}

TEST(SampleSGivenX, SaturatesAtLargeField) {
  const auto sc = shift_coupling(free_instance(2), 1.0);
  Vector x(2);
  x << 20.0, -20.0;
  Rng rng(7);
  int plus0 = 0, plus1 = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto s = sample_s_given_x(x, sc, 1.0, rng);
    plus0 += s[0] > 0;
    plus1 += s[1] > 0;
  }
  EXPECT_GT(plus0 / 10000.0, 0.999);
  EXPECT_LT(plus1 / 10000.0, 0.001);
  EXPECT_EQ(logistic(2000.0), 1.0);
  EXPECT_EQ(logistic(-2000.0), 0.0);
}

TEST(SampleSGivenX, PerSiteProbabilities) {
  const auto sc = shift_coupling(draw_sk_disorder(8, 1.0, 3), 0.01);
  Rng rng(8);
  const Vector x = standard_normal(8, rng);
  const double beta = 0.9;
  const Vector a = sc.matrix() * x;
  const int draws = 100000;
  Vector plus = Vector::Zero(8);
  for (int k = 0; k < draws; ++k) plus += (sample_s_given_x(x, sc, beta, rng).array() > 0).cast<double>().matrix();
  for (int i = 0; i < 8; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-2.0 * beta * a[i]));
    EXPECT_NEAR(plus[i] / draws, p, 5 * std::sqrt(p * (1 - p) / draws) + 1e-12) << "site " << i;
  }
}

TEST(Conditionals, AlternatingChainPreservesBoltzmann) {
  auto d = draw_sk_disorder(8, 1.0, 31);
  Rng frng(1);
  std::normal_distribution<double> g(0, 0.4);
  for (int i = 0; i < 8; ++i) d.fields[i] = g(frng);
  const auto sc = shift_coupling(d, 0.01);
  const double beta = 0.7;
  const auto exact = brute_force(d, beta);
  Rng rng(99);
  SpinConfig s = Vector::Ones(8);
  Vector acc = Vector::Zero(8);
  const int steps = 400000;
  for (int k = 0; k < 1000; ++k) s = sample_s_given_x(sample_x_given_s(s, sc, beta, rng), sc, beta, rng);
  for (int k = 0; k < steps; ++k) {
    s = sample_s_given_x(sample_x_given_s(s, sc, beta, rng), sc, beta, rng);
    acc += s;
  }
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(acc[i] / steps, exact.marginals[i], 0.02) << "site " << i;
}

// ---- free energies and partition functions -------------------------------

TEST(ReplicaSymmetric, Values) {
  EXPECT_NEAR(replica_symmetric_free_energy(4, 1.0, 1.0), -1.0 - 4 * kLn2, 1e-12);
  EXPECT_NEAR(replica_symmetric_free_energy(4, 1.0, 1.0), -3.7726, 1e-4);
  EXPECT_NEAR(replica_symmetric_free_energy(10, 0.5, 1.0), -1.25 - 20 * kLn2, 1e-12);
  EXPECT_NEAR(replica_symmetric_free_energy(10, 0.5, 1.0), -15.113, 1e-3);
  EXPECT_NEAR(1e-6 * replica_symmetric_free_energy(7, 1e-6, 1.0), -7 * kLn2, 1e-9);
}

TEST(Exact, TwoSpinHandEnumeration) {
  const auto ex = enumerate_exact(pair_instance(0.5), 1.0);
  EXPECT_NEAR(std::exp(ex.log_z_s), 2 * std::exp(0.5) + 2 * std::exp(-0.5), 1e-12);
  EXPECT_NEAR(std::exp(ex.log_z_s), 4.5108, 1e-3);
  EXPECT_EQ(ex.marginals[0], 0.0);
}

TEST(Exact, ZeroFieldMarginalsVanishExactly) {
  const auto ex = enumerate_exact(draw_sk_disorder(12, 1.0, 9), 3.0);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(ex.marginals[i], 0.0);
}

TEST(Exact, InfiniteTemperature) {
  EXPECT_NEAR(enumerate_exact(draw_sk_disorder(9, 1.0, 9), 0.0).log_z_s, 9 * kLn2, 1e-12);
}

TEST(Exact, MatchesBinaryEnumerationWithField) {
  auto d = draw_sk_disorder(10, 1.0, 17);
  Rng rng(3);
  std::normal_distribution<double> g(0, 0.5);
  for (int i = 0; i < 10; ++i) d.fields[i] = g(rng);
  for (double beta : {0.1, 1.0, 5.0}) {
    const auto ex = enumerate_exact(d, beta);
    const auto bf = brute_force(d, beta);
    EXPECT_NEAR(ex.log_z_s, bf.log_z, 1e-10);
    EXPECT_NEAR(ex.mean_energy, bf.mean_energy, 1e-10);
    EXPECT_LT((ex.marginals - bf.marginals).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(ex.marginals.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(Exact, RefusesLargeSystems) { EXPECT_THROW(enumerate_exact(draw_sk_disorder(21, 1.0, 0), 1.0), InvalidArgument); }

TEST(PartitionRelation, TwoSpinQuadrature) {
  const auto sc = shift_coupling(pair_instance(0.5), 0.01);
  const double beta = 1.0;
  const double log_z_s = enumerate_exact(sc.base(), beta).log_z_s;
  EXPECT_NEAR(log_partition_x_from_s(log_z_s, sc, beta), testing::quadrature_log_z_x(sc, beta), 1e-3);
}

TEST(PartitionRelation, ShiftTermIsolated) {
  // Jt = epsilon I for a coupling-free instance: the relation reduces to
  // Gaussian normalization plus the N beta Delta / 2 shift energy.
  const auto sc = shift_coupling(free_instance(3), 0.25);
  const double beta = 2.0;
  const double expect = 1.5 * std::log(2 * std::numbers::pi) - 0.5 * 3 * std::log(beta * 0.25) + 1.5 * beta * 0.25 + 3 * kLn2;
  EXPECT_NEAR(log_partition_x_from_s(3 * kLn2, sc, beta), expect, 1e-12);
}

TEST(PartitionRelation, EightSpinImportanceSampling) {
  const auto sc = shift_coupling(draw_sk_disorder(8, 1.0, 41), 0.01);
  const double beta = 0.5;
  const double formula = log_partition_x_from_s(enumerate_exact(sc.base(), beta).log_z_s, sc, beta);
  const double mc = testing::importance_log_z_x(sc, beta, 400000, 2024);
  EXPECT_NEAR(mc, formula, 0.02);
}

}  // namespace
}  // namespace sgflow
