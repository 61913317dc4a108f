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

#ifndef SGFLOW_SPINGLASS_HPP
#define SGFLOW_SPINGLASS_HPP

// Ising spin-glass instances and their continuous (Gaussian-smoothed) dual.
//
// The discrete model is H(s) = -sum_i h_i s_i - sum_{i<j} J_ij s_i s_j over
// s in {-1,+1}^N. Shifting the coupling matrix by Delta*I so that it becomes
// positive definite gives a joint density p(x, s) whose x-marginal is
//
//   p(x) ~ exp(-beta * Hd(x)),
//   Hd(x) = 1/2 x^T Jt x - (1/beta) sum_i ln 2cosh(beta (Jt x + h)_i),
//
// with both conditionals p(x|s) (Gaussian) and p(s|x) (independent spins)
// cheap to sample.

#include "sgflow/common.hpp"

#include <bit>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace sgflow {

/// One spin-glass instance: symmetric zero-diagonal couplings plus fields.
struct DisorderRealization {
  int n_spins = 0;
  Matrix couplings;
  Vector fields;
  double scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_spins >= 2, "disorder: n_spins must be >= 2");
    require(couplings.rows() == n_spins && couplings.cols() == n_spins, "disorder: coupling shape");
    require(fields.size() == n_spins, "disorder: field length");
    require(scale > 0, "disorder: scale must be positive");
    for (int i = 0; i < n_spins; ++i) {
      require(couplings(i, i) == 0.0, "disorder: nonzero diagonal");
      for (int j = i + 1; j < n_spins; ++j)
        require(couplings(i, j) == couplings(j, i), "disorder: couplings not symmetric");
    }
    require(couplings.allFinite() && fields.allFinite(), "disorder: non-finite entries");
  }
};

/// Spins stored as doubles in {-1,+1} so they mix freely with Eigen algebra.
using SpinConfig = Vector;
using ContinuousConfig = Vector;

/// Sherrington-Kirkpatrick couplings J_ij ~ N(0, scale^2 / N) for i<j, h = 0.
inline DisorderRealization draw_sk_disorder(int n_spins, double scale, std::uint64_t seed) {
  if (n_spins < 2) throw InvalidArgument("draw_sk_disorder: n_spins must be >= 2");
  if (!(scale > 0)) throw InvalidArgument("draw_sk_disorder: scale must be positive");
  DisorderRealization d;
  d.n_spins = n_spins;
  d.scale = scale;
  d.seed = seed;
  d.couplings = Matrix::Zero(n_spins, n_spins);
  d.fields = Vector::Zero(n_spins);
  Rng rng = derive_rng(seed, {0x736b});
  std::normal_distribution<double> gauss(0.0, scale / std::sqrt(static_cast<double>(n_spins)));
  for (int i = 0; i < n_spins; ++i)
    for (int j = i + 1; j < n_spins; ++j) {
      const double v = gauss(rng);
      d.couplings(i, j) = v;
      d.couplings(j, i) = v;
    }
  return d;
}

inline void check_spins(const SpinConfig& s, int n) {
  if (s.size() != n) throw InvalidArgument("spin configuration has wrong length");
}

/// H(s) = -h.s - sum_{i<j} J_ij s_i s_j.
inline double discrete_energy(const SpinConfig& s, const DisorderRealization& d) {
  check_spins(s, d.n_spins);
  return -d.fields.dot(s) - 0.5 * s.dot(d.couplings * s);
}

/// Delta = max(0, epsilon - lambda_min).
inline double coupling_shift(double lambda_min, double epsilon) { return std::max(0.0, epsilon - lambda_min); }

/// Jt = J + Delta*I with Delta = max(0, epsilon - lambda_min(J)).
class ShiftedCoupling {
 public:
  ShiftedCoupling(DisorderRealization base, double epsilon) : base_(std::move(base)), epsilon_(epsilon) {
    if (!(epsilon > 0)) throw InvalidArgument("shift_coupling: epsilon must be positive");
    base_.validate();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(base_.couplings, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericFailure("shift_coupling: eigensolver did not converge");
    lambda_min_ = eig.eigenvalues().minCoeff();
    lambda_max_ = eig.eigenvalues().maxCoeff();
    shift_ = coupling_shift(lambda_min_, epsilon_);
    shifted_ = base_.couplings;
    shifted_.diagonal().array() += shift_;
    chol_.compute(shifted_);
    if (chol_.info() != Eigen::Success) throw NumericFailure("shift_coupling: shifted matrix is not positive definite");
    log_det_ = 2.0 * chol_.matrixLLT().diagonal().array().log().sum();
  }

  const DisorderRealization& base() const { return base_; }
  int n_spins() const { return base_.n_spins; }
  double epsilon() const { return epsilon_; }
  double shift() const { return shift_; }
  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }
  const Matrix& matrix() const { return shifted_; }
  const Vector& fields() const { return base_.fields; }
  /// ln det Jt.
  double log_det() const { return log_det_; }
  /// Cholesky factor L of Jt (lower), Jt = L L^T.
  const Eigen::LLT<Matrix>& cholesky() const { return chol_; }

 private:
  DisorderRealization base_;
  double epsilon_;
  double lambda_min_ = 0, lambda_max_ = 0, shift_ = 0, log_det_ = 0;
  Matrix shifted_;
  Eigen::LLT<Matrix> chol_;
};

inline ShiftedCoupling shift_coupling(const DisorderRealization& d, double epsilon) {
  return ShiftedCoupling(d, epsilon);
}

namespace detail {
inline void check_density_args(const ContinuousConfig& x, const ShiftedCoupling& sc, double beta) {
  if (!(beta > 0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive and finite");
  if (x.size() != sc.n_spins()) throw InvalidArgument("configuration has wrong length");
  if (!x.allFinite()) throw InvalidArgument("configuration has non-finite entries");
}
}  // namespace detail

/// Hd(x) = 1/2 x^T Jt x - (1/beta) sum_i ln 2cosh(beta (Jt x + h)_i).
inline double hamiltonian_density(const ContinuousConfig& x, const ShiftedCoupling& sc, double beta) {
  detail::check_density_args(x, sc, beta);
  const Vector jx = sc.matrix() * x;
  const Vector a = beta * (jx + sc.fields());
  double lc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) lc += log_2cosh(a[i]);
  return 0.5 * x.dot(jx) - lc / beta;
}

/// Column-wise Hd for a batch (N x B) of configurations.
inline Vector hamiltonian_density_batch(const Matrix& xs, const ShiftedCoupling& sc, double beta) {
  if (xs.rows() != sc.n_spins()) throw InvalidArgument("batch has wrong row count");
  const Matrix jx = sc.matrix() * xs;
  Vector out(xs.cols());
  for (Eigen::Index c = 0; c < xs.cols(); ++c) {
    double lc = 0.0;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) lc += log_2cosh(beta * (jx(i, c) + sc.fields()[i]));
    out[c] = 0.5 * xs.col(c).dot(jx.col(c)) - lc / beta;
  }
  return out;
}

/// grad Hd = Jt x - Jt tanh(beta (Jt x + h)).
inline Vector grad_hamiltonian_density(const ContinuousConfig& x, const ShiftedCoupling& sc, double beta) {
  detail::check_density_args(x, sc, beta);
  const Vector jx = sc.matrix() * x;
  const Vector th = (beta * (jx + sc.fields())).array().tanh().matrix();
  return jx - sc.matrix() * th;
}

/// Column-wise gradient for a batch.
inline Matrix grad_hamiltonian_density_batch(const Matrix& xs, const ShiftedCoupling& sc, double beta) {
  const Matrix jx = sc.matrix() * xs;
  const Matrix th = (beta * (jx.colwise() + sc.fields())).array().tanh().matrix();
  return jx - sc.matrix() * th;
}

/// Hess Hd = Jt - beta Jt diag(sech^2(beta (Jt x + h))) Jt.
inline Matrix hessian_hamiltonian_density(const ContinuousConfig& x, const ShiftedCoupling& sc, double beta) {
  detail::check_density_args(x, sc, beta);
  const Matrix& jt = sc.matrix();
  const Vector a = beta * (jt * x + sc.fields());
  const Vector sech2 = (1.0 - a.array().tanh().square()).matrix();
  Matrix hess = jt - beta * jt * sech2.asDiagonal() * jt;
  // symmetrize exactly; the triple product is symmetric only up to rounding
  Matrix sym = 0.5 * (hess + hess.transpose());
  return sym;
}

/// Draws x ~ N(s, (beta Jt)^{-1}) via the cached Cholesky factor of Jt.
inline ContinuousConfig sample_x_given_s(const SpinConfig& s, const ShiftedCoupling& sc, double beta, Rng& rng) {
  if (!(beta > 0)) throw InvalidArgument("sample_x_given_s: beta must be positive");
  check_spins(s, sc.n_spins());
  if (sc.cholesky().info() != Eigen::Success) throw NumericFailure("sample_x_given_s: Cholesky factor unavailable");
  Vector xi = standard_normal(sc.n_spins(), rng);
  // beta Jt = (sqrt(beta) L)(sqrt(beta) L)^T, so x - s = (sqrt(beta) L)^{-T} xi
  sc.cholesky().matrixU().solveInPlace(xi);
  return s + xi / std::sqrt(beta);
}

/// Independent spins with P(s_i = +1) = sigma(2 beta a_i), a = Jt x + h.
inline SpinConfig sample_s_given_x(const ContinuousConfig& x, const ShiftedCoupling& sc, double beta, Rng& rng) {
  if (!(beta > 0)) throw InvalidArgument("sample_s_given_x: beta must be positive");
  if (x.size() != sc.n_spins()) throw InvalidArgument("sample_s_given_x: configuration has wrong length");
  const Vector a = sc.matrix() * x + sc.fields();
  if (!a.allFinite()) throw NumericFailure("sample_s_given_x: non-finite local field");
  SpinConfig s(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) s[i] = uniform01(rng) < logistic(2.0 * beta * a[i]) ? 1.0 : -1.0;
  return s;
}

/// Replica-symmetric SK free energy F_s = -N beta J^2/4 - N ln2 / beta
/// (exact above the spin-glass transition as N grows).
inline double replica_symmetric_free_energy(int n_spins, double beta, double scale) {
  if (n_spins < 1) throw InvalidArgument("replica_symmetric_free_energy: n_spins must be positive");
  if (!(beta > 0) || !(scale > 0)) throw InvalidArgument("replica_symmetric_free_energy: beta and scale must be positive");
  const double n = n_spins;
  return -n * beta * scale * scale / 4.0 - n * std::numbers::ln2 / beta;
}

/// ln Z_x = (N/2) ln 2pi - 1/2 ln det(beta Jt) + N beta Delta / 2 + ln Z_s.
inline double log_partition_x_from_s(double log_z_s, const ShiftedCoupling& sc, double beta) {
  if (!(beta > 0)) throw InvalidArgument("log_partition_x_from_s: beta must be positive");
  const double n = sc.n_spins();
  const double log_det_beta = n * std::log(beta) + sc.log_det();
  return 0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_beta + 0.5 * n * beta * sc.shift() + log_z_s;
}

/// Ground truth from the full 2^N sum.
struct ExactSummary {
  double log_z_s = 0.0;
  Vector marginals;
  double mean_energy = 0.0;
  double beta = 0.0;
};

inline constexpr int kMaxExactSpins = 20;

inline ExactSummary enumerate_exact(const DisorderRealization& d, double beta) {
  if (d.n_spins > kMaxExactSpins) throw InvalidArgument("enumerate_exact: refusing N > 20");
  if (!(beta >= 0) || !std::isfinite(beta)) throw InvalidArgument("enumerate_exact: beta must be finite and >= 0");
  const int n = d.n_spins;
  // With h = 0 the states pair up as (s, -s) with equal energy: walk half of
  // them (last spin pinned) and count each twice, so marginals cancel exactly.
  const bool paired = (d.fields.array() == 0.0).all();
  const std::uint64_t n_states = std::uint64_t{1} << (paired ? n - 1 : n);
  const double multiplicity = paired ? 2.0 : 1.0;

  // Walk the states in Gray-code order; each step flips one spin.
  auto walk = [&](auto&& visit) {
    SpinConfig s = SpinConfig::Constant(n, -1.0);
    double e = discrete_energy(s, d);
    visit(s, e);
    for (std::uint64_t k = 1; k < n_states; ++k) {
      const int i = std::countr_zero(k);
      const double local = d.fields[i] + d.couplings.row(i).dot(s);
      e += 2.0 * s[i] * local;
      s[i] = -s[i];
      visit(s, e);
    }
  };

  double max_log_w = -std::numeric_limits<double>::infinity();
  walk([&](const SpinConfig&, double e) { max_log_w = std::max(max_log_w, -beta * e); });

  double z = 0.0, e_acc = 0.0;
  Vector m_acc = Vector::Zero(n);
  walk([&](const SpinConfig& s, double e) {
    const double w = multiplicity * std::exp(-beta * e - max_log_w);
    z += w;
    e_acc += w * e;
    if (!paired) m_acc += w * s;
  });

  ExactSummary out;
  out.beta = beta;
  out.log_z_s = max_log_w + std::log(z);
  out.mean_energy = e_acc / z;
  out.marginals = m_acc / z;
  return out;
}

}  // namespace sgflow

#endif  // SGFLOW_SPINGLASS_HPP
