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

#ifndef SGFLOW_ANALYTICS_HPP
#define SGFLOW_ANALYTICS_HPP

// Order-parameter and information-theoretic diagnostics.

#include <algorithm>
#include <array>
#include <concepts>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgflow/common.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/pt.hpp"
#include "sgflow/spinglass.hpp"
#include "sgflow/trainer.hpp"

namespace sgflow {

/// q_ab = (1/N) sum_i s_i^a s_i^b.
inline double overlap(const SpinConfig& a, const SpinConfig& b) {
  if (a.size() != b.size() || a.size() == 0) throw InvalidArgument("overlap: length mismatch");
  return a.dot(b) / static_cast<double>(a.size());
}

inline double overlap_rows(const SpinMatrix& spins, Eigen::Index a, Eigen::Index b) {
  long acc = 0;
  for (Eigen::Index i = 0; i < spins.cols(); ++i) acc += spins(a, i) * spins(b, i);
  return static_cast<double>(acc) / static_cast<double>(spins.cols());
}

/// Hamming distance (1 - q) / 2.
inline double hamming_distance(double q) { return 0.5 * (1.0 - q); }

/// Discretizes continuous configurations (columns of xs) with s ~ p(s|x).
inline SpinMatrix discretize(const Matrix& xs, const ShiftedCoupling& sc, double beta, Rng& rng) {
  require(xs.rows() == sc.n_spins(), "discretize: dimension mismatch");
  SpinMatrix out(xs.cols(), xs.rows());
  for (Eigen::Index c = 0; c < xs.cols(); ++c)
    out.row(c) = sample_s_given_x(xs.col(c), sc, beta, rng).cast<std::int8_t>().transpose();
  return out;
}

struct OverlapHistogram {
  std::vector<double> bin_edges;
  std::vector<long> counts;
  long n_pairs = 0;
  double beta = 0.0;
  std::string source;

  std::size_t bins() const { return counts.size(); }
  double center(std::size_t k) const { return 0.5 * (bin_edges[k] + bin_edges[k + 1]); }
  std::size_t bin_of(double q) const {
    const double w = 2.0 / static_cast<double>(counts.size());
    const auto k = static_cast<long>(std::floor((q + 1.0) / w));
    return static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(counts.size()) - 1));
  }
};

inline OverlapHistogram make_overlap_histogram(int bins) {
  require(bins >= 1, "overlap_histogram: bins must be positive");
  OverlapHistogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (int k = 0; k <= bins; ++k) h.bin_edges.push_back(-1.0 + 2.0 * k / bins);
  return h;
}

inline std::pair<Eigen::Index, Eigen::Index> random_pair(Eigen::Index n, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  const Eigen::Index a = pick(rng);
  Eigen::Index b = pick(rng);
  while (b == a) b = pick(rng);
  return {a, b};
}

/// Histogram of overlaps between n_pairs random distinct sample pairs.
inline OverlapHistogram overlap_histogram(const SpinMatrix& spins, long n_pairs, int bins, Rng& rng,
                                          double beta = 0.0, std::string source = "pt") {
  if (spins.rows() < 2) throw InvalidArgument("overlap_histogram: need at least two samples");
  require(n_pairs >= 1, "overlap_histogram: n_pairs must be positive");
  OverlapHistogram h = make_overlap_histogram(bins);
  h.beta = beta;
  h.source = std::move(source);
  h.n_pairs = n_pairs;
  for (long p = 0; p < n_pairs; ++p) {
    const auto [a, b] = random_pair(spins.rows(), rng);
    ++h.counts[h.bin_of(overlap_rows(spins, a, b))];
  }
  return h;
}

/// Shape summary of an overlap histogram after smoothing over a window of
/// half-width `window` in q.
struct Modality {
  double peak_neg = 0.0, q_neg = 0.0;  // highest smoothed bin with q < 0
  double peak_pos = 0.0, q_pos = 0.0;  // highest smoothed bin with q > 0
  double center = 0.0;                 // smoothed value at q = 0
  double q_mode = 0.0;                 // global maximum location
  bool bimodal = false;                // peaks beyond +-0.5, center >= 30% below both
  bool unimodal_at_zero = false;       // mode near 0, no significant secondary peak
};

inline std::vector<double> smooth_histogram(const OverlapHistogram& h, double window) {
  std::vector<double> out(h.bins(), 0.0);
  for (std::size_t k = 0; k < h.bins(); ++k) {
    double acc = 0.0;
    int n = 0;
    for (std::size_t j = 0; j < h.bins(); ++j)
      if (std::abs(h.center(j) - h.center(k)) <= window + 1e-12) {
        acc += static_cast<double>(h.counts[j]);
        ++n;
      }
    out[k] = acc / n;
  }
  return out;
}

inline Modality analyze_modality(const OverlapHistogram& h, double window = 0.1) {
  const auto sm = smooth_histogram(h, window);
  Modality m;
  m.center = sm[h.bin_of(0.0)];
  std::size_t mode = 0;
  for (std::size_t k = 0; k < h.bins(); ++k) {
    const double q = h.center(k);
    if (sm[k] > sm[mode]) mode = k;
    if (q < 0 && sm[k] > m.peak_neg) {
      m.peak_neg = sm[k];
      m.q_neg = q;
    }
    if (q > 0 && sm[k] > m.peak_pos) {
      m.peak_pos = sm[k];
      m.q_pos = q;
    }
  }
  m.q_mode = h.center(mode);
  m.bimodal = m.q_pos > 0.5 && m.q_neg < -0.5 && m.center <= 0.7 * std::min(m.peak_neg, m.peak_pos);

  // unimodal: walking outward from the mode, the smoothed curve never climbs
  // back by more than 10% of the peak height
  const double tol = 0.1 * sm[mode];
  bool monotone = true;
  double run_min = sm[mode];
  for (std::size_t k = mode + 1; k < h.bins(); ++k) {
    run_min = std::min(run_min, sm[k]);
    if (sm[k] > run_min + tol) monotone = false;
  }
  run_min = sm[mode];
  for (std::size_t k = mode; k-- > 0;) {
    run_min = std::min(run_min, sm[k]);
    if (sm[k] > run_min + tol) monotone = false;
  }
  m.unimodal_at_zero = monotone && std::abs(m.q_mode) <= 0.25;
  return m;
}

enum class TriangleKind { kEquilateral = 0, kAcuteIsosceles = 1, kOther = 2 };

/// Classification from sorted distances d_min <= d_mid <= d_max.
inline TriangleKind classify_triangle(double d1, double d2, double d3, double tolerance) {
  std::array<double, 3> d{d1, d2, d3};
  std::sort(d.begin(), d.end());
  if (d[2] - d[0] <= tolerance) return TriangleKind::kEquilateral;
  if (d[2] - d[1] <= tolerance) return TriangleKind::kAcuteIsosceles;
  return TriangleKind::kOther;
}

struct TriangleStats {
  long n_triples = 0;
  std::array<double, 3> fractions{};  // equilateral, acute isosceles, other
  std::vector<std::pair<double, double>> raw_points;  // (d_max - d_mid, d_mid - d_min)
  double tolerance = 0.0;

  double equilateral() const { return fractions[0]; }
  double isosceles() const { return fractions[1]; }
  double other() const { return fractions[2]; }
};

inline TriangleStats triangle_stats(const SpinMatrix& spins, long n_triples, double tolerance, Rng& rng) {
  if (spins.rows() < 3) throw InvalidArgument("triangle_stats: need at least three samples");
  if (n_triples < 1) throw InvalidArgument("triangle_stats: n_triples must be >= 1");
  require(tolerance >= 0, "triangle_stats: tolerance must be >= 0");
  TriangleStats t;
  t.n_triples = n_triples;
  t.tolerance = tolerance;
  std::array<long, 3> counts{};
  std::uniform_int_distribution<Eigen::Index> pick(0, spins.rows() - 1);
  for (long k = 0; k < n_triples; ++k) {
    Eigen::Index a = pick(rng), b = pick(rng), c = pick(rng);
    while (b == a) b = pick(rng);
    while (c == a || c == b) c = pick(rng);
    std::array<double, 3> d{hamming_distance(overlap_rows(spins, a, b)), hamming_distance(overlap_rows(spins, a, c)),
                            hamming_distance(overlap_rows(spins, b, c))};
    std::sort(d.begin(), d.end());
    ++counts[static_cast<std::size_t>(classify_triangle(d[0], d[1], d[2], tolerance))];
    t.raw_points.emplace_back(d[2] - d[1], d[1] - d[0]);
  }
  for (std::size_t k = 0; k < 3; ++k) t.fractions[k] = static_cast<double>(counts[k]) / static_cast<double>(n_triples);
  return t;
}

struct Magnetization {
  double total = 0.0;  // M = sum_i <s_i>
  Vector per_site;

  double mean_abs_per_site() const { return per_site.cwiseAbs().mean(); }
};

inline Magnetization magnetization(const SpinMatrix& spins) {
  if (spins.rows() == 0) throw InvalidArgument("magnetization: no samples");
  Magnetization m;
  m.per_site = spins.cast<double>().colwise().mean().transpose();
  m.total = m.per_site.sum();
  return m;
}

/// ln Z_s(beta) = N ln 2 - int_0^beta <H>_b db by the trapezoidal rule over
/// the supplied (beta, <H>) points plus the exact endpoint <H>_0 = 0.
inline double log_z_s_thermo_integration(std::vector<std::pair<double, double>> mean_energies, double beta_target,
                                         int n_spins) {
  require(n_spins >= 1, "thermo_integration: n_spins must be positive");
  require(beta_target >= 0, "thermo_integration: beta must be >= 0");
  std::sort(mean_energies.begin(), mean_energies.end());
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (const auto& p : mean_energies) {
    require(p.first > 0 && std::isfinite(p.second), "thermo_integration: invalid ladder point");
    pts.push_back(p);
  }
  if (beta_target > pts.back().first + 1e-12) throw InvalidArgument("thermo_integration: target beyond ladder");
  double integral = 0.0;
  for (std::size_t k = 1; k < pts.size() && pts[k - 1].first < beta_target; ++k) {
    const auto [b0, e0] = pts[k - 1];
    auto [b1, e1] = pts[k];
    if (b1 > beta_target) {
      e1 = e0 + (e1 - e0) * (beta_target - b0) / (b1 - b0);
      b1 = beta_target;
    }
    integral += 0.5 * (b1 - b0) * (e0 + e1);
  }
  return n_spins * std::numbers::ln2 - integral;
}

/// Entropy of a density e^{-E}/Z from reduced energies E evaluated at its own samples.
inline Estimate entropy_from_energies(const Eigen::Ref<const Vector>& reduced_energies, double log_z) {
  Estimate est = mean_and_stderr(reduced_energies);
  est.mean += log_z;
  return est;
}

/// H(p(x)) = beta <Hd>_p + ln Z_x estimated from samples of p(x) (rows).
inline Estimate shannon_entropy_x(const RowMatrix& xs, const ShiftedCoupling& sc, double beta, double log_z_x) {
  require(xs.rows() > 0, "shannon_entropy_x: no samples");
  const Matrix cols = xs.transpose();
  return entropy_from_energies(beta * hamiltonian_density_batch(cols, sc, beta), log_z_x);
}

enum class LogZMethod { kExact, kThermoIntegration, kReplicaSymmetric };

inline std::string to_string(LogZMethod m) {
  switch (m) {
    case LogZMethod::kExact: return "exact";
    case LogZMethod::kThermoIntegration: return "thermo_integration";
    case LogZMethod::kReplicaSymmetric: return "replica_symmetric";
  }
  return "?";
}

struct LogZs {
  double value = 0.0;
  LogZMethod method = LogZMethod::kExact;
};

struct FreeEnergyReport {
  double beta = 0.0;
  LogZs log_z_s;
  double log_z_x = 0.0;
  double helmholtz_x = 0.0;  // F_x = -ln Z_x / beta
  Estimate gibbs_x;          // G_x = L_reverse / beta
  Estimate reverse_loss;
  Estimate reverse_kl;       // beta (G_x - F_x)
  Estimate forward_loss;
  Estimate shannon_entropy_x;
  Estimate forward_kl;       // forward_loss - H(p(x)), paired estimate
  bool reverse_kl_negative = false;
  bool forward_kl_negative = false;
};

/// Anything with a normalized log-density and a sampler over R^N.
template <class M>
concept DensityModel = requires(const M& m, const Matrix& x, Eigen::Index n, Rng& rng) {
  { m.log_density(x) } -> std::convertible_to<Vector>;
  { m.sample(n, rng) } -> std::convertible_to<Matrix>;
};

/// Adapts a FlowModel to DensityModel.
struct FlowDensity {
  const FlowModel& model;
  Vector log_density(const Matrix& x) const { return model.log_density(x); }
  Matrix sample(Eigen::Index n, Rng& rng) const { return sample_flow(model, n, model.n_layers(), rng); }
};

struct KlReportOptions {
  long eval_samples = 10000;
  bool symmetrize = false;
};

/// Free energies and both KL divergences of `model` against p(x) at beta.
/// `data` holds samples of p(x) as rows (PT-converted); may be empty to skip
/// the forward-direction quantities.
template <DensityModel M>
FreeEnergyReport kl_report(const M& model, const ShiftedCoupling& sc, double beta, const LogZs& log_z_s,
                           const RowMatrix& data, Rng& rng, const KlReportOptions& opt = {}) {
  require(beta > 0, "kl_report: beta must be positive");
  require(opt.eval_samples >= 2, "kl_report: need at least two evaluation samples");
  require(data.rows() == 0 || data.cols() == sc.n_spins(), "kl_report: data width mismatch");
  FreeEnergyReport r;
  r.beta = beta;
  r.log_z_s = log_z_s;
  r.log_z_x = log_partition_x_from_s(log_z_s.value, sc, beta);
  r.helmholtz_x = -r.log_z_x / beta;

  const Matrix x = model.sample(opt.eval_samples, rng);
  require(x.rows() == sc.n_spins(), "kl_report: model dimension mismatch");
  Vector log_q = model.log_density(x);
  if (opt.symmetrize) {
    const Vector log_q_neg = model.log_density(-x);
    for (Eigen::Index k = 0; k < log_q.size(); ++k) log_q[k] = log_add_exp(log_q[k], log_q_neg[k]) - std::numbers::ln2;
  }
  const Vector per = beta * hamiltonian_density_batch(x, sc, beta) + log_q;
  r.reverse_loss = mean_and_stderr(per);
  r.gibbs_x = {r.reverse_loss.mean / beta, r.reverse_loss.std_error / beta};
  r.reverse_kl = {r.reverse_loss.mean + r.log_z_x, r.reverse_loss.std_error};
  r.reverse_kl_negative = r.reverse_kl.mean < 0;

  if (data.rows() > 0) {
    const Matrix cols = data.transpose();
    const Vector nll = -model.log_density(cols);
    const Vector e = beta * hamiltonian_density_batch(cols, sc, beta);
    r.forward_loss = mean_and_stderr(nll);
    r.shannon_entropy_x = entropy_from_energies(e, r.log_z_x);
    // KL(p||q) = E_p[ln p - ln q] = E_p[-beta Hd - ln q] - ln Z_x
    r.forward_kl = mean_and_stderr(nll - e);
    r.forward_kl.mean -= r.log_z_x;
    r.forward_kl_negative = r.forward_kl.mean < 0;
  }
  return r;
}

/// Overlap and triangle statistics of the layer-l variable.
struct LayerProbe {
  int layer = 0;
  OverlapHistogram histogram;
  Modality modality;
  TriangleStats triangles;
};

struct LayerProbeOptions {
  long n_samples = 10000;
  long n_pairs = 100000;
  int bins = 81;
  long n_triples = 20000;
  double tolerance = 0.02;
};

inline LayerProbe layer_probe(const FlowModel& model, int layer, const ShiftedCoupling& sc, double beta, Rng& rng,
                              const LayerProbeOptions& opt = {}) {
  if (layer < 0 || layer > model.n_layers()) throw InvalidArgument("layer_probe: layer out of range");
  const Matrix z = sample_flow(model, opt.n_samples, layer, rng);
  const SpinMatrix spins = discretize(z, sc, beta, rng);
  LayerProbe p;
  p.layer = layer;
  p.histogram = overlap_histogram(spins, opt.n_pairs, opt.bins, rng, beta, "flow_layer_" + std::to_string(layer));
  p.modality = analyze_modality(p.histogram);
  p.triangles = triangle_stats(spins, opt.n_triples, opt.tolerance, rng);
  return p;
}

}  // namespace sgflow

#endif  // SGFLOW_ANALYTICS_HPP
