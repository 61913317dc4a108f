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

#ifndef SGFLOW_PT_HPP
#define SGFLOW_PT_HPP

// Parallel tempering (replica exchange) over the discrete spin glass.

#include <bit>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "sgflow/common.hpp"
#include "sgflow/hash.hpp"
#include "sgflow/spinglass.hpp"

namespace sgflow {

using SpinMatrix = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Strictly increasing inverse temperatures, one per replica slot.
class TemperatureLadder {
 public:
  explicit TemperatureLadder(std::vector<double> betas) : betas_(std::move(betas)) {
    require(betas_.size() >= 2, "ladder: need at least two temperatures");
    for (std::size_t i = 0; i < betas_.size(); ++i) {
      require(betas_[i] > 0 && std::isfinite(betas_[i]), "ladder: betas must be positive and finite");
      if (i > 0) require(betas_[i] > betas_[i - 1], "ladder: betas must be strictly increasing");
    }
  }

  /// Geometric spacing in T over [t_min, t_max], returned hottest first.
  static TemperatureLadder geometric(double t_min, double t_max, int n_temps) {
    require(n_temps >= 2, "ladder: need at least two temperatures");
    require(t_min > 0 && t_max > t_min, "ladder: need 0 < t_min < t_max");
    std::vector<double> betas(static_cast<std::size_t>(n_temps));
    const double ratio = std::pow(t_max / t_min, 1.0 / (n_temps - 1));
    for (int k = 0; k < n_temps; ++k) {
      // slot 0 is hottest; pin the endpoints exactly
      double t = t_max / std::pow(ratio, k);
      if (k == 0) t = t_max;
      if (k == n_temps - 1) t = t_min;
      betas[static_cast<std::size_t>(k)] = 1.0 / t;
    }
    return TemperatureLadder(std::move(betas));
  }

  std::size_t size() const { return betas_.size(); }
  double beta(std::size_t i) const { return betas_.at(i); }
  double temperature(std::size_t i) const { return 1.0 / betas_.at(i); }
  const std::vector<double>& betas() const { return betas_; }

 private:
  std::vector<double> betas_;
};

struct ReplicaState {
  SpinConfig config;
  double energy = 0.0;
  std::size_t beta_index = 0;
};

/// Samples recorded at one temperature.
struct SampleSet {
  std::string disorder_id;
  double beta = 0.0;
  SpinMatrix spins;                 // M x N, entries +-1
  std::optional<RowMatrix> xs;      // M x N continuous counterparts
  int sweeps_per_sample = 1;
  long burn_in = 0;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return spins.rows(); }
  int n_spins() const { return static_cast<int>(spins.cols()); }
  SpinConfig spin_row(Eigen::Index r) const { return spins.row(r).cast<double>().transpose(); }
};

/// Content id of an instance: SHA-256 over the little-endian J then h payload.
inline std::string disorder_id(const DisorderRealization& d) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const RowMatrix j = d.couplings;
  std::vector<std::uint8_t> bytes(sizeof(double) * static_cast<std::size_t>(j.size() + d.fields.size()));
  std::memcpy(bytes.data(), j.data(), sizeof(double) * static_cast<std::size_t>(j.size()));
  std::memcpy(bytes.data() + sizeof(double) * static_cast<std::size_t>(j.size()), d.fields.data(),
              sizeof(double) * static_cast<std::size_t>(d.fields.size()));
  return sha256_hex(bytes);
}

/// One sequential-scan sweep of single-spin-flip Metropolis updates.
/// The cached energy is updated incrementally.
inline void metropolis_sweep(ReplicaState& state, double beta, const DisorderRealization& d, Rng& rng) {
  SpinConfig& s = state.config;
  check_spins(s, d.n_spins);
  for (int i = 0; i < d.n_spins; ++i) {
    const double local = d.fields[i] + d.couplings.col(i).dot(s);
    const double delta = 2.0 * s[i] * local;
    // draw unconditionally so the stream position does not depend on the outcome
    const double u = uniform01(rng);
    if (delta <= 0.0 || u < std::exp(-beta * delta)) {
      s[i] = -s[i];
      state.energy += delta;
    }
  }
}

struct ExchangeStats {
  std::vector<long> attempts;
  std::vector<long> accepts;

  explicit ExchangeStats(std::size_t n_pairs = 0) : attempts(n_pairs, 0), accepts(n_pairs, 0) {}
  double rate(std::size_t pair) const {
    return attempts.at(pair) ? static_cast<double>(accepts[pair]) / static_cast<double>(attempts[pair]) : 0.0;
  }
};

/// Probability of swapping configurations between slots i and j.
inline double exchange_acceptance(double beta_i, double beta_j, double energy_i, double energy_j) {
  const double exponent = (beta_i - beta_j) * (energy_i - energy_j);
  return exponent >= 0.0 ? 1.0 : std::exp(exponent);
}

/// Attempts swaps between adjacent slots (k, k+1) for k with k % 2 == parity.
/// `replicas[k]` must sit at ladder slot k.
inline void replica_exchange_step(std::vector<ReplicaState>& replicas, const TemperatureLadder& ladder, int parity,
                                  Rng& rng, ExchangeStats* stats = nullptr) {
  require(replicas.size() == ladder.size(), "replica_exchange_step: one replica per ladder slot");
  for (std::size_t k = static_cast<std::size_t>(parity & 1); k + 1 < replicas.size(); k += 2) {
    auto& a = replicas[k];
    auto& b = replicas[k + 1];
    const double p = exchange_acceptance(ladder.beta(k), ladder.beta(k + 1), a.energy, b.energy);
    const double u = uniform01(rng);
    if (stats) ++stats->attempts[k];
    if (u < p) {
      std::swap(a.config, b.config);
      std::swap(a.energy, b.energy);
      if (stats) ++stats->accepts[k];
    }
  }
}

struct PtOptions {
  long burn_in_sweeps = 0;
  long n_samples = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Cached energies are recomputed from scratch at this sweep cadence.
  long energy_refresh = 1000;
};

struct PtResult {
  std::vector<SampleSet> samples;  // one per ladder slot
  ExchangeStats exchange;
  std::vector<double> mean_energy;  // per slot, over recorded samples
};

/// Replica-exchange driver; each slot owns an rng stream derived from
/// (seed, slot), the exchange move owns another, so thread count never
/// changes the result.
class ParallelTempering {
 public:
  ParallelTempering(const DisorderRealization& d, TemperatureLadder ladder, std::uint64_t seed)
      : disorder_(d), ladder_(std::move(ladder)), exchange_rng_(derive_rng(seed, {0x7074, 0xffff})),
        stats_(ladder_.size() - 1) {
    d.validate();
    for (std::size_t k = 0; k < ladder_.size(); ++k) {
      rngs_.push_back(derive_rng(seed, {0x7074, k}));
      ReplicaState r;
      r.config = SpinConfig(d.n_spins);
      for (int i = 0; i < d.n_spins; ++i) r.config[i] = uniform01(rngs_.back()) < 0.5 ? -1.0 : 1.0;
      r.energy = discrete_energy(r.config, d);
      r.beta_index = k;
      replicas_.push_back(std::move(r));
    }
  }

  void sweep_all(unsigned threads) {
    parallel_for(replicas_.size(), threads, [&](std::size_t k) {
      metropolis_sweep(replicas_[k], ladder_.beta(k), disorder_, rngs_[k]);
    });
    ++sweeps_;
  }

  void exchange() {
    replica_exchange_step(replicas_, ladder_, static_cast<int>(exchange_calls_ & 1), exchange_rng_, &stats_);
    ++exchange_calls_;
  }

  void refresh_energies() {
    for (auto& r : replicas_) r.energy = discrete_energy(r.config, disorder_);
  }

  /// One sweep of every replica followed by one exchange attempt.
  void step(unsigned threads, long energy_refresh = 1000) {
    sweep_all(threads);
    exchange();
    if (energy_refresh > 0 && sweeps_ % energy_refresh == 0) refresh_energies();
  }

  const std::vector<ReplicaState>& replicas() const { return replicas_; }
  const TemperatureLadder& ladder() const { return ladder_; }
  const ExchangeStats& stats() const { return stats_; }
  long sweeps() const { return sweeps_; }

 private:
  const DisorderRealization& disorder_;
  TemperatureLadder ladder_;
  std::vector<Rng> rngs_;
  Rng exchange_rng_;
  std::vector<ReplicaState> replicas_;
  ExchangeStats stats_;
  std::uint64_t exchange_calls_ = 0;
  long sweeps_ = 0;
};

inline PtResult run_pt(const DisorderRealization& d, const TemperatureLadder& ladder, const PtOptions& opt) {
  require(opt.n_samples >= 1, "run_pt: n_samples must be >= 1");
  require(opt.burn_in_sweeps >= 0, "run_pt: burn_in must be >= 0");
  ParallelTempering pt(d, ladder, opt.seed);
  for (long k = 0; k < opt.burn_in_sweeps; ++k) pt.step(opt.threads, opt.energy_refresh);

  const std::string id = disorder_id(d);
  PtResult out;
  out.samples.resize(ladder.size());
  out.mean_energy.assign(ladder.size(), 0.0);
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    auto& ss = out.samples[k];
    ss.disorder_id = id;
    ss.beta = ladder.beta(k);
    ss.spins.resize(opt.n_samples, d.n_spins);
    ss.sweeps_per_sample = 1;
    ss.burn_in = opt.burn_in_sweeps;
    ss.seed = opt.seed;
  }
  const ExchangeStats burn_stats = pt.stats();
  for (long m = 0; m < opt.n_samples; ++m) {
    pt.step(opt.threads, opt.energy_refresh);
    for (std::size_t k = 0; k < ladder.size(); ++k) {
      const auto& r = pt.replicas()[k];
      out.samples[k].spins.row(m) = r.config.cast<std::int8_t>().transpose();
      out.mean_energy[k] += r.energy;
    }
  }
  for (auto& e : out.mean_energy) e /= static_cast<double>(opt.n_samples);
  out.exchange = ExchangeStats(ladder.size() - 1);
  for (std::size_t p = 0; p + 1 < ladder.size(); ++p) {
    out.exchange.attempts[p] = pt.stats().attempts[p] - burn_stats.attempts[p];
    out.exchange.accepts[p] = pt.stats().accepts[p] - burn_stats.accepts[p];
  }
  return out;
}

/// Attaches one x ~ p(x|s) to every recorded spin row (1:1 conversion).
inline void build_continuous_dataset(SampleSet& ss, const ShiftedCoupling& sc, Rng& rng) {
  if (ss.xs) throw InvalidState("build_continuous_dataset: continuous samples already present");
  require(ss.n_spins() == sc.n_spins(), "build_continuous_dataset: dimension mismatch");
  require(ss.beta > 0, "build_continuous_dataset: beta must be positive");
  RowMatrix xs(ss.size(), ss.n_spins());
  for (Eigen::Index r = 0; r < ss.size(); ++r) xs.row(r) = sample_x_given_s(ss.spin_row(r), sc, ss.beta, rng).transpose();
  ss.xs = std::move(xs);
}

}  // namespace sgflow

#endif  // SGFLOW_PT_HPP
