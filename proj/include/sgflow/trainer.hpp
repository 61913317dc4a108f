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

#ifndef SGFLOW_TRAINER_HPP
#define SGFLOW_TRAINER_HPP

// Training objectives for a flow approximating p(x) ~ exp(-beta Hd(x)).
//
//   reverse:  L = E_z[ beta Hd(G(z)) + ln p_G(G(z)) ] = KL(p_G || p) - ln Z_x >= beta F_x
//   forward:  L = -E_{x~p}[ ln p_G(x) ]              = KL(p || p_G) + H(p)   >= H(p)
//
// The reverse estimator is pathwise: gradients flow through x = G(z) into
// both the target energy and the flow log-density.

#include <chrono>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sgflow/common.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/spinglass.hpp"

namespace sgflow {

enum class LossKind { kReverse, kForward };

inline std::string to_string(LossKind k) { return k == LossKind::kReverse ? "reverse" : "forward"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "reverse") return LossKind::kReverse;
  if (s == "forward") return LossKind::kForward;
  throw InvalidArgument("unknown loss kind: " + s);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  LossKind loss_kind = LossKind::kForward;
  double learning_rate = 1e-4;
  int batch_size = 50;
  long n_updates = 250000;
  double beta = 1.0;
  bool symmetrize = false;
  std::uint64_t seed = 0;
  AdamConfig adam;
  double clip_norm = 0.0;        // 0 disables clipping
  long eval_every = 1000;        // 0 disables periodic evaluation
  long eval_batch = 10000;
  long checkpoint_every = 1000;  // 0 disables periodic checkpoints
  unsigned threads = 1;

  void validate() const {
    require(learning_rate > 0, "train: learning_rate must be positive");
    require(batch_size > 0, "train: batch_size must be positive");
    require(n_updates >= 0, "train: n_updates must be >= 0");
    require(beta > 0 && std::isfinite(beta), "train: beta must be positive");
    require(!symmetrize || loss_kind == LossKind::kReverse, "train: symmetrize applies to the reverse loss only");
    require(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0,
            "train: invalid Adam constants");
    require(clip_norm >= 0 && eval_every >= 0 && eval_batch > 0 && checkpoint_every >= 0, "train: invalid cadence");
  }
};

struct LossEval {
  double loss = 0.0;
  double std_error = 0.0;
  Vector per_sample;
};

/// Batches are split into fixed-size chunks independent of the thread count;
/// chunk gradients are reduced in chunk order.
inline constexpr Eigen::Index kChunkColumns = 25;

namespace detail {

inline double log_normal_const(int n) { return 0.5 * n * std::log(2.0 * std::numbers::pi); }

template <class ChunkFn>
LossEval chunked_loss(const FlowModel& model, Eigen::Index batch, FlowGradient* grad, unsigned threads, ChunkFn&& fn) {
  if (batch == 0) throw InvalidArgument("loss: empty batch");
  const Eigen::Index n_chunks = (batch + kChunkColumns - 1) / kChunkColumns;
  std::vector<Vector> values(static_cast<std::size_t>(n_chunks));
  std::vector<FlowGradient> grads;
  if (grad) grads.assign(static_cast<std::size_t>(n_chunks), model.zero_gradient());
  parallel_for(static_cast<std::size_t>(n_chunks), threads, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * kChunkColumns;
    const Eigen::Index len = std::min(kChunkColumns, batch - begin);
    values[c] = fn(begin, len, grad ? &grads[c] : nullptr);
  });
  LossEval out;
  out.per_sample.resize(batch);
  for (Eigen::Index c = 0; c < n_chunks; ++c)
    out.per_sample.segment(c * kChunkColumns, values[static_cast<std::size_t>(c)].size()) = values[static_cast<std::size_t>(c)];
  if (!out.per_sample.allFinite()) throw NumericFailure("loss: non-finite per-sample value");
  const Estimate e = mean_and_stderr(out.per_sample);
  out.loss = e.mean;
  out.std_error = e.std_error;
  if (grad) {
    *grad = std::move(grads[0]);
    for (std::size_t c = 1; c < grads.size(); ++c) *grad += grads[c];
  }
  return out;
}

}  // namespace detail

/// Monte Carlo estimate of beta*G_x over latent draws z (N x B); optional
/// symmetrized density ln[(p_G(x) + p_G(-x))/2]. Gradients of the batch mean
/// are written to `grad` when non-null.
inline LossEval reverse_kl_loss(const FlowModel& model, const ShiftedCoupling& sc, double beta, const Matrix& z,
                                bool symmetrize, FlowGradient* grad = nullptr, unsigned threads = 1) {
  require(beta > 0, "reverse_kl_loss: beta must be positive");
  require(z.rows() == model.n_spins() && model.n_spins() == sc.n_spins(), "reverse_kl_loss: dimension mismatch");
  const double inv_b = 1.0 / static_cast<double>(z.cols());
  const double c = detail::log_normal_const(model.n_spins());
  return detail::chunked_loss(model, z.cols(), grad, threads,
                              [&](Eigen::Index begin, Eigen::Index len, FlowGradient* g) -> Vector {
    const Matrix zc = z.middleCols(begin, len);
    FlowTape fwd;
    const FlowResult fr = model.forward(zc, g ? &fwd : nullptr);
    const Matrix& x = fr.out;
    const Vector energy = beta * hamiltonian_density_batch(x, sc, beta);
    const Vector log_pa = (-0.5 * zc.colwise().squaredNorm().transpose()).array() - c - fr.log_det.array();
    if (!symmetrize) {
      if (g) {
        const Matrix d_x = (beta * inv_b) * grad_hamiltonian_density_batch(x, sc, beta);
        model.backward(fwd, d_x, Vector::Constant(len, -inv_b), *g);
      }
      return energy + log_pa;
    }
    FlowTape inv;
    const FlowResult ir = model.inverse(-x, g ? &inv : nullptr);
    const Vector log_pb = (-0.5 * ir.out.colwise().squaredNorm().transpose()).array() - c + ir.log_det.array();
    Vector log_sym(len), w_a(len);
    for (Eigen::Index k = 0; k < len; ++k) {
      log_sym[k] = log_add_exp(log_pa[k], log_pb[k]) - std::numbers::ln2;
      w_a[k] = logistic(log_pa[k] - log_pb[k]);
    }
    if (g) {
      const Vector w_b = (1.0 - w_a.array()).matrix();
      // branch through p_G(-x): d/dz' of -|z'|^2/2 is -z', d/d(logdet) is +1
      const Matrix d_zp = -(ir.out * w_b.asDiagonal()) * inv_b;
      const Matrix d_neg_x = model.backward(inv, d_zp, w_b * inv_b, *g);
      const Matrix d_x = (beta * inv_b) * grad_hamiltonian_density_batch(x, sc, beta) - d_neg_x;
      model.backward(fwd, d_x, -w_a * inv_b, *g);
    }
    return energy + log_sym;
  });
}

/// Mean negative log-likelihood of data columns x (N x B).
inline LossEval forward_kl_loss(const FlowModel& model, const Matrix& x, FlowGradient* grad = nullptr,
                                unsigned threads = 1) {
  require(x.rows() == model.n_spins(), "forward_kl_loss: dimension mismatch");
  const double inv_b = 1.0 / static_cast<double>(x.cols());
  const double c = detail::log_normal_const(model.n_spins());
  return detail::chunked_loss(model, x.cols(), grad, threads,
                              [&](Eigen::Index begin, Eigen::Index len, FlowGradient* g) -> Vector {
    FlowTape inv;
    const FlowResult ir = model.inverse(x.middleCols(begin, len), g ? &inv : nullptr);
    if (g) model.backward(inv, ir.out * inv_b, Vector::Constant(len, -inv_b), *g);
    return (0.5 * ir.out.colwise().squaredNorm().transpose()).array() + c - ir.log_det.array();
  });
}

/// One bias-corrected Adam update of a parameter block, in place. `t` is the
/// 1-based step index.
inline void adam_update(Eigen::Ref<Eigen::ArrayXd> param, const Eigen::Ref<const Eigen::ArrayXd>& grad,
                        Eigen::Ref<Eigen::ArrayXd> m, Eigen::Ref<Eigen::ArrayXd> v, long t, double lr,
                        const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
}

/// Adam moment state shaped like a model's parameters.
class Adam {
 public:
  Adam(const FlowModel& model, double lr, AdamConfig cfg = {})
      : m_(model.zero_gradient()), v_(model.zero_gradient()), lr_(lr), cfg_(cfg) {}

  void step(FlowModel& model, const FlowGradient& grad) {
    ++t_;
    auto params = model.dense_blocks();
    const auto g = grad.dense_blocks();
    auto m = m_.dense_blocks();
    auto v = v_.dense_blocks();
    if (params.size() != g.size()) throw InvalidState("adam: gradient layout mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto as_array = [](auto& mat) { return Eigen::Map<Eigen::ArrayXd>(mat.data(), mat.size()); };
      auto as_carray = [](const auto& mat) { return Eigen::Map<const Eigen::ArrayXd>(mat.data(), mat.size()); };
      adam_update(as_array(params[k]->weight), as_carray(g[k]->weight), as_array(m[k]->weight),
                  as_array(v[k]->weight), t_, lr_, cfg_);
      adam_update(as_array(params[k]->bias), as_carray(g[k]->bias), as_array(m[k]->bias), as_array(v[k]->bias), t_,
                  lr_, cfg_);
    }
  }

  long steps() const { return t_; }

 private:
  FlowGradient m_, v_;
  double lr_;
  AdamConfig cfg_;
  long t_ = 0;
};

inline double gradient_norm(const FlowGradient& g) {
  double sq = 0.0;
  for (const auto* d : g.dense_blocks()) sq += d->weight.squaredNorm() + d->bias.squaredNorm();
  return std::sqrt(sq);
}

struct LossSnapshot {
  long update = 0;
  double loss = 0.0;
  double std_error = 0.0;
  double wall_seconds = 0.0;
};

struct LossTrace {
  std::vector<double> losses;  // one per completed update (batch estimate)
  std::vector<LossSnapshot> snapshots;
};

struct TrainCallbacks {
  std::function<void(long update, const FlowModel&)> on_checkpoint;
  std::function<void(const LossSnapshot&)> on_snapshot;
};

/// Runs cfg.n_updates Adam steps on `model` in place. Forward mode cycles
/// seed-shuffled minibatches over the rows of `data`; reverse mode draws
/// fresh latent batches and needs no data.
inline LossTrace train(FlowModel& model, const TrainConfig& cfg, const ShiftedCoupling& sc,
                       const std::optional<RowMatrix>& data = std::nullopt, const TrainCallbacks& cb = {}) {
  cfg.validate();
  require(model.n_spins() == sc.n_spins(), "train: model and target dimensions differ");
  const bool fwd = cfg.loss_kind == LossKind::kForward;
  if (fwd) {
    if (!data || data->rows() == 0) throw InvalidArgument("train: forward mode requires a dataset");
    require(data->cols() == model.n_spins(), "train: dataset width differs from model");
    require(data->rows() >= cfg.batch_size, "train: dataset smaller than one batch");
  }

  const auto t0 = std::chrono::steady_clock::now();
  Rng latent_rng = derive_rng(cfg.seed, {0x7265});
  Rng eval_rng = derive_rng(cfg.seed, {0x6576});
  Adam adam(model, cfg.learning_rate, cfg.adam);
  LossTrace trace;
  trace.losses.reserve(static_cast<std::size_t>(cfg.n_updates));

  // forward-mode minibatch schedule
  std::vector<Eigen::Index> order;
  std::size_t cursor = 0;
  long epoch = 0;
  auto reshuffle = [&] {
    order.resize(static_cast<std::size_t>(data->rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng r = derive_rng(cfg.seed, {0x6570, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), r);
    cursor = 0;
  };
  auto gather = [&](const std::vector<Eigen::Index>& rows, std::size_t begin, std::size_t count) {
    Matrix x(model.n_spins(), static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k) x.col(static_cast<Eigen::Index>(k)) = data->row(rows[begin + k]).transpose();
    return x;
  };

  Matrix eval_x;
  if (fwd) {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(data->rows()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    Rng r = derive_rng(cfg.seed, {0x6576, 1});
    std::shuffle(rows.begin(), rows.end(), r);
    eval_x = gather(rows, 0, static_cast<std::size_t>(std::min<Eigen::Index>(cfg.eval_batch, data->rows())));
    reshuffle();
  }

  auto evaluate = [&](long update) {
    LossEval e;
    if (fwd) {
      e = forward_kl_loss(model, eval_x, nullptr, cfg.threads);
    } else {
      Rng r = eval_rng;  // same evaluation draws at every snapshot
      const Matrix z = standard_normal(model.n_spins(), cfg.eval_batch, r);
      e = reverse_kl_loss(model, sc, cfg.beta, z, cfg.symmetrize, nullptr, cfg.threads);
    }
    LossSnapshot snap{update, e.loss, e.std_error,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    trace.snapshots.push_back(snap);
    if (cb.on_snapshot) cb.on_snapshot(snap);
  };

  if (cfg.eval_every > 0) evaluate(0);
  for (long u = 1; u <= cfg.n_updates; ++u) {
    FlowGradient grad = model.zero_gradient();
    LossEval e;
    try {
      if (fwd) {
        if (cursor + static_cast<std::size_t>(cfg.batch_size) > order.size()) {
          ++epoch;
          reshuffle();
        }
        const Matrix x = gather(order, cursor, static_cast<std::size_t>(cfg.batch_size));
        cursor += static_cast<std::size_t>(cfg.batch_size);
        e = forward_kl_loss(model, x, &grad, cfg.threads);
      } else {
        const Matrix z = standard_normal(model.n_spins(), cfg.batch_size, latent_rng);
        e = reverse_kl_loss(model, sc, cfg.beta, z, cfg.symmetrize, &grad, cfg.threads);
      }
    } catch (const NumericFailure& err) {
      throw NumericFailure("train: update " + std::to_string(u) + " aborted: " + err.what());
    }
    if (!std::isfinite(e.loss)) throw NumericFailure("train: non-finite loss at update " + std::to_string(u));
    if (cfg.clip_norm > 0) {
      const double norm = gradient_norm(grad);
      if (norm > cfg.clip_norm) grad *= cfg.clip_norm / norm;
    }
    adam.step(model, grad);
    trace.losses.push_back(e.loss);
    if (cfg.eval_every > 0 && (u % cfg.eval_every == 0 || u == cfg.n_updates)) evaluate(u);
    if (cb.on_checkpoint && cfg.checkpoint_every > 0 && u % cfg.checkpoint_every == 0 && u != cfg.n_updates)
      cb.on_checkpoint(u, model);
  }
  if (cb.on_checkpoint) cb.on_checkpoint(cfg.n_updates, model);
  return trace;
}

}  // namespace sgflow

#endif  // SGFLOW_TRAINER_HPP
