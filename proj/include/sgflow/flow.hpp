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

#ifndef SGFLOW_FLOW_HPP
#define SGFLOW_FLOW_HPP

// Real NVP normalizing flow built from masked affine coupling layers.
//
// A layer with active set A (mask m = 1 on A) maps
//
//   y_out = y * exp(s) + t,   s = m * s_net(u), t = m * t_net(u), u = (1 - m) * y,
//
// so indices outside A pass through unchanged and ln|det| = sum(s). Both
// networks see the full width-N input with the active entries zeroed and are
// evaluated (never inverted) in both directions.
//
// Batches are N x B matrices, one sample per column. Layer l in [0, L) maps
// z_(l) to z_(l+1); z_(0) is the Gaussian latent and z_(L) the physical x.

#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "sgflow/common.hpp"
#include "sgflow/mlp.hpp"

namespace sgflow {

struct CouplingLayer {
  Vector mask;  // 1.0 on the transformed set, 0.0 on the pass-through set
  Mlp s_net;    // final tanh
  Mlp t_net;    // final identity
};

struct FlowOptions {
  int hidden_layers = 3;
  int hidden_width = 0;  // 0 means N
  double slope = 0.01;
};

struct FlowResult {
  Matrix out;
  Vector log_det;  // per column; ln|det d out / d in|
};

/// Gradient buffer with the same layout as a FlowModel's parameters.
struct FlowGradient {
  struct Layer {
    std::vector<Dense> s_net;
    std::vector<Dense> t_net;
  };
  std::vector<Layer> layers;

  FlowGradient& operator+=(const FlowGradient& o) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t k = 0; k < layers[l].s_net.size(); ++k) {
        layers[l].s_net[k].weight += o.layers[l].s_net[k].weight;
        layers[l].s_net[k].bias += o.layers[l].s_net[k].bias;
      }
      for (std::size_t k = 0; k < layers[l].t_net.size(); ++k) {
        layers[l].t_net[k].weight += o.layers[l].t_net[k].weight;
        layers[l].t_net[k].bias += o.layers[l].t_net[k].bias;
      }
    }
    return *this;
  }

  FlowGradient& operator*=(double c) {
    for (auto* d : dense_blocks()) {
      d->weight *= c;
      d->bias *= c;
    }
    return *this;
  }

  std::vector<Dense*> dense_blocks() {
    std::vector<Dense*> out;
    for (auto& l : layers) {
      for (auto& d : l.s_net) out.push_back(&d);
      for (auto& d : l.t_net) out.push_back(&d);
    }
    return out;
  }

  std::vector<const Dense*> dense_blocks() const {
    std::vector<const Dense*> out;
    for (const auto& l : layers) {
      for (const auto& d : l.s_net) out.push_back(&d);
      for (const auto& d : l.t_net) out.push_back(&d);
    }
    return out;
  }

  /// Parameters in declared order: per layer, s_net then t_net, per dense W (column-major) then b.
  Vector flatten() const {
    std::vector<double> v;
    for (const auto* d : dense_blocks()) {
      v.insert(v.end(), d->weight.data(), d->weight.data() + d->weight.size());
      v.insert(v.end(), d->bias.data(), d->bias.data() + d->bias.size());
    }
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
};

/// Intermediate values recorded by a forward or inverse pass.
struct FlowTape {
  enum class Direction { kForward, kInverse };
  struct Layer {
    int index = 0;
    Matrix input;
    Matrix output;
    Matrix s;      // masked scale
    Matrix exp_s;  // exp(s)
    Mlp::Tape s_tape;
    Mlp::Tape t_tape;
  };
  Direction direction = Direction::kForward;
  const void* model = nullptr;
  int n_spins = 0;
  Eigen::Index batch = 0;
  std::vector<Layer> layers;  // in application order
};

class FlowModel {
 public:
  static constexpr int kFormatVersion = 1;

  FlowModel() = default;
  FlowModel(int n_spins, std::vector<CouplingLayer> layers, std::uint64_t seed)
      : n_spins_(n_spins), layers_(std::move(layers)), seed_(seed) {
    validate();
  }

  /// Random complementary masks and small random weights.
  static FlowModel init(int n_spins, int n_layers, std::uint64_t seed, const FlowOptions& opt = {}) {
    if (n_spins < 2) throw InvalidArgument("init_flow: n_spins must be >= 2");
    if (n_layers < 2 || n_layers % 2 != 0) throw InvalidArgument("init_flow: n_layers must be even and >= 2");
    Rng rng = derive_rng(seed, {0x666c6f77});
    const int width = opt.hidden_width > 0 ? opt.hidden_width : n_spins;
    std::vector<int> dims{n_spins};
    for (int h = 0; h < opt.hidden_layers; ++h) dims.push_back(width);
    dims.push_back(n_spins);

    std::vector<CouplingLayer> layers;
    Vector mask;
    for (int l = 0; l < n_layers; ++l) {
      if (l % 2 == 0) {
        do {
          mask = Vector(n_spins);
          for (int i = 0; i < n_spins; ++i) mask[i] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
        } while (mask.sum() == 0.0 || mask.sum() == n_spins);
      } else {
        mask = (1.0 - mask.array()).matrix();
      }
      CouplingLayer layer;
      layer.mask = mask;
      layer.s_net = Mlp(dims, Activation::kTanh, opt.slope, rng);
      layer.t_net = Mlp(dims, Activation::kIdentity, opt.slope, rng);
      layers.push_back(std::move(layer));
    }
    return FlowModel(n_spins, std::move(layers), seed);
  }

  int n_spins() const { return n_spins_; }
  int n_layers() const { return static_cast<int>(layers_.size()); }
  std::uint64_t seed() const { return seed_; }
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& layers() { return layers_; }

  /// Applies layers [0, up_to) to the columns of z.
  FlowResult forward(const Matrix& z, int up_to, FlowTape* tape = nullptr) const {
    check_batch(z, up_to);
    start_tape(tape, FlowTape::Direction::kForward, z.cols());
    FlowResult r{z, Vector::Zero(z.cols())};
    for (int l = 0; l < up_to; ++l) {
      const auto& layer = layers_[static_cast<std::size_t>(l)];
      FlowTape::Layer rec;
      Matrix s, t;
      eval_nets(layer, r.out, s, t, tape ? &rec : nullptr);
      Matrix exp_s = s.array().exp().matrix();
      Matrix out = r.out.cwiseProduct(exp_s) + t;
      if (!out.allFinite()) throw NumericFailure("flow forward: non-finite output at layer " + std::to_string(l));
      r.log_det += s.colwise().sum().transpose();
      if (tape) {
        rec.index = l;
        rec.input = std::move(r.out);
        rec.output = out;
        rec.s = std::move(s);
        rec.exp_s = std::move(exp_s);
        tape->layers.push_back(std::move(rec));
      }
      r.out = std::move(out);
    }
    return r;
  }

  FlowResult forward(const Matrix& z, FlowTape* tape = nullptr) const { return forward(z, n_layers(), tape); }

  /// Undoes layers [0, from) in reverse order. log_det is ln|det d out / d in|
  /// of the inverse map.
  FlowResult inverse(const Matrix& x, int from, FlowTape* tape = nullptr) const {
    check_batch(x, from);
    start_tape(tape, FlowTape::Direction::kInverse, x.cols());
    FlowResult r{x, Vector::Zero(x.cols())};
    for (int l = from - 1; l >= 0; --l) {
      const auto& layer = layers_[static_cast<std::size_t>(l)];
      FlowTape::Layer rec;
      Matrix s, t;
      eval_nets(layer, r.out, s, t, tape ? &rec : nullptr);
      Matrix exp_s = s.array().exp().matrix();
      Matrix out = (r.out - t).cwiseQuotient(exp_s);
      if (!out.allFinite()) throw NumericFailure("flow inverse: non-finite output at layer " + std::to_string(l));
      r.log_det -= s.colwise().sum().transpose();
      if (tape) {
        rec.index = l;
        rec.input = std::move(r.out);
        rec.output = out;
        rec.s = std::move(s);
        rec.exp_s = std::move(exp_s);
        tape->layers.push_back(std::move(rec));
      }
      r.out = std::move(out);
    }
    return r;
  }

  FlowResult inverse(const Matrix& x, FlowTape* tape = nullptr) const { return inverse(x, n_layers(), tape); }

  /// Reverse-mode pass over a recorded tape. Given the adjoints of the pass
  /// output and of its per-column log-det, accumulates parameter gradients
  /// into `grad` and returns the adjoint of the pass input.
  Matrix backward(const FlowTape& tape, const Matrix& d_out, const Vector& d_log_det, FlowGradient& grad) const {
    if (tape.model != this || tape.n_spins != n_spins_)
      throw InvalidState("flow backward: tape was recorded by a different model");
    if (d_out.rows() != n_spins_ || d_out.cols() != tape.batch || d_log_det.size() != tape.batch)
      throw InvalidState("flow backward: adjoint shape does not match tape");
    if (grad.layers.size() != layers_.size()) throw InvalidState("flow backward: gradient layout mismatch");
    const Eigen::RowVectorXd dld = d_log_det.transpose();
    Matrix d = d_out;
    for (auto it = tape.layers.rbegin(); it != tape.layers.rend(); ++it) {
      const auto& rec = *it;
      const auto& layer = layers_[static_cast<std::size_t>(rec.index)];
      auto& g = grad.layers[static_cast<std::size_t>(rec.index)];
      Matrix d_in, d_s, d_t;
      if (tape.direction == FlowTape::Direction::kForward) {
        // out = in * e^s + t,  log_det += sum(s)
        d_in = d.cwiseProduct(rec.exp_s);
        d_s = d.cwiseProduct(rec.input).cwiseProduct(rec.exp_s);
        d_s.rowwise() += dld;
        d_t = d;
      } else {
        // out = (in - t) * e^{-s},  log_det -= sum(s)
        d_in = d.cwiseQuotient(rec.exp_s);
        d_t = -d_in;
        d_s = -d.cwiseProduct(rec.output);
        d_s.rowwise() -= dld;
      }
      d_s = layer.mask.asDiagonal() * d_s;
      d_t = layer.mask.asDiagonal() * d_t;
      Matrix d_u = layer.s_net.backward(rec.s_tape, d_s, g.s_net);
      d_u += layer.t_net.backward(rec.t_tape, d_t, g.t_net);
      const Vector pass = (1.0 - layer.mask.array()).matrix();
      d_in += pass.asDiagonal() * d_u;
      d = std::move(d_in);
    }
    return d;
  }

  /// ln p_G(x) with a standard-normal prior, per column.
  Vector log_density(const Matrix& x) const {
    const FlowResult r = inverse(x);
    const double c = 0.5 * n_spins_ * std::log(2.0 * std::numbers::pi);
    return (-0.5 * r.out.colwise().squaredNorm().transpose()).array() - c + r.log_det.array();
  }

  /// Hamiltonian density of the layer-l variable:
  /// 1/2 |G_l^{-1}(z_l)|^2 - ln|det dG_l^{-1}/dz_l|, per column.
  Vector internal_hamiltonian(int l, const Matrix& z_l) const {
    if (l < 0 || l > n_layers()) throw InvalidArgument("internal_hamiltonian: layer out of range");
    const FlowResult r = inverse(z_l, l);
    return (0.5 * r.out.colwise().squaredNorm().transpose()).array() - r.log_det.array();
  }

  FlowGradient zero_gradient() const {
    FlowGradient g;
    for (const auto& l : layers_) g.layers.push_back({l.s_net.zero_gradient(), l.t_net.zero_gradient()});
    return g;
  }

  std::vector<Dense*> dense_blocks() {
    std::vector<Dense*> out;
    for (auto& l : layers_) {
      for (auto& d : l.s_net.layers()) out.push_back(&d);
      for (auto& d : l.t_net.layers()) out.push_back(&d);
    }
    return out;
  }

  std::vector<const Dense*> dense_blocks() const {
    std::vector<const Dense*> out;
    for (const auto& l : layers_) {
      for (const auto& d : l.s_net.layers()) out.push_back(&d);
      for (const auto& d : l.t_net.layers()) out.push_back(&d);
    }
    return out;
  }

  Vector flatten_params() const {
    std::vector<double> v;
    for (const auto* d : dense_blocks()) {
      v.insert(v.end(), d->weight.data(), d->weight.data() + d->weight.size());
      v.insert(v.end(), d->bias.data(), d->bias.data() + d->bias.size());
    }
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void set_params(const Vector& flat) {
    Eigen::Index k = 0;
    for (auto* d : dense_blocks()) {
      const auto nw = d->weight.size(), nb = d->bias.size();
      if (k + nw + nb > flat.size()) throw InvalidArgument("set_params: parameter vector too short");
      d->weight = Eigen::Map<const Matrix>(flat.data() + k, d->weight.rows(), d->weight.cols());
      k += nw;
      d->bias = flat.segment(k, nb);
      k += nb;
    }
    if (k != flat.size()) throw InvalidArgument("set_params: parameter vector too long");
  }

  Eigen::Index n_params() const {
    Eigen::Index n = 0;
    for (const auto* d : dense_blocks()) n += d->weight.size() + d->bias.size();
    return n;
  }

  void validate() const {
    if (n_spins_ < 2) throw InvalidArgument("flow: n_spins must be >= 2");
    if (layers_.empty()) throw InvalidArgument("flow: no layers");
    for (const auto& l : layers_) {
      if (l.mask.size() != n_spins_) throw InvalidArgument("flow: mask width mismatch");
      const double active = l.mask.sum();
      if (active == 0.0 || active == n_spins_) throw InvalidArgument("flow: degenerate mask");
      for (Eigen::Index i = 0; i < n_spins_; ++i)
        if (l.mask[i] != 0.0 && l.mask[i] != 1.0) throw InvalidArgument("flow: mask entries must be 0 or 1");
      for (const Mlp* net : {&l.s_net, &l.t_net})
        if (net->dims().front() != n_spins_ || net->dims().back() != n_spins_)
          throw InvalidArgument("flow: coupling networks must map R^N to R^N");
    }
  }

 private:
  void check_batch(const Matrix& m, int n_applied) const {
    if (m.rows() != n_spins_) throw InvalidArgument("flow: batch has wrong row count");
    if (n_applied < 0 || n_applied > n_layers()) throw InvalidArgument("flow: layer index out of range");
    if (!m.allFinite()) throw NumericFailure("flow: non-finite input");
  }

  void start_tape(FlowTape* tape, FlowTape::Direction dir, Eigen::Index batch) const {
    if (!tape) return;
    tape->direction = dir;
    tape->model = this;
    tape->n_spins = n_spins_;
    tape->batch = batch;
    tape->layers.clear();
  }

  void eval_nets(const CouplingLayer& layer, const Matrix& y, Matrix& s, Matrix& t, FlowTape::Layer* rec) const {
    const Vector pass = (1.0 - layer.mask.array()).matrix();
    const Matrix u = pass.asDiagonal() * y;
    s = layer.mask.asDiagonal() * layer.s_net.forward(u, rec ? &rec->s_tape : nullptr);
    t = layer.mask.asDiagonal() * layer.t_net.forward(u, rec ? &rec->t_tape : nullptr);
  }

  int n_spins_ = 0;
  std::vector<CouplingLayer> layers_;
  std::uint64_t seed_ = 0;
};

inline FlowModel init_flow(int n_spins, int n_layers, std::uint64_t seed, const FlowOptions& opt = {}) {
  return FlowModel::init(n_spins, n_layers, seed, opt);
}

/// Single coupling layer applied to one vector: (y_out, ln|det|).
inline std::pair<Vector, double> affine_forward(const CouplingLayer& layer, const Vector& y) {
  FlowModel one(static_cast<int>(y.size()), {layer}, 0);
  FlowResult r = one.forward(y, 1);
  return {r.out.col(0), r.log_det[0]};
}

inline Vector affine_inverse(const CouplingLayer& layer, const Vector& y_out) {
  FlowModel one(static_cast<int>(y_out.size()), {layer}, 0);
  return one.inverse(y_out, 1).out.col(0);
}

/// Draws n latent samples and pushes them through the first `up_to` layers.
inline Matrix sample_flow(const FlowModel& model, Eigen::Index n, int up_to, Rng& rng) {
  if (up_to < 0 || up_to > model.n_layers()) throw InvalidArgument("sample_flow: layer out of range");
  if (n == 0) return Matrix(model.n_spins(), 0);
  const Matrix z = standard_normal(model.n_spins(), n, rng);
  return model.forward(z, up_to).out;
}

}  // namespace sgflow

#endif  // SGFLOW_FLOW_HPP
