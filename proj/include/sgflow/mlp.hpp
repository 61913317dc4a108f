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

#ifndef SGFLOW_MLP_HPP
#define SGFLOW_MLP_HPP

#include <string>
#include <vector>

#include "sgflow/common.hpp"

namespace sgflow {

enum class Activation { kLeakyRelu, kTanh, kIdentity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  throw InvalidArgument("unknown activation: " + s);
}

/// Fully connected layer, out x in.
struct Dense {
  Matrix weight;
  Vector bias;
};

/// Dense network acting on column batches. Hidden layers use a leaky
/// rectifier, the last layer uses `final_activation`.
class Mlp {
 public:
  /// Activations recorded by forward() for the matching backward().
  struct Tape {
    std::vector<Matrix> inputs;  // input to each dense layer
    std::vector<Matrix> pre;     // pre-activation of each dense layer
  };

  Mlp() = default;

  /// Weights uniform in +-1/sqrt(fan_in), zero biases.
  Mlp(std::vector<int> dims, Activation final_activation, double slope, Rng& rng)
      : dims_(std::move(dims)), final_(final_activation), slope_(slope) {
    check_dims();
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int fan_in = dims_[l], fan_out = dims_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Dense d{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
      for (int c = 0; c < fan_in; ++c)
        for (int r = 0; r < fan_out; ++r) d.weight(r, c) = u(rng);
      layers_.push_back(std::move(d));
    }
  }

  static Mlp zeros(std::vector<int> dims, Activation final_activation, double slope) {
    Mlp m;
    m.dims_ = std::move(dims);
    m.final_ = final_activation;
    m.slope_ = slope;
    m.check_dims();
    for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l)
      m.layers_.push_back(Dense{Matrix::Zero(m.dims_[l + 1], m.dims_[l]), Vector::Zero(m.dims_[l + 1])});
    return m;
  }

  Matrix forward(const Matrix& in, Tape* tape = nullptr) const {
    if (in.rows() != dims_.front()) throw InvalidArgument("Mlp::forward: input width mismatch");
    if (tape) {
      tape->inputs.clear();
      tape->pre.clear();
    }
    Matrix h = in;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix pre = layers_[l].weight * h;
      pre.colwise() += layers_[l].bias;
      if (tape) {
        tape->inputs.push_back(std::move(h));
        tape->pre.push_back(pre);
      }
      h = activate(pre, activation_of(l));
    }
    return h;
  }

  /// Accumulates parameter gradients into `grad` and returns d(objective)/d(input).
  Matrix backward(const Tape& tape, const Matrix& d_out, std::vector<Dense>& grad) const {
    if (tape.pre.size() != layers_.size() || grad.size() != layers_.size())
      throw InvalidState("Mlp::backward: tape or gradient does not match network");
    Matrix d = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& pre = tape.pre[l];
      Matrix d_pre = d.cwiseProduct(derivative(pre, activation_of(l)));
      grad[l].weight.noalias() += d_pre * tape.inputs[l].transpose();
      grad[l].bias.noalias() += d_pre.rowwise().sum();
      d.noalias() = layers_[l].weight.transpose() * d_pre;
    }
    return d;
  }

  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }
  const std::vector<int>& dims() const { return dims_; }
  Activation final_activation() const { return final_; }
  double slope() const { return slope_; }

  std::vector<Dense> zero_gradient() const {
    std::vector<Dense> g;
    for (const auto& l : layers_) g.push_back(Dense{Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    return g;
  }

 private:
  void check_dims() const {
    if (dims_.size() < 2) throw InvalidArgument("Mlp: need at least input and output widths");
    for (int d : dims_)
      if (d < 1) throw InvalidArgument("Mlp: widths must be positive");
  }

  Activation activation_of(std::size_t l) const {
    return l + 1 == layers_.size() ? final_ : Activation::kLeakyRelu;
  }

  Matrix activate(const Matrix& pre, Activation a) const {
    switch (a) {
      case Activation::kLeakyRelu: return pre.unaryExpr([s = slope_](double v) { return v > 0 ? v : s * v; });
      case Activation::kTanh: return pre.array().tanh().matrix();
      case Activation::kIdentity: return pre;
    }
    return pre;
  }

  Matrix derivative(const Matrix& pre, Activation a) const {
    switch (a) {
      case Activation::kLeakyRelu: return pre.unaryExpr([s = slope_](double v) { return v > 0 ? 1.0 : s; });
      case Activation::kTanh: return (1.0 - pre.array().tanh().square()).matrix();
      case Activation::kIdentity: return Matrix::Ones(pre.rows(), pre.cols());
    }
    return Matrix::Ones(pre.rows(), pre.cols());
  }

  std::vector<int> dims_;
  Activation final_ = Activation::kIdentity;
  double slope_ = 0.01;
  std::vector<Dense> layers_;
};

}  // namespace sgflow

#endif  // SGFLOW_MLP_HPP
