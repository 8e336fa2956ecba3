#pragma once

// Small dense networks with hand-written backprop. Templated on the scalar so
// that training runs in float while gradient checks run in double.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "gridwall/errors.hpp"

namespace gridwall {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Fully connected net: tanh on hidden layers, identity on the output.
/// Batches are column-major, one sample per column.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
  };
  using Gradient = std::vector<Layer>;

  /// Per-layer inputs and post-activation outputs of one forward pass.
  struct Tape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
  };

  Mlp() = default;

  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ContractError("Mlp: need at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ContractError("Mlp: layer sizes must be positive");
      layers_.push_back(Layer{Matrix::Zero(sizes_[l + 1], sizes_[l]), Vector::Zero(sizes_[l + 1])});
    }
  }

  /// Glorot-uniform weights, zero biases.
  template <typename Rng>
  void initialize(Rng& rng) {
    for (auto& layer : layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = static_cast<Scalar>(u(rng));
      layer.bias.setZero();
    }
  }

  void zero_output_layer() {
    layers_.back().weight.setZero();
    layers_.back().bias.setZero();
  }

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Matrix forward(const Matrix& x, Tape* tape = nullptr) const {
    if (x.rows() != input_dim()) {
      throw ContractError("Mlp::forward: expected " + std::to_string(input_dim()) + " input rows, got " +
                          std::to_string(x.rows()));
    }
    if (tape) {
      tape->inputs.clear();
      tape->outputs.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weight * h;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
      if (tape) {
        tape->inputs.push_back(std::move(h));
        tape->outputs.push_back(z);
      }
      h = std::move(z);
    }
    return h;
  }

  /// Accumulates parameter gradients into `grad`; returns the gradient w.r.t. the input batch.
  Matrix backward(const Tape& tape, const Matrix& grad_out, Gradient& grad) const {
    Matrix g = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (l + 1 < layers_.size()) {
        g = (g.array() * (Scalar(1) - tape.outputs[l].array().square())).matrix();
      }
      grad[l].weight.noalias() += g * tape.inputs[l].transpose();
      grad[l].bias += g.rowwise().sum();
      g = layers_[l].weight.transpose() * g;
    }
    return g;
  }

  Gradient zero_gradient() const {
    Gradient g;
    for (const auto& layer : layers_) {
      g.push_back(Layer{Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
    }
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    return n;
  }

  /// Parameters in layer order, each layer weight (column-major) then bias.
  std::vector<Scalar> flat() const {
    std::vector<Scalar> out;
    out.reserve(parameter_count());
    for (const auto& layer : layers_) {
      out.insert(out.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
      out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
    return out;
  }

  void assign_flat(std::span<const Scalar> params) {
    if (params.size() != parameter_count()) throw ContractError("Mlp::assign_flat: parameter count mismatch");
    std::size_t at = 0;
    for (auto& layer : layers_) {
      std::copy_n(params.data() + at, layer.weight.size(), layer.weight.data());
      at += static_cast<std::size_t>(layer.weight.size());
      std::copy_n(params.data() + at, layer.bias.size(), layer.bias.data());
      at += static_cast<std::size_t>(layer.bias.size());
    }
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(sizes_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.layers()[l].weight = layers_[l].weight.template cast<Other>();
      out.layers()[l].bias = layers_[l].bias.template cast<Other>();
    }
    return out;
  }

  bool operator==(const Mlp& o) const {
    if (sizes_ != o.sizes_) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (layers_[l].weight != o.layers_[l].weight || layers_[l].bias != o.layers_[l].bias) return false;
    }
    return true;
  }

 private:
  std::vector<int> sizes_;
  std::vector<Layer> layers_;
};

/// Flattened view of a gradient, same order as Mlp::flat().
template <typename Scalar>
std::vector<Scalar> flatten(const typename Mlp<Scalar>::Gradient& g) {
  std::vector<Scalar> out;
  for (const auto& layer : g) {
    out.insert(out.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  return out;
}

/// Polyak averaging: target <- (1 - tau) target + tau source.
template <typename Scalar>
void soft_update(Mlp<Scalar>& target, const Mlp<Scalar>& source, Scalar tau) {
  for (std::size_t l = 0; l < target.layers().size(); ++l) {
    auto& t = target.layers()[l];
    const auto& s = source.layers()[l];
    t.weight = (Scalar(1) - tau) * t.weight + tau * s.weight;
    t.bias = (Scalar(1) - tau) * t.bias + tau * s.bias;
  }
}

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const Mlp<Scalar>& net, Scalar lr) : lr_(lr), m_(net.zero_gradient()), v_(net.zero_gradient()) {}

  void step(Mlp<Scalar>& net, const typename Mlp<Scalar>::Gradient& grad) {
    ++t_;
    const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(static_cast<double>(beta1_), t_));
    const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(static_cast<double>(beta2_), t_));
    for (std::size_t l = 0; l < grad.size(); ++l) {
      update(net.layers()[l].weight, m_[l].weight, v_[l].weight, grad[l].weight, c1, c2);
      update(net.layers()[l].bias, m_[l].bias, v_[l].bias, grad[l].bias, c1, c2);
    }
  }

  long steps() const { return t_; }

 private:
  template <typename P, typename G>
  void update(P& param, P& m, P& v, const G& g, Scalar c1, Scalar c2) {
    m = beta1_ * m + (Scalar(1) - beta1_) * g;
    v = beta2_ * v + (Scalar(1) - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  Scalar lr_ = Scalar(3e-4);
  Scalar beta1_ = Scalar(0.9);
  Scalar beta2_ = Scalar(0.999);
  Scalar eps_ = Scalar(1e-8);
  long t_ = 0;
  typename Mlp<Scalar>::Gradient m_;
  typename Mlp<Scalar>::Gradient v_;
};

/// Adam on a single scalar parameter (the entropy temperature).
template <typename Scalar>
class ScalarAdam {
 public:
  explicit ScalarAdam(Scalar lr = Scalar(3e-4)) : lr_(lr) {}

  void step(Scalar& param, Scalar g) {
    ++t_;
    m_ = Scalar(0.9) * m_ + Scalar(0.1) * g;
    v_ = Scalar(0.999) * v_ + Scalar(0.001) * g * g;
    const Scalar mh = m_ / (Scalar(1) - static_cast<Scalar>(std::pow(0.9, t_)));
    const Scalar vh = v_ / (Scalar(1) - static_cast<Scalar>(std::pow(0.999, t_)));
    param -= lr_ * mh / (std::sqrt(vh) + Scalar(1e-8));
  }

 private:
  Scalar lr_;
  Scalar m_ = 0;
  Scalar v_ = 0;
  long t_ = 0;
};

}  // namespace gridwall
