#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "penprior/error.hpp"

namespace penprior {

enum class Activation { ReLU, Tanh };

inline std::string_view to_string(Activation a) { return a == Activation::ReLU ? "relu" : "tanh"; }

/// Weights W (n_l x P_l): row i holds the incoming weights of neuron i.
struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  std::vector<char> alive;

  int n_out() const { return static_cast<int>(W.rows()); }
  int n_in() const { return static_cast<int>(W.cols()); }
};

/// Fully connected classifier. Hidden neurons may be pruned; output neurons never are.
struct MLPModel {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::ReLU;

  /// Glorot-uniform initialization, seed-deterministic.
  static MLPModel make(int n_inputs, const std::vector<int>& hidden, int n_outputs, Activation act,
                       std::uint64_t seed) {
    require(n_inputs >= 1 && n_outputs >= 1, ErrorKind::InvalidParameter, "layer sizes must be >= 1");
    MLPModel m;
    m.activation = act;
    std::mt19937_64 rng(seed);
    std::vector<int> sizes{n_inputs};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(n_outputs);
    for (std::size_t l = 1; l < sizes.size(); ++l) {
      require(sizes[l] >= 1, ErrorKind::InvalidParameter, "layer sizes must be >= 1");
      DenseLayer layer;
      const double bound = std::sqrt(6.0 / (sizes[l - 1] + sizes[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      layer.W.resize(sizes[l], sizes[l - 1]);
      for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
        for (Eigen::Index j = 0; j < layer.W.cols(); ++j) layer.W(i, j) = u(rng);
      layer.b = Eigen::VectorXd::Zero(sizes[l]);
      layer.alive.assign(static_cast<std::size_t>(sizes[l]), 1);
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  std::size_t n_layers() const { return layers.size(); }
  bool is_hidden(std::size_t l) const { return l + 1 < layers.size(); }
  int n_inputs() const { return layers.front().n_in(); }

  void validate() const {
    require(!layers.empty(), ErrorKind::ShapeMismatch, "model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      require(L.b.size() == L.W.rows() && L.alive.size() == static_cast<std::size_t>(L.W.rows()),
              ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " bias or mask size mismatch");
      if (l > 0)
        require(L.W.cols() == layers[l - 1].W.rows(), ErrorKind::ShapeMismatch,
                "layer " + std::to_string(l) + " does not compose with its predecessor");
    }
  }

  /// Removes hidden neuron i of layer l: zero row, bias and outgoing column.
  void prune_neuron(std::size_t l, Eigen::Index i) {
    require(is_hidden(l), ErrorKind::InvalidParameter, "output neurons are never pruned");
    layers[l].alive[static_cast<std::size_t>(i)] = 0;
    layers[l].W.row(i).setZero();
    layers[l].b(i) = 0.0;
    layers[l + 1].W.col(i).setZero();
  }

  /// Re-applies the masks so pruned parameters stay exactly zero.
  void apply_masks() {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (!is_hidden(l)) continue;
      for (std::size_t i = 0; i < layers[l].alive.size(); ++i)
        if (!layers[l].alive[i]) prune_neuron(l, static_cast<Eigen::Index>(i));
    }
  }

  /// Alive neurons per hidden layer.
  std::vector<int> alive_counts() const {
    std::vector<int> out;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      int c = 0;
      for (char a : layers[l].alive) c += a ? 1 : 0;
      out.push_back(c);
    }
    return out;
  }

  int hidden_neurons() const {
    int c = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) c += static_cast<int>(layers[l].alive.size());
    return c;
  }

  /// Weights connecting alive neurons (inputs always alive); biases excluded.
  long alive_weight_count() const {
    long total = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      long in_alive = l == 0 ? layers[0].n_in() : 0;
      if (l > 0)
        for (char a : layers[l - 1].alive) in_alive += a ? 1 : 0;
      long out_alive = 0;
      for (char a : layers[l].alive) out_alive += a ? 1 : 0;
      total += in_alive * out_alive;
    }
    return total;
  }
};

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

struct ForwardBackward {
  double loss = 0.0;
  Gradients grads;
};

namespace detail {

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  return a == Activation::ReLU ? Eigen::MatrixXd(z.cwiseMax(0.0)) : Eigen::MatrixXd(z.array().tanh().matrix());
}

/// d act / dz expressed through the activation output.
inline Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& z, const Eigen::MatrixXd& out, Activation a) {
  if (a == Activation::ReLU) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - out.array().square()).matrix();
}

/// Column-wise log-softmax of logits (classes x batch).
inline Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    const double lse = mx + std::log((logits.col(c).array() - mx).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

}  // namespace detail

/// Logits (classes x batch) for inputs given as columns.
inline Eigen::MatrixXd forward(const MLPModel& model, const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Eigen::MatrixXd z = (model.layers[l].W * a).colwise() + model.layers[l].b;
    a = model.is_hidden(l) ? detail::activate(z, model.activation) : z;
  }
  return a;
}

/// Mean cross-entropy over the batch and its exact gradients. `inputs` holds one
/// sample per column.
inline ForwardBackward forward_backward(const MLPModel& model, const Eigen::MatrixXd& inputs,
                                        std::span<const int> labels) {
  model.validate();
  require(inputs.rows() == model.n_inputs(), ErrorKind::ShapeMismatch, "input dimension does not match the model");
  require(inputs.cols() == static_cast<Eigen::Index>(labels.size()) && !labels.empty(), ErrorKind::ShapeMismatch,
          "batch size and label count differ");
  const std::size_t L = model.layers.size();
  std::vector<Eigen::MatrixXd> acts{inputs};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < L; ++l) {
    pre.push_back((model.layers[l].W * acts.back()).colwise() + model.layers[l].b);
    acts.push_back(model.is_hidden(l) ? detail::activate(pre.back(), model.activation) : pre.back());
  }
  const Eigen::MatrixXd logp = detail::log_softmax(acts.back());
  const auto batch = static_cast<double>(labels.size());
  ForwardBackward out;
  Eigen::MatrixXd delta = logp.array().exp().matrix();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const int y = labels[c];
    require(y >= 0 && y < logp.rows(), ErrorKind::InvalidParameter, "label outside class range");
    out.loss -= logp(y, static_cast<Eigen::Index>(c));
    delta(y, static_cast<Eigen::Index>(c)) -= 1.0;
  }
  out.loss /= batch;
  delta /= batch;
  out.grads.dW.resize(L);
  out.grads.db.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    out.grads.dW[l] = delta * acts[l].transpose();
    out.grads.db[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = model.layers[l].W.transpose() * delta;
      delta.array() *= detail::activation_slope(pre[l - 1], acts[l], model.activation).array();
    }
  }
  // Pruned neurons carry no gradient.
  for (std::size_t l = 0; l + 1 < L; ++l) {
    for (std::size_t i = 0; i < model.layers[l].alive.size(); ++i) {
      if (model.layers[l].alive[i]) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      out.grads.dW[l].row(ii).setZero();
      out.grads.db[l](ii) = 0.0;
      out.grads.dW[l + 1].col(ii).setZero();
    }
  }
  return out;
}

/// Fraction of correctly classified columns.
inline double accuracy(const MLPModel& model, const Eigen::MatrixXd& inputs, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const Eigen::MatrixXd logits = forward(model, inputs);
  std::size_t hit = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    Eigen::Index best = 0;
    logits.col(static_cast<Eigen::Index>(c)).maxCoeff(&best);
    hit += best == labels[c] ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace penprior
