#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "neqlab/rng.hpp"
#include "neqlab/types.hpp"

namespace neqlab {

/// Hidden-layer nonlinearity. smooth_gated is GELU (tanh form),
/// sigmoid_linear is SiLU.
enum class Activation { smooth_gated, sigmoid_linear, tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::smooth_gated: return "smooth_gated";
    case Activation::sigmoid_linear: return "sigmoid_linear";
    case Activation::tanh: return "tanh";
  }
  return "tanh";
}

inline Activation activation_from_string(const std::string& name) {
  if (name == "smooth_gated") return Activation::smooth_gated;
  if (name == "sigmoid_linear") return Activation::sigmoid_linear;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation: " + name);
}

/// Dense feed-forward network. Layer i maps layer_sizes[i] -> layer_sizes[i+1];
/// weights[i] is (out x in). Hidden layers share one activation, the output
/// layer is linear.
struct DenseNet {
  std::vector<int> layer_sizes;
  Activation activation = Activation::tanh;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static DenseNet zeros(std::vector<int> sizes, Activation act = Activation::tanh) {
    if (sizes.size() < 2) throw ShapeError("DenseNet needs at least input and output sizes");
    DenseNet net;
    net.layer_sizes = std::move(sizes);
    net.activation = act;
    for (std::size_t i = 0; i + 1 < net.layer_sizes.size(); ++i) {
      if (net.layer_sizes[i] < 1 || net.layer_sizes[i + 1] < 1) throw ShapeError("layer sizes must be positive");
      net.weights.push_back(Eigen::MatrixXd::Zero(net.layer_sizes[i + 1], net.layer_sizes[i]));
      net.biases.push_back(Eigen::VectorXd::Zero(net.layer_sizes[i + 1]));
    }
    return net;
  }

  /// Fan-in scaled uniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static DenseNet init(std::vector<int> sizes, Activation act, RngStream& rng) {
    DenseNet net = zeros(std::move(sizes), act);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_sizes[l]));
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c)
        for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) net.weights[l](r, c) = rng.uniform(-bound, bound);
      for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) net.biases[l](r) = rng.uniform(-bound, bound);
    }
    return net;
  }

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t n_layers() const { return weights.size(); }

  std::size_t n_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  void check_shapes() const {
    if (weights.size() + 1 != layer_sizes.size() || biases.size() != weights.size())
      throw ShapeError("DenseNet: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
          biases[l].size() != layer_sizes[l + 1])
        throw ShapeError("DenseNet: layer " + std::to_string(l) + " has inconsistent shape");
    }
  }
};

/// Parameter-shaped container, used for gradients and optimizer moments.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Gradients zeros_like(const DenseNet& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
      g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
  }

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }

  Gradients& operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  bool matches(const DenseNet& net) const {
    if (weights.size() != net.n_layers() || biases.size() != net.n_layers()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != net.weights[l].rows() || weights[l].cols() != net.weights[l].cols() ||
          biases[l].size() != net.biases[l].size())
        return false;
    }
    return true;
  }
};

namespace detail {

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline void activate(Activation act, const Eigen::MatrixXd& pre, Eigen::MatrixXd& post) {
  switch (act) {
    case Activation::tanh:
      post = pre.array().tanh();
      break;
    case Activation::sigmoid_linear:
      post = pre.array() / (1.0 + (-pre.array()).exp());
      break;
    case Activation::smooth_gated:
      post = 0.5 * pre.array() * (1.0 + (kGeluC * (pre.array() + 0.044715 * pre.array().cube())).tanh());
      break;
  }
}

/// Multiplies `upstream` in place by the activation derivative.
inline void activation_backward(Activation act, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post,
                                Eigen::MatrixXd& upstream) {
  switch (act) {
    case Activation::tanh:
      upstream.array() *= 1.0 - post.array().square();
      break;
    case Activation::sigmoid_linear: {
      const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-pre.array()).exp());
      upstream.array() *= sig * (1.0 + pre.array() * (1.0 - sig));
      break;
    }
    case Activation::smooth_gated: {
      const Eigen::ArrayXXd x = pre.array();
      const Eigen::ArrayXXd th = (kGeluC * (x + 0.044715 * x.cube())).tanh();
      upstream.array() *= 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th.square()) * kGeluC * (1.0 + 3.0 * 0.044715 * x.square());
      break;
    }
  }
}

}  // namespace detail

/// Per-layer activations retained for the backward pass. post[0] is the
/// input batch; columns are batch items.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> post;
};

/// Batched forward pass; `inputs` is (input_size x batch).
inline Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs, ForwardTrace* trace = nullptr) {
  if (inputs.rows() != net.input_size())
    throw ShapeError("forward: input has " + std::to_string(inputs.rows()) + " rows, expected " +
                     std::to_string(net.input_size()));
  Eigen::MatrixXd a = inputs;
  if (trace) {
    trace->pre.resize(net.n_layers());
    trace->post.resize(net.n_layers() + 1);
    trace->post[0] = inputs;
  }
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    Eigen::MatrixXd z = net.weights[l] * a;
    z.colwise() += net.biases[l];
    if (l + 1 == net.n_layers()) {
      a = std::move(z);
      if (trace) trace->post[l + 1] = a;
    } else {
      detail::activate(net.activation, z, a);
      if (trace) {
        trace->pre[l] = std::move(z);
        trace->post[l + 1] = a;
      }
    }
  }
  return a;
}

/// Reverse pass for a traced batch. Parameter gradients are summed over the
/// batch into `grads`; input gradients are written to `input_grad` if given.
inline void backward_batch(const DenseNet& net, const ForwardTrace& trace, const Eigen::MatrixXd& cotangent,
                           Gradients& grads, Eigen::MatrixXd* input_grad = nullptr) {
  if (cotangent.rows() != net.output_size() || cotangent.cols() != trace.post[0].cols())
    throw ShapeError("backward: cotangent shape does not match the network output");
  if (!grads.matches(net)) throw ShapeError("backward: gradient container does not match the network");
  Eigen::MatrixXd delta = cotangent;
  for (std::size_t l = net.n_layers(); l-- > 0;) {
    grads.weights[l].noalias() += delta * trace.post[l].transpose();
    grads.biases[l] += delta.rowwise().sum();
    if (l == 0 && !input_grad) break;
    Eigen::MatrixXd upstream = net.weights[l].transpose() * delta;
    if (l > 0) detail::activation_backward(net.activation, trace.pre[l - 1], trace.post[l], upstream);
    delta = std::move(upstream);
  }
  if (input_grad) *input_grad = std::move(delta);
}

inline std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
  const Eigen::MatrixXd y = forward_batch(net, x);
  return {y.data(), y.data() + y.size()};
}

struct Backward {
  Gradients params;
  std::vector<double> input;
};

/// Vector-Jacobian product of a single evaluation.
inline Backward backward(const DenseNet& net, std::span<const double> input, std::span<const double> output_cotangent) {
  if (static_cast<int>(input.size()) != net.input_size()) throw ShapeError("backward: input size mismatch");
  if (static_cast<int>(output_cotangent.size()) != net.output_size())
    throw ShapeError("backward: cotangent size mismatch");
  ForwardTrace trace;
  forward_batch(net, Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size())), &trace);
  Backward out{Gradients::zeros_like(net), {}};
  Eigen::MatrixXd input_grad;
  const Eigen::MatrixXd cot =
      Eigen::Map<const Eigen::VectorXd>(output_cotangent.data(), static_cast<Eigen::Index>(output_cotangent.size()));
  backward_batch(net, trace, cot, out.params, &input_grad);
  out.input.assign(input_grad.data(), input_grad.data() + input_grad.size());
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct OptimizerState {
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Gradients first_moment;
  Gradients second_moment;

  static OptimizerState for_net(const DenseNet& net, double lr = 1e-3) {
    OptimizerState s;
    s.learning_rate = lr;
    s.first_moment = Gradients::zeros_like(net);
    s.second_moment = Gradients::zeros_like(net);
    return s;
  }
};

/// Bias-corrected adaptive-moment update.
inline void optimizer_step(DenseNet& net, const Gradients& grads, OptimizerState& state) {
  if (!grads.matches(net) || !state.first_moment.matches(net) || !state.second_moment.matches(net))
    throw ShapeError("optimizer_step: gradient or moment shapes do not match the network");
  if (!grads.all_finite()) throw NumericError("optimizer_step: non-finite gradient");
  ++state.step_count;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    param.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    update(net.weights[l], grads.weights[l], state.first_moment.weights[l], state.second_moment.weights[l]);
    update(net.biases[l], grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw ShapeError("checkpoint: bad matrix rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ShapeError("checkpoint: bad matrix cols");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, Eigen::Index size) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != size) throw ShapeError("checkpoint: bad vector size");
  return Eigen::Map<const Eigen::VectorXd>(values.data(), size);
}

inline nlohmann::json params_to_json(const Gradients& g) {
  nlohmann::json w = nlohmann::json::array(), b = nlohmann::json::array();
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    w.push_back(matrix_to_json(g.weights[l]));
    b.push_back(vector_to_json(g.biases[l]));
  }
  return {{"weights", w}, {"biases", b}};
}

inline Gradients params_from_json(const nlohmann::json& j, const DenseNet& shape) {
  Gradients g = Gradients::zeros_like(shape);
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    g.weights[l] = matrix_from_json(j.at("weights").at(l), g.weights[l].rows(), g.weights[l].cols());
    g.biases[l] = vector_from_json(j.at("biases").at(l), g.biases[l].size());
  }
  return g;
}

}  // namespace detail

/// {layer_sizes, activation, weights (row-major nested), biases[, optimizer]}.
/// nlohmann emits shortest round-trip decimals, so parameters restore bit-exactly.
inline nlohmann::json checkpoint_json(const DenseNet& net, const OptimizerState* opt = nullptr) {
  net.check_shapes();
  nlohmann::json j;
  j["layer_sizes"] = net.layer_sizes;
  j["activation"] = to_string(net.activation);
  const auto params = detail::params_to_json(Gradients{net.weights, net.biases});
  j["weights"] = params["weights"];
  j["biases"] = params["biases"];
  if (opt) {
    j["optimizer"] = {{"step_count", opt->step_count},
                      {"learning_rate", opt->learning_rate},
                      {"beta1", opt->beta1},
                      {"beta2", opt->beta2},
                      {"epsilon", opt->epsilon},
                      {"first_moment", detail::params_to_json(opt->first_moment)},
                      {"second_moment", detail::params_to_json(opt->second_moment)}};
  }
  return j;
}

inline DenseNet net_from_checkpoint(const nlohmann::json& j, OptimizerState* opt = nullptr) {
  try {
    DenseNet net = DenseNet::zeros(j.at("layer_sizes").get<std::vector<int>>(),
                                   activation_from_string(j.at("activation").get<std::string>()));
    const Gradients params = detail::params_from_json(j, net);
    net.weights = params.weights;
    net.biases = params.biases;
    if (opt && j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      opt->step_count = o.at("step_count").get<long>();
      opt->learning_rate = o.at("learning_rate").get<double>();
      opt->beta1 = o.at("beta1").get<double>();
      opt->beta2 = o.at("beta2").get<double>();
      opt->epsilon = o.at("epsilon").get<double>();
      opt->first_moment = detail::params_from_json(o.at("first_moment"), net);
      opt->second_moment = detail::params_from_json(o.at("second_moment"), net);
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network checkpoint: ") + e.what());
  }
}

}  // namespace neqlab
