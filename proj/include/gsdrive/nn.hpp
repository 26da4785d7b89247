#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsdrive/rng.hpp"

namespace gsdrive {

enum class Activation { kTanh, kLinear };

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kTanh;
};

struct NetworkGrad;

/// Feedforward network. Batched calls take one sample per column.
class Network {
 public:
  /// Per-layer activations recorded by the forward pass; values[0] is the input.
  struct Trace {
    std::vector<Eigen::MatrixXd> values;
  };

  Network() = default;
  explicit Network(std::vector<Layer> layers);

  /// dims = {in, hidden..., out}; tanh hidden layers, linear output. Weights
  /// are Glorot-uniform, the output layer scaled by output_gain; biases zero.
  static Network mlp(const std::vector<int>& dims, Rng& rng, double output_gain = 1.0);
  static Network zeros(const std::vector<int>& dims);

  int input_dim() const;
  int output_dim() const;
  std::size_t parameter_count() const;
  bool empty() const { return layers_.empty(); }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Trace& trace) const;

  /// Reverse pass over a recorded trace. Parameter gradients are accumulated
  /// into `grad` (summed over columns); returns d/d input.
  Eigen::MatrixXd backward(const Trace& trace, const Eigen::MatrixXd& upstream,
                           NetworkGrad& grad) const;

  void copy_params_to(std::span<double> out) const;
  void set_params_from(std::span<const double> in);

 private:
  void check_input(const Eigen::MatrixXd& inputs) const;

  std::vector<Layer> layers_;
};

struct NetworkGrad {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  NetworkGrad() = default;
  explicit NetworkGrad(const Network& net);
  void set_zero();
  void copy_to(std::span<double> out) const;
};

/// Single-sample convenience wrapper around the traced forward/backward.
struct BackwardResult {
  NetworkGrad params;
  Eigen::VectorXd input;
};
BackwardResult backward(const Network& net, const Eigen::VectorXd& input,
                        const Eigen::VectorXd& upstream);

/// Flat views over several networks, in order.
std::size_t total_parameters(std::span<const Network* const> nets);
Eigen::VectorXd flatten_params(std::span<const Network* const> nets);
void unflatten_params(std::span<Network* const> nets, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten_grads(std::span<const NetworkGrad* const> grads);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
};

/// Bias-corrected adaptive-moment optimizer with global-norm clipping.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::size_t parameter_count, AdamConfig config);

  /// Returns false (and leaves everything untouched) on non-finite gradients.
  bool step(Eigen::VectorXd& params, const Eigen::VectorXd& grads);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  long step_count() const { return steps_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  const std::string& last_warning() const { return warning_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long steps_ = 0;
  std::string warning_;
};

}  // namespace gsdrive
