#include "gsdrive/nn.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "gsdrive/error.hpp"

namespace gsdrive {

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "layer bias does not match weight rows");
    }
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "layer dimensions do not chain");
    }
  }
}

Network Network::mlp(const std::vector<int>& dims, Rng& rng, double output_gain) {
  if (dims.size() < 2) throw Error(ErrorCode::kInvalidArgument, "network needs >= 2 dims");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const bool last = l + 2 == dims.size();
    Layer layer;
    layer.weight.resize(dims[l + 1], dims[l]);
    layer.bias = Eigen::VectorXd::Zero(dims[l + 1]);
    layer.activation = last ? Activation::kLinear : Activation::kTanh;
    const double limit =
        std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1])) * (last ? output_gain : 1.0);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        layer.weight(r, c) = rng.uniform(-limit, limit);
      }
    }
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

Network Network::zeros(const std::vector<int>& dims) {
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.weight = Eigen::MatrixXd::Zero(dims[l + 1], dims[l]);
    layer.bias = Eigen::VectorXd::Zero(dims[l + 1]);
    layer.activation = l + 2 == dims.size() ? Activation::kLinear : Activation::kTanh;
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

int Network::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Network::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void Network::check_input(const Eigen::MatrixXd& inputs) const {
  if (layers_.empty()) throw Error(ErrorCode::kInvalidArgument, "network has no layers");
  if (inputs.rows() != input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "network input has " + std::to_string(inputs.rows()) + " rows, expected " +
                    std::to_string(input_dim()));
  }
  if (!inputs.allFinite()) throw Error(ErrorCode::kNonFinite, "network input is not finite");
}

Eigen::VectorXd Network::forward(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& inputs) const {
  check_input(inputs);
  Eigen::MatrixXd x = inputs;
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = l.weight * x;
    z.colwise() += l.bias;
    if (l.activation == Activation::kTanh) z = z.array().tanh();
    x = std::move(z);
  }
  return x;
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& inputs, Trace& trace) const {
  check_input(inputs);
  trace.values.clear();
  trace.values.reserve(layers_.size() + 1);
  trace.values.push_back(inputs);
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = l.weight * trace.values.back();
    z.colwise() += l.bias;
    if (l.activation == Activation::kTanh) z = z.array().tanh();
    trace.values.push_back(std::move(z));
  }
  return trace.values.back();
}

Eigen::MatrixXd Network::backward(const Trace& trace, const Eigen::MatrixXd& upstream,
                                  NetworkGrad& grad) const {
  if (trace.values.size() != layers_.size() + 1) {
    throw Error(ErrorCode::kShapeMismatch, "trace does not belong to this network");
  }
  if (upstream.rows() != output_dim() || upstream.cols() != trace.values.back().cols()) {
    throw Error(ErrorCode::kShapeMismatch, "upstream gradient shape mismatch");
  }
  if (grad.weight.size() != layers_.size()) grad = NetworkGrad(*this);
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer& l = layers_[k];
    if (l.activation == Activation::kTanh) {
      delta = delta.cwiseProduct((1.0 - trace.values[k + 1].array().square()).matrix());
    }
    grad.weight[k].noalias() += delta * trace.values[k].transpose();
    grad.bias[k] += delta.rowwise().sum();
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

void Network::copy_params_to(std::span<double> out) const {
  std::size_t o = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) out[o++] = l.weight.data()[i];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out[o++] = l.bias[i];
  }
}

void Network::set_params_from(std::span<const double> in) {
  std::size_t o = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = in[o++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = in[o++];
  }
}

NetworkGrad::NetworkGrad(const Network& net) {
  for (const auto& l : net.layers()) {
    weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
}

void NetworkGrad::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

void NetworkGrad::copy_to(std::span<double> out) const {
  std::size_t o = 0;
  for (std::size_t k = 0; k < weight.size(); ++k) {
    for (Eigen::Index i = 0; i < weight[k].size(); ++i) out[o++] = weight[k].data()[i];
    for (Eigen::Index i = 0; i < bias[k].size(); ++i) out[o++] = bias[k][i];
  }
}

BackwardResult backward(const Network& net, const Eigen::VectorXd& input,
                        const Eigen::VectorXd& upstream) {
  Network::Trace trace;
  net.forward(Eigen::MatrixXd(input), trace);
  BackwardResult r{NetworkGrad(net), {}};
  r.input = net.backward(trace, Eigen::MatrixXd(upstream), r.params).col(0);
  return r;
}

std::size_t total_parameters(std::span<const Network* const> nets) {
  std::size_t n = 0;
  for (const Network* net : nets) n += net->parameter_count();
  return n;
}

Eigen::VectorXd flatten_params(std::span<const Network* const> nets) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(total_parameters(nets)));
  std::size_t o = 0;
  for (const Network* net : nets) {
    const std::size_t n = net->parameter_count();
    net->copy_params_to(std::span<double>(flat.data() + o, n));
    o += n;
  }
  return flat;
}

void unflatten_params(std::span<Network* const> nets, const Eigen::VectorXd& flat) {
  std::size_t o = 0;
  for (Network* net : nets) {
    const std::size_t n = net->parameter_count();
    net->set_params_from(std::span<const double>(flat.data() + o, n));
    o += n;
  }
}

Eigen::VectorXd flatten_grads(std::span<const NetworkGrad* const> grads) {
  std::size_t total = 0;
  for (const NetworkGrad* g : grads) {
    for (std::size_t k = 0; k < g->weight.size(); ++k) {
      total += static_cast<std::size_t>(g->weight[k].size() + g->bias[k].size());
    }
  }
  Eigen::VectorXd flat(static_cast<Eigen::Index>(total));
  std::size_t o = 0;
  for (const NetworkGrad* g : grads) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < g->weight.size(); ++k) {
      n += static_cast<std::size_t>(g->weight[k].size() + g->bias[k].size());
    }
    g->copy_to(std::span<double>(flat.data() + o, n));
    o += n;
  }
  return flat;
}

AdamOptimizer::AdamOptimizer(std::size_t parameter_count, AdamConfig config)
    : config_(config),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))) {}

bool AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match parameter count");
  }
  if (!grads.allFinite()) {
    warning_ = "non-finite gradient; update skipped at step " + std::to_string(steps_);
    std::fprintf(stderr, "warning: %s\n", warning_.c_str());
    return false;
  }
  warning_.clear();
  Eigen::VectorXd g = grads;
  const double norm = g.norm();
  if (config_.max_grad_norm > 0.0 && norm > config_.max_grad_norm) {
    g *= config_.max_grad_norm / norm;
  }
  ++steps_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * g;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  params.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + config_.epsilon);
  return true;
}

}  // namespace gsdrive
