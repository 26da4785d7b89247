#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gsdrive/checkpoint.hpp"
#include "gsdrive/error.hpp"
#include "gsdrive/nn.hpp"
#include "test_util.hpp"

namespace gsdrive {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gsdrive_test_nn_" + name);
}

TEST(Forward, ZeroNetGivesZero) {
  const Network net = Network::zeros({4, 8, 3});
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(4, [&] { return rng.normal(0, 3); });
    EXPECT_EQ(net.forward(x), Eigen::VectorXd::Zero(3));
  }
}

TEST(Forward, LinearIdentity) {
  Layer l{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::kLinear};
  const Network net({l});
  const Eigen::Vector3d x(1.5, -2.0, 0.25);
  EXPECT_EQ(net.forward(Eigen::VectorXd(x)), Eigen::VectorXd(x));
}

TEST(Forward, GoldenOutputIsStable) {
  Rng rng(20240601);
  const Network net = Network::mlp({3, 16, 16, 2}, rng);
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd(Eigen::Vector3d(0.3, -0.7, 1.1)));
  // Captured from this implementation and frozen.
  EXPECT_EQ(y[0], 0x1.8e8b66ba1f5e9p-1);
  EXPECT_EQ(y[1], 0x1.2a0cb39030768p-2);
}

TEST(Forward, BatchedMatchesPerColumn) {
  Rng rng(2);
  const Network net = Network::mlp({5, 12, 4}, rng);
  Eigen::MatrixXd xs(5, 7);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = rng.normal();
  const Eigen::MatrixXd ys = net.forward(xs);
  for (int c = 0; c < 7; ++c) EXPECT_EQ(ys.col(c), net.forward(Eigen::VectorXd(xs.col(c))));
}

TEST(Forward, RejectsBadInput) {
  Rng rng(3);
  const Network net = Network::mlp({3, 4, 2}, rng);
  try {
    net.forward(Eigen::VectorXd(Eigen::VectorXd::Zero(4)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  Eigen::VectorXd nan = Eigen::VectorXd::Zero(3);
  nan[1] = std::nan("");
  try {
    net.forward(nan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(Network, RejectsUnchainedLayers) {
  Layer a{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4), Activation::kTanh};
  Layer b{Eigen::MatrixXd::Zero(2, 5), Eigen::VectorXd::Zero(2), Activation::kLinear};
  EXPECT_THROW(Network({a, b}), Error);
  Layer bad_bias{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(3), Activation::kTanh};
  EXPECT_THROW(Network({bad_bias}), Error);
}

TEST(Backward, LinearLayerRowIsInput) {
  Rng rng(4);
  Layer l{Eigen::MatrixXd::NullaryExpr(2, 3, [&] { return rng.normal(); }), Eigen::VectorXd::Zero(2),
          Activation::kLinear};
  const Network net({l});
  const Eigen::Vector3d x(0.5, -1.0, 2.0);
  const BackwardResult r = backward(net, Eigen::VectorXd(x), Eigen::VectorXd(Eigen::Vector2d(1, 0)));
  EXPECT_EQ(Eigen::VectorXd(r.params.weight[0].row(0).transpose()), Eigen::VectorXd(x));
  EXPECT_EQ(Eigen::VectorXd(r.params.weight[0].row(1).transpose()), Eigen::VectorXd::Zero(3));
  EXPECT_EQ(r.params.bias[0], Eigen::VectorXd(Eigen::Vector2d(1, 0)));
  EXPECT_EQ(r.input, Eigen::VectorXd(l.weight.row(0).transpose()));
}

TEST(Backward, ZeroUpstreamGivesZero) {
  Rng rng(5);
  const Network net = Network::mlp({3, 6, 6, 2}, rng);
  const BackwardResult r = backward(net, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(2));
  std::vector<const NetworkGrad*> g{&r.params};
  EXPECT_EQ(flatten_grads(g).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.input, Eigen::VectorXd::Zero(3));
}

TEST(Backward, MatchesFiniteDifferencesOnRandomNets) {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const int in = 2 + static_cast<int>(rng.index(4)), out = 1 + static_cast<int>(rng.index(3));
    Network net = Network::mlp({in, 7, 5, out}, rng);
    for (auto& l : net.layers()) l.bias = Eigen::VectorXd::NullaryExpr(l.bias.size(), [&] { return rng.normal(0, 0.3); });
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(in, [&] { return rng.normal(); });
    const Eigen::VectorXd w = Eigen::VectorXd::NullaryExpr(out, [&] { return rng.normal(); });

    const BackwardResult r = backward(net, x, w);
    std::vector<const NetworkGrad*> gs{&r.params};
    std::vector<const Network*> ns{&net};
    const Eigen::VectorXd theta = flatten_params(ns);
    Network probe = net;
    std::vector<Network*> ps{&probe};
    const auto f_params = [&](const Eigen::VectorXd& p) {
      unflatten_params(ps, p);
      return w.dot(probe.forward(x));
    };
    EXPECT_TRUE(test::gradients_match(flatten_grads(gs), test::numeric_gradient(f_params, theta))) << "trial " << trial;
    const auto f_input = [&](const Eigen::VectorXd& xi) { return w.dot(net.forward(xi)); };
    EXPECT_TRUE(test::gradients_match(r.input, test::numeric_gradient(f_input, x))) << "trial " << trial;
  }
}

TEST(Backward, BatchedGradientIsColumnSum) {
  Rng rng(7);
  const Network net = Network::mlp({3, 5, 2}, rng);
  Eigen::MatrixXd xs(3, 4), up(2, 4);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.normal();
  Network::Trace trace;
  net.forward(xs, trace);
  NetworkGrad batched(net);
  net.backward(trace, up, batched);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  for (int c = 0; c < 4; ++c) {
    const BackwardResult r = backward(net, xs.col(c), up.col(c));
    std::vector<const NetworkGrad*> g{&r.params};
    sum += flatten_grads(g);
  }
  std::vector<const NetworkGrad*> b{&batched};
  EXPECT_LT((flatten_grads(b) - sum).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, RejectsShapeMismatch) {
  Rng rng(8);
  const Network net = Network::mlp({3, 5, 2}, rng);
  Network::Trace trace;
  net.forward(Eigen::MatrixXd::Ones(3, 2), trace);
  NetworkGrad g(net);
  EXPECT_THROW(net.backward(trace, Eigen::MatrixXd::Ones(3, 2), g), Error);
  EXPECT_THROW(net.backward(trace, Eigen::MatrixXd::Ones(2, 3), g), Error);
}

TEST(Adam, ZeroGradientLeavesParams) {
  AdamOptimizer opt(3, AdamConfig{});
  Eigen::VectorXd p(3);
  p << 1, -2, 3;
  const Eigen::VectorXd before = p;
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(opt.step(p, Eigen::VectorXd::Zero(3)));
  EXPECT_EQ(p, before);
}

TEST(Adam, DescendsOnSquare) {
  AdamConfig c;
  c.learning_rate = 0.1;
  AdamOptimizer opt(1, c);
  Eigen::VectorXd w(1);
  w << 1.0;
  opt.step(w, 2.0 * w);
  EXPECT_LT(w[0], 1.0);
  // First bias-corrected step moves by lr (up to the epsilon guard).
  EXPECT_NEAR(w[0], 0.9, 1e-7);
}

TEST(Adam, ConvergesOnQuadratic) {
  AdamConfig c;
  c.learning_rate = 0.05;
  AdamOptimizer opt(2, c);
  Eigen::VectorXd w(2);
  w << 1.0, -0.5;
  // f(w) = w0^2 + 3 w1^2
  for (int i = 0; i < 200; ++i) opt.step(w, Eigen::Vector2d(2 * w[0], 6 * w[1]));
  EXPECT_LT(w.norm(), 1e-3);
}

TEST(Adam, MatchesReferenceUpdate) {
  AdamConfig c;
  c.learning_rate = 0.01;
  c.max_grad_norm = 0.0;
  AdamOptimizer opt(2, c);
  Eigen::VectorXd w = Eigen::Vector2d(0.5, 0.5);
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {0.5, 0.5};
  Rng rng(9);
  for (int t = 1; t <= 20; ++t) {
    const Eigen::Vector2d g(rng.normal(), rng.normal());
    opt.step(w, g);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_NEAR(w[0], ref[0], 1e-14);
  EXPECT_NEAR(w[1], ref[1], 1e-14);
  EXPECT_EQ(opt.step_count(), 20);
}

TEST(Adam, ClipsGlobalNorm) {
  AdamConfig c;
  c.max_grad_norm = 1.0;
  AdamOptimizer clipped(2, c), plain(2, c);
  Eigen::VectorXd a = Eigen::Vector2d::Zero(), b = Eigen::Vector2d::Zero();
  clipped.step(a, Eigen::Vector2d(30, 40));
  plain.step(b, Eigen::Vector2d(0.6, 0.8));
  EXPECT_EQ(clipped.first_moment(), plain.first_moment());
  EXPECT_EQ(a, b);
}

TEST(Adam, SkipsNonFiniteGradient) {
  AdamOptimizer opt(2, AdamConfig{});
  Eigen::VectorXd w = Eigen::Vector2d(1, 2);
  EXPECT_FALSE(opt.step(w, Eigen::Vector2d(std::nan(""), 0)));
  EXPECT_EQ(w, Eigen::VectorXd(Eigen::Vector2d(1, 2)));
  EXPECT_EQ(opt.step_count(), 0);
  EXPECT_FALSE(opt.last_warning().empty());
  EXPECT_THROW(opt.step(w, Eigen::VectorXd::Zero(3)), Error);
}

TEST(Checkpoint, NetworkRoundTripIsExact) {
  Rng rng(10);
  const Network a = Network::mlp({4, 9, 3}, rng), b = Network::mlp({3, 2}, rng);
  TensorMap t;
  put_network(t, "enc", a);
  put_network(t, "head", b);
  put_scalar(t, "meta/pi", M_PI);
  put_u64(t, "meta/id", 0xfedcba9876543210ull);
  const auto path = temp_path("roundtrip.ckpt");
  write_checkpoint(path, t);
  const TensorMap back = read_checkpoint(path);
  std::filesystem::remove(path);
  const Network a2 = get_network(back, "enc"), b2 = get_network(back, "head");
  std::vector<const Network*> n1{&a, &b}, n2{&a2, &b2};
  EXPECT_EQ(flatten_params(n1), flatten_params(n2));
  EXPECT_EQ(a2.layers().back().activation, Activation::kLinear);
  EXPECT_EQ(a2.layers().front().activation, Activation::kTanh);
  EXPECT_EQ(get_scalar(back, "meta/pi"), M_PI);
  EXPECT_EQ(get_u64(back, "meta/id"), 0xfedcba9876543210ull);
}

TEST(Checkpoint, HeaderStartsWithMagic) {
  TensorMap t;
  put_scalar(t, "x", 1.0);
  const auto path = temp_path("magic.ckpt");
  write_checkpoint(path, t);
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "GSNN0001");
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  const auto path = temp_path("bad.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT and some bytes";
  }
  try {
    read_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
  }
  TensorMap t;
  put_network(t, "n", Network::zeros({3, 4}));
  write_checkpoint(path, t);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(read_checkpoint(path), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(get_network(TensorMap{}, "missing"), Error);
}

}  // namespace
}  // namespace gsdrive
