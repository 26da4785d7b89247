#include "gsdrive/flowhead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gsdrive/error.hpp"

namespace gsdrive {

Eigen::VectorXd ModeAnchors::frequencies() const {
  Eigen::VectorXd w(modes());
  double total = 0.0;
  for (int m = 0; m < modes(); ++m) total += member_counts[m];
  for (int m = 0; m < modes(); ++m) w[m] = member_counts[m] / total;
  return w;
}

namespace {

int nearest_row(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x, double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace

ModeAnchors cluster_modes(const Eigen::MatrixXd& data, int modes, std::uint64_t seed, int max_iters) {
  const int n = static_cast<int>(data.rows());
  if (modes < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one mode");
  if (n < modes) {
    throw Error(ErrorCode::kDatasetTooSmall, "dataset of " + std::to_string(n) + " cannot form " +
                                                 std::to_string(modes) + " clusters");
  }
  Rng rng(seed);
  Eigen::MatrixXd c(modes, data.cols());
  c.row(0) = data.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
  Eigen::VectorXd d2(n);
  for (int k = 1; k < modes; ++k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double d;
      nearest_row(c.topRows(k), data.row(i).transpose(), &d);
      d2[i] = d;
      total += d;
    }
    int pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
    }
    c.row(k) = data.row(pick);
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int k = nearest_row(c, data.row(i).transpose());
      if (k != assign[i]) {
        assign[i] = k;
        changed = true;
      }
    }
    std::vector<int> counts(modes, 0);
    for (int i = 0; i < n; ++i) ++counts[assign[i]];
    // Re-seed an empty cluster with the point farthest from its centroid.
    for (int k = 0; k < modes; ++k) {
      if (counts[k] > 0) continue;
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;
        const double d = (data.row(i) - c.row(assign[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) throw Error(ErrorCode::kDatasetTooSmall, "cannot fill empty cluster");
      --counts[assign[far]];
      assign[far] = k;
      counts[k] = 1;
      changed = true;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(modes, data.cols());
    for (int i = 0; i < n; ++i) next.row(assign[i]) += data.row(i);
    for (int k = 0; k < modes; ++k) next.row(k) /= counts[k];
    c = next;
    if (!changed && iter > 0) break;
  }

  ModeAnchors out;
  out.centroids = c;
  out.member_counts.assign(modes, 0);
  for (int i = 0; i < n; ++i) ++out.member_counts[assign[i]];
  return out;
}

int mode_label(const ModeAnchors& anchors, const Eigen::VectorXd& trajectory) {
  const Eigen::Vector2d end = trajectory.tail<2>();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int m = 0; m < anchors.modes(); ++m) {
    const double d = (anchors.centroids.row(m).tail<2>().transpose() - end).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

void FocalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kConfig, "focal alpha must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw Error(ErrorCode::kConfig, "focal gamma must be >= 0");
}

double focal_loss(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets, const FocalConfig& cfg,
                  Eigen::MatrixXd* grad) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols() || probs.size() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "focal inputs must share a nonempty shape");
  }
  const double norm = 1.0 / static_cast<double>(probs.size());
  const double a = cfg.alpha, nu = cfg.gamma;
  if (grad) grad->setZero(probs.rows(), probs.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double raw = probs(i, j);
      const double p = std::clamp(raw, kFocalClamp, 1.0 - kFocalClamp);
      const bool active = raw == p;
      double loss, dp;
      if (targets(i, j) == 1.0) {
        const double q = 1.0 - p;
        loss = -a * std::pow(q, nu) * std::log(p);
        dp = a * ((nu == 0.0 ? 0.0 : nu * std::pow(q, nu - 1.0) * std::log(p)) - std::pow(q, nu) / p);
      } else {
        loss = -(1.0 - a) * std::pow(p, nu) * std::log(1.0 - p);
        dp = -(1.0 - a) *
             ((nu == 0.0 ? 0.0 : nu * std::pow(p, nu - 1.0) * std::log(1.0 - p)) - std::pow(p, nu) / (1.0 - p));
      }
      total += loss;
      if (grad && active) (*grad)(i, j) = norm * dp;
    }
  }
  return norm * total;
}

void IlWeights::validate() const {
  if (!(mode >= 0.0 && traj >= 0.0 && action >= 0.0)) {
    throw Error(ErrorCode::kConfig, "imitation loss weights must be nonnegative");
  }
}

void IlWeights::validate_imitation_ordering() const {
  validate();
  if (!(traj > action && mode > action)) {
    throw Error(ErrorCode::kConfig, "imitation weights need w_traj > w_action and w_mode > w_action");
  }
}

FlowHead FlowHead::create(const FlowHeadConfig& config, ModeAnchors anchors, std::uint64_t seed) {
  if (config.observation_dim < 1) throw Error(ErrorCode::kConfig, "observation_dim must be >= 1");
  if (anchors.modes() < 1 || anchors.centroids.cols() != kTrajectoryDim) {
    throw Error(ErrorCode::kShapeMismatch, "anchors must be modes x 12");
  }
  config.focal.validate();
  config.weights.validate();
  FlowHead h;
  h.config = config;
  h.config.modes = anchors.modes();
  h.anchors = std::move(anchors);
  Rng rng(seed);
  const int H = config.hidden;
  h.encoder = Network::mlp({config.observation_dim, H, H}, rng);
  h.encoder.layers().back().activation = Activation::kTanh;
  std::vector<int> fdims{h.flow_input_dim()};
  for (int l = 0; l < config.flow_layers; ++l) fdims.push_back(H);
  fdims.push_back(kTrajectoryDim);
  h.flow = Network::mlp(fdims, rng, 0.1);
  std::vector<int> head{H};
  for (int l = 0; l < config.head_layers; ++l) head.push_back(H);
  head.push_back(h.modes());
  h.mode_head = Network::mlp(head, rng);
  head.back() = 2 * config.grid.size();
  h.residual_head = Network::mlp(head, rng, 0.1);
  return h;
}

Eigen::VectorXd FlowHead::encode(const Eigen::VectorXd& observation) const { return encoder.forward(observation); }

Eigen::VectorXd FlowHead::mode_logits(const Eigen::VectorXd& encoding) const { return mode_head.forward(encoding); }

ActionLogits FlowHead::residual_logits(const Eigen::VectorXd& encoding) const {
  const Eigen::VectorXd r = residual_head.forward(encoding);
  const int n = config.grid.size();
  return {r.head(n), r.tail(n)};
}

Eigen::VectorXd FlowHead::condition(const Eigen::VectorXd* encoding, int mode) const {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(cond_dim());
  if (encoding) {
    c.head(config.hidden) = *encoding;
    c[config.hidden + mode] = 1.0;
  }
  return c;
}

Eigen::VectorXd FlowHead::flow_input(const Eigen::VectorXd& x, double t, const Eigen::VectorXd& cond) const {
  Eigen::VectorXd in(flow_input_dim());
  in << x, t, 1.0 - t, cond;
  return in;
}

Eigen::VectorXd guided_velocity(const FlowHead& head, const Eigen::VectorXd& x, double t,
                                const Eigen::VectorXd& encoding, int mode, double guidance) {
  const Eigen::VectorXd vc = head.flow.forward(head.flow_input(x, t, head.condition(&encoding, mode)));
  const Eigen::VectorXd vu = head.flow.forward(head.flow_input(x, t, head.condition(nullptr, mode)));
  return (1.0 - guidance) * vu + guidance * vc;
}

TrajectoryBatch sample_trajectories(const FlowHead& head, const Eigen::VectorXd& observation, int steps,
                                    double guidance, std::uint64_t /*seed*/) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "sampling needs at least one step");
  const Eigen::VectorXd enc = head.encode(observation);
  const int modes = head.modes();
  const int in_dim = head.flow_input_dim();
  const bool need_cond = guidance != 0.0;
  const bool need_uncond = guidance != 1.0;
  Eigen::MatrixXd x = head.anchors.centroids.transpose();  // 12 x modes
  Eigen::MatrixXd cond_in(in_dim, modes), uncond_in(in_dim, modes);
  for (int m = 0; m < modes; ++m) {
    cond_in.col(m).tail(head.cond_dim()) = head.condition(&enc, m);
    uncond_in.col(m).tail(head.cond_dim()).setZero();
  }
  const double dt = 1.0 / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = s * dt;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(kTrajectoryDim, modes);
    for (Eigen::MatrixXd* in : {&cond_in, &uncond_in}) {
      const bool cond = in == &cond_in;
      if ((cond && !need_cond) || (!cond && !need_uncond)) continue;
      in->topRows(kTrajectoryDim) = x;
      in->row(kTrajectoryDim).setConstant(t);
      in->row(kTrajectoryDim + 1).setConstant(1.0 - t);
      const Eigen::MatrixXd out = head.flow.forward(*in);
      v += (cond ? guidance : 1.0 - guidance) * out;
    }
    x += dt * v;
    if (!x.allFinite()) {
      throw Error(ErrorCode::kNonFinite, "sampling diverged at step " + std::to_string(s));
    }
  }
  TrajectoryBatch out;
  out.trajectories = x.transpose();
  out.mode_probs = softmax(head.mode_logits(enc));
  return out;
}

ActionLogits predictor_logits(const FlowHead& head, const TrajectoryBatch& batch, const Eigen::VectorXd& encoding,
                              double alpha) {
  return combine_logits(trajectory_logits(batch, head.config.grid, head.config.coordinate),
                        head.residual_logits(encoding), alpha);
}

IlSample make_il_sample(const ModeAnchors& anchors, const ActionGrid& grid, Eigen::VectorXd observation,
                        Eigen::VectorXd trajectory) {
  if (trajectory.size() != kTrajectoryDim) throw Error(ErrorCode::kShapeMismatch, "trajectory must have 12 values");
  IlSample s;
  s.mode_label = mode_label(anchors, trajectory);
  s.action_x = nearest_anchor(grid.anchors_x, trajectory[kTrajectoryDim - 2]);
  s.action_y = nearest_anchor(grid.anchors_y, trajectory[kTrajectoryDim - 1]);
  s.observation = std::move(observation);
  s.trajectory = std::move(trajectory);
  return s;
}

IlNoise draw_il_noise(std::size_t samples, double dropout, Rng& rng) {
  IlNoise n;
  n.t.reserve(samples);
  n.drop.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    n.t.push_back(rng.uniform());
    n.drop.push_back(rng.bernoulli(dropout) ? 1 : 0);
  }
  return n;
}

Eigen::VectorXd IlGradient::flat() const {
  const NetworkGrad* g[] = {&encoder, &flow, &mode_head, &residual_head};
  return flatten_grads(g);
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

IlGradient il_loss(const FlowHead& head, std::span<const IlSample> batch, const IlNoise& noise) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw Error(ErrorCode::kInvalidArgument, "empty imitation batch");
  if (noise.t.size() != batch.size() || noise.drop.size() != batch.size()) {
    throw Error(ErrorCode::kShapeMismatch, "noise draws do not match batch size");
  }
  const FlowHeadConfig& cfg = head.config;
  const int M = head.modes();
  const int H = cfg.hidden;
  const int N = cfg.grid.size();
  const double inv_b = 1.0 / B;

  IlGradient out{{}, NetworkGrad(head.encoder), NetworkGrad(head.flow), NetworkGrad(head.mode_head),
                 NetworkGrad(head.residual_head)};

  Eigen::MatrixXd obs(cfg.observation_dim, B), tau1(B, kTrajectoryDim);
  for (int b = 0; b < B; ++b) {
    if (batch[b].observation.size() != cfg.observation_dim) {
      throw Error(ErrorCode::kDimensionMismatch, "observation length mismatch in batch");
    }
    obs.col(b) = batch[b].observation;
    tau1.row(b) = batch[b].trajectory.transpose();
  }

  Network::Trace enc_trace, mode_trace, res_trace, flow_trace;
  const Eigen::MatrixXd enc = head.encoder.forward(obs, enc_trace);
  const Eigen::MatrixXd mode_logit = head.mode_head.forward(enc, mode_trace);
  const Eigen::MatrixXd residual = head.residual_head.forward(enc, res_trace);

  // Mode classification.
  Eigen::MatrixXd probs(B, M), targets = Eigen::MatrixXd::Zero(B, M), g_probs;
  for (int b = 0; b < B; ++b) {
    for (int m = 0; m < M; ++m) probs(b, m) = sigmoid(mode_logit(m, b));
    targets(b, batch[b].mode_label) = 1.0;
  }
  out.losses.mode = focal_loss(probs, targets, cfg.focal, &g_probs);
  Eigen::MatrixXd g_mode_logit(M, B);
  for (int b = 0; b < B; ++b) {
    for (int m = 0; m < M; ++m) {
      g_mode_logit(m, b) = cfg.weights.mode * g_probs(b, m) * probs(b, m) * (1.0 - probs(b, m));
    }
  }

  // Per-sample transport weights from the anchor distribution to this batch.
  const TrajectorySet source{head.anchors.centroids, head.anchors.frequencies()};
  const TrajectorySet target = TrajectorySet::uniform(tau1);
  const OtCoupling coupling = sinkhorn_coupling(source, target, cfg.sinkhorn);

  struct Pair {
    int b, m;
    double w;
  };
  std::vector<Pair> pairs;
  for (int b = 0; b < B; ++b) {
    const double col = coupling.plan.col(b).sum();
    for (int m = 0; m < M; ++m) {
      const double w = col > 0.0 ? coupling.plan(m, b) / col : 0.0;
      if (w >= cfg.coupling_floor) pairs.push_back({b, m, w});
    }
  }
  const int P = static_cast<int>(pairs.size());
  // Columns [0, P) are velocity-loss pairs; [P, P + B*M) are the t = 0
  // one-step predictions per (sample, mode).
  Eigen::MatrixXd flow_in = Eigen::MatrixXd::Zero(head.flow_input_dim(), P + B * M);
  const int cond_row = kTrajectoryDim + 2;
  for (int k = 0; k < P; ++k) {
    const auto [b, m, w] = pairs[k];
    const double t = noise.t[b];
    flow_in.col(k).head(kTrajectoryDim) =
        (1.0 - t) * head.anchors.centroids.row(m).transpose() + t * tau1.row(b).transpose();
    flow_in(kTrajectoryDim, k) = t;
    flow_in(kTrajectoryDim + 1, k) = 1.0 - t;
    if (!noise.drop[b]) {
      flow_in.col(k).segment(cond_row, H) = enc.col(b);
      flow_in(cond_row + H + m, k) = 1.0;
    }
  }
  for (int b = 0; b < B; ++b) {
    for (int m = 0; m < M; ++m) {
      const int k = P + b * M + m;
      flow_in.col(k).head(kTrajectoryDim) = head.anchors.centroids.row(m).transpose();
      flow_in(kTrajectoryDim + 1, k) = 1.0;
      flow_in.col(k).segment(cond_row, H) = enc.col(b);
      flow_in(cond_row + H + m, k) = 1.0;
    }
  }
  const Eigen::MatrixXd vel = head.flow.forward(flow_in, flow_trace);
  Eigen::MatrixXd g_vel = Eigen::MatrixXd::Zero(kTrajectoryDim, vel.cols());

  for (int k = 0; k < P; ++k) {
    const auto [b, m, w] = pairs[k];
    const Eigen::VectorXd diff =
        vel.col(k) - (tau1.row(b) - head.anchors.centroids.row(m)).transpose();
    out.losses.velocity += inv_b * w * diff.squaredNorm();
    g_vel.col(k) = cfg.weights.traj * inv_b * w * 2.0 * diff;
  }

  // Winner-mode regression and action cross-entropy on the one-step predictions.
  Eigen::MatrixXd g_enc = Eigen::MatrixXd::Zero(H, B);
  Eigen::MatrixXd g_residual(2 * N, B);
  for (int b = 0; b < B; ++b) {
    TrajectoryBatch pred;
    pred.trajectories = head.anchors.centroids + vel.middleCols(P + b * M, M).transpose();
    const int label = batch[b].mode_label;
    const Eigen::VectorXd err = pred.trajectories.row(label).transpose() - tau1.row(b).transpose();
    out.losses.mse += inv_b * err.squaredNorm() / kTrajectoryDim;
    g_vel.col(P + b * M + label) += cfg.weights.traj * inv_b * 2.0 * err / kTrajectoryDim;

    pred.mode_probs = softmax(mode_logit.col(b));
    const ActionLogits traj = trajectory_logits(pred, cfg.grid, cfg.coordinate);
    const ActionLogits res{residual.col(b).head(N), residual.col(b).tail(N)};
    const ActionLogits logits = combine_logits(traj, res, cfg.alpha_il);
    const Eigen::VectorXd lpx = log_softmax(logits.x), lpy = log_softmax(logits.y);
    out.losses.ce += -inv_b * (lpx[batch[b].action_x] + lpy[batch[b].action_y]);

    ActionLogits g_logits{lpx.array().exp(), lpy.array().exp()};
    g_logits.x[batch[b].action_x] -= 1.0;
    g_logits.y[batch[b].action_y] -= 1.0;
    const double scale = cfg.weights.action * inv_b;
    g_logits.x *= scale;
    g_logits.y *= scale;
    g_residual.col(b) << (1.0 - cfg.alpha_il) * g_logits.x, (1.0 - cfg.alpha_il) * g_logits.y;
    const ActionLogits g_traj{cfg.alpha_il * g_logits.x, cfg.alpha_il * g_logits.y};
    const TrajectoryLogitsGrad tg = trajectory_logits_backward(pred, cfg.grid, g_traj, cfg.coordinate);
    g_vel.middleCols(P + b * M, M) += tg.trajectories.transpose();
    Eigen::VectorXd g_lw = tg.log_weights;
    for (int m = 0; m < M; ++m) {
      if (pred.mode_probs[m] < kModeWeightFloor) g_lw[m] = 0.0;
    }
    // log w = log_softmax(mode logits) where unfloored.
    g_mode_logit.col(b) += g_lw - pred.mode_probs * g_lw.sum();
  }

  out.losses.total = cfg.weights.mode * out.losses.mode +
                     cfg.weights.traj * (out.losses.mse + out.losses.velocity) +
                     cfg.weights.action * out.losses.ce;
  if (!std::isfinite(out.losses.total)) {
    std::ostringstream msg;
    msg << "non-finite imitation loss: mode=" << out.losses.mode << " mse=" << out.losses.mse
        << " velocity=" << out.losses.velocity << " ce=" << out.losses.ce;
    throw Error(ErrorCode::kNonFinite, msg.str());
  }

  const Eigen::MatrixXd g_flow_in = head.flow.backward(flow_trace, g_vel, out.flow);
  for (int k = 0; k < P; ++k) {
    if (!noise.drop[pairs[k].b]) g_enc.col(pairs[k].b) += g_flow_in.col(k).segment(cond_row, H);
  }
  for (int b = 0; b < B; ++b) {
    for (int m = 0; m < M; ++m) g_enc.col(b) += g_flow_in.col(P + b * M + m).segment(cond_row, H);
  }
  g_enc += head.mode_head.backward(mode_trace, g_mode_logit, out.mode_head);
  g_enc += head.residual_head.backward(res_trace, g_residual, out.residual_head);
  head.encoder.backward(enc_trace, g_enc, out.encoder);
  return out;
}

IlLosses train_il_step(FlowHead& head, AdamOptimizer& optimizer, std::span<const IlSample> batch,
                       const IlNoise& noise) {
  const IlGradient g = il_loss(head, batch, noise);
  const std::vector<const Network*> cnets = std::as_const(head).networks();
  Eigen::VectorXd params = flatten_params(cnets);
  optimizer.step(params, g.flat());
  const std::vector<Network*> nets = head.networks();
  unflatten_params(nets, params);
  return g.losses;
}

void put_flowhead(TensorMap& tensors, const FlowHead& head) {
  put_network(tensors, "flowhead/encoder", head.encoder);
  put_network(tensors, "flowhead/flow", head.flow);
  put_network(tensors, "flowhead/mode", head.mode_head);
  put_network(tensors, "flowhead/residual", head.residual_head);
  const auto& c = head.anchors.centroids;
  Tensor centroids{{static_cast<std::uint64_t>(c.rows()), static_cast<std::uint64_t>(c.cols())}, {}};
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    for (Eigen::Index k = 0; k < c.cols(); ++k) centroids.data.push_back(c(r, k));
  }
  tensors["anchors/centroids"] = std::move(centroids);
  Tensor counts{{static_cast<std::uint64_t>(head.anchors.member_counts.size())}, {}};
  for (int n : head.anchors.member_counts) counts.data.push_back(n);
  tensors["anchors/member_counts"] = std::move(counts);
}

FlowHead get_flowhead(const TensorMap& tensors, const FlowHeadConfig& config) {
  auto it = tensors.find("anchors/centroids");
  auto jt = tensors.find("anchors/member_counts");
  if (it == tensors.end() || jt == tensors.end()) throw Error(ErrorCode::kFormat, "checkpoint lacks anchors");
  const Tensor& c = it->second;
  if (c.dims.size() != 2 || c.dims[1] != kTrajectoryDim) throw Error(ErrorCode::kFormat, "bad anchor shape");
  ModeAnchors anchors;
  anchors.centroids.resize(static_cast<Eigen::Index>(c.dims[0]), kTrajectoryDim);
  for (Eigen::Index r = 0; r < anchors.centroids.rows(); ++r) {
    for (Eigen::Index k = 0; k < kTrajectoryDim; ++k) anchors.centroids(r, k) = c.data[r * kTrajectoryDim + k];
  }
  for (double v : jt->second.data) anchors.member_counts.push_back(static_cast<int>(v));
  FlowHead head = FlowHead::create(config, std::move(anchors), 0);
  head.encoder = get_network(tensors, "flowhead/encoder");
  head.flow = get_network(tensors, "flowhead/flow");
  head.mode_head = get_network(tensors, "flowhead/mode");
  head.residual_head = get_network(tensors, "flowhead/residual");
  if (head.encoder.input_dim() != config.observation_dim || head.flow.input_dim() != head.flow_input_dim()) {
    throw Error(ErrorCode::kVersionMismatch, "checkpoint networks do not match the configuration");
  }
  return head;
}

}  // namespace gsdrive
