#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gsdrive/actionspace.hpp"
#include "gsdrive/checkpoint.hpp"
#include "gsdrive/nn.hpp"
#include "gsdrive/ot.hpp"
#include "gsdrive/rng.hpp"
#include "gsdrive/trajectory.hpp"

namespace gsdrive {

struct ModeAnchors {
  Eigen::MatrixXd centroids;  // modes x kTrajectoryDim
  std::vector<int> member_counts;

  int modes() const { return static_cast<int>(centroids.rows()); }
  /// Cluster frequencies; the source distribution of the flow.
  Eigen::VectorXd frequencies() const;
};

/// k-means with k-means++ seeding over flattened trajectories (one per row).
ModeAnchors cluster_modes(const Eigen::MatrixXd& trajectories, int modes, std::uint64_t seed,
                          int max_iters = 100);

/// Nearest anchor by endpoint distance; lower index on ties.
int mode_label(const ModeAnchors& anchors, const Eigen::VectorXd& trajectory);

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  void validate() const;
};

inline constexpr double kFocalClamp = 1e-7;

/// Mean focal loss over an N x C grid of sigmoid probabilities. When `grad` is
/// non-null it receives dL/dp (zero where the clamp is active).
double focal_loss(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets,
                  const FocalConfig& cfg, Eigen::MatrixXd* grad = nullptr);

struct IlWeights {
  double mode = 1.0;
  double traj = 1.0;
  double action = 0.1;
  void validate() const;
  /// Trajectory and mode terms must outweigh the action term during imitation.
  void validate_imitation_ordering() const;
};

struct FlowHeadConfig {
  int observation_dim = 0;
  int modes = 6;
  int hidden = 128;
  int flow_layers = 3;
  int head_layers = 2;
  double cfg_dropout = 0.1;
  double guidance = 1.5;
  int sample_steps = 20;
  double alpha_il = 0.9;
  double coupling_floor = 1e-6;
  FocalConfig focal;
  IlWeights weights;
  SinkhornOptions sinkhorn;
  ActionGrid grid = default_grid();
  ActionCoordinate coordinate = ActionCoordinate::kEndpoint;
};

/// Observation encoder, conditional velocity field, mode head and residual
/// action head.
struct FlowHead {
  FlowHeadConfig config;
  ModeAnchors anchors;
  Network encoder;
  Network flow;
  Network mode_head;
  Network residual_head;

  static FlowHead create(const FlowHeadConfig& config, ModeAnchors anchors, std::uint64_t seed);

  int modes() const { return anchors.modes(); }
  int cond_dim() const { return config.hidden + modes(); }
  int flow_input_dim() const { return kTrajectoryDim + 2 + cond_dim(); }

  std::vector<Network*> networks() { return {&encoder, &flow, &mode_head, &residual_head}; }
  std::vector<const Network*> networks() const {
    return {&encoder, &flow, &mode_head, &residual_head};
  }

  Eigen::VectorXd encode(const Eigen::VectorXd& observation) const;
  Eigen::VectorXd mode_logits(const Eigen::VectorXd& encoding) const;
  ActionLogits residual_logits(const Eigen::VectorXd& encoding) const;

  /// Conditioning vector [encoding, one-hot(mode)]; all zeros when `encoding`
  /// is null (the unconditional branch).
  Eigen::VectorXd condition(const Eigen::VectorXd* encoding, int mode) const;
  Eigen::VectorXd flow_input(const Eigen::VectorXd& x, double t, const Eigen::VectorXd& cond) const;
};

/// (1 - g) v_uncond + g v_cond at a single state.
Eigen::VectorXd guided_velocity(const FlowHead& head, const Eigen::VectorXd& x, double t,
                                const Eigen::VectorXd& encoding, int mode, double guidance);

/// Forward-Euler integration of the guided field from each mode anchor. The
/// integration is deterministic; `seed` is accepted for interface stability.
TrajectoryBatch sample_trajectories(const FlowHead& head, const Eigen::VectorXd& observation,
                                    int steps, double guidance, std::uint64_t seed = 0);

/// Action logits of the full predictor for one observation.
ActionLogits predictor_logits(const FlowHead& head, const TrajectoryBatch& batch,
                              const Eigen::VectorXd& encoding, double alpha);

struct IlSample {
  Eigen::VectorXd observation;
  Eigen::VectorXd trajectory;  // kTrajectoryDim, ego frame
  int mode_label = 0;
  int action_x = 0;
  int action_y = 0;
};

IlSample make_il_sample(const ModeAnchors& anchors, const ActionGrid& grid,
                        Eigen::VectorXd observation, Eigen::VectorXd trajectory);

/// Per-sample flow time and conditioning-dropout draws.
struct IlNoise {
  std::vector<double> t;
  std::vector<char> drop;
};
IlNoise draw_il_noise(std::size_t samples, double dropout, Rng& rng);

struct IlLosses {
  double mode = 0.0;
  double mse = 0.0;
  double velocity = 0.0;
  double ce = 0.0;
  double total = 0.0;
};

struct IlGradient {
  IlLosses losses;
  NetworkGrad encoder, flow, mode_head, residual_head;
  Eigen::VectorXd flat() const;
};

IlGradient il_loss(const FlowHead& head, std::span<const IlSample> batch, const IlNoise& noise);

/// One optimizer step over the imitation objective.
IlLosses train_il_step(FlowHead& head, AdamOptimizer& optimizer, std::span<const IlSample> batch,
                       const IlNoise& noise);

void put_flowhead(TensorMap& tensors, const FlowHead& head);
/// Restores networks and anchors into a head built from `config`.
FlowHead get_flowhead(const TensorMap& tensors, const FlowHeadConfig& config);

}  // namespace gsdrive
