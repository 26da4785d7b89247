#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "gsdrive/env.hpp"
#include "gsdrive/flowhead.hpp"

namespace gsdrive {

struct ExpertSample {
  Eigen::VectorXd observation;
  Eigen::VectorXd trajectory;  // next six expert waypoints, ego frame
};

/// Observation/trajectory pairs along every expert path. With a positive
/// `augment_offset`, each state is also replayed shifted sideways by
/// +-augment_offset, paired with a trajectory that merges back onto the path.
std::vector<ExpertSample> build_expert_samples(const std::vector<std::shared_ptr<const Scene>>& scenes,
                                               const EnvConfig& env, double augment_offset);

Eigen::MatrixXd stack_trajectories(const std::vector<ExpertSample>& samples);

struct ImitationOptions {
  int steps = 2000;
  int batch = 32;
  double learning_rate = 3e-4;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 1;
};

/// Minibatch imitation training; returns the per-step loss breakdown.
std::vector<IlLosses> train_imitation(FlowHead& head, const std::vector<IlSample>& data,
                                      const ImitationOptions& options,
                                      const std::function<void(int, const IlLosses&)>& on_step = {});

}  // namespace gsdrive
