#pragma once

#include <cstdint>
#include <iosfwd>

#include <Eigen/Core>

#include "gsdrive/trajectory.hpp"

namespace gsdrive {

struct ActionGrid {
  Eigen::VectorXd anchors_x;
  Eigen::VectorXd anchors_y;
  double x_min = 0.0, x_max = 20.0;
  double y_min = -5.0, y_max = 5.0;
  double tau_s = 0.1;

  int size() const { return static_cast<int>(anchors_x.size()); }
  double range_x() const { return x_max - x_min; }
  double range_y() const { return y_max - y_min; }
};

ActionGrid build_grid(double x_min, double x_max, double y_min, double y_max, int anchors,
                      double tau_s);
ActionGrid default_grid();

/// Uniform grid over one axis, endpoints included.
Eigen::VectorXd linspace_anchors(double lo, double hi, int anchors);

/// Index of the anchor closest to `value` (lower index on ties).
int nearest_anchor(const Eigen::VectorXd& anchors, double value);

struct ActionLogits {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

enum class ActionCoordinate { kEndpoint, kMeanOfPoints };

inline constexpr double kLogitSoftmaxTemperature = 0.5;
inline constexpr double kModeWeightFloor = 1e-9;

/// log P(n | m) for one axis of one mode.
Eigen::VectorXd mode_log_distribution(const Eigen::VectorXd& anchors, double coordinate,
                                      double tau_s, double range);

/// Mixture log-probabilities over the grid anchors from per-mode coordinates.
ActionLogits trajectory_logits(const TrajectoryBatch& batch, const ActionGrid& grid,
                               ActionCoordinate coordinate = ActionCoordinate::kEndpoint);

struct TrajectoryLogitsGrad {
  Eigen::MatrixXd trajectories;  // same shape as batch.trajectories
  Eigen::VectorXd log_weights;   // d/d log(max(w, floor))
};

TrajectoryLogitsGrad trajectory_logits_backward(const TrajectoryBatch& batch, const ActionGrid& grid,
                                                const ActionLogits& upstream,
                                                ActionCoordinate coordinate = ActionCoordinate::kEndpoint);

ActionLogits combine_logits(const ActionLogits& traj, const ActionLogits& residual, double alpha);

struct ActionChoice {
  double x = 0.0;
  double y = 0.0;
  int index_x = 0;
  int index_y = 0;
};

ActionChoice decode_argmax(const ActionLogits& logits, const ActionGrid& grid);
ActionChoice decode_sample(const ActionLogits& logits, const ActionGrid& grid, std::uint64_t seed);

/// Numerically stable log-softmax.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double log_sum_exp(const Eigen::VectorXd& values);

/// Debug dump: one row per anchor with x/y anchor values and logits.
void write_logits_csv(std::ostream& out, const ActionLogits& logits, const ActionGrid& grid);

}  // namespace gsdrive
