#pragma once

#include <Eigen/Core>

namespace gsdrive {

/// Future waypoints per trajectory, 0.5 s apart over 3 s.
inline constexpr int kTrajectoryPoints = 6;
inline constexpr int kTrajectoryDim = 2 * kTrajectoryPoints;
inline constexpr double kWaypointSpacing = 0.5;

/// One trajectory per mode, flattened row-wise as [x0, y0, x1, y1, ...] in the
/// ego frame, plus the mode distribution.
struct TrajectoryBatch {
  Eigen::MatrixXd trajectories;  // modes x kTrajectoryDim
  Eigen::VectorXd mode_probs;

  int modes() const { return static_cast<int>(trajectories.rows()); }
  Eigen::Vector2d point(int mode, int k) const {
    return {trajectories(mode, 2 * k), trajectories(mode, 2 * k + 1)};
  }
  Eigen::Vector2d endpoint(int mode) const { return point(mode, kTrajectoryPoints - 1); }
  void validate() const;
};

}  // namespace gsdrive
