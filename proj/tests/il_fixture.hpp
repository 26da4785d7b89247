#pragma once

#include <vector>

#include <Eigen/Core>

#include "gsdrive/flowhead.hpp"
#include "gsdrive/rng.hpp"

namespace gsdrive::test {

/// Two bundles of expert trajectories: straight ahead to (15, 0) and a left
/// bend to (12, 4). The first observation feature tells the bundles apart.
struct TwoModeData {
  std::vector<Eigen::VectorXd> observations;
  std::vector<Eigen::VectorXd> trajectories;
  std::vector<int> bundle;
};

inline constexpr int kTwoModeObsDim = 4;

inline Eigen::VectorXd bundle_mean(int bundle) {
  Eigen::VectorXd tau(kTrajectoryDim);
  for (int k = 0; k < kTrajectoryPoints; ++k) {
    const double s = (k + 1.0) / kTrajectoryPoints;
    tau[2 * k] = bundle == 0 ? 15.0 * s : 12.0 * s;
    tau[2 * k + 1] = bundle == 0 ? 0.0 : 4.0 * s * s;
  }
  return tau;
}

inline TwoModeData two_mode_data(int samples, std::uint64_t seed) {
  Rng rng(seed);
  TwoModeData d;
  for (int i = 0; i < samples; ++i) {
    const int b = i % 2;
    Eigen::VectorXd obs(kTwoModeObsDim);
    obs << (b == 0 ? 1.0 : -1.0) + rng.normal(0, 0.1), rng.normal(0, 0.5), rng.normal(0, 0.5), rng.normal(0, 0.5);
    Eigen::VectorXd tau = bundle_mean(b);
    const double jitter_x = rng.normal(0, 0.2), jitter_y = rng.normal(0, 0.2);
    for (int k = 0; k < kTrajectoryPoints; ++k) {
      const double s = (k + 1.0) / kTrajectoryPoints;
      tau[2 * k] += s * jitter_x;
      tau[2 * k + 1] += s * jitter_y;
    }
    d.observations.push_back(obs);
    d.trajectories.push_back(tau);
    d.bundle.push_back(b);
  }
  return d;
}

inline Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

inline FlowHeadConfig two_mode_config() {
  FlowHeadConfig c;
  c.observation_dim = kTwoModeObsDim;
  c.modes = 2;
  return c;
}

}  // namespace gsdrive::test
