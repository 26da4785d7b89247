#pragma once

#include <Eigen/Core>

namespace gsdrive {

/// Weighted set of flattened trajectories, one per row.
struct TrajectorySet {
  Eigen::MatrixXd points;   // M x D
  Eigen::VectorXd weights;  // M, nonnegative, sums to 1

  static TrajectorySet uniform(Eigen::MatrixXd points);
  Eigen::Index size() const { return points.rows(); }
  void validate() const;
};

struct SinkhornOptions {
  double epsilon = 0.05;
  int max_iters = 2000;
  double tol = 1e-6;
};

/// Entropic OT plan P = diag(u) K diag(v). The log-domain fields are always
/// filled; the exponentiated u, v and kernel can under/overflow when the solve
/// ran in the log domain.
struct OtCoupling {
  Eigen::MatrixXd plan;
  Eigen::MatrixXd kernel;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  Eigen::MatrixXd log_kernel;
  Eigen::VectorXd log_u;
  Eigen::VectorXd log_v;
  Eigen::VectorXd source_marginal;  // a_i = sum_j P_ij
  double epsilon = 0.0;
  bool converged = false;
  bool log_domain = false;
  double violation = 0.0;  // max marginal violation at exit
  int iterations = 0;
};

Eigen::MatrixXd squared_distance_cost(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target);

/// Balanced entropic OT with squared-Euclidean cost. Runs in the log domain
/// when epsilon <= 1e-2 or the Gibbs kernel would underflow.
OtCoupling sinkhorn_coupling(const TrajectorySet& source, const TrajectorySet& target,
                             const SinkhornOptions& options = {});

/// Sum_ij P_ij C_ij.
double transport_cost(const OtCoupling& coupling, const Eigen::MatrixXd& cost);

/// Coupling-weighted interpolants, one row per source trajectory.
Eigen::MatrixXd ot_interpolate(const OtCoupling& coupling, const TrajectorySet& source,
                               const TrajectorySet& target, double t);

/// nu_i = sum_j (P_ij / a_i) (tau1_j - tau0_i).
Eigen::MatrixXd velocity_target(const OtCoupling& coupling, const TrajectorySet& source,
                                const TrajectorySet& target);

/// Sum_i w_i ||pred_i - nu_i||^2 with w_i = a_i / sum(a). When `grad` is
/// non-null it receives dL/dpred.
double ot_velocity_loss(const Eigen::MatrixXd& predicted, const OtCoupling& coupling,
                        const TrajectorySet& source, const TrajectorySet& target,
                        Eigen::MatrixXd* grad = nullptr);

}  // namespace gsdrive
