#include "gsdrive/actionspace.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "gsdrive/error.hpp"
#include "gsdrive/rng.hpp"

namespace gsdrive {

void TrajectoryBatch::validate() const {
  if (trajectories.cols() != kTrajectoryDim) {
    throw Error(ErrorCode::kShapeMismatch, "trajectory rows must hold 6 (x, y) points");
  }
  if (mode_probs.size() != trajectories.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "mode_probs length must equal mode count");
  }
  if ((mode_probs.array() < 0.0).any() || std::abs(mode_probs.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "mode_probs must be a distribution");
  }
  if (!trajectories.allFinite()) throw Error(ErrorCode::kNonFinite, "trajectory is not finite");
}

Eigen::VectorXd linspace_anchors(double lo, double hi, int anchors) {
  if (anchors < 2) throw Error(ErrorCode::kDegenerateBounds, "grid needs at least 2 anchors");
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorCode::kDegenerateBounds, "grid bounds must satisfy min < max");
  }
  Eigen::VectorXd a(anchors);
  for (int k = 0; k < anchors; ++k) a[k] = lo + k * (hi - lo) / (anchors - 1);
  a[anchors - 1] = hi;
  return a;
}

ActionGrid build_grid(double x_min, double x_max, double y_min, double y_max, int anchors,
                      double tau_s) {
  if (!(tau_s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "kernel temperature must be > 0");
  ActionGrid g;
  g.anchors_x = linspace_anchors(x_min, x_max, anchors);
  g.anchors_y = linspace_anchors(y_min, y_max, anchors);
  g.x_min = x_min;
  g.x_max = x_max;
  g.y_min = y_min;
  g.y_max = y_max;
  g.tau_s = tau_s;
  return g;
}

ActionGrid default_grid() { return build_grid(0.0, 20.0, -5.0, 5.0, 21, 0.1); }

int nearest_anchor(const Eigen::VectorXd& anchors, double value) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < anchors.size(); ++k) {
    const double d = std::abs(anchors[k] - value);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double log_sum_exp(const Eigen::VectorXd& values) {
  const double m = values.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((values.array() - m).exp().sum());
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  return logits.array() - log_sum_exp(logits);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) { return log_softmax(logits).array().exp(); }

Eigen::VectorXd mode_log_distribution(const Eigen::VectorXd& anchors, double coordinate,
                                      double tau_s, double range) {
  Eigen::VectorXd z(anchors.size());
  for (int n = 0; n < anchors.size(); ++n) {
    z[n] = std::exp(-std::abs(coordinate - anchors[n]) / (tau_s * range)) / kLogitSoftmaxTemperature;
  }
  return log_softmax(z);
}

namespace {

Eigen::Vector2d mode_coordinate(const TrajectoryBatch& b, int m, ActionCoordinate c) {
  if (c == ActionCoordinate::kEndpoint) return b.endpoint(m);
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (int k = 0; k < kTrajectoryPoints; ++k) acc += b.point(m, k);
  return acc / kTrajectoryPoints;
}

Eigen::VectorXd floored_log_weights(const Eigen::VectorXd& w) {
  return w.array().max(kModeWeightFloor).log();
}

// Mixture over modes for one axis; log_p is modes x anchors.
Eigen::VectorXd mixture(const Eigen::MatrixXd& log_p, const Eigen::VectorXd& log_w) {
  Eigen::VectorXd out(log_p.cols());
  for (int n = 0; n < log_p.cols(); ++n) out[n] = log_sum_exp(log_p.col(n) + log_w);
  return out;
}

}  // namespace

ActionLogits trajectory_logits(const TrajectoryBatch& batch, const ActionGrid& grid,
                               ActionCoordinate coordinate) {
  if (batch.trajectories.cols() != kTrajectoryDim || batch.mode_probs.size() != batch.modes() ||
      batch.modes() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "malformed trajectory batch");
  }
  const int modes = batch.modes();
  const int n = grid.size();
  Eigen::MatrixXd lx(modes, n), ly(modes, n);
  for (int m = 0; m < modes; ++m) {
    const Eigen::Vector2d c = mode_coordinate(batch, m, coordinate);
    lx.row(m) = mode_log_distribution(grid.anchors_x, c.x(), grid.tau_s, grid.range_x()).transpose();
    ly.row(m) = mode_log_distribution(grid.anchors_y, c.y(), grid.tau_s, grid.range_y()).transpose();
  }
  const Eigen::VectorXd lw = floored_log_weights(batch.mode_probs);
  return {mixture(lx, lw), mixture(ly, lw)};
}

namespace {

// Backward through one axis. Returns d/d coordinate per mode and accumulates
// d/d log w into `g_lw`.
Eigen::VectorXd axis_backward(const Eigen::VectorXd& anchors, const Eigen::VectorXd& coords,
                              double tau_s, double range, const Eigen::VectorXd& log_w,
                              const Eigen::VectorXd& upstream, Eigen::VectorXd& g_lw) {
  const int modes = static_cast<int>(coords.size());
  const int n = static_cast<int>(anchors.size());
  Eigen::MatrixXd log_p(modes, n), s(modes, n);
  for (int m = 0; m < modes; ++m) {
    log_p.row(m) = mode_log_distribution(anchors, coords[m], tau_s, range).transpose();
    for (int k = 0; k < n; ++k) s(m, k) = std::exp(-std::abs(coords[m] - anchors[k]) / (tau_s * range));
  }
  const Eigen::VectorXd logits = mixture(log_p, log_w);
  Eigen::VectorXd g_coord = Eigen::VectorXd::Zero(modes);
  for (int m = 0; m < modes; ++m) {
    Eigen::VectorXd g_logp(n);
    for (int k = 0; k < n; ++k) {
      const double r = std::exp(log_p(m, k) + log_w[m] - logits[k]);
      g_logp[k] = upstream[k] * r;
    }
    g_lw[m] += g_logp.sum();
    const Eigen::VectorXd p = log_p.row(m).transpose().array().exp();
    const Eigen::VectorXd g_z = g_logp - p * g_logp.sum();
    for (int k = 0; k < n; ++k) {
      const double diff = coords[m] - anchors[k];
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      // z = s / T, s = exp(-|c - a| / (tau range))
      g_coord[m] += g_z[k] / kLogitSoftmaxTemperature * s(m, k) * (-sign / (tau_s * range));
    }
  }
  return g_coord;
}

}  // namespace

TrajectoryLogitsGrad trajectory_logits_backward(const TrajectoryBatch& batch, const ActionGrid& grid,
                                                const ActionLogits& upstream,
                                                ActionCoordinate coordinate) {
  const int modes = batch.modes();
  if (upstream.x.size() != grid.size() || upstream.y.size() != grid.size()) {
    throw Error(ErrorCode::kShapeMismatch, "upstream logits length mismatch");
  }
  Eigen::VectorXd cx(modes), cy(modes);
  for (int m = 0; m < modes; ++m) {
    const Eigen::Vector2d c = mode_coordinate(batch, m, coordinate);
    cx[m] = c.x();
    cy[m] = c.y();
  }
  const Eigen::VectorXd lw = floored_log_weights(batch.mode_probs);
  TrajectoryLogitsGrad g;
  g.log_weights = Eigen::VectorXd::Zero(modes);
  const Eigen::VectorXd gx =
      axis_backward(grid.anchors_x, cx, grid.tau_s, grid.range_x(), lw, upstream.x, g.log_weights);
  const Eigen::VectorXd gy =
      axis_backward(grid.anchors_y, cy, grid.tau_s, grid.range_y(), lw, upstream.y, g.log_weights);
  g.trajectories = Eigen::MatrixXd::Zero(modes, kTrajectoryDim);
  for (int m = 0; m < modes; ++m) {
    if (coordinate == ActionCoordinate::kEndpoint) {
      g.trajectories(m, kTrajectoryDim - 2) = gx[m];
      g.trajectories(m, kTrajectoryDim - 1) = gy[m];
    } else {
      for (int k = 0; k < kTrajectoryPoints; ++k) {
        g.trajectories(m, 2 * k) = gx[m] / kTrajectoryPoints;
        g.trajectories(m, 2 * k + 1) = gy[m] / kTrajectoryPoints;
      }
    }
  }
  return g;
}

ActionLogits combine_logits(const ActionLogits& traj, const ActionLogits& residual, double alpha) {
  if (traj.x.size() != residual.x.size() || traj.y.size() != residual.y.size()) {
    throw Error(ErrorCode::kShapeMismatch, "logit lengths differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "blend ratio outside [0, 1]");
  return {alpha * traj.x + (1.0 - alpha) * residual.x, alpha * traj.y + (1.0 - alpha) * residual.y};
}

namespace {

int argmax_lower(const Eigen::VectorXd& v) {
  int best = 0;
  for (int k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

int sample_index(const Eigen::VectorXd& logits, Rng& rng) {
  const Eigen::VectorXd p = softmax(logits);
  const double u = rng.uniform();
  double acc = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  // Rounding left the cumulative sum just under 1; take the last nonzero bin.
  for (int k = static_cast<int>(p.size()) - 1; k >= 0; --k) {
    if (p[k] > 0.0) return k;
  }
  return 0;
}

}  // namespace

ActionChoice decode_argmax(const ActionLogits& logits, const ActionGrid& grid) {
  ActionChoice c;
  c.index_x = argmax_lower(logits.x);
  c.index_y = argmax_lower(logits.y);
  c.x = grid.anchors_x[c.index_x];
  c.y = grid.anchors_y[c.index_y];
  return c;
}

ActionChoice decode_sample(const ActionLogits& logits, const ActionGrid& grid, std::uint64_t seed) {
  Rng rng(seed);
  ActionChoice c;
  c.index_x = sample_index(logits.x, rng);
  c.index_y = sample_index(logits.y, rng);
  c.x = grid.anchors_x[c.index_x];
  c.y = grid.anchors_y[c.index_y];
  return c;
}

void write_logits_csv(std::ostream& out, const ActionLogits& logits, const ActionGrid& grid) {
  out << "index,anchor_x,logit_x,anchor_y,logit_y\n";
  out.precision(17);
  for (int k = 0; k < grid.size(); ++k) {
    out << k << ',' << grid.anchors_x[k] << ',' << logits.x[k] << ',' << grid.anchors_y[k] << ','
        << logits.y[k] << '\n';
  }
}

}  // namespace gsdrive
