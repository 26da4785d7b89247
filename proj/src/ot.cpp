#include "gsdrive/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gsdrive/error.hpp"

namespace gsdrive {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogDomainEpsilon = 1e-2;
// exp(-700) is near the smallest normal double.
constexpr double kUnderflowExponent = 700.0;

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double m = x.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((x.array() - m).exp().sum());
}

Eigen::VectorXd safe_log(const Eigen::VectorXd& w) {
  Eigen::VectorXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = w[i] > 0.0 ? std::log(w[i]) : kNegInf;
  return out;
}

double marginal_violation(const Eigen::MatrixXd& plan, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b) {
  const double rows = (plan.rowwise().sum() - a).cwiseAbs().maxCoeff();
  const double cols = (plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

void check_pair(const TrajectorySet& source, const TrajectorySet& target) {
  source.validate();
  target.validate();
  if (source.points.cols() != target.points.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "source and target trajectories differ in dimension");
  }
}

void check_coupling(const OtCoupling& c, const TrajectorySet& source, const TrajectorySet& target) {
  if (c.plan.rows() != source.size() || c.plan.cols() != target.size()) {
    throw Error(ErrorCode::kShapeMismatch, "coupling shape does not match trajectory sets");
  }
  if (source.points.cols() != target.points.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "source and target trajectories differ in dimension");
  }
  for (Eigen::Index i = 0; i < c.source_marginal.size(); ++i) {
    if (!(c.source_marginal[i] > 0.0)) {
      throw Error(ErrorCode::kDegenerateSource,
                  "source trajectory " + std::to_string(i) + " carries no transport mass");
    }
  }
}

// Row-normalized plan, w_ij = P_ij / a_i.
Eigen::MatrixXd conditional_weights(const OtCoupling& c) {
  return c.source_marginal.cwiseInverse().asDiagonal() * c.plan;
}

}  // namespace

TrajectorySet TrajectorySet::uniform(Eigen::MatrixXd points) {
  TrajectorySet s;
  const auto n = points.rows();
  s.points = std::move(points);
  s.weights = Eigen::VectorXd::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  return s;
}

void TrajectorySet::validate() const {
  if (points.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "empty trajectory set");
  if (weights.size() != points.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "trajectory weights do not match trajectory count");
  }
  if (weights.minCoeff() < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory weights must be nonnegative");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory weights must sum to 1");
  }
}

Eigen::MatrixXd squared_distance_cost(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target) {
  Eigen::MatrixXd c(source.rows(), target.rows());
  for (Eigen::Index i = 0; i < source.rows(); ++i) {
    for (Eigen::Index j = 0; j < target.rows(); ++j) {
      c(i, j) = (source.row(i) - target.row(j)).squaredNorm();
    }
  }
  return c;
}

OtCoupling sinkhorn_coupling(const TrajectorySet& source, const TrajectorySet& target,
                             const SinkhornOptions& options) {
  check_pair(source, target);
  if (!(options.epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be > 0");
  if (options.max_iters < 1) throw Error(ErrorCode::kInvalidArgument, "max_iters must be >= 1");

  const double eps = options.epsilon;
  const Eigen::VectorXd& a = source.weights;
  const Eigen::VectorXd& b = target.weights;
  const Eigen::MatrixXd cost = squared_distance_cost(source.points, target.points);
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();

  OtCoupling out;
  out.epsilon = eps;
  out.log_kernel = -cost / eps;
  out.kernel = out.log_kernel.array().exp();
  out.log_domain = eps <= kLogDomainEpsilon || cost.maxCoeff() / eps > kUnderflowExponent;

  if (!out.log_domain) {
    Eigen::VectorXd u = Eigen::VectorXd::Ones(m);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
    for (int it = 1; it <= options.max_iters; ++it) {
      u = a.cwiseQuotient(out.kernel * v);
      v = b.cwiseQuotient(out.kernel.transpose() * u);
      out.iterations = it;
      // Column marginals are exact after the v update; rows carry the error.
      out.violation = (u.cwiseProduct(out.kernel * v) - a).cwiseAbs().maxCoeff();
      if (out.violation < options.tol) {
        out.converged = true;
        break;
      }
    }
    out.u = u;
    out.v = v;
    out.log_u = u.array().log();
    out.log_v = v.array().log();
    out.plan = u.asDiagonal() * out.kernel * v.asDiagonal();
  } else {
    // Stabilized scaling: P = diag(u) K~ diag(v) with K~_ij = exp(f_i + g_j - C_ij/eps).
    // The scalings are folded into the log potentials f, g whenever they drift
    // far from 1, so the iterations stay matrix-vector products without
    // over- or underflow. A row or column whose kernel mass underflows falls
    // back to an exact log-sum-exp half step.
    const Eigen::VectorXd log_a = safe_log(a);
    const Eigen::VectorXd log_b = safe_log(b);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd scratch_n(n);
    Eigen::VectorXd scratch_m(m);
    const auto log_step = [&] {
      for (Eigen::Index i = 0; i < m; ++i) {
        scratch_n = out.log_kernel.row(i).transpose() + g;
        f[i] = log_a[i] == kNegInf ? kNegInf : log_a[i] - log_sum_exp(scratch_n);
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        scratch_m = out.log_kernel.col(j) + f;
        g[j] = log_b[j] == kNegInf ? kNegInf : log_b[j] - log_sum_exp(scratch_m);
      }
    };
    Eigen::MatrixXd stable(m, n);
    const auto rebuild = [&] {
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
          const double e = f[i] + g[j] + out.log_kernel(i, j);
          stable(i, j) = e == kNegInf ? 0.0 : std::exp(e);
        }
      }
    };
    const auto scale = [](const Eigen::VectorXd& marginal, const Eigen::VectorXd& mass, Eigen::VectorXd& s) {
      bool ok = true;
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (marginal[i] == 0.0) {
          s[i] = 0.0;
        } else if (mass[i] > 0.0 && std::isfinite(mass[i])) {
          s[i] = marginal[i] / mass[i];
        } else {
          ok = false;
        }
      }
      return ok;
    };
    const auto absorb = [](Eigen::VectorXd& pot, const Eigen::VectorXd& s) {
      for (Eigen::Index i = 0; i < s.size(); ++i) pot[i] = s[i] > 0.0 ? pot[i] + std::log(s[i]) : kNegInf;
    };
    constexpr double kAbsorbBound = 1e50;
    const auto drifted = [](const Eigen::VectorXd& s) {
      for (double x : s) {
        if (x > kAbsorbBound || (x > 0.0 && x < 1.0 / kAbsorbBound)) return true;
      }
      return false;
    };

    log_step();
    rebuild();
    Eigen::VectorXd u = Eigen::VectorXd::Ones(m), v = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd u_prev = u, v_prev = v;
    for (int it = 1; it <= options.max_iters; ++it) {
      u_prev = u;
      v_prev = v;
      const bool ok = scale(a, stable * v, u) && scale(b, stable.transpose() * u, v);
      out.iterations = it;
      if (!ok) {
        absorb(f, u_prev);
        absorb(g, v_prev);
        log_step();
        rebuild();
        u.setOnes();
        v.setOnes();
      } else if (drifted(u) || drifted(v)) {
        absorb(f, u);
        absorb(g, v);
        rebuild();
        u.setOnes();
        v.setOnes();
      }
      // Column marginals are exact after the v update; rows carry the error.
      out.violation = (u.cwiseProduct(stable * v) - a).cwiseAbs().maxCoeff();
      if (out.violation < options.tol) {
        out.converged = true;
        break;
      }
    }
    absorb(f, u);
    absorb(g, v);
    out.log_u = f;
    out.log_v = g;
    out.u = f.array().exp();
    out.v = g.array().exp();
    out.plan.resize(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double e = f[i] + g[j] + out.log_kernel(i, j);
        out.plan(i, j) = e == kNegInf ? 0.0 : std::exp(e);
      }
    }
  }
  out.source_marginal = out.plan.rowwise().sum();
  out.violation = marginal_violation(out.plan, a, b);
  out.converged = out.violation < options.tol;
  return out;
}

double transport_cost(const OtCoupling& coupling, const Eigen::MatrixXd& cost) {
  return coupling.plan.cwiseProduct(cost).sum();
}

Eigen::MatrixXd ot_interpolate(const OtCoupling& coupling, const TrajectorySet& source,
                               const TrajectorySet& target, double t) {
  check_coupling(coupling, source, target);
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "t must lie in [0, 1]");
  // sum_j w_ij [(1-t) tau0_i + t tau1_j] with sum_j w_ij = 1 collapses to
  // (1-t) tau0_i + t * barycenter_i; this form keeps t = 0 exact.
  const Eigen::MatrixXd barycenter = conditional_weights(coupling) * target.points;
  return (1.0 - t) * source.points + t * barycenter;
}

Eigen::MatrixXd velocity_target(const OtCoupling& coupling, const TrajectorySet& source,
                                const TrajectorySet& target) {
  check_coupling(coupling, source, target);
  const Eigen::MatrixXd w = conditional_weights(coupling);
  Eigen::MatrixXd nu = Eigen::MatrixXd::Zero(source.points.rows(), source.points.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      nu.row(i) += w(i, j) * (target.points.row(j) - source.points.row(i));
    }
  }
  return nu;
}

double ot_velocity_loss(const Eigen::MatrixXd& predicted, const OtCoupling& coupling,
                        const TrajectorySet& source, const TrajectorySet& target,
                        Eigen::MatrixXd* grad) {
  if (predicted.rows() != source.points.rows() || predicted.cols() != source.points.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "predicted velocity shape does not match source set");
  }
  const Eigen::MatrixXd nu = velocity_target(coupling, source, target);
  const Eigen::VectorXd w = coupling.source_marginal / coupling.source_marginal.sum();
  const Eigen::MatrixXd diff = predicted - nu;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) loss += w[i] * diff.row(i).squaredNorm();
  if (grad) *grad = 2.0 * (w.asDiagonal() * diff);
  return loss;
}

}  // namespace gsdrive
