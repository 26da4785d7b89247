#include "gsdrive/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "gsdrive/error.hpp"
#include "gsdrive/geometry.hpp"

namespace gsdrive {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kImageWidth = 32;
constexpr int kImageHeight = 24;
constexpr int kImagePool = 4;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

}  // namespace

void EnvConfig::validate() const {
  if (!(dt > 0.0 && max_accel > 0.0 && max_yaw_step > 0.0 && max_speed > 0.0 && ego_radius > 0.0)) {
    throw Error(ErrorCode::kConfig, "environment rates and sizes must be positive");
  }
  if (max_ticks < 1 || nearest_agents < 0) throw Error(ErrorCode::kConfig, "bad episode cap or detection count");
  if (!(action_horizon > 0.0)) throw Error(ErrorCode::kConfig, "action horizon must be positive");
}

void RewardConfig::validate() const {
  if (!(w_env >= 0.0 && w_probe >= 0.0)) throw Error(ErrorCode::kConfig, "reward weights must be >= 0");
  if (probe_count < 1 || probe_horizon < 0) throw Error(ErrorCode::kConfig, "probe count must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(ErrorCode::kConfig, "probe discount must lie in (0, 1]");
}

double total_reward(double r_env, double r_probe, const RewardConfig& cfg) {
  return cfg.w_env * r_env + cfg.w_probe * r_probe;
}

double point_ellipse_distance(double a, double b, Vec2 p) {
  double y0 = std::abs(p.x()), y1 = std::abs(p.y());
  double e0 = a, e1 = b;
  if (e0 < e1) {
    std::swap(e0, e1);
    std::swap(y0, y1);
  }
  if ((y0 * y0) / (e0 * e0) + (y1 * y1) / (e1 * e1) <= 1.0) return 0.0;
  // Closest point x_i = e_i^2 y_i / (t + e_i^2) where t > 0 solves
  // sum (e_i y_i / (t + e_i^2))^2 = 1; the left side decreases in t.
  auto f = [&](double t) {
    const double r0 = e0 * y0 / (t + e0 * e0);
    const double r1 = e1 * y1 / (t + e1 * e1);
    return r0 * r0 + r1 * r1 - 1.0;
  };
  double lo = 0.0, hi = e0 * std::hypot(y0, y1) + 1.0;
  while (f(hi) > 0.0) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  const double x0 = e0 * e0 * y0 / (t + e0 * e0);
  const double x1 = e1 * e1 * y1 / (t + e1 * e1);
  return std::hypot(y0 - x0, y1 - x1);
}

double polyline_length(const Polyline& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += (path[i] - path[i - 1]).norm();
  return len;
}

PathProjection project_onto(const Polyline& path, const Vec2& p) {
  PathProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (path.size() == 1) {
    best.distance = (p - path[0]).norm();
    best.arc = 0.0;
    return best;
  }
  double arc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Vec2 a = path[i - 1], d = path[i] - path[i - 1];
    const double len = d.norm();
    if (len == 0.0) continue;
    const double s = std::clamp((p - a).dot(d) / (len * len), 0.0, 1.0);
    const double dist = (a + s * d - p).norm();
    if (dist < best.distance) {
      best.distance = dist;
      best.arc = arc + s * len;
      best.tangent = d / len;
    }
    arc += len;
  }
  return best;
}

Vec2 point_at_arc(const Polyline& path, double arc) {
  if (path.empty()) return Vec2::Zero();
  if (arc <= 0.0) return path.front();
  double acc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double len = (path[i] - path[i - 1]).norm();
    if (acc + len >= arc && len > 0.0) return path[i - 1] + (arc - acc) / len * (path[i] - path[i - 1]);
    acc += len;
  }
  return path.back();
}

EpisodeMetrics episode_metrics(const EpisodeTrace& trace, bool allow_short) {
  const std::size_t n = trace.positions.size();
  if (trace.speeds.size() != n || n == 0) throw Error(ErrorCode::kShapeMismatch, "trace positions/speeds differ");
  if (n < 3 && !allow_short) {
    throw Error(ErrorCode::kTraceTooShort, "metrics need at least 3 recorded states");
  }
  EpisodeMetrics m;
  m.er = std::accumulate(trace.rewards.begin(), trace.rewards.end(), 0.0);
  m.ds = std::accumulate(trace.speeds.begin(), trace.speeds.end(), 0.0) / static_cast<double>(n);
  std::vector<double> accel;
  for (std::size_t t = 0; t + 1 < n; ++t) accel.push_back((trace.speeds[t + 1] - trace.speeds[t]) / trace.dt);
  for (double a : accel) m.ma = std::max(m.ma, std::abs(a));
  for (std::size_t t = 0; t + 1 < accel.size(); ++t) {
    m.maj = std::max(m.maj, std::abs((accel[t + 1] - accel[t]) / trace.dt));
  }
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const Vec2 d = trace.positions[t + 1] - trace.positions[t];
    m.msa = std::max(m.msa, std::abs(std::atan2(d.y(), d.x())));
  }
  // A lane change counts once the new lane holds for two consecutive ticks.
  if (!trace.lanes.empty()) {
    int stable = trace.lanes[0];
    for (std::size_t t = 1; t + 1 < trace.lanes.size(); ++t) {
      if (trace.lanes[t] != stable && trace.lanes[t + 1] == trace.lanes[t]) {
        ++m.lc;
        stable = trace.lanes[t];
      }
    }
  }
  m.cr = trace.collided ? 1.0 : 0.0;
  return m;
}

DrivingEnv::DrivingEnv(std::shared_ptr<const Scene> scene, EnvConfig env, RewardConfig reward)
    : scene_(std::move(scene)), env_(env), reward_(reward) {
  if (!scene_) throw Error(ErrorCode::kInvalidArgument, "environment needs a scene");
  scene_->validate();
  env_.validate();
  reward_.validate();
  auto obstacles = std::make_shared<std::vector<Obstacle>>();
  for (const auto& g : scene_->gaussians) {
    if (g.opacity < env_.obstacle_min_opacity || g.mean.z() < env_.obstacle_min_height) continue;
    const Mat2 cov = build_covariance(g).topLeftCorner<2, 2>();
    Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
    Obstacle o;
    o.center = g.mean.head<2>();
    o.axes = eig.eigenvectors();
    o.semi = 2.0 * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    o.bound = o.semi.maxCoeff();
    obstacles->push_back(o);
  }
  obstacles_ = std::move(obstacles);
  reset();
}

void DrivingEnv::teleport(const EgoState& ego, int tick) {
  if (tick < 0) throw Error(ErrorCode::kInvalidArgument, "tick must be >= 0");
  ego_ = ego;
  if (ego_.history.empty()) ego_.history = {ego_.position};
  tick_ = tick;
  done_ = false;
  trace_ = EpisodeTrace{};
  trace_.dt = env_.dt;
  trace_.positions = {ego_.position};
  trace_.speeds = {ego_.speed};
  trace_.lanes = {lane_index(ego_.position)};
}

void DrivingEnv::reset() {
  const Polyline& expert = scene_->expert_trajectory;
  ego_ = EgoState{};
  ego_.position = expert[0];
  const Vec2 d = expert[1] - expert[0];
  ego_.heading = wrap_angle(std::atan2(d.y(), d.x()));
  ego_.history = {ego_.position};
  tick_ = 0;
  done_ = false;
  trace_ = EpisodeTrace{};
  trace_.dt = env_.dt;
  trace_.positions = {ego_.position};
  trace_.speeds = {0.0};
  trace_.lanes = {lane_index(ego_.position)};
}

int DrivingEnv::lane_index(const Vec2& p) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene_->lane_centerlines.size(); ++i) {
    const double d = project_onto(scene_->lane_centerlines[i], p).distance;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double DrivingEnv::lane_offset(const Vec2& p) const {
  const PathProjection pr = project_onto(scene_->lane_centerlines[lane_index(p)], p);
  const Vec2 normal(-pr.tangent.y(), pr.tangent.x());
  const Vec2 foot = point_at_arc(scene_->lane_centerlines[lane_index(p)], pr.arc);
  return (p - foot).dot(normal);
}

Collision DrivingEnv::collision_check(const Vec2& position, int tick) const {
  const double r = env_.ego_radius;
  for (const auto& agent : scene_->agents) {
    if ((agent.pose_at(tick).position - position).norm() < r + agent.radius) return Collision::kDynamic;
  }
  for (const auto& o : *obstacles_) {
    const Vec2 d = position - o.center;
    if (d.norm() > r + o.bound) continue;
    const Vec2 local = o.axes.transpose() * d;
    if (point_ellipse_distance(o.semi.x(), o.semi.y(), local) <= r) return Collision::kStatic;
  }
  return Collision::kNone;
}

Vec2 DrivingEnv::ego_to_world(const Vec2& local) const {
  const double c = std::cos(ego_.heading), s = std::sin(ego_.heading);
  return ego_.position + Vec2(c * local.x() - s * local.y(), s * local.x() + c * local.y());
}

Vec2 DrivingEnv::world_to_ego(const Vec2& world) const {
  const double c = std::cos(ego_.heading), s = std::sin(ego_.heading);
  const Vec2 d = world - ego_.position;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

Vec2 DrivingEnv::action_target(const ActionChoice& action) const {
  return ego_to_world(Vec2(action.x, action.y) * (env_.dt / env_.action_horizon));
}

StepResult DrivingEnv::step(const Vec2& world_target) {
  if (done_) throw Error(ErrorCode::kEpisodeDone, "step called on a finished episode");
  if (!world_target.allFinite()) throw Error(ErrorCode::kNonFinite, "action target is not finite");
  const double dt = env_.dt;
  const Vec2 d = world_target - ego_.position;
  const double dist = d.norm();
  const double desired_speed = std::min(dist / dt, env_.max_speed);
  const double desired_heading = dist > 1e-9 ? std::atan2(d.y(), d.x()) : ego_.heading;
  const double dv = std::clamp(desired_speed - ego_.speed, -env_.max_accel * dt, env_.max_accel * dt);
  const double speed = std::max(0.0, ego_.speed + dv);
  const double dh = std::clamp(wrap_angle(desired_heading - ego_.heading), -env_.max_yaw_step, env_.max_yaw_step);
  const double heading = wrap_angle(ego_.heading + dh);
  const Vec2 position = ego_.position + speed * dt * Vec2(std::cos(heading), std::sin(heading));

  StepResult out;
  out.accel = (speed - ego_.speed) / dt;
  out.jerk = (out.accel - ego_.prev_accel) / dt;

  const Polyline& expert = scene_->expert_trajectory;
  const double arc_before = project_onto(expert, ego_.position).arc;
  const double arc_after = project_onto(expert, position).arc;

  ego_.position = position;
  ego_.heading = heading;
  ego_.speed = speed;
  ego_.prev_accel = out.accel;
  ego_.history.push_back(position);
  if (ego_.history.size() > 3) ego_.history.erase(ego_.history.begin());
  ++tick_;

  out.collision = collision_check(position, tick_);
  out.off_road = std::abs(lane_offset(position)) > scene_->road_half_width;
  out.goal = arc_after >= polyline_length(expert) - env_.goal_tolerance;
  const bool crashed = out.collision != Collision::kNone || out.off_road;

  RewardBreakdown& r = out.reward;
  r.survival = crashed ? 0.0 : reward_.survival;
  r.progress = reward_.progress_scale * (arc_after - arc_before);
  r.collision = crashed ? reward_.collision_penalty : 0.0;
  r.comfort = reward_.jerk_weight * std::abs(out.jerk) + reward_.accel_weight * std::abs(out.accel);
  r.total = r.survival + r.progress - r.collision - r.comfort;

  out.done = crashed || out.goal || tick_ >= env_.max_ticks;
  done_ = out.done;
  trace_.positions.push_back(position);
  trace_.speeds.push_back(speed);
  trace_.lanes.push_back(lane_index(position));
  trace_.rewards.push_back(r.total);
  trace_.collided = trace_.collided || out.collision != Collision::kNone;
  return out;
}

ProbeResult DrivingEnv::probe(const TrajectoryBatch& batch) const {
  const int modes = batch.modes();
  if (reward_.probe_count > modes) {
    throw Error(ErrorCode::kConfig, "probe count " + std::to_string(reward_.probe_count) +
                                        " exceeds mode count " + std::to_string(modes));
  }
  std::vector<int> order(modes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return batch.mode_probs[a] > batch.mode_probs[b]; });
  order.resize(reward_.probe_count);

  ProbeResult out;
  out.modes = order;
  out.reward = -std::numeric_limits<double>::infinity();
  const int ticks = std::min(reward_.probe_horizon + 1, kTrajectoryPoints);
  for (int m : order) {
    DrivingEnv sim = *this;
    double ret = 0.0, discount = 1.0;
    for (int h = 0; h < ticks && !sim.done(); ++h) {
      const StepResult s = sim.step(ego_to_world(batch.point(m, h)));
      ret += discount * s.reward.total;
      discount *= reward_.gamma;
    }
    out.returns.push_back(ret);
    out.reward = std::max(out.reward, ret);
  }
  return out;
}

int observation_dim(const EnvConfig& env) {
  return 5 + 5 * env.nearest_agents +
         (env.image_features ? (kImageWidth / kImagePool) * (kImageHeight / kImagePool) : 0);
}

int DrivingEnv::observation_dim() const { return gsdrive::observation_dim(env_); }

Eigen::VectorXd DrivingEnv::observe() const {
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(observation_dim());
  const Polyline& expert = scene_->expert_trajectory;
  const PathProjection pr = project_onto(expert, ego_.position);
  const Vec2 goal = world_to_ego(point_at_arc(expert, pr.arc + env_.goal_lookahead));
  obs[0] = ego_.speed / 10.0;
  obs[1] = wrap_angle(ego_.heading - std::atan2(pr.tangent.y(), pr.tangent.x()));
  obs[2] = lane_offset(ego_.position) / scene_->road_half_width;
  obs[3] = goal.x() / 10.0;
  obs[4] = goal.y() / 10.0;

  struct Detection {
    double dist;
    Vec2 rel, vel;
  };
  std::vector<Detection> dets;
  const Vec2 ego_vel = ego_.speed * Vec2(std::cos(ego_.heading), std::sin(ego_.heading));
  const double c = std::cos(ego_.heading), s = std::sin(ego_.heading);
  auto rotate_in = [&](const Vec2& v) { return Vec2(c * v.x() + s * v.y(), -s * v.x() + c * v.y()); };
  for (const auto& agent : scene_->agents) {
    const Vec2 p = agent.pose_at(tick_).position;
    const double dist = (p - ego_.position).norm();
    if (dist > env_.detection_range) continue;
    dets.push_back({dist, world_to_ego(p), rotate_in(agent.velocity_at(tick_, env_.dt) - ego_vel)});
  }
  for (const auto& o : *obstacles_) {
    const double dist = (o.center - ego_.position).norm();
    if (dist > env_.detection_range) continue;
    if (std::abs(lane_offset(o.center)) > scene_->road_half_width) continue;
    dets.push_back({dist, world_to_ego(o.center), rotate_in(-ego_vel)});
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.dist < b.dist; });
  for (int k = 0; k < env_.nearest_agents && k < static_cast<int>(dets.size()); ++k) {
    const int o = 5 + 5 * k;
    obs[o] = 1.0;
    obs[o + 1] = dets[k].rel.x() / 10.0;
    obs[o + 2] = dets[k].rel.y() / 10.0;
    obs[o + 3] = dets[k].vel.x() / 10.0;
    obs[o + 4] = dets[k].vel.y() / 10.0;
  }
  if (env_.image_features) obs.tail(observation_dim() - 5 - 5 * env_.nearest_agents) = image_features();
  return obs;
}

Eigen::VectorXd DrivingEnv::image_features() const {
  const Mat3 k = make_intrinsics(24.0, 24.0, kImageWidth / 2.0, kImageHeight / 2.0);
  const Camera cam = vehicle_camera(ego_.position, ego_.heading, 1.5, k, {kImageWidth, kImageHeight});
  RenderOptions opts;
  opts.workers = 1;
  const Image luma = to_luma(render_view(*scene_, cam, tick_, opts).color);
  const int w = kImageWidth / kImagePool, h = kImageHeight / kImagePool;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(w * h);
  for (int y = 0; y < kImageHeight; ++y) {
    for (int x = 0; x < kImageWidth; ++x) {
      f[(y / kImagePool) * w + x / kImagePool] += luma.at(x, y) / (kImagePool * kImagePool);
    }
  }
  return f;
}

std::uint64_t DrivingEnv::state_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_d = [&](double v) { mix(&v, sizeof v); };
  mix_d(ego_.position.x());
  mix_d(ego_.position.y());
  mix_d(ego_.heading);
  mix_d(ego_.speed);
  mix_d(ego_.prev_accel);
  for (const auto& p : ego_.history) {
    mix_d(p.x());
    mix_d(p.y());
  }
  mix(&tick_, sizeof tick_);
  const char d = done_ ? 1 : 0;
  mix(&d, 1);
  for (const auto& p : trace_.positions) {
    mix_d(p.x());
    mix_d(p.y());
  }
  for (double v : trace_.speeds) mix_d(v);
  for (double v : trace_.rewards) mix_d(v);
  for (int l : trace_.lanes) mix(&l, sizeof l);
  return h;
}

}  // namespace gsdrive
