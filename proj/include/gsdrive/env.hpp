#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "gsdrive/actionspace.hpp"
#include "gsdrive/splat.hpp"
#include "gsdrive/trajectory.hpp"

namespace gsdrive {

struct EnvConfig {
  double dt = 0.5;
  double max_accel = 3.0;      // m/s^2
  double max_yaw_step = 0.5;   // rad per tick
  double max_speed = 15.0;     // m/s
  double ego_radius = 1.0;
  int max_ticks = 40;
  int nearest_agents = 4;
  double detection_range = 40.0;
  double goal_lookahead = 5.0;   // meters along the expert path
  double goal_tolerance = 2.0;   // meters before the expert path ends
  double obstacle_min_opacity = 0.1;
  double obstacle_min_height = 0.25;
  double action_horizon = 3.0;   // seconds covered by a grid endpoint
  bool image_features = false;
  void validate() const;
};

struct RewardConfig {
  double w_env = 1.0;
  double w_probe = 0.5;
  double survival = 0.1;
  double progress_scale = 1.0;
  double collision_penalty = 5.0;
  double jerk_weight = 0.05;
  double accel_weight = 0.02;
  int probe_count = 3;
  int probe_horizon = 6;
  double gamma = 0.9;
  void validate() const;
};

struct EgoState {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  double speed = 0.0;
  double prev_accel = 0.0;
  std::vector<Vec2> history;  // most recent last, at most 3
};

enum class Collision { kNone, kStatic, kDynamic };

struct RewardBreakdown {
  double survival = 0.0;
  double progress = 0.0;
  double collision = 0.0;
  double comfort = 0.0;
  double total = 0.0;
};

struct StepResult {
  RewardBreakdown reward;
  bool done = false;
  Collision collision = Collision::kNone;
  bool off_road = false;
  bool goal = false;
  double accel = 0.0;
  double jerk = 0.0;
};

/// Per-episode record used for metrics. States include the initial one, so
/// positions/speeds/lanes have one more entry than rewards.
struct EpisodeTrace {
  double dt = 0.5;
  std::vector<Vec2> positions;
  std::vector<double> speeds;
  std::vector<int> lanes;
  std::vector<double> rewards;
  bool collided = false;
};

struct EpisodeMetrics {
  double er = 0.0;   // episode reward
  double ds = 0.0;   // mean speed
  double ma = 0.0;   // max |accel|
  double lc = 0.0;   // lane changes
  double maj = 0.0;  // max |jerk|
  double msa = 0.0;  // max |steering angle|
  double cr = 0.0;   // collision indicator
};

/// Throws kTraceTooShort below three states unless `allow_short`, in which
/// case terms that need more samples are reported as zero.
EpisodeMetrics episode_metrics(const EpisodeTrace& trace, bool allow_short = false);

struct ProbeResult {
  double reward = 0.0;               // max over probed modes
  std::vector<int> modes;            // probed mode indices, by descending probability
  std::vector<double> returns;       // discounted return per probed mode
};

/// Observation width produced by DrivingEnv::observe under `env`.
int observation_dim(const EnvConfig& env);

double total_reward(double r_env, double r_probe, const RewardConfig& cfg);

/// Shortest distance from a point to the boundary of an axis-aligned ellipse
/// with semi-axes (a, b); zero for points inside.
double point_ellipse_distance(double a, double b, Vec2 p);

/// Arc-length helpers over a polyline.
struct PathProjection {
  double arc = 0.0;
  double distance = 0.0;
  Vec2 tangent = Vec2::UnitX();
};
PathProjection project_onto(const Polyline& path, const Vec2& p);
Vec2 point_at_arc(const Polyline& path, double arc);
double polyline_length(const Polyline& path);

/// Closed-loop environment over one scene. Copying an instance clones the
/// full simulation state; the scene itself is shared and immutable.
class DrivingEnv {
 public:
  DrivingEnv(std::shared_ptr<const Scene> scene, EnvConfig env = {}, RewardConfig reward = {});

  void reset();
  StepResult step(const Vec2& world_target);

  /// One-tick world target for a grid action expressed over the action horizon
  /// in the ego frame.
  Vec2 action_target(const ActionChoice& action) const;
  Vec2 ego_to_world(const Vec2& local) const;
  Vec2 world_to_ego(const Vec2& world) const;

  Collision collision_check(const Vec2& position, int tick) const;
  ProbeResult probe(const TrajectoryBatch& batch) const;

  Eigen::VectorXd observe() const;
  int observation_dim() const;

  const EgoState& ego() const { return ego_; }
  /// Places the ego at `tick` with a fresh trace starting from that state.
  void teleport(const EgoState& ego, int tick);
  int tick() const { return tick_; }
  bool done() const { return done_; }
  const EpisodeTrace& trace() const { return trace_; }
  const Scene& scene() const { return *scene_; }
  const EnvConfig& env_config() const { return env_; }
  const RewardConfig& reward_config() const { return reward_; }
  RewardConfig& reward_config() { return reward_; }
  std::uint64_t state_hash() const;

  int lane_index(const Vec2& p) const;
  double lane_offset(const Vec2& p) const;

  /// Downsampled luma of the forward camera at the current ego pose.
  Eigen::VectorXd image_features() const;

 private:
  struct Obstacle {
    Vec2 center;
    Mat2 axes;      // columns are the principal directions
    Vec2 semi;      // 2-sigma semi-axes along those directions
    double bound;   // max semi-axis
  };

  std::shared_ptr<const Scene> scene_;
  std::shared_ptr<const std::vector<Obstacle>> obstacles_;
  EnvConfig env_;
  RewardConfig reward_;
  EgoState ego_;
  int tick_ = 0;
  bool done_ = false;
  EpisodeTrace trace_;
};

}  // namespace gsdrive
