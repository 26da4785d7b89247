#include "gsdrive/scene_gen.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gsdrive/error.hpp"
#include "gsdrive/geometry.hpp"
#include "gsdrive/rng.hpp"

namespace gsdrive {

namespace {

// Reference line of the road: position and heading at arc length s.
struct RoadShape {
  std::function<Vec2(double)> point;
  std::function<double(double)> heading;

  Vec2 normal(double s) const { return {-std::sin(heading(s)), std::cos(heading(s))}; }
  Vec2 at(double s, double offset) const { return point(s) + offset * normal(s); }
};

RoadShape straight_road() {
  return {[](double s) { return Vec2(s, 0.0); }, [](double) { return 0.0; }};
}

// Straight lead-in, then a constant-curvature left bend.
RoadShape curved_road(double lead, double radius) {
  return {[=](double s) {
            if (s <= lead) return Vec2(s, 0.0);
            const double a = (s - lead) / radius;
            return Vec2(lead + radius * std::sin(a), radius * (1.0 - std::cos(a)));
          },
          [=](double s) { return s <= lead ? 0.0 : (s - lead) / radius; }};
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Gaussian3D flat(const Vec3& mean, const Vec3& scale, double yaw, double opacity, const Vec3& color) {
  Gaussian3D g;
  g.mean = mean;
  g.scale = scale;
  g.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  g.opacity = opacity;
  g.color = color;
  return g;
}

struct Layout {
  RoadShape road;
  std::vector<double> lane_offsets;
};

void add_road(Scene& scene, const Layout& layout, const SceneParams& p, Rng& rng) {
  const double lo = layout.lane_offsets.front() - p.road_half_width;
  const double hi = layout.lane_offsets.back() + p.road_half_width;
  for (double s = 0.0; s <= p.length + 10.0; s += 4.0) {
    const double yaw = layout.road.heading(s);
    for (double o = lo + 0.8; o <= hi - 0.8 + 1e-9; o += (hi - lo - 1.6) / std::ceil((hi - lo - 1.6) / 2.5)) {
      const Vec2 c = layout.road.at(s, o);
      const double shade = 0.33 + 0.04 * rng.uniform();
      scene.gaussians.push_back(flat({c.x(), c.y(), 0.0}, {2.2, 1.6, 0.03}, yaw, 0.9, {shade, shade, shade + 0.01}));
    }
    for (std::size_t k = 0; k + 1 < layout.lane_offsets.size(); ++k) {
      if (static_cast<int>(s / 4.0) % 2 != 0) continue;
      const Vec2 c = layout.road.at(s, 0.5 * (layout.lane_offsets[k] + layout.lane_offsets[k + 1]));
      scene.gaussians.push_back(flat({c.x(), c.y(), 0.01}, {1.0, 0.08, 0.02}, yaw, 0.9, {0.95, 0.95, 0.9}));
    }
  }
  // Roadside clutter, kept clear of the drivable band by its 2-sigma extent.
  for (int side = 0; side < 2; ++side) {
    for (double s = rng.uniform(0.0, 3.0); s <= p.length + 10.0; s += rng.uniform(2.0, 4.5)) {
      const Vec3 scale(rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8), rng.uniform(0.5, 1.5));
      const double clear = 1.0 + 2.0 * std::max(scale.x(), scale.y()) + rng.uniform(0.0, 4.0);
      const double o = side == 0 ? lo - clear : hi + clear;
      const Vec2 c = layout.road.at(s, o);
      const double g = rng.uniform(0.3, 0.6);
      scene.gaussians.push_back(flat({c.x(), c.y(), scale.z()}, scale, rng.uniform(-3.14159, 3.14159),
                                     rng.uniform(0.6, 0.95), {0.25 * g, g, 0.2 * g}));
    }
  }
  for (double o : layout.lane_offsets) {
    Polyline lane;
    for (double s = 0.0; s <= p.length + 10.0 + 1e-9; s += 2.0) lane.push_back(layout.road.at(s, o));
    scene.lane_centerlines.push_back(std::move(lane));
  }
  scene.road_half_width = p.road_half_width;
}

// Expert waypoints, one per tick: speed follows `target_speed(tick, s)` under
// the acceleration limit; lateral offset follows `offset(s)`.
Polyline drive_expert(const Layout& layout, const SceneParams& p, const std::function<double(int, double)>& target_speed,
                      const std::function<double(double)>& offset) {
  Polyline out;
  double s = 0.0, v = 0.0;
  for (int k = 0; s < p.length - 5.0 && k < 1000; ++k) {
    out.push_back(layout.road.at(s, offset(s)));
    const double dv = std::clamp(target_speed(k, s) - v, -p.expert_accel * p.dt, p.expert_accel * p.dt);
    v = std::max(0.0, v + dv);
    s += v * p.dt;
  }
  return out;
}

void add_cameras(Scene& scene, const SceneParams& p) {
  const Mat3 k = make_intrinsics(0.75 * p.camera_width, 0.75 * p.camera_width, 0.5 * p.camera_width,
                                 0.5 * p.camera_height);
  const auto& e = scene.expert_trajectory;
  for (std::size_t i = 0; i + 1 < e.size(); i += 20) {
    std::size_t j = i + 1;
    while (j + 1 < e.size() && (e[j] - e[i]).norm() < 1e-6) ++j;
    const Vec2 d = e[j] - e[i];
    scene.cameras.push_back(
        vehicle_camera(e[i], std::atan2(d.y(), d.x()), 1.5, k, {p.camera_width, p.camera_height}));
  }
}

std::uint64_t template_tag(const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

const std::vector<std::string>& scene_templates() {
  static const std::vector<std::string> names{"corridor", "curve", "obstacle", "cut-in"};
  return names;
}

Scene generate_scene(const std::string& name, std::uint64_t seed, const SceneParams& p) {
  const auto& names = scene_templates();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw Error(ErrorCode::kUnknownTemplate, "unknown scene template: " + name);
  }
  Rng rng(mix_seed(seed, template_tag(name)));
  Scene scene;
  scene.name = name + "-" + std::to_string(seed);
  const double w = p.lane_width;
  Layout layout{name == "curve" ? curved_road(30.0, rng.uniform(80.0, 120.0)) : straight_road(),
                name == "cut-in" ? std::vector<double>{-w, 0.0, w} : std::vector<double>{0.0, w}};
  add_road(scene, layout, p, rng);
  auto cruise = [&](int, double) { return p.cruise_speed; };
  auto keep_lane = [](double) { return 0.0; };

  if (name == "corridor" || name == "curve") {
    scene.expert_trajectory = drive_expert(layout, p, cruise, keep_lane);
  } else if (name == "obstacle") {
    const double s_obs = rng.uniform(40.0, 55.0);
    const double o_obs = rng.uniform(-0.3, 0.3);
    const int parts = 5 + static_cast<int>(rng.index(3));
    for (int i = 0; i < parts; ++i) {
      const Vec2 c = layout.road.at(s_obs + rng.uniform(-1.0, 1.0), o_obs + rng.uniform(-0.6, 0.6));
      const Vec3 scale(rng.uniform(0.35, 0.6), rng.uniform(0.35, 0.6), rng.uniform(0.35, 0.6));
      scene.gaussians.push_back(flat({c.x(), c.y(), rng.uniform(0.4, 1.2)}, scale, rng.uniform(-1.0, 1.0), 0.95,
                                     {0.9, rng.uniform(0.3, 0.5), 0.1}));
    }
    scene.expert_trajectory = drive_expert(layout, p, cruise, [&](double s) {
      return w * smoothstep((s - (s_obs - 24.0)) / 14.0);
    });
  } else {
    // cut-in: a slower car ahead drifts from the left lane across the ego
    // lane to the right lane; the expert holds back until it has cleared.
    AgentScript agent;
    agent.radius = 1.2;
    for (double dx : {-1.2, 0.0, 1.2}) {
      agent.body.push_back(flat({dx, 0.0, 0.7}, {0.9, 0.8, 0.6}, 0.0, 0.95, {0.15, 0.25, 0.85}));
    }
    const double speed = rng.uniform(3.0, 4.0);
    const double start = rng.uniform(18.0, 24.0);
    const double cross_begin = rng.uniform(40.0, 50.0);
    const double cross_len = 20.0;
    auto agent_offset = [&](double s) { return w - 2.0 * w * smoothstep((s - cross_begin) / cross_len); };
    for (int k = 0; k <= 200; ++k) {
      const double s = start + speed * p.dt * k;
      const double ds = 0.1;
      const Vec2 a = layout.road.at(s, agent_offset(s));
      const Vec2 b = layout.road.at(s + ds, agent_offset(s + ds));
      agent.poses.push_back({a, std::atan2(b.y() - a.y(), b.x() - a.x())});
    }
    const double clear_s = cross_begin + cross_len;
    auto target = [&, speed, start](int k, double s) {
      const double agent_s = start + speed * p.dt * k;
      const bool blocking = agent_s < clear_s;
      if (blocking && agent_s - s < 14.0) return std::max(0.0, speed - 1.0);
      return p.cruise_speed;
    };
    scene.expert_trajectory = drive_expert(layout, p, target, keep_lane);
    scene.agents.push_back(std::move(agent));
  }
  add_cameras(scene, p);
  scene.validate();
  return scene;
}

}  // namespace gsdrive
