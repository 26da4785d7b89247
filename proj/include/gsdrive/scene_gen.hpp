#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsdrive/splat.hpp"

namespace gsdrive {

struct SceneParams {
  double length = 150.0;       // meters of road
  double lane_width = 3.5;
  double road_half_width = 2.5;
  double cruise_speed = 6.0;   // expert target speed, m/s
  double expert_accel = 2.0;   // m/s^2
  double dt = 0.5;
  int camera_width = 64;
  int camera_height = 48;
};

const std::vector<std::string>& scene_templates();

/// Synthetic scene from a named template: corridor, curve, obstacle, cut-in.
Scene generate_scene(const std::string& name, std::uint64_t seed, const SceneParams& params = {});

}  // namespace gsdrive
