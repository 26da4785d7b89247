#include "gsdrive/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gsdrive/error.hpp"

namespace gsdrive {

namespace {

using Json = nlohmann::ordered_json;

// Single field table shared by serialization and parsing.
template <typename F>
void visit_fields(RunConfig& c, std::string& coordinate, F&& f) {
  f("seed", c.seed);
  f("workers", c.workers);
  f("splat/recon_l1", c.recon.rgb);
  f("splat/recon_ssim", c.recon.ssim);
  f("splat/recon_depth", c.recon.depth);
  f("ot/epsilon", c.sinkhorn.epsilon);
  f("ot/max_iters", c.sinkhorn.max_iters);
  f("ot/tol", c.sinkhorn.tol);
  f("nn/hidden", c.hidden);
  f("nn/flow_layers", c.flow_layers);
  f("nn/head_layers", c.head_layers);
  f("nn/learning_rate", c.learning_rate);
  f("nn/max_grad_norm", c.max_grad_norm);
  f("flowhead/modes", c.modes);
  f("flowhead/cfg_dropout", c.cfg_dropout);
  f("flowhead/guidance", c.guidance);
  f("flowhead/sample_steps", c.sample_steps);
  f("flowhead/alpha_il", c.alpha_il);
  f("flowhead/focal_alpha", c.focal.alpha);
  f("flowhead/focal_gamma", c.focal.gamma);
  f("flowhead/w_mode", c.il_weights.mode);
  f("flowhead/w_traj", c.il_weights.traj);
  f("flowhead/w_action", c.il_weights.action);
  f("flowhead/coordinate", coordinate);
  f("actionspace/anchors", c.anchors);
  f("actionspace/x_min", c.x_min);
  f("actionspace/x_max", c.x_max);
  f("actionspace/y_min", c.y_min);
  f("actionspace/y_max", c.y_max);
  f("actionspace/tau_s", c.tau_s);
  f("env/dt", c.env.dt);
  f("env/max_accel", c.env.max_accel);
  f("env/max_yaw_step", c.env.max_yaw_step);
  f("env/max_speed", c.env.max_speed);
  f("env/ego_radius", c.env.ego_radius);
  f("env/max_ticks", c.env.max_ticks);
  f("env/nearest_agents", c.env.nearest_agents);
  f("env/detection_range", c.env.detection_range);
  f("env/goal_lookahead", c.env.goal_lookahead);
  f("env/goal_tolerance", c.env.goal_tolerance);
  f("env/obstacle_min_opacity", c.env.obstacle_min_opacity);
  f("env/obstacle_min_height", c.env.obstacle_min_height);
  f("env/action_horizon", c.env.action_horizon);
  f("env/image_features", c.env.image_features);
  f("reward/w_env", c.reward.w_env);
  f("reward/w_probe", c.reward.w_probe);
  f("reward/survival", c.reward.survival);
  f("reward/progress_scale", c.reward.progress_scale);
  f("reward/collision_penalty", c.reward.collision_penalty);
  f("reward/jerk_weight", c.reward.jerk_weight);
  f("reward/accel_weight", c.reward.accel_weight);
  f("reward/probe_count", c.reward.probe_count);
  f("reward/probe_horizon", c.reward.probe_horizon);
  f("reward/gamma", c.reward.gamma);
  f("il/steps", c.il.steps);
  f("il/batch", c.il.batch);
  f("il/augment_offset", c.il.augment_offset);
  f("il/checkpoint_every", c.il.checkpoint_every);
  f("rl/updates", c.rl_run.updates);
  f("rl/checkpoint_every", c.rl_run.checkpoint_every);
  f("rl/envs", c.rl.envs);
  f("rl/steps", c.rl.steps);
  f("rl/epochs", c.rl.epochs);
  f("rl/minibatch", c.rl.minibatch);
  f("rl/learning_rate", c.rl.learning_rate);
  f("rl/alpha", c.rl.alpha);
  f("rl/clip", c.rl.coef.clip);
  f("rl/c1", c.rl.coef.c1);
  f("rl/c2", c.rl.coef.c2);
  f("rl/c3", c.rl.coef.c3);
  f("rl/gamma", c.rl.coef.gamma);
  f("rl/lambda", c.rl.coef.lambda);
  f("rl/kl_target", c.rl.kl.target);
  f("rl/kappa_base", c.rl.kl.kappa_base);
  f("rl/kl_decay", c.rl.kl.decay);
  f("rl/normalize_advantages", c.rl.normalize_advantages);
  f("rl/scale_rewards", c.rl.scale_rewards);
  f("eval/episodes", c.eval_episodes);
}

std::string coordinate_name(ActionCoordinate c) {
  return c == ActionCoordinate::kEndpoint ? "endpoint" : "mean";
}

ActionCoordinate parse_coordinate(const std::string& s) {
  if (s == "endpoint") return ActionCoordinate::kEndpoint;
  if (s == "mean") return ActionCoordinate::kMeanOfPoints;
  throw Error(ErrorCode::kConfig, "flowhead/coordinate must be \"endpoint\" or \"mean\"");
}

Json::json_pointer pointer(const std::string& path) { return Json::json_pointer("/" + path); }

Json to_json(RunConfig cfg) {
  Json j = Json::object();
  std::string coordinate = coordinate_name(cfg.coordinate);
  visit_fields(cfg, coordinate, [&](const std::string& path, auto& value) { j[pointer(path)] = value; });
  return j;
}

void check_known(const Json& in, const Json& known, const std::string& prefix) {
  if (!in.is_object()) throw Error(ErrorCode::kConfig, "config section " + prefix + " must be an object");
  for (auto it = in.begin(); it != in.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "/" + it.key();
    if (!known.contains(it.key())) throw Error(ErrorCode::kConfig, "unknown config key: " + path);
    if (known[it.key()].is_object()) check_known(it.value(), known[it.key()], path);
  }
}

template <typename T>
void read_value(const Json& j, const std::string& path, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw Error(ErrorCode::kConfig, path + " must be a boolean");
    out = j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw Error(ErrorCode::kConfig, path + " must be a string");
    out = j.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!j.is_number_unsigned()) throw Error(ErrorCode::kConfig, path + " must be a nonnegative integer");
    out = j.get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw Error(ErrorCode::kConfig, path + " must be an integer");
    out = j.get<T>();
  } else {
    if (!j.is_number()) throw Error(ErrorCode::kConfig, path + " must be a number");
    out = j.get<T>();
  }
}

}  // namespace

void RunConfig::validate() const {
  recon.validate();
  if (!(sinkhorn.epsilon > 0.0) || sinkhorn.max_iters < 1 || !(sinkhorn.tol > 0.0)) {
    throw Error(ErrorCode::kConfig, "ot settings out of range");
  }
  if (hidden < 1 || flow_layers < 1 || head_layers < 1) throw Error(ErrorCode::kConfig, "network sizes must be >= 1");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kConfig, "learning rate must be >= 0");
  if (modes < 1) throw Error(ErrorCode::kConfig, "flowhead/modes must be >= 1");
  if (!(cfg_dropout >= 0.0 && cfg_dropout <= 1.0)) throw Error(ErrorCode::kConfig, "cfg_dropout outside [0, 1]");
  if (sample_steps < 1) throw Error(ErrorCode::kConfig, "sample_steps must be >= 1");
  if (!(alpha_il >= 0.0 && alpha_il <= 1.0)) throw Error(ErrorCode::kConfig, "alpha_il outside [0, 1]");
  focal.validate();
  il_weights.validate_imitation_ordering();
  grid();
  env.validate();
  reward.validate();
  if (reward.probe_count > modes) throw Error(ErrorCode::kConfig, "reward/probe_count exceeds flowhead/modes");
  if (il.steps < 0 || il.batch < 1 || il.checkpoint_every < 0 || !(il.augment_offset >= 0.0)) {
    throw Error(ErrorCode::kConfig, "il settings out of range");
  }
  if (rl_run.updates < 0 || rl_run.checkpoint_every < 0) throw Error(ErrorCode::kConfig, "rl settings out of range");
  rl.validate();
  if (eval_episodes < 0) throw Error(ErrorCode::kConfig, "eval/episodes must be >= 0");
}

ActionGrid RunConfig::grid() const {
  try {
    return build_grid(x_min, x_max, y_min, y_max, anchors, tau_s);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("actionspace: ") + e.what());
  }
}

FlowHeadConfig RunConfig::flowhead(int observation_dim) const {
  FlowHeadConfig f;
  f.observation_dim = observation_dim;
  f.modes = modes;
  f.hidden = hidden;
  f.flow_layers = flow_layers;
  f.head_layers = head_layers;
  f.cfg_dropout = cfg_dropout;
  f.guidance = guidance;
  f.sample_steps = sample_steps;
  f.alpha_il = alpha_il;
  f.focal = focal;
  f.weights = il_weights;
  f.sinkhorn = sinkhorn;
  f.grid = grid();
  f.coordinate = coordinate;
  return f;
}

RlConfig RunConfig::rl_config(int worker_count) const {
  RlConfig r = rl;
  r.max_grad_norm = max_grad_norm;
  r.sample_steps = sample_steps;
  r.guidance = guidance;
  r.workers = worker_count;
  return r;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

std::uint64_t RunConfig::fingerprint() const {
  Json j = to_json(*this);
  j.erase("seed");
  j.erase("workers");
  return fnv1a64(j.dump());
}

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  Json in;
  try {
    in = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  check_known(in, to_json(cfg), "");
  std::string coordinate = coordinate_name(cfg.coordinate);
  visit_fields(cfg, coordinate, [&](const std::string& path, auto& value) {
    const auto ptr = pointer(path);
    if (in.contains(ptr)) read_value(in[ptr], path, value);
  });
  cfg.coordinate = parse_coordinate(coordinate);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace gsdrive
