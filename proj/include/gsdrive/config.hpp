#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gsdrive/env.hpp"
#include "gsdrive/flowhead.hpp"
#include "gsdrive/splat.hpp"
#include "gsdrive/trainer.hpp"

namespace gsdrive {

struct ImitationSettings {
  int steps = 2000;
  int batch = 32;
  double augment_offset = 1.0;  // lateral perturbation (m) for recovery samples
  int checkpoint_every = 0;     // 0 = final checkpoint only
};

struct RlSettings {
  int updates = 200;
  int checkpoint_every = 0;
};

/// Every tunable default, grouped by module. Loaded from JSON; unknown keys
/// are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 0;  // 0 = GSPROBE_WORKERS or available cores
  ReconLossWeights recon;
  SinkhornOptions sinkhorn;
  int hidden = 128;
  int flow_layers = 3;
  int head_layers = 2;
  double learning_rate = 3e-4;
  double max_grad_norm = 1.0;
  int modes = 6;
  double cfg_dropout = 0.1;
  double guidance = 1.5;
  int sample_steps = 20;
  double alpha_il = 0.9;
  FocalConfig focal;
  IlWeights il_weights;
  ActionCoordinate coordinate = ActionCoordinate::kEndpoint;
  int anchors = 21;
  double x_min = 0.0, x_max = 20.0, y_min = -5.0, y_max = 5.0;
  double tau_s = 0.1;
  EnvConfig env;
  RewardConfig reward;
  ImitationSettings il;
  RlSettings rl_run;
  RlConfig rl;
  int eval_episodes = 20;

  void validate() const;
  ActionGrid grid() const;
  FlowHeadConfig flowhead(int observation_dim) const;
  RlConfig rl_config(int workers) const;
  /// Hash of the configuration excluding seed and worker count.
  std::uint64_t fingerprint() const;
};

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::string& bytes);
std::string fingerprint_hex(std::uint64_t fp);

}  // namespace gsdrive
