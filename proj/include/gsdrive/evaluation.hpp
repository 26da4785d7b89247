#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "gsdrive/env.hpp"
#include "gsdrive/flowhead.hpp"
#include "gsdrive/trainer.hpp"

namespace gsdrive {

struct PolicyBundle {
  std::shared_ptr<const FlowHead> head;
  PolicyNets nets;
  double alpha = 0.3;
  int sample_steps = 20;
  double guidance = 1.5;
};

struct EpisodeRecord {
  int episode = 0;
  std::string scene;
  std::uint64_t seed = 0;
  int length = 0;
  EpisodeMetrics metrics;
};

/// One closed-loop episode. Argmax decoding unless `sample_actions`. When
/// `frames_dir` is set, the forward camera is rendered every tick.
EpisodeRecord run_episode(const PolicyBundle& policy, const std::shared_ptr<const Scene>& scene,
                          const EnvConfig& env, const RewardConfig& reward, int episode, std::uint64_t seed,
                          bool sample_actions = false, const std::filesystem::path* frames_dir = nullptr);

/// Episode e runs on scenes[e % scenes.size()]; results are in episode order
/// regardless of worker count.
std::vector<EpisodeRecord> run_eval(const PolicyBundle& policy, const std::vector<std::shared_ptr<const Scene>>& scenes,
                                    const EnvConfig& env, const RewardConfig& reward, int episodes,
                                    std::uint64_t seed, int workers, bool sample_actions = false,
                                    const std::filesystem::path* frames_dir = nullptr);

EpisodeMetrics mean_metrics(const std::vector<EpisodeRecord>& records);

/// Per-episode rows plus a trailing "mean" row (omitted when empty).
void write_metrics_csv(std::ostream& out, const std::vector<EpisodeRecord>& records, const std::string& fingerprint);

}  // namespace gsdrive
