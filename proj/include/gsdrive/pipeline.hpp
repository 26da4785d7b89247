#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "gsdrive/checkpoint.hpp"
#include "gsdrive/config.hpp"
#include "gsdrive/dataset.hpp"
#include "gsdrive/evaluation.hpp"
#include "gsdrive/flowhead.hpp"
#include "gsdrive/trainer.hpp"

// Glue between the modules: dataset preparation, stage checkpoints and policy
// loading. The CLI and the acceptance runner share it.

namespace gsdrive {

enum class Stage { kImitation = 0, kReinforcement = 1 };

using SceneSet = std::vector<std::shared_ptr<const Scene>>;

struct ImitationSetup {
  std::vector<IlSample> data;
  FlowHead head;
};

/// Expert samples from every scene, mode anchors clustered from their
/// trajectories, and a freshly initialized head.
ImitationSetup prepare_imitation(const SceneSet& scenes, const RunConfig& cfg, std::uint64_t seed);

ImitationOptions imitation_options(const RunConfig& cfg, std::uint64_t seed);

/// Checkpoints carry the configuration they were trained with, its
/// fingerprint, the stage and the observation width.
void save_imitation_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const FlowHead& head);
void save_rl_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const FlowHead& head,
                        const PolicyNets& nets);

struct LoadedPolicy {
  RunConfig config;
  std::uint64_t fingerprint = 0;
  Stage stage = Stage::kImitation;
  std::shared_ptr<const FlowHead> head;
  PolicyNets nets;

  /// Imitation checkpoints act with the imitation blend weight, RL
  /// checkpoints with the RL one.
  PolicyBundle bundle() const;
};

/// Fails with kVersionMismatch when `expected` is given and differs from the
/// checkpoint's fingerprint.
LoadedPolicy load_policy(const std::filesystem::path& path, const std::uint64_t* expected_fingerprint = nullptr);

/// Worker count: GSPROBE_WORKERS wins, then the configured value, then all cores.
int resolve_workers(const RunConfig& cfg);

}  // namespace gsdrive
