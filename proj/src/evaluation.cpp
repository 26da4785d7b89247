#include "gsdrive/evaluation.hpp"

#include <cstdio>
#include <ostream>

#include "gsdrive/error.hpp"
#include "gsdrive/geometry.hpp"
#include "gsdrive/parallel.hpp"
#include "gsdrive/scene_io.hpp"

namespace gsdrive {

EpisodeRecord run_episode(const PolicyBundle& policy, const std::shared_ptr<const Scene>& scene,
                          const EnvConfig& env_config, const RewardConfig& reward, int episode, std::uint64_t seed,
                          bool sample_actions, const std::filesystem::path* frames_dir) {
  DrivingEnv env(scene, env_config, reward);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(episode)));
  const FlowHead& head = *policy.head;
  const Mat3 k = make_intrinsics(48.0, 48.0, 32.0, 24.0);
  while (!env.done()) {
    if (frames_dir) {
      const Camera cam = vehicle_camera(env.ego().position, env.ego().heading, 1.5, k, {64, 48});
      RenderOptions opts;
      opts.workers = 1;
      char name[64];
      std::snprintf(name, sizeof name, "ep%04d_t%03d.ppm", episode, env.tick());
      write_ppm(*frames_dir / name, render_view(*scene, cam, env.tick(), opts).color);
    }
    const Eigen::VectorXd obs = env.observe();
    const TrajectoryBatch batch = sample_trajectories(head, obs, policy.sample_steps, policy.guidance);
    const ActionLogits traj = trajectory_logits(batch, head.config.grid, head.config.coordinate);
    const PolicyEval pe = evaluate_policy(policy.nets, obs, traj, policy.alpha);
    const ActionChoice a = sample_actions ? decode_sample(pe.logits, head.config.grid, rng.next_u64())
                                          : decode_argmax(pe.logits, head.config.grid);
    env.step(env.action_target(a));
  }
  EpisodeRecord r;
  r.episode = episode;
  r.scene = scene->name;
  r.seed = seed;
  r.length = env.tick();
  r.metrics = episode_metrics(env.trace(), true);
  return r;
}

std::vector<EpisodeRecord> run_eval(const PolicyBundle& policy, const std::vector<std::shared_ptr<const Scene>>& scenes,
                                    const EnvConfig& env, const RewardConfig& reward, int episodes, std::uint64_t seed,
                                    int workers, bool sample_actions, const std::filesystem::path* frames_dir) {
  if (episodes > 0 && scenes.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluation needs scenes");
  std::vector<EpisodeRecord> out(static_cast<std::size_t>(std::max(0, episodes)));
  parallel_for(out.size(), workers, [&](std::size_t e) {
    out[e] = run_episode(policy, scenes[e % scenes.size()], env, reward, static_cast<int>(e), seed, sample_actions,
                         frames_dir);
  });
  return out;
}

EpisodeMetrics mean_metrics(const std::vector<EpisodeRecord>& records) {
  EpisodeMetrics m;
  if (records.empty()) return m;
  for (const auto& r : records) {
    m.er += r.metrics.er;
    m.ds += r.metrics.ds;
    m.ma += r.metrics.ma;
    m.lc += r.metrics.lc;
    m.maj += r.metrics.maj;
    m.msa += r.metrics.msa;
    m.cr += r.metrics.cr;
  }
  const double n = static_cast<double>(records.size());
  m.er /= n;
  m.ds /= n;
  m.ma /= n;
  m.lc /= n;
  m.maj /= n;
  m.msa /= n;
  m.cr /= n;
  return m;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpisodeRecord>& records, const std::string& fingerprint) {
  out << "episode,scene,seed,length,ER,DS,MA,LC,MAJ,MSA,CR,config\n";
  char buf[512];
  for (const auto& r : records) {
    const EpisodeMetrics& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%d,%s,%llu,%d,%.6f,%.6f,%.6f,%.0f,%.6f,%.6f,%.0f,%s\n", r.episode, r.scene.c_str(),
                  static_cast<unsigned long long>(r.seed), r.length, m.er, m.ds, m.ma, m.lc, m.maj, m.msa, m.cr,
                  fingerprint.c_str());
    out << buf;
  }
  if (records.empty()) return;
  const EpisodeMetrics m = mean_metrics(records);
  double length = 0.0;
  for (const auto& r : records) length += r.length;
  const double n = static_cast<double>(records.size());
  std::snprintf(buf, sizeof buf, "mean,,,%.3f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n", length / n, m.er, m.ds, m.ma,
                m.lc, m.maj, m.msa, m.cr, fingerprint.c_str());
  out << buf;
}

}  // namespace gsdrive
