#include "gsdrive/dataset.hpp"

#include <cmath>

#include "gsdrive/error.hpp"

namespace gsdrive {

std::vector<ExpertSample> build_expert_samples(const std::vector<std::shared_ptr<const Scene>>& scenes,
                                               const EnvConfig& env_config, double augment_offset) {
  std::vector<ExpertSample> out;
  for (const auto& scene : scenes) {
    DrivingEnv env(scene, env_config);
    const Polyline& e = scene->expert_trajectory;
    const int n = static_cast<int>(e.size());
    for (int k = 0; k + kTrajectoryPoints < n; ++k) {
      int j = k + 1;
      while (j + 1 < n && (e[j] - e[k]).norm() < 1e-6) ++j;
      const Vec2 d = e[j] - e[k];
      const double heading = std::atan2(d.y(), d.x());
      const Vec2 normal(-std::sin(heading), std::cos(heading));
      EgoState ego;
      ego.heading = heading;
      ego.speed = k == 0 ? 0.0 : (e[k] - e[k - 1]).norm() / env_config.dt;
      std::vector<double> offsets{0.0};
      if (augment_offset > 0.0) offsets.insert(offsets.end(), {-augment_offset, augment_offset});
      for (double off : offsets) {
        ego.position = e[k] + off * normal;
        ego.history = {ego.position};
        env.teleport(ego, k);
        if (off != 0.0 && (env.collision_check(ego.position, k) != Collision::kNone ||
                           std::abs(env.lane_offset(ego.position)) > scene->road_half_width)) {
          continue;
        }
        ExpertSample s;
        s.observation = env.observe();
        s.trajectory.resize(kTrajectoryDim);
        for (int h = 1; h <= kTrajectoryPoints; ++h) {
          const double fade = 1.0 - static_cast<double>(h) / kTrajectoryPoints;
          const Vec2 p = env.world_to_ego(e[k + h] + off * fade * normal);
          s.trajectory[2 * (h - 1)] = p.x();
          s.trajectory[2 * (h - 1) + 1] = p.y();
        }
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

Eigen::MatrixXd stack_trajectories(const std::vector<ExpertSample>& samples) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), kTrajectoryDim);
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[i].trajectory.transpose();
  return m;
}

std::vector<IlLosses> train_imitation(FlowHead& head, const std::vector<IlSample>& data, const ImitationOptions& o,
                                      const std::function<void(int, const IlLosses&)>& on_step) {
  if (o.steps > 0 && data.empty()) throw Error(ErrorCode::kDatasetTooSmall, "imitation dataset is empty");
  if (o.batch < 1) throw Error(ErrorCode::kConfig, "imitation batch must be >= 1");
  const auto nets = std::as_const(head).networks();
  AdamOptimizer opt(total_parameters(nets), AdamConfig{o.learning_rate, 0.9, 0.999, 1e-8, o.max_grad_norm});
  Rng rng(mix_seed(o.seed, 0x696dull));
  std::vector<IlLosses> history;
  std::vector<IlSample> batch(static_cast<std::size_t>(o.batch));
  for (int step = 0; step < o.steps; ++step) {
    for (auto& s : batch) s = data[rng.index(data.size())];
    const IlNoise noise = draw_il_noise(batch.size(), head.config.cfg_dropout, rng);
    history.push_back(train_il_step(head, opt, batch, noise));
    if (on_step) on_step(step, history.back());
  }
  return history;
}

}  // namespace gsdrive
