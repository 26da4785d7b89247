#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsdrive/actionspace.hpp"
#include "gsdrive/env.hpp"
#include "gsdrive/flowhead.hpp"
#include "gsdrive/nn.hpp"

namespace gsdrive {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// `values` has one more entry than `rewards`: the last is the bootstrap value
/// of the state after the final step (ignored when that step is terminal).
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const char> dones, double gamma, double lambda);

/// Zero mean, unit variance with a 1e-8 guard on the standard deviation.
void normalize_advantages(std::vector<double>& advantages);

struct RlCoefficients {
  double clip = 0.2;
  double c1 = 0.5;
  double c2 = 0.01;
  double c3 = 1.0;
  double gamma = 0.99;
  double lambda = 0.95;
  void validate() const;
};

struct KlController {
  double ema = 0.0;
  double target = 0.01;
  double kappa_base = 1.0;
  double decay = 0.9;
};

struct KlStep {
  double divergence = 0.0;  // batch k3 estimate
  double ema = 0.0;         // updated average
  double kappa = 0.0;
  double loss = 0.0;
  double d_loss_d_divergence = 0.0;
};

/// k3 estimate mean(r - 1 - ln r) over ratios.
double k3_divergence(std::span<const double> ratios);
double adaptive_kappa(double ema, const KlController& c);
double kl_penalty(double ema, double kappa, const KlController& c);

/// Evaluates the estimator, the updated EMA, kappa and the penalty. Does not
/// mutate `controller`; the caller commits `ema` when the step is taken.
KlStep kl_step(const KlController& controller, std::span<const double> ratios);

/// Shannon entropy of softmax(logits) and its gradient w.r.t. the logits.
double categorical_entropy(const Eigen::VectorXd& logits, Eigen::VectorXd* grad = nullptr);

/// Observation encoder shared by the residual action head and the value head.
struct PolicyNets {
  Network encoder;
  Network residual;
  Network value;

  static PolicyNets from_flowhead(const FlowHead& head, std::uint64_t seed);
  static PolicyNets random(int observation_dim, int hidden, int head_layers, int anchors, std::uint64_t seed);

  std::vector<Network*> networks() { return {&encoder, &residual, &value}; }
  std::vector<const Network*> networks() const { return {&encoder, &residual, &value}; }
  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& params);
};

struct Transition {
  Eigen::VectorXd observation;
  ActionLogits traj_logits;  // frozen trajectory pathway, recorded at collection
  int action_x = 0;
  int action_y = 0;
  double log_prob_old = 0.0;
  double value_old = 0.0;
  double reward = 0.0;
  double r_env = 0.0;
  double r_probe = 0.0;
  bool done = false;
  // Value of the state reached when the episode was cut by the tick limit
  // rather than ended; GAE bootstraps from it.
  double truncation_value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct PolicyEval {
  ActionLogits logits;
  double value = 0.0;
};

PolicyEval evaluate_policy(const PolicyNets& nets, const Eigen::VectorXd& observation,
                           const ActionLogits& traj_logits, double alpha);

double action_log_prob(const ActionLogits& logits, int ix, int iy);

struct RlLossBreakdown {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double mean_ratio = 0.0;
  KlStep kl_state;
};

struct RlGradient {
  RlLossBreakdown losses;
  Eigen::VectorXd grad;  // over PolicyNets::flat()
};

/// Full RL objective on a minibatch with analytic gradient.
RlGradient rl_loss(const PolicyNets& nets, std::span<const Transition> batch, const KlController& controller,
                   const RlCoefficients& coef, double alpha);

struct RlConfig {
  RlCoefficients coef;
  KlController kl;
  int envs = 4;
  int steps = 8;
  int epochs = 4;
  int minibatch = 8;
  double learning_rate = 3e-4;
  double max_grad_norm = 1.0;
  double alpha = 0.3;
  int sample_steps = 20;
  double guidance = 1.5;
  bool normalize_advantages = true;
  // Divide rewards by a running standard deviation of the discounted return
  // before GAE, so value targets stay O(1) whatever the reward weights.
  bool scale_rewards = true;
  int workers = 1;
  void validate() const;
};

struct UpdateReport {
  int update = 0;
  double mean_reward = 0.0;
  double rolling_std = 0.0;
  double mean_env_reward = 0.0;
  double mean_probe_reward = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl_loss = 0.0;
  double kl_ema = 0.0;
  double kappa = 0.0;
  int episodes_finished = 0;
  double mean_episode_reward = 0.0;  // sum of r_env over episodes finished this update
};

std::string update_csv_header();
std::string update_csv_row(const UpdateReport& r);

/// Frozen trajectory pathway plus trainable policy over parallel environments.
class RlTrainer {
 public:
  RlTrainer(std::shared_ptr<const FlowHead> head, PolicyNets nets, RlConfig config,
            std::vector<std::shared_ptr<const Scene>> scenes, EnvConfig env, RewardConfig reward,
            std::uint64_t seed);

  UpdateReport update();

  const PolicyNets& nets() const { return nets_; }
  const KlController& kl() const { return config_.kl; }
  /// Current divisor applied to rewards before GAE (1 when scaling is off).
  double reward_scale() const;
  const std::vector<Transition>& last_buffer() const { return buffer_; }
  const RlConfig& config() const { return config_; }

 private:
  struct Worker {
    std::unique_ptr<DrivingEnv> env;
    Rng rng{0};
    std::optional<TrajectoryBatch> pending;
    double episode_reward = 0.0;
    double discounted_return = 0.0;
  };

  void start_episode(Worker& w);
  std::vector<Transition> collect(Worker& w, std::vector<double>& finished, double& bootstrap);
  TrajectoryBatch sample(const Eigen::VectorXd& observation) const;

  std::shared_ptr<const FlowHead> head_;
  PolicyNets nets_;
  RlConfig config_;
  std::vector<std::shared_ptr<const Scene>> scenes_;
  EnvConfig env_config_;
  RewardConfig reward_config_;
  AdamOptimizer optimizer_;
  std::vector<Worker> workers_;
  std::vector<Transition> buffer_;
  std::deque<double> history_;
  Rng rng_{0};
  int updates_ = 0;
  // Running moments of the per-env discounted return.
  double return_count_ = 0.0;
  double return_mean_ = 0.0;
  double return_m2_ = 0.0;
};

}  // namespace gsdrive
