#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "gsdrive/error.hpp"
#include "gsdrive/scene_gen.hpp"
#include "gsdrive/trainer.hpp"
#include "test_util.hpp"

namespace gsdrive {
namespace {

using test::gradients_match;
using test::numeric_gradient;

// ---- GAE ----

TEST(Gae, SingleTerminalStep) {
  const std::vector<double> r{1.0}, v{0.0, 123.0};
  const std::vector<char> d{1};
  const GaeResult g = compute_gae(r, v, d, 0.99, 0.95);
  EXPECT_DOUBLE_EQ(g.advantages[0], 1.0);
  EXPECT_DOUBLE_EQ(g.returns[0], 1.0);
}

TEST(Gae, SelfConsistentConstantValue) {
  const double c = 2.75;
  const std::vector<double> r(6, 0.0), v(7, c);
  const std::vector<char> d(6, 0);
  const GaeResult g = compute_gae(r, v, d, 1.0 - 1e-12, 1.0);
  for (int k = 0; k < 6; ++k) {
    EXPECT_NEAR(g.advantages[k], 0.0, 1e-9);
    EXPECT_NEAR(g.returns[k], c, 1e-9);
  }
}

TEST(Gae, MatchesDirectSum) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10;
    std::vector<double> r(n), v(n + 1);
    std::vector<char> d(n);
    for (int k = 0; k < n; ++k) {
      r[k] = rng.normal();
      v[k] = rng.normal();
      d[k] = rng.bernoulli(0.2) ? 1 : 0;
    }
    v[n] = rng.normal();
    const double gamma = 0.99, lambda = 0.95;
    const GaeResult g = compute_gae(r, v, d, gamma, lambda);
    for (int t = 0; t < n; ++t) {
      double sum = 0.0, w = 1.0;
      for (int k = t; k < n; ++k) {
        const double delta = r[k] + gamma * v[k + 1] * (d[k] ? 0.0 : 1.0) - v[k];
        sum += w * delta;
        if (d[k]) break;
        w *= gamma * lambda;
      }
      EXPECT_NEAR(g.advantages[t], sum, 1e-12);
      EXPECT_NEAR(g.returns[t], sum + v[t], 1e-12);
    }
  }
}

TEST(Gae, RejectsLengthMismatch) {
  const std::vector<double> r{1.0, 2.0}, v{0.0, 0.0};
  const std::vector<char> d{0, 0};
  EXPECT_THROW(compute_gae(r, v, d, 0.99, 0.95), Error);
}

TEST(Advantages, NormalizedToZeroMeanUnitVariance) {
  std::vector<double> a{1.0, 2.0, 3.0, 10.0};
  normalize_advantages(a);
  double m = 0.0, s = 0.0;
  for (double x : a) m += x / 4.0;
  for (double x : a) s += (x - m) * (x - m) / 4.0;
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(s, 1.0, 1e-6);
  std::vector<double> flat(5, 3.0);
  normalize_advantages(flat);
  for (double x : flat) EXPECT_EQ(x, 0.0);
}

// ---- KL machinery ----

TEST(K3, Examples) {
  const std::vector<double> ones(5, 1.0);
  EXPECT_EQ(k3_divergence(ones), 0.0);
  const std::vector<double> two{2.0};
  EXPECT_NEAR(k3_divergence(two), 1.0 - std::log(2.0), 1e-15);
  EXPECT_NEAR(k3_divergence(two), 0.3069, 1e-4);
}

TEST(K3, NonnegativeForPositiveRatios) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> r{std::exp(rng.uniform(-8.0, 8.0))};
    EXPECT_GE(k3_divergence(r), 0.0);
  }
}

TEST(K3, RejectsNonpositiveRatio) {
  const std::vector<double> zero{1.0, 0.0}, neg{-1.0};
  try {
    k3_divergence(zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidRatio);
  }
  EXPECT_THROW(k3_divergence(neg), Error);
}

TEST(Kappa, AllThreeBranches) {
  KlController c;
  c.kappa_base = 1.7;
  EXPECT_DOUBLE_EQ(adaptive_kappa(2.0 * c.target, c), 3.0 * 1.7);
  EXPECT_DOUBLE_EQ(adaptive_kappa(0.4 * c.target, c), 0.8 * 1.7);
  EXPECT_DOUBLE_EQ(adaptive_kappa(0.7 * c.target, c), 1.7);
  EXPECT_DOUBLE_EQ(adaptive_kappa(c.target, c), 1.7);
}

TEST(KlPenalty, BothBranchesAndExample) {
  KlController c;
  const double kappa = adaptive_kappa(0.02, c);
  EXPECT_DOUBLE_EQ(kappa, 3.0);
  EXPECT_NEAR(kl_penalty(0.02, kappa, c), 3.0 * (0.030 + 0.0001125), 1e-15);
  EXPECT_EQ(kl_penalty(0.2 * c.target, 1.0, c), 0.0);
  EXPECT_EQ(kl_penalty(0.25 * c.target, 1.0, c), 0.0);
  // Active but below the quadratic offset: delta clamps to 0.
  EXPECT_EQ(kl_penalty(0.4 * c.target, 1.0, c), 0.0);
  const double d = 0.8 * c.target - 0.5 * c.target;
  EXPECT_NEAR(kl_penalty(0.8 * c.target, 1.0, c), 2.0 * d + 0.5 * d * d, 1e-15);
}

TEST(KlStep, FreshControllerIdenticalPolicy) {
  const KlController c;
  const std::vector<double> ones(8, 1.0);
  const KlStep s = kl_step(c, ones);
  EXPECT_EQ(s.divergence, 0.0);
  EXPECT_EQ(s.ema, 0.0);
  EXPECT_EQ(s.loss, 0.0);
  EXPECT_EQ(c.ema, 0.0);
}

TEST(KlStep, EmaConvergesGeometrically) {
  KlController c;
  const std::vector<double> r{2.0, 0.5};
  const double d = k3_divergence(r);
  for (int k = 1; k <= 60; ++k) {
    const KlStep s = kl_step(c, r);
    c.ema = s.ema;
    EXPECT_NEAR(c.ema, d * (1.0 - std::pow(0.9, k)), 1e-14);
  }
}

TEST(KlStep, DerivativeMatchesFiniteDifferences) {
  // loss as a function of the batch divergence through ema, kappa and delta,
  // probed in each active regime.
  for (double ema0 : {0.05, 0.0081, 0.004}) {
    KlController c;
    c.ema = ema0;
    const auto loss_at = [&](double div) {
      const double ema = c.decay * c.ema + (1.0 - c.decay) * div;
      return kl_penalty(ema, adaptive_kappa(ema, c), c);
    };
    const std::vector<double> r{1.3, 0.8};
    const KlStep s = kl_step(c, r);
    const double h = 1e-7;
    const double fd = (loss_at(s.divergence + h) - loss_at(s.divergence - h)) / (2 * h);
    EXPECT_NEAR(s.d_loss_d_divergence, fd, 1e-6 * std::max(1.0, std::abs(fd))) << "ema0=" << ema0;
    EXPECT_NEAR(s.loss, loss_at(s.divergence), 1e-15);
  }
}

// ---- entropy ----

TEST(Entropy, UniformIsLogN) {
  EXPECT_NEAR(categorical_entropy(Eigen::VectorXd::Constant(21, 0.3)), std::log(21.0), 1e-12);
  Eigen::VectorXd sharp = Eigen::VectorXd::Zero(4);
  sharp[2] = 60.0;
  EXPECT_NEAR(categorical_entropy(sharp), 0.0, 1e-20);
}

TEST(Entropy, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd z(9);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal(0.0, 2.0);
    Eigen::VectorXd g;
    categorical_entropy(z, &g);
    const auto f = [](const Eigen::VectorXd& x) { return categorical_entropy(x); };
    EXPECT_TRUE(gradients_match(g, numeric_gradient(f, z)));
  }
}

// ---- RL loss ----

constexpr int kObs = 5;
constexpr int kAnchors = 7;

ActionLogits random_logits(Rng& rng) {
  ActionLogits l{Eigen::VectorXd(kAnchors), Eigen::VectorXd(kAnchors)};
  for (int i = 0; i < kAnchors; ++i) {
    l.x[i] = rng.normal(0.0, 1.5);
    l.y[i] = rng.normal(0.0, 1.5);
  }
  return l;
}

// Ratios are placed at exp(offset) with offsets kept clear of the clip kinks.
std::vector<Transition> random_batch(const PolicyNets& nets, Rng& rng, int size, double alpha) {
  static const double offsets[] = {0.0, 0.05, -0.08, 0.4, -0.5, 0.12, -0.03, 0.3};
  std::vector<Transition> batch;
  for (int b = 0; b < size; ++b) {
    Transition t;
    t.observation = Eigen::VectorXd(kObs);
    for (int i = 0; i < kObs; ++i) t.observation[i] = rng.normal();
    t.traj_logits = random_logits(rng);
    t.action_x = static_cast<int>(rng.index(kAnchors));
    t.action_y = static_cast<int>(rng.index(kAnchors));
    const PolicyEval pe = evaluate_policy(nets, t.observation, t.traj_logits, alpha);
    t.log_prob_old = action_log_prob(pe.logits, t.action_x, t.action_y) - offsets[b % 8];
    t.advantage = rng.normal();
    t.ret = rng.normal();
    batch.push_back(t);
  }
  return batch;
}

struct RlFixture {
  PolicyNets nets;
  std::vector<Transition> batch;
  KlController kl;
  double alpha = 0.3;
};

RlFixture rl_fixture(std::uint64_t seed, double ema) {
  RlFixture f;
  f.nets = PolicyNets::random(kObs, 6, 1, kAnchors, seed);
  // Larger residual weights so the policy gradient is not vanishingly small.
  for (auto& l : f.nets.residual.layers()) l.weight *= 10.0;
  Rng rng(seed + 100);
  f.batch = random_batch(f.nets, rng, 8, f.alpha);
  f.kl.ema = ema;
  return f;
}

void check_rl_gradient(const RlCoefficients& coef, bool zero_advantages) {
  const double emas[] = {0.05, 0.0081, 0.002};
  for (int seed = 1; seed <= 3; ++seed) {
    RlFixture f = rl_fixture(seed, emas[seed - 1]);
    if (zero_advantages) {
      for (auto& t : f.batch) t.advantage = 0.0;
    }
    const RlGradient g = rl_loss(f.nets, f.batch, f.kl, coef, f.alpha);
    const auto loss = [&](const Eigen::VectorXd& p) {
      PolicyNets n = f.nets;
      n.set_flat(p);
      return rl_loss(n, f.batch, f.kl, coef, f.alpha).losses.total;
    };
    EXPECT_TRUE(gradients_match(g.grad, numeric_gradient(loss, f.nets.flat()))) << "seed " << seed;
  }
}

TEST(RlLoss, FullObjectiveGradient) { check_rl_gradient(RlCoefficients{}, false); }

TEST(RlLoss, PolicyTermGradient) {
  RlCoefficients c;
  c.c1 = c.c2 = c.c3 = 0.0;
  check_rl_gradient(c, false);
}

TEST(RlLoss, ValueTermGradient) {
  RlCoefficients c;
  c.c2 = c.c3 = 0.0;
  c.c1 = 1.0;
  check_rl_gradient(c, true);
}

TEST(RlLoss, EntropyTermGradient) {
  RlCoefficients c;
  c.c1 = c.c3 = 0.0;
  c.c2 = 1.0;
  check_rl_gradient(c, true);
}

TEST(RlLoss, KlTermGradient) {
  RlCoefficients c;
  c.c1 = c.c2 = 0.0;
  c.c3 = 1.0;
  check_rl_gradient(c, true);
}

TEST(RlLoss, TotalIsWeightedSum) {
  RlFixture f = rl_fixture(4, 0.05);
  RlCoefficients c;
  c.c1 = 0.7;
  c.c2 = 0.2;
  c.c3 = 1.3;
  const RlLossBreakdown l = rl_loss(f.nets, f.batch, f.kl, c, f.alpha).losses;
  EXPECT_NEAR(l.total, l.policy + 0.7 * l.value - 0.2 * l.entropy + 1.3 * l.kl, 1e-12);
  EXPECT_GT(l.kl, 0.0);
}

TEST(RlLoss, UnchangedPolicyHasUnitRatios) {
  const PolicyNets nets = PolicyNets::random(kObs, 6, 1, kAnchors, 9);
  Rng rng(9);
  std::vector<Transition> batch;
  double mean_adv = 0.0;
  for (int b = 0; b < 8; ++b) {
    Transition t = random_batch(nets, rng, 1, 0.3)[0];
    t.log_prob_old = action_log_prob(evaluate_policy(nets, t.observation, t.traj_logits, 0.3).logits, t.action_x,
                                     t.action_y);
    mean_adv += t.advantage / 8.0;
    batch.push_back(t);
  }
  const RlGradient g = rl_loss(nets, batch, KlController{}, RlCoefficients{}, 0.3);
  EXPECT_NEAR(g.losses.mean_ratio, 1.0, 1e-9);
  EXPECT_NEAR(g.losses.policy, -mean_adv, 1e-9);
  EXPECT_NEAR(g.losses.kl_state.divergence, 0.0, 1e-12);
  EXPECT_EQ(g.losses.kl, 0.0);
}

TEST(RlLoss, ClipArithmetic) {
  const PolicyNets nets = PolicyNets::random(kObs, 6, 1, kAnchors, 10);
  Rng rng(10);
  Transition t = random_batch(nets, rng, 1, 0.3)[0];
  const double lp = action_log_prob(evaluate_policy(nets, t.observation, t.traj_logits, 0.3).logits, t.action_x,
                                    t.action_y);
  t.log_prob_old = lp - std::log(1.5);
  t.advantage = 1.0;
  RlCoefficients c;
  EXPECT_NEAR(rl_loss(nets, std::span(&t, 1), KlController{}, c, 0.3).losses.policy, -1.2, 1e-12);
  t.advantage = -1.0;
  EXPECT_NEAR(rl_loss(nets, std::span(&t, 1), KlController{}, c, 0.3).losses.policy, 1.5, 1e-12);
}

TEST(RlLoss, UniformPolicyEntropy) {
  PolicyNets nets = PolicyNets::random(kObs, 6, 1, 21, 11);
  for (auto& l : nets.residual.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  Transition t;
  t.observation = Eigen::VectorXd::Ones(kObs);
  t.traj_logits = {Eigen::VectorXd::Zero(21), Eigen::VectorXd::Zero(21)};
  t.log_prob_old = -2.0 * std::log(21.0);
  const RlGradient g = rl_loss(nets, std::span(&t, 1), KlController{}, RlCoefficients{}, 0.3);
  EXPECT_NEAR(g.losses.entropy, 2.0 * std::log(21.0), 1e-12);
}

TEST(RlLoss, NonFiniteNamesTerms) {
  RlFixture f = rl_fixture(2, 0.0);
  f.batch[3].ret = std::numeric_limits<double>::infinity();
  try {
    rl_loss(f.nets, f.batch, f.kl, RlCoefficients{}, f.alpha);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
    EXPECT_NE(std::string(e.what()).find("value="), std::string::npos);
  }
}

TEST(RlCoefficientsCheck, Validation) {
  RlCoefficients c;
  EXPECT_NO_THROW(c.validate());
  c.clip = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.c2 = -0.1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

// ---- update loop ----

std::shared_ptr<const FlowHead> tiny_head(const EnvConfig& env) {
  Rng rng(3);
  Eigen::MatrixXd trajs(30, kTrajectoryDim);
  for (int s = 0; s < 30; ++s) {
    const double turn = (s % 3 - 1) * 0.3;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
      const double x = 3.0 * (k + 1);
      trajs(s, 2 * k) = x + rng.normal(0.0, 0.1);
      trajs(s, 2 * k + 1) = turn * x + rng.normal(0.0, 0.1);
    }
  }
  FlowHeadConfig cfg;
  cfg.observation_dim = observation_dim(env);
  cfg.modes = 3;
  cfg.hidden = 16;
  cfg.flow_layers = 2;
  cfg.head_layers = 1;
  return std::make_shared<const FlowHead>(FlowHead::create(cfg, cluster_modes(trajs, 3, 4), 5));
}

struct TrainerSetup {
  std::shared_ptr<const FlowHead> head;
  PolicyNets nets;
  RlConfig config;
  std::vector<std::shared_ptr<const Scene>> scenes;
  EnvConfig env;
  RewardConfig reward;
};

TrainerSetup trainer_setup() {
  TrainerSetup s;
  s.head = tiny_head(s.env);
  s.nets = PolicyNets::from_flowhead(*s.head, 6);
  s.config.sample_steps = 4;
  s.reward.probe_count = 2;
  s.reward.probe_horizon = 3;
  s.scenes.push_back(std::make_shared<const Scene>(generate_scene("obstacle", 1)));
  s.scenes.push_back(std::make_shared<const Scene>(generate_scene("corridor", 2)));
  return s;
}

RlTrainer make_trainer(const TrainerSetup& s, std::uint64_t seed) {
  return RlTrainer(s.head, s.nets, s.config, s.scenes, s.env, s.reward, seed);
}

TEST(RlTrainerLoop, ZeroLearningRateKeepsParameters) {
  TrainerSetup s = trainer_setup();
  s.config.learning_rate = 0.0;
  RlTrainer t = make_trainer(s, 1);
  const Eigen::VectorXd before = t.nets().flat();
  const UpdateReport r = t.update();
  EXPECT_EQ(t.nets().flat(), before);
  EXPECT_EQ(t.last_buffer().size(), 32u);
  EXPECT_TRUE(std::isfinite(r.mean_reward));
  EXPECT_TRUE(std::isfinite(r.policy_loss));
  EXPECT_GE(r.kl_ema, 0.0);
  EXPECT_EQ(r.update, 0);
}

TEST(RlTrainerLoop, BufferHasEnvsTimesSteps) {
  TrainerSetup s = trainer_setup();
  s.config.envs = 3;
  s.config.steps = 5;
  s.config.epochs = 0;
  RlTrainer t = make_trainer(s, 2);
  t.update();
  EXPECT_EQ(t.last_buffer().size(), 15u);
}

TEST(RlTrainerLoop, DeterministicAcrossRunsAndWorkers) {
  TrainerSetup s = trainer_setup();
  RlTrainer a = make_trainer(s, 7);
  s.config.workers = 4;
  RlTrainer b = make_trainer(s, 7);
  for (int u = 0; u < 3; ++u) {
    EXPECT_EQ(update_csv_row(a.update()), update_csv_row(b.update()));
  }
  EXPECT_EQ(a.nets().flat(), b.nets().flat());
}

TEST(RlTrainerLoop, ProbeRewardOnlyWhenEnabled) {
  TrainerSetup s = trainer_setup();
  s.reward.w_probe = 0.0;
  RlTrainer t = make_trainer(s, 3);
  const UpdateReport r = t.update();
  EXPECT_EQ(r.mean_probe_reward, 0.0);
  for (const auto& tr : t.last_buffer()) EXPECT_DOUBLE_EQ(tr.reward, tr.r_env);
}

TEST(RlTrainerLoop, FailedUpdateRestoresParameters) {
  TrainerSetup s = trainer_setup();
  s.config.learning_rate = 1e300;
  s.config.normalize_advantages = false;
  RlTrainer t = make_trainer(s, 4);
  const Eigen::VectorXd before = t.nets().flat();
  EXPECT_THROW(t.update(), Error);
  EXPECT_EQ(t.nets().flat(), before);
  EXPECT_EQ(t.kl().ema, 0.0);
}

TEST(RlTrainerLoop, TickLimitBootstrapsButCrashesDoNot) {
  TrainerSetup s = trainer_setup();
  s.config.envs = 1;
  s.config.steps = 12;
  s.config.epochs = 0;
  s.env.max_ticks = 3;
  s.scenes.erase(s.scenes.begin());  // corridor only: episodes end at the tick limit
  RlTrainer t = make_trainer(s, 5);
  t.update();
  int truncated = 0;
  for (const auto& tr : t.last_buffer()) {
    if (tr.done) {
      ++truncated;
      EXPECT_NE(tr.truncation_value, 0.0);
    } else {
      EXPECT_EQ(tr.truncation_value, 0.0);
    }
  }
  EXPECT_EQ(truncated, 4);
}

TEST(RlTrainerLoop, RewardScaleIsDiscountedReturnStd) {
  TrainerSetup s = trainer_setup();
  s.config.envs = 1;
  s.config.epochs = 0;
  RlTrainer t = make_trainer(s, 6);
  std::vector<double> returns;
  double g = 0.0;
  for (int u = 0; u < 3; ++u) {
    t.update();
    for (const auto& tr : t.last_buffer()) {
      g = s.config.coef.gamma * g + tr.reward;
      returns.push_back(g);
      if (tr.done) g = 0.0;
    }
  }
  double mean = 0.0, var = 0.0;
  for (double r : returns) mean += r / returns.size();
  for (double r : returns) var += (r - mean) * (r - mean) / returns.size();
  EXPECT_NEAR(t.reward_scale(), std::sqrt(var + 1e-8), 1e-9 * std::sqrt(var));

  s.config.scale_rewards = false;
  RlTrainer off = make_trainer(s, 6);
  off.update();
  EXPECT_EQ(off.reward_scale(), 1.0);
}

TEST(RlTrainerLoop, RejectsProbeCountAboveModes) {
  TrainerSetup s = trainer_setup();
  s.reward.probe_count = 5;
  EXPECT_THROW(make_trainer(s, 1), Error);
}

}  // namespace
}  // namespace gsdrive
