#include "gsdrive/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gsdrive/error.hpp"
#include "gsdrive/parallel.hpp"

namespace gsdrive {

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const char> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) {
    throw Error(ErrorCode::kShapeMismatch, "GAE needs n rewards, n dones and n + 1 values");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * values[k + 1] * live - values[k];
    next = delta + gamma * lambda * live * next;
    out.advantages[k] = next;
    out.returns[k] = next + values[k];
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

void RlCoefficients::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw Error(ErrorCode::kConfig, "clip must lie in (0, 1)");
  if (!(c1 >= 0.0 && c2 >= 0.0 && c3 >= 0.0)) throw Error(ErrorCode::kConfig, "loss coefficients must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::kConfig, "GAE lambda must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::kConfig, "RL discount must lie in (0, 1)");
}

double k3_divergence(std::span<const double> ratios) {
  if (ratios.empty()) return 0.0;
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw Error(ErrorCode::kInvalidRatio, "probability ratio must be positive and finite");
    }
    sum += r - 1.0 - std::log(r);
  }
  return sum / static_cast<double>(ratios.size());
}

double adaptive_kappa(double ema, const KlController& c) {
  if (ema > c.target) return c.kappa_base * (1.0 + 2.0 * (ema - c.target) / c.target);
  if (ema < 0.5 * c.target) return 0.8 * c.kappa_base;
  return c.kappa_base;
}

double kl_penalty(double ema, double kappa, const KlController& c) {
  if (!(ema > 0.25 * c.target)) return 0.0;
  const double delta = std::max(0.0, ema - 0.5 * c.target);
  return kappa * (2.0 * delta + 0.5 * delta * delta);
}

KlStep kl_step(const KlController& c, std::span<const double> ratios) {
  KlStep s;
  s.divergence = k3_divergence(ratios);
  s.ema = c.decay * c.ema + (1.0 - c.decay) * s.divergence;
  s.kappa = adaptive_kappa(s.ema, c);
  s.loss = kl_penalty(s.ema, s.kappa, c);
  if (s.ema > 0.25 * c.target) {
    const double delta = std::max(0.0, s.ema - 0.5 * c.target);
    const double d_delta = s.ema - 0.5 * c.target > 0.0 ? 1.0 : 0.0;
    const double d_kappa = s.ema > c.target ? 2.0 * c.kappa_base / c.target : 0.0;
    const double d_ema = d_kappa * (2.0 * delta + 0.5 * delta * delta) + s.kappa * (2.0 + delta) * d_delta;
    s.d_loss_d_divergence = (1.0 - c.decay) * d_ema;
  }
  return s;
}

double categorical_entropy(const Eigen::VectorXd& logits, Eigen::VectorXd* grad) {
  const Eigen::VectorXd lp = log_softmax(logits);
  const Eigen::VectorXd p = lp.array().exp();
  const double h = -(p.array() * lp.array()).sum();
  if (grad) *grad = -(p.array() * (lp.array() + h)).matrix();
  return h;
}

PolicyNets PolicyNets::from_flowhead(const FlowHead& head, std::uint64_t seed) {
  PolicyNets n;
  n.encoder = head.encoder;
  n.residual = head.residual_head;
  Rng rng(seed);
  std::vector<int> dims{head.config.hidden};
  for (int l = 0; l < head.config.head_layers; ++l) dims.push_back(head.config.hidden);
  dims.push_back(1);
  n.value = Network::mlp(dims, rng);
  return n;
}

PolicyNets PolicyNets::random(int observation_dim, int hidden, int head_layers, int anchors, std::uint64_t seed) {
  Rng rng(seed);
  PolicyNets n;
  n.encoder = Network::mlp({observation_dim, hidden, hidden}, rng);
  n.encoder.layers().back().activation = Activation::kTanh;
  std::vector<int> dims{hidden};
  for (int l = 0; l < head_layers; ++l) dims.push_back(hidden);
  dims.push_back(2 * anchors);
  n.residual = Network::mlp(dims, rng, 0.1);
  dims.back() = 1;
  n.value = Network::mlp(dims, rng);
  return n;
}

Eigen::VectorXd PolicyNets::flat() const {
  const auto nets = networks();
  return flatten_params(nets);
}

void PolicyNets::set_flat(const Eigen::VectorXd& params) {
  const auto nets = networks();
  unflatten_params(nets, params);
}

PolicyEval evaluate_policy(const PolicyNets& nets, const Eigen::VectorXd& observation,
                           const ActionLogits& traj_logits, double alpha) {
  const Eigen::VectorXd enc = nets.encoder.forward(observation);
  const Eigen::VectorXd r = nets.residual.forward(enc);
  const Eigen::Index n = traj_logits.x.size();
  if (r.size() != 2 * n) throw Error(ErrorCode::kShapeMismatch, "residual head does not match the grid");
  PolicyEval out;
  out.logits = combine_logits(traj_logits, {r.head(n), r.tail(n)}, alpha);
  out.value = nets.value.forward(enc)[0];
  return out;
}

double action_log_prob(const ActionLogits& logits, int ix, int iy) {
  return log_softmax(logits.x)[ix] + log_softmax(logits.y)[iy];
}

RlGradient rl_loss(const PolicyNets& nets, std::span<const Transition> batch, const KlController& controller,
                   const RlCoefficients& coef, double alpha) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw Error(ErrorCode::kInvalidArgument, "empty RL minibatch");
  const double inv_b = 1.0 / B;
  const int N = static_cast<int>(batch[0].traj_logits.x.size());

  Eigen::MatrixXd obs(nets.encoder.input_dim(), B);
  for (int b = 0; b < B; ++b) obs.col(b) = batch[b].observation;
  Network::Trace enc_trace, res_trace, val_trace;
  const Eigen::MatrixXd enc = nets.encoder.forward(obs, enc_trace);
  const Eigen::MatrixXd res = nets.residual.forward(enc, res_trace);
  const Eigen::MatrixXd val = nets.value.forward(enc, val_trace);

  RlGradient out;
  RlLossBreakdown& L = out.losses;
  std::vector<double> ratios(B);
  std::vector<ActionLogits> logits(B);
  Eigen::VectorXd g_lp = Eigen::VectorXd::Zero(B);
  Eigen::MatrixXd g_logits = Eigen::MatrixXd::Zero(2 * N, B);
  Eigen::MatrixXd g_val(1, B);
  for (int b = 0; b < B; ++b) {
    const Transition& t = batch[b];
    logits[b] = combine_logits(t.traj_logits, {res.col(b).head(N), res.col(b).tail(N)}, alpha);
    const double lp = action_log_prob(logits[b], t.action_x, t.action_y);
    const double r = std::exp(lp - t.log_prob_old);
    ratios[b] = r;
    L.mean_ratio += inv_b * r;
    const double unclipped = r * t.advantage;
    const double clipped = std::clamp(r, 1.0 - coef.clip, 1.0 + coef.clip) * t.advantage;
    L.policy -= inv_b * std::min(unclipped, clipped);
    if (unclipped <= clipped) g_lp[b] -= inv_b * t.advantage * r;

    const double dv = val(0, b) - t.ret;
    L.value += inv_b * dv * dv;
    g_val(0, b) = coef.c1 * inv_b * 2.0 * dv;

    Eigen::VectorXd gx, gy;
    L.entropy += inv_b * (categorical_entropy(logits[b].x, &gx) + categorical_entropy(logits[b].y, &gy));
    g_logits.col(b).head(N) -= coef.c2 * inv_b * gx;
    g_logits.col(b).tail(N) -= coef.c2 * inv_b * gy;
  }
  L.kl_state = kl_step(controller, ratios);
  L.kl = L.kl_state.loss;
  for (int b = 0; b < B; ++b) g_lp[b] += coef.c3 * L.kl_state.d_loss_d_divergence * inv_b * (ratios[b] - 1.0);
  L.total = L.policy + coef.c1 * L.value - coef.c2 * L.entropy + coef.c3 * L.kl;
  if (!std::isfinite(L.total)) {
    std::ostringstream msg;
    msg << "non-finite RL loss: policy=" << L.policy << " value=" << L.value << " entropy=" << L.entropy
        << " kl=" << L.kl;
    throw Error(ErrorCode::kNonFinite, msg.str());
  }

  for (int b = 0; b < B; ++b) {
    const Transition& t = batch[b];
    // d log pi / d logits = onehot - softmax, per axis.
    Eigen::VectorXd dx = -softmax(logits[b].x), dy = -softmax(logits[b].y);
    dx[t.action_x] += 1.0;
    dy[t.action_y] += 1.0;
    g_logits.col(b).head(N) += g_lp[b] * dx;
    g_logits.col(b).tail(N) += g_lp[b] * dy;
  }
  g_logits *= 1.0 - alpha;

  NetworkGrad ge(nets.encoder), gr(nets.residual), gv(nets.value);
  Eigen::MatrixXd g_enc = nets.residual.backward(res_trace, g_logits, gr);
  g_enc += nets.value.backward(val_trace, g_val, gv);
  nets.encoder.backward(enc_trace, g_enc, ge);
  const NetworkGrad* grads[] = {&ge, &gr, &gv};
  out.grad = flatten_grads(grads);
  return out;
}

void RlConfig::validate() const {
  coef.validate();
  if (envs < 1 || steps < 1 || epochs < 0 || minibatch < 1) {
    throw Error(ErrorCode::kConfig, "RL batch sizes must be positive");
  }
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kConfig, "learning rate must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kConfig, "RL blend ratio must lie in [0, 1]");
  if (!(kl.target > 0.0 && kl.kappa_base > 0.0 && kl.decay > 0.0 && kl.decay < 1.0)) {
    throw Error(ErrorCode::kConfig, "KL controller parameters out of range");
  }
  if (sample_steps < 1) throw Error(ErrorCode::kConfig, "sampling needs at least one step");
}

std::string update_csv_header() {
  return "update,mean_reward,rolling_std,mean_env_reward,mean_probe_reward,policy_loss,value_loss,entropy,"
         "kl_loss,kl_ema,kappa,episodes_finished,mean_episode_reward";
}

std::string update_csv_row(const UpdateReport& r) {
  std::ostringstream s;
  s.precision(10);
  s << r.update << ',' << r.mean_reward << ',' << r.rolling_std << ',' << r.mean_env_reward << ','
    << r.mean_probe_reward << ',' << r.policy_loss << ',' << r.value_loss << ',' << r.entropy << ',' << r.kl_loss
    << ',' << r.kl_ema << ',' << r.kappa << ',' << r.episodes_finished << ',' << r.mean_episode_reward;
  return s.str();
}

RlTrainer::RlTrainer(std::shared_ptr<const FlowHead> head, PolicyNets nets, RlConfig config,
                     std::vector<std::shared_ptr<const Scene>> scenes, EnvConfig env, RewardConfig reward,
                     std::uint64_t seed)
    : head_(std::move(head)),
      nets_(std::move(nets)),
      config_(config),
      scenes_(std::move(scenes)),
      env_config_(env),
      reward_config_(reward),
      rng_(mix_seed(seed, 0x7261696eull)) {
  config_.validate();
  if (!head_) throw Error(ErrorCode::kInvalidArgument, "RL needs a trajectory head");
  if (scenes_.empty()) throw Error(ErrorCode::kInvalidArgument, "RL needs at least one scene");
  if (reward_config_.w_probe > 0.0 && reward_config_.probe_count > head_->modes()) {
    throw Error(ErrorCode::kConfig, "probe count exceeds mode count");
  }
  optimizer_ = AdamOptimizer(static_cast<std::size_t>(nets_.flat().size()),
                             AdamConfig{config_.learning_rate, 0.9, 0.999, 1e-8, config_.max_grad_norm});
  workers_.resize(config_.envs);
  for (int i = 0; i < config_.envs; ++i) {
    workers_[i].rng = Rng(mix_seed(seed, static_cast<std::uint64_t>(i) + 1));
    start_episode(workers_[i]);
  }
}

void RlTrainer::start_episode(Worker& w) {
  const auto& scene = scenes_[w.rng.index(scenes_.size())];
  w.env = std::make_unique<DrivingEnv>(scene, env_config_, reward_config_);
  w.pending.reset();
  w.episode_reward = 0.0;
}

TrajectoryBatch RlTrainer::sample(const Eigen::VectorXd& observation) const {
  return sample_trajectories(*head_, observation, config_.sample_steps, config_.guidance);
}

std::vector<Transition> RlTrainer::collect(Worker& w, std::vector<double>& finished, double& bootstrap) {
  std::vector<Transition> out;
  const ActionGrid& grid = head_->config.grid;
  for (int s = 0; s < config_.steps; ++s) {
    Transition t;
    t.observation = w.env->observe();
    if (!w.pending) w.pending = sample(t.observation);
    t.traj_logits = trajectory_logits(*w.pending, grid, head_->config.coordinate);
    const PolicyEval pe = evaluate_policy(nets_, t.observation, t.traj_logits, config_.alpha);
    const ActionChoice a = decode_sample(pe.logits, grid, w.rng.next_u64());
    t.action_x = a.index_x;
    t.action_y = a.index_y;
    t.log_prob_old = action_log_prob(pe.logits, a.index_x, a.index_y);
    t.value_old = pe.value;
    const StepResult r = w.env->step(w.env->action_target(a));
    t.r_env = r.reward.total;
    t.done = r.done;
    const bool truncated = r.done && r.collision == Collision::kNone && !r.off_road && !r.goal;
    w.pending.reset();
    if (!r.done) {
      // Probe from the state this action reached, with the trajectories the
      // next decision will use.
      w.pending = sample(w.env->observe());
      if (reward_config_.w_probe > 0.0) t.r_probe = w.env->probe(*w.pending).reward;
    } else if (truncated) {
      t.truncation_value = nets_.value.forward(nets_.encoder.forward(w.env->observe()))[0];
    }
    t.reward = total_reward(t.r_env, t.r_probe, reward_config_);
    w.episode_reward += t.r_env;
    out.push_back(std::move(t));
    if (r.done) {
      finished.push_back(w.episode_reward);
      start_episode(w);
    }
  }
  bootstrap = nets_.value.forward(nets_.encoder.forward(w.env->observe()))[0];
  return out;
}

double RlTrainer::reward_scale() const {
  if (!config_.scale_rewards || return_count_ < 2.0) return 1.0;
  return std::sqrt(return_m2_ / return_count_ + 1e-8);
}

UpdateReport RlTrainer::update() {
  const Eigen::VectorXd saved_params = nets_.flat();
  const AdamOptimizer saved_opt = optimizer_;
  const KlController saved_kl = config_.kl;
  const double saved_moments[] = {return_count_, return_mean_, return_m2_};
  UpdateReport report;
  try {
    const int E = config_.envs;
    std::vector<std::vector<Transition>> per_env(E);
    std::vector<std::vector<double>> finished(E);
    std::vector<double> bootstrap(E, 0.0);
    parallel_for(static_cast<std::size_t>(E), config_.workers, [&](std::size_t i) {
      per_env[i] = collect(workers_[i], finished[i], bootstrap[i]);
    });

    if (config_.scale_rewards) {
      for (int i = 0; i < E; ++i) {
        for (const auto& t : per_env[i]) {
          double& g = workers_[i].discounted_return;
          g = config_.coef.gamma * g + t.reward;
          return_count_ += 1.0;
          const double d = g - return_mean_;
          return_mean_ += d / return_count_;
          return_m2_ += d * (g - return_mean_);
          if (t.done) g = 0.0;
        }
      }
    }
    const double scale = reward_scale();

    buffer_.clear();
    std::vector<double> episode_rewards;
    for (int i = 0; i < E; ++i) {
      auto& seq = per_env[i];
      std::vector<double> rewards, values;
      std::vector<char> dones;
      for (const auto& t : seq) {
        rewards.push_back(t.reward / scale + config_.coef.gamma * t.truncation_value);
        values.push_back(t.value_old);
        dones.push_back(t.done ? 1 : 0);
      }
      values.push_back(bootstrap[i]);
      const GaeResult g = compute_gae(rewards, values, dones, config_.coef.gamma, config_.coef.lambda);
      for (std::size_t k = 0; k < seq.size(); ++k) {
        seq[k].advantage = g.advantages[k];
        seq[k].ret = g.returns[k];
        buffer_.push_back(std::move(seq[k]));
      }
      episode_rewards.insert(episode_rewards.end(), finished[i].begin(), finished[i].end());
    }
    if (config_.normalize_advantages) {
      std::vector<double> adv;
      for (const auto& t : buffer_) adv.push_back(t.advantage);
      normalize_advantages(adv);
      for (std::size_t k = 0; k < adv.size(); ++k) buffer_[k].advantage = adv[k];
    }

    const double n = static_cast<double>(buffer_.size());
    for (const auto& t : buffer_) {
      report.mean_reward += t.reward / n;
      report.mean_env_reward += t.r_env / n;
      report.mean_probe_reward += t.r_probe / n;
    }
    report.episodes_finished = static_cast<int>(episode_rewards.size());
    if (!episode_rewards.empty()) {
      report.mean_episode_reward = std::accumulate(episode_rewards.begin(), episode_rewards.end(), 0.0) /
                                   static_cast<double>(episode_rewards.size());
    }

    std::vector<std::size_t> order(buffer_.size());
    int steps_taken = 0;
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng_.index(k)]);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.minibatch)) {
        std::vector<Transition> mb;
        for (std::size_t k = start; k < std::min(order.size(), start + config_.minibatch); ++k) {
          mb.push_back(buffer_[order[k]]);
        }
        const RlGradient g = rl_loss(nets_, mb, config_.kl, config_.coef, config_.alpha);
        Eigen::VectorXd params = nets_.flat();
        optimizer_.step(params, g.grad);
        nets_.set_flat(params);
        config_.kl.ema = g.losses.kl_state.ema;
        report.policy_loss += g.losses.policy;
        report.value_loss += g.losses.value;
        report.entropy += g.losses.entropy;
        report.kl_loss += g.losses.kl;
        report.kappa = g.losses.kl_state.kappa;
        ++steps_taken;
      }
    }
    if (steps_taken > 0) {
      report.policy_loss /= steps_taken;
      report.value_loss /= steps_taken;
      report.entropy /= steps_taken;
      report.kl_loss /= steps_taken;
    }
    report.kl_ema = config_.kl.ema;
  } catch (...) {
    nets_.set_flat(saved_params);
    optimizer_ = saved_opt;
    config_.kl = saved_kl;
    return_count_ = saved_moments[0];
    return_mean_ = saved_moments[1];
    return_m2_ = saved_moments[2];
    throw;
  }

  report.update = updates_++;
  history_.push_back(report.mean_reward);
  if (history_.size() > 20) history_.pop_front();
  const double m = std::accumulate(history_.begin(), history_.end(), 0.0) / static_cast<double>(history_.size());
  double var = 0.0;
  for (double v : history_) var += (v - m) * (v - m);
  report.rolling_std = std::sqrt(var / static_cast<double>(history_.size()));
  return report;
}

}  // namespace gsdrive
