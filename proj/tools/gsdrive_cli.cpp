// gsdrive: scene generation, rendering, training, evaluation and probe
// inspection.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gsdrive/actionspace.hpp"
#include "gsdrive/config.hpp"
#include "gsdrive/env.hpp"
#include "gsdrive/error.hpp"
#include "gsdrive/evaluation.hpp"
#include "gsdrive/ot.hpp"
#include "gsdrive/pipeline.hpp"
#include "gsdrive/scene_gen.hpp"
#include "gsdrive/scene_io.hpp"
#include "gsdrive/splat.hpp"

namespace fs = std::filesystem;
using namespace gsdrive;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

RunConfig load_run_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

SceneSet require_scenes(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::kConfig, "--scenes is required");
  SceneSet scenes = load_scene_dir(dir);
  if (scenes.empty()) throw Error(ErrorCode::kConfig, "no *.json scenes in " + dir);
  return scenes;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "run configuration (JSON)");
  app->add_option("--seed", c.seed, "random seed");
}

// ---- scene gen ----

struct SceneGenArgs {
  std::string name;
  std::uint64_t seed = 1;
  int count = 1;
  std::string out = "scenes";
};

void scene_gen(const SceneGenArgs& a) {
  const fs::path out(a.out);
  const bool single_file = a.count == 1 && out.extension() == ".json";
  for (int i = 0; i < a.count; ++i) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(i);
    Scene scene = generate_scene(a.name, seed);
    const fs::path path = single_file ? out : out / (a.name + "_" + std::to_string(seed) + ".json");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_scene(path, scene);
    std::cout << path.string() << "\n";
  }
}

// ---- render ----

struct RenderArgs {
  std::string scene;
  std::string out = "render";
  int camera = 0;
  int tick = 0;
  bool naive = false;
};

void render(const RenderArgs& a) {
  const Scene scene = load_scene(a.scene);
  if (a.camera < 0 || a.camera >= static_cast<int>(scene.cameras.size())) {
    throw Error(ErrorCode::kInvalidArgument, "camera index out of range");
  }
  RenderOptions opts;
  opts.naive = a.naive;
  const RenderOutput r = render_view(scene, scene.cameras[a.camera], a.tick, opts);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_ppm(out / "color.ppm", r.color);
  write_depth(out / "depth.gsd", r.depth);
  std::cout << "wrote " << (out / "color.ppm").string() << " and " << (out / "depth.gsd").string() << "\n";
}

// ---- train il ----

struct TrainIlArgs {
  Common common;
  std::string scenes;
  std::string out = "runs/il";
  std::optional<int> steps;
  std::string dump_coupling;
};

void dump_coupling(const fs::path& path, const ImitationSetup& setup, const RunConfig& cfg) {
  const std::size_t n = std::min<std::size_t>(setup.data.size(), static_cast<std::size_t>(cfg.il.batch));
  Eigen::MatrixXd targets(n, kTrajectoryDim);
  for (std::size_t i = 0; i < n; ++i) targets.row(i) = setup.data[i].trajectory.transpose();
  TrajectorySet source{setup.head.anchors.centroids, setup.head.anchors.frequencies()};
  const OtCoupling p = sinkhorn_coupling(source, TrajectorySet::uniform(targets), cfg.sinkhorn);
  std::ofstream out = open_out(path);
  char buf[64];
  for (Eigen::Index i = 0; i < p.plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.plan.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%s%.17g", j ? "," : "", p.plan(i, j));
      out << buf;
    }
    out << "\n";
  }
}

void train_il(const TrainIlArgs& a) {
  RunConfig cfg = load_run_config(a.common);
  if (a.steps) cfg.il.steps = *a.steps;
  cfg.validate();
  const SceneSet scenes = require_scenes(a.scenes);
  ImitationSetup setup = prepare_imitation(scenes, cfg, cfg.seed);
  const std::string fp = fingerprint_hex(cfg.fingerprint());
  const fs::path out(a.out);
  fs::create_directories(out);
  std::cout << "imitation: " << setup.data.size() << " samples, " << setup.head.modes() << " modes, config " << fp
            << "\n";
  if (!a.dump_coupling.empty()) dump_coupling(a.dump_coupling, setup, cfg);

  std::ofstream log = open_out(out / "il_log.csv");
  log << "step,mode,mse,velocity,ce,total,config\n";
  const int every = cfg.il.checkpoint_every;
  FlowHead& head = setup.head;
  train_imitation(head, setup.data, imitation_options(cfg, cfg.seed), [&](int step, const IlLosses& l) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,", step, l.mode, l.mse, l.velocity, l.ce, l.total);
    log << buf << fp << "\n";
    if (every > 0 && (step + 1) % every == 0) {
      save_imitation_checkpoint(out / ("il_" + std::to_string(step + 1) + ".ckpt"), cfg, head);
    }
    if ((step + 1) % 100 == 0) std::cout << "step " << step + 1 << " loss " << l.total << "\n";
  });
  save_imitation_checkpoint(out / "il.ckpt", cfg, head);
  std::cout << "wrote " << (out / "il.ckpt").string() << "\n";
}

// ---- train rl ----

struct TrainRlArgs {
  Common common;
  std::string scenes;
  std::string out = "runs/rl";
  std::string init;
  std::optional<int> updates;
  bool ablate_probe = false;
};

void train_rl(const TrainRlArgs& a) {
  RunConfig cfg = load_run_config(a.common);
  if (a.updates) cfg.rl_run.updates = *a.updates;
  if (a.ablate_probe) cfg.reward.w_probe = 0.0;
  cfg.validate();
  const SceneSet scenes = require_scenes(a.scenes);

  std::shared_ptr<const FlowHead> head;
  PolicyNets nets;
  if (!a.init.empty()) {
    LoadedPolicy init = load_policy(a.init);
    if (init.stage != Stage::kImitation) std::cerr << "note: --init is an RL checkpoint; continuing from it\n";
    const FlowHeadConfig& h = init.head->config;
    if (observation_dim(init.config.env) != observation_dim(cfg.env) || h.hidden != cfg.hidden ||
        h.modes != cfg.modes || h.flow_layers != cfg.flow_layers || h.head_layers != cfg.head_layers ||
        h.grid.size() != cfg.anchors) {
      throw Error(ErrorCode::kShapeMismatch, "--init was trained with a different network or observation layout");
    }
    head = init.head;
    nets = init.stage == Stage::kImitation ? PolicyNets::from_flowhead(*head, mix_seed(cfg.seed, 0x76616c)) : init.nets;
  } else {
    std::cerr << "warning: train rl without --init; starting from a random initialization\n";
    ImitationSetup setup = prepare_imitation(scenes, cfg, cfg.seed);
    head = std::make_shared<FlowHead>(std::move(setup.head));
    nets = PolicyNets::from_flowhead(*head, mix_seed(cfg.seed, 0x76616c));
  }

  const int workers = resolve_workers(cfg);
  RlTrainer trainer(head, nets, cfg.rl_config(workers), scenes, cfg.env, cfg.reward, cfg.seed);
  const std::string fp = fingerprint_hex(cfg.fingerprint());
  const fs::path out(a.out);
  fs::create_directories(out);
  std::ofstream log = open_out(out / "rl_log.csv");
  log << update_csv_header() << ",config\n";
  for (int u = 0; u < cfg.rl_run.updates; ++u) {
    const UpdateReport r = trainer.update();
    log << update_csv_row(r) << ',' << fp << "\n";
    log.flush();
    const int every = cfg.rl_run.checkpoint_every;
    if (every > 0 && (u + 1) % every == 0) {
      save_rl_checkpoint(out / ("rl_" + std::to_string(u + 1) + ".ckpt"), cfg, *head, trainer.nets());
    }
    if ((u + 1) % 10 == 0) {
      std::cout << "update " << u + 1 << " mean reward " << r.mean_reward << " kappa " << r.kappa << "\n";
    }
  }
  save_rl_checkpoint(out / "rl.ckpt", cfg, *head, trainer.nets());
  std::cout << "wrote " << (out / "rl.ckpt").string() << "\n";
}

// ---- eval ----

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string scenes;
  std::string out = "eval";
  std::optional<int> episodes;
  bool render = false;
  bool force = false;
};

void eval(const EvalArgs& a) {
  if (a.checkpoint.empty()) throw Error(ErrorCode::kConfig, "--checkpoint is required");
  std::optional<std::uint64_t> expected;
  if (!a.common.config.empty()) expected = load_run_config(a.common).fingerprint();
  LoadedPolicy policy;
  try {
    policy = load_policy(a.checkpoint, expected ? &*expected : nullptr);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kVersionMismatch || !a.force) throw;
    std::cerr << "warning: " << e.what() << " (continuing because of --force)\n";
    policy = load_policy(a.checkpoint);
  }
  RunConfig cfg = policy.config;
  if (a.common.seed) cfg.seed = *a.common.seed;
  const int episodes = a.episodes.value_or(cfg.eval_episodes);
  if (episodes < 0) throw Error(ErrorCode::kInvalidArgument, "--episodes must be >= 0");
  const SceneSet scenes = require_scenes(a.scenes);

  const fs::path out(a.out);
  fs::create_directories(out);
  const fs::path frames = out / "frames";
  if (a.render) fs::create_directories(frames);
  const auto records = run_eval(policy.bundle(), scenes, cfg.env, cfg.reward, episodes, cfg.seed,
                                resolve_workers(cfg), false, a.render ? &frames : nullptr);
  std::ofstream csv = open_out(out / "metrics.csv");
  write_metrics_csv(csv, records, fingerprint_hex(policy.fingerprint));
  if (!records.empty()) {
    const EpisodeMetrics m = mean_metrics(records);
    std::printf("ER %.3f  DS %.3f  MA %.3f  LC %.3f  MAJ %.3f  MSA %.3f  CR %.3f\n", m.er, m.ds, m.ma, m.lc, m.maj,
                m.msa, m.cr);
  }
  std::cout << "wrote " << (out / "metrics.csv").string() << "\n";
}

// ---- probe-dump ----

struct ProbeArgs {
  std::string checkpoint;
  std::string scene;
  std::string out = "probe.csv";
  std::string dump_logits;
  int tick = 0;
};

void probe_dump(const ProbeArgs& a) {
  if (a.checkpoint.empty() || a.scene.empty()) throw Error(ErrorCode::kConfig, "--checkpoint and --scene are required");
  const LoadedPolicy policy = load_policy(a.checkpoint);
  const RunConfig& cfg = policy.config;
  auto scene = std::make_shared<const Scene>(load_scene(a.scene));
  const int last = static_cast<int>(scene->expert_trajectory.size()) - 2;
  if (a.tick < 0 || a.tick > last) {
    throw Error(ErrorCode::kInvalidArgument, "--tick must lie in [0, " + std::to_string(last) + "]");
  }
  DrivingEnv env(scene, cfg.env, cfg.reward);
  EgoState ego;
  ego.position = scene->expert_trajectory[a.tick];
  const Vec2 d = scene->expert_trajectory[a.tick + 1] - ego.position;
  ego.heading = std::atan2(d.y(), d.x());
  ego.speed = d.norm() / cfg.env.dt;
  env.teleport(ego, a.tick);

  const Eigen::VectorXd obs = env.observe();
  const TrajectoryBatch batch = sample_trajectories(*policy.head, obs, cfg.sample_steps, cfg.guidance, cfg.seed);
  const ProbeResult probe = env.probe(batch);
  std::ofstream out = open_out(a.out);
  out << "mode,probability,probed,return,endpoint_x,endpoint_y\n";
  for (int m = 0; m < batch.modes(); ++m) {
    std::string ret = "";
    bool probed = false;
    for (std::size_t k = 0; k < probe.modes.size(); ++k) {
      if (probe.modes[k] == m) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9f", probe.returns[k]);
        ret = buf;
        probed = true;
      }
    }
    char buf[160];
    const Vec2 e = batch.endpoint(m);
    std::snprintf(buf, sizeof buf, "%d,%.9f,%d,%s,%.6f,%.6f\n", m, batch.mode_probs[m], probed ? 1 : 0, ret.c_str(),
                  e.x(), e.y());
    out << buf;
  }
  std::printf("probe reward %.6f over %zu modes\n", probe.reward, probe.modes.size());

  if (!a.dump_logits.empty()) {
    const PolicyBundle b = policy.bundle();
    const PolicyEval pe = evaluate_policy(
        b.nets, obs, trajectory_logits(batch, policy.head->config.grid, policy.head->config.coordinate), b.alpha);
    std::ofstream lo = open_out(a.dump_logits);
    write_logits_csv(lo, pe.logits, policy.head->config.grid);
  }
}

// ---- config ----

void config_dump(const Common& c) {
  const RunConfig cfg = load_run_config(c);
  std::cout << config_to_json(cfg);
  std::cerr << "fingerprint " << fingerprint_hex(cfg.fingerprint()) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsdrive: Gaussian-splat driving sim with flow-matching trajectories and probing PPO"};
  app.require_subcommand(1);

  auto* scene = app.add_subcommand("scene", "scene files");
  scene->require_subcommand(1);
  SceneGenArgs gen;
  auto* gen_cmd = scene->add_subcommand("gen", "generate a synthetic scene");
  gen_cmd->add_option("--template", gen.name, "corridor | curve | obstacle | cut-in")->required();
  gen_cmd->add_option("--seed", gen.seed, "scene seed");
  gen_cmd->add_option("--count", gen.count, "number of consecutive seeds")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", gen.out, "output file (.json) or directory");

  RenderArgs ra;
  auto* render_cmd = app.add_subcommand("render", "render a scene camera to PPM and depth");
  render_cmd->add_option("--scene", ra.scene, "scene file")->required();
  render_cmd->add_option("--out", ra.out, "output directory");
  render_cmd->add_option("--camera", ra.camera, "camera index");
  render_cmd->add_option("--tick", ra.tick, "simulation tick for dynamic agents");
  render_cmd->add_flag("--naive", ra.naive, "use the per-pixel reference renderer");

  auto* train = app.add_subcommand("train", "training stages");
  train->require_subcommand(1);
  TrainIlArgs il;
  auto* il_cmd = train->add_subcommand("il", "imitation warm start");
  add_common(il_cmd, il.common);
  il_cmd->add_option("--scenes", il.scenes, "scene directory");
  il_cmd->add_option("--out", il.out, "output directory");
  il_cmd->add_option("--steps", il.steps, "override il.steps");
  il_cmd->add_option("--dump-coupling", il.dump_coupling, "write the anchor-to-batch OT plan as CSV");

  TrainRlArgs rl;
  auto* rl_cmd = train->add_subcommand("rl", "PPO with probing rewards");
  add_common(rl_cmd, rl.common);
  rl_cmd->add_option("--scenes", rl.scenes, "scene directory");
  rl_cmd->add_option("--out", rl.out, "output directory");
  rl_cmd->add_option("--init", rl.init, "imitation checkpoint");
  rl_cmd->add_option("--updates", rl.updates, "override rl.updates");
  rl_cmd->add_flag("--ablate-probe", rl.ablate_probe, "train on environment reward only");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "closed-loop evaluation");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--scenes", ev.scenes, "scene directory");
  eval_cmd->add_option("--out", ev.out, "output directory");
  eval_cmd->add_option("--episodes", ev.episodes, "episode count");
  eval_cmd->add_flag("--render", ev.render, "write a PPM per tick");
  eval_cmd->add_flag("--force", ev.force, "accept a checkpoint trained under a different config");

  ProbeArgs pa;
  auto* probe_cmd = app.add_subcommand("probe-dump", "per-mode probe returns for one state");
  probe_cmd->add_option("--checkpoint", pa.checkpoint, "checkpoint")->required();
  probe_cmd->add_option("--scene", pa.scene, "scene file")->required();
  probe_cmd->add_option("--tick", pa.tick, "expert tick to start from");
  probe_cmd->add_option("--out", pa.out, "CSV path");
  probe_cmd->add_option("--dump-logits", pa.dump_logits, "also write the action logits as CSV");

  Common cc;
  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");
  add_common(config_cmd, cc);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) scene_gen(gen);
    else if (render_cmd->parsed()) render(ra);
    else if (il_cmd->parsed()) train_il(il);
    else if (rl_cmd->parsed()) train_rl(rl);
    else if (eval_cmd->parsed()) eval(ev);
    else if (probe_cmd->parsed()) probe_dump(pa);
    else if (config_cmd->parsed()) config_dump(cc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
