#include "gsdrive/pipeline.hpp"

#include <cstdlib>
#include <string>

#include "gsdrive/error.hpp"
#include "gsdrive/parallel.hpp"

namespace gsdrive {

namespace {

void put_text(TensorMap& tensors, const std::string& name, const std::string& text) {
  Tensor t;
  t.dims = {text.size()};
  t.data.reserve(text.size());
  for (unsigned char c : text) t.data.push_back(static_cast<double>(c));
  tensors[name] = std::move(t);
}

std::string get_text(const TensorMap& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorCode::kFormat, "checkpoint lacks " + name);
  std::string text;
  text.reserve(it->second.data.size());
  for (double v : it->second.data) {
    if (v < 0.0 || v > 255.0) throw Error(ErrorCode::kFormat, name + " is not a byte string");
    text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return text;
}

TensorMap base_tensors(const RunConfig& cfg, const FlowHead& head, Stage stage) {
  TensorMap tensors;
  put_flowhead(tensors, head);
  put_text(tensors, "meta/config", config_to_json(cfg));
  put_u64(tensors, "meta/config_fingerprint", cfg.fingerprint());
  put_scalar(tensors, "meta/stage", static_cast<double>(stage));
  put_scalar(tensors, "meta/observation_dim", head.config.observation_dim);
  return tensors;
}

}  // namespace

ImitationSetup prepare_imitation(const SceneSet& scenes, const RunConfig& cfg, std::uint64_t seed) {
  if (scenes.empty()) throw Error(ErrorCode::kConfig, "no scenes given");
  const std::vector<ExpertSample> samples = build_expert_samples(scenes, cfg.env, cfg.il.augment_offset);
  const ModeAnchors anchors = cluster_modes(stack_trajectories(samples), cfg.modes, mix_seed(seed, 0x6d6f6465));
  const int obs_dim = observation_dim(cfg.env);
  const FlowHeadConfig fcfg = cfg.flowhead(obs_dim);
  ImitationSetup setup{{}, FlowHead::create(fcfg, anchors, seed)};
  setup.data.reserve(samples.size());
  for (const auto& s : samples) {
    setup.data.push_back(make_il_sample(setup.head.anchors, fcfg.grid, s.observation, s.trajectory));
  }
  return setup;
}

ImitationOptions imitation_options(const RunConfig& cfg, std::uint64_t seed) {
  ImitationOptions o;
  o.steps = cfg.il.steps;
  o.batch = cfg.il.batch;
  o.learning_rate = cfg.learning_rate;
  o.max_grad_norm = cfg.max_grad_norm;
  o.seed = seed;
  return o;
}

void save_imitation_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const FlowHead& head) {
  write_checkpoint(path, base_tensors(cfg, head, Stage::kImitation));
}

void save_rl_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const FlowHead& head,
                        const PolicyNets& nets) {
  TensorMap tensors = base_tensors(cfg, head, Stage::kReinforcement);
  put_network(tensors, "policy/encoder", nets.encoder);
  put_network(tensors, "policy/residual", nets.residual);
  put_network(tensors, "policy/value", nets.value);
  write_checkpoint(path, tensors);
}

PolicyBundle LoadedPolicy::bundle() const {
  PolicyBundle b;
  b.head = head;
  b.nets = nets;
  b.alpha = stage == Stage::kImitation ? config.alpha_il : config.rl.alpha;
  b.sample_steps = config.sample_steps;
  b.guidance = config.guidance;
  return b;
}

LoadedPolicy load_policy(const std::filesystem::path& path, const std::uint64_t* expected_fingerprint) {
  const TensorMap tensors = read_checkpoint(path);
  LoadedPolicy p;
  p.config = config_from_json(get_text(tensors, "meta/config"));
  p.fingerprint = get_u64(tensors, "meta/config_fingerprint");
  if (p.fingerprint != p.config.fingerprint()) {
    throw Error(ErrorCode::kFormat, "checkpoint fingerprint does not match its embedded config");
  }
  if (expected_fingerprint && *expected_fingerprint != p.fingerprint) {
    throw Error(ErrorCode::kVersionMismatch, "checkpoint config " + fingerprint_hex(p.fingerprint) +
                                                 " differs from " + fingerprint_hex(*expected_fingerprint));
  }
  const double stage = get_scalar(tensors, "meta/stage");
  if (stage != 0.0 && stage != 1.0) throw Error(ErrorCode::kFormat, "unknown checkpoint stage");
  p.stage = stage == 0.0 ? Stage::kImitation : Stage::kReinforcement;
  const int obs_dim = static_cast<int>(get_scalar(tensors, "meta/observation_dim"));
  if (obs_dim != observation_dim(p.config.env)) {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint observation width disagrees with its env config");
  }
  auto head = std::make_shared<FlowHead>(get_flowhead(tensors, p.config.flowhead(obs_dim)));
  if (p.stage == Stage::kReinforcement) {
    p.nets.encoder = get_network(tensors, "policy/encoder");
    p.nets.residual = get_network(tensors, "policy/residual");
    p.nets.value = get_network(tensors, "policy/value");
    if (p.nets.encoder.input_dim() != obs_dim || p.nets.residual.input_dim() != p.nets.encoder.output_dim() ||
        p.nets.value.output_dim() != 1) {
      throw Error(ErrorCode::kShapeMismatch, "policy networks in checkpoint have inconsistent shapes");
    }
  } else {
    p.nets = PolicyNets::from_flowhead(*head, p.config.seed);
  }
  p.head = std::move(head);
  return p;
}

int resolve_workers(const RunConfig& cfg) {
  const char* env = std::getenv("GSPROBE_WORKERS");
  if (env && std::atoi(env) > 0) return std::atoi(env);
  return cfg.workers > 0 ? cfg.workers : default_worker_count();
}

}  // namespace gsdrive
