#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ctxvid/diffusion/trainer.hpp"
#include "ctxvid/harness/captions.hpp"
#include "ctxvid/harness/trajectory.hpp"

namespace ctxvid::harness {

/// Every recognised key with its default and meaning; also the source of the
/// CLI's config help text.
struct ConfigKey {
  const char* path;
  const char* fallback;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"experiment.name", "toy", "label written into report headers"},
      {"experiment.seed", "1", "master seed; every artifact is a function of config and seed"},
      {"experiment.output", "runs/toy", "output directory"},
      {"experiment.variant", "context", "context | baseline (no context encoder)"},
      {"data.image_size", "64", "square frame size in pixels"},
      {"data.frames", "16", "frames per generated clip"},
      {"data.video_frames", "64", "length of each full synthetic video"},
      {"data.stride_min", "1", "smallest clip stride"},
      {"data.stride_max", "3", "largest clip stride (<= 10)"},
      {"data.train_clips", "128", "training videos"},
      {"data.eval_clips", "8", "held-out evaluation videos"},
      {"data.trajectories", "orbit", "comma list of pan, orbit, dolly"},
      {"data.step_min", "0.02", "smallest per-frame camera step (rad, or units for dolly)"},
      {"data.step_max", "0.035", "largest per-frame camera step"},
      {"data.fov", "1.1", "horizontal field of view in radians"},
      {"data.supersample", "2", "sub-pixel rays per axis"},
      {"context.strategy", "end_plus_1", "evaluation context strategy: range_after_end | end_plus_1 | furthest"},
      {"context.train_strategy", "range_after_end", "strategy used to pick training context frames"},
      {"context.n", "1", "context frames per clip (1..4)"},
      {"context.epipolar_mask", "true", "false replaces every mask with unrestricted attention"},
      {"context.mask_delta", "0", "epipolar threshold in latent pixels; 0 means half the latent diagonal"},
      {"context.temporal_embedding", "true", "false zeroes the frame-index embeddings"},
      {"context.stream", "both", "both | semantic | visual"},
      {"codec.patch", "4", "patch size of the linear codec"},
      {"codec.channels", "8", "latent channels"},
      {"codec.fit_frames", "512", "frames sampled from the training videos for codec fitting"},
      {"model.dim", "32", "token width"},
      {"model.heads", "4", "attention heads"},
      {"model.blocks", "2", "denoiser blocks"},
      {"model.ffn_mult", "4", "feed-forward expansion"},
      {"model.native_queries", "8", "query tokens of the native image/text condition"},
      {"model.native_layers", "1", "layers of the native query transformer"},
      {"model.sem_queries", "16", "semantic-stream query tokens"},
      {"model.sem_layers", "2", "semantic-stream layers"},
      {"diffusion.steps", "1000", "diffusion horizon"},
      {"diffusion.beta_start", "0.0001", "first beta"},
      {"diffusion.beta_end", "0.02", "last beta"},
      {"train.steps", "2000", "optimizer steps"},
      {"train.batch", "4", "clips per step"},
      {"train.lr", "0.001", "Adam learning rate"},
      {"train.log_weighted", "true", "optimize the log-weighted loss instead of the uniform one"},
      {"train.cond_dropout", "0.1", "probability of training the unconditional branch"},
      {"train.freeze_backbone", "false", "train only context-module parameters"},
      {"train.clip_grad_norm", "1.0", "global gradient-norm clip, 0 disables"},
      {"train.init", "", "optional checkpoint to start from"},
      {"sample.ddim_steps", "25", "DDIM steps"},
      {"sample.cfg_scale", "2.0", "classifier-free guidance scale"},
      {"sample.clip_x0", "0", "clamp the DDIM clean-latent estimate to +-value, 0 disables"},
      {"sample.anchor_reference", "true", "pin the first generated frame to the reference latent while sampling"},
      {"sample.seed", "7", "base seed of the sampling noise (clip id is added)"},
      {"sample.save_frames", "2", "evaluation clips whose frames are written as PPM"},
  };
  return keys;
}

inline std::string config_help() {
  std::ostringstream os;
  os << "Config file: `key = value` lines grouped under [section] headers; lines starting with ; or # are comments.\n";
  std::string section;
  for (const auto& k : config_keys()) {
    const std::string path = k.path;
    const auto dot = path.find('.');
    if (path.substr(0, dot) != section) {
      section = path.substr(0, dot);
      os << "[" << section << "]\n";
    }
    os << "  " << path.substr(dot + 1) << " = " << k.fallback << "    " << k.help << '\n';
  }
  return os.str();
}

struct ExperimentConfig {
  std::string name = "toy";
  std::uint64_t seed = 1;
  std::filesystem::path output = "runs/toy";
  bool baseline = false;

  std::size_t image_size = 64, frames = 16, video_frames = 64, stride_min = 1, stride_max = 3;
  std::size_t train_clips = 128, eval_clips = 8;
  std::vector<TrajectoryKind> trajectories{TrajectoryKind::orbit};
  double step_min = 0.02, step_max = 0.035, fov = 1.1;
  int supersample = 2;

  ContextStrategy strategy = ContextStrategy::end_plus_1;
  ContextStrategy train_strategy = ContextStrategy::range_after_end;
  std::size_t context_n = 1;
  bool epipolar_mask = true;
  double mask_delta = 0;
  bool temporal_embedding = true;
  encoder::Stream stream = encoder::Stream::both;

  nn::CodecConfig codec{4, 8};
  std::size_t codec_fit_frames = 512;

  std::size_t dim = 32, heads = 4, blocks = 2, ffn_mult = 4, native_queries = 8, native_layers = 1, sem_queries = 16, sem_layers = 2;
  std::size_t diffusion_steps = 1000;
  double beta_start = 1e-4, beta_end = 2e-2;

  diffusion::TrainConfig train{2000, 4, nn::AdamConfig{1e-3}, true, 0.1, false, 1.0, 1, 0};
  std::string init_checkpoint;

  std::size_t ddim_steps = 25;
  double cfg_scale = 2.0;
  double clip_x0 = 0;
  bool anchor_reference = true;
  std::uint64_t sample_seed = 7;
  std::size_t save_frames = 2;

  std::size_t latent_size() const { return image_size / codec.patch; }

  void validate() const {
    if (image_size == 0 || image_size % codec.patch) throw ConfigError("data.image_size must be a positive multiple of codec.patch");
    if (frames < 2) throw ConfigError("data.frames must be at least 2");
    if (stride_min < 1 || stride_max > 10 || stride_min > stride_max) throw ConfigError("strides must satisfy 1 <= stride_min <= stride_max <= 10");
    if (context_n < 1 || context_n > 4) throw ConfigError("context.n must be in 1..4");
    if ((frames - 1) * stride_max + 1 + context_n > video_frames)
      throw ConfigError("data.video_frames too short for the clip window at stride_max plus " + std::to_string(context_n) + " context frames");
    if (train_clips == 0 || eval_clips == 0) throw ConfigError("need at least one training and one evaluation clip");
    if (trajectories.empty()) throw ConfigError("data.trajectories is empty");
    if (!(step_min <= step_max)) throw ConfigError("data.step_min exceeds data.step_max");
    if (supersample < 1) throw ConfigError("data.supersample must be >= 1");
    if (mask_delta < 0) throw ConfigError("context.mask_delta must be >= 0");
    if (clip_x0 < 0) throw ConfigError("sample.clip_x0 must be >= 0");
    if (ddim_steps < 1 || ddim_steps > diffusion_steps) throw ConfigError("sample.ddim_steps must be in 1..diffusion.steps");
    model_config().validate();
  }

  diffusion::ModelConfig model_config() const {
    diffusion::ModelConfig m;
    m.frames = frames;
    m.latent_h = m.latent_w = latent_size();
    m.channels = codec.channels;
    m.dim = dim;
    m.heads = heads;
    m.blocks = blocks;
    m.ffn_mult = ffn_mult;
    m.native_queries = native_queries;
    m.native_layers = native_layers;
    m.diffusion_steps = diffusion_steps;
    m.beta_start = beta_start;
    m.beta_end = beta_end;
    m.vocab = vocabulary().size();
    m.use_context = !baseline;
    m.encoder = encoder_config();
    return m;
  }

  encoder::EncoderConfig encoder_config() const {
    encoder::EncoderConfig e;
    e.dim = dim;
    e.heads = heads;
    e.sem_queries = sem_queries;
    e.sem_layers = sem_layers;
    e.ffn_mult = ffn_mult;
    e.stream = stream;
    e.temporal_embedding = temporal_embedding;
    return e;
  }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if (!(is >> out) || !(is >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
  if constexpr (std::is_unsigned_v<T>)
    if (v.find('-') != std::string::npos) throw ConfigError(key + ": must not be negative");
  return out;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace detail

/// Parses the sectioned `key = value` text. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& in) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::vector<std::string> known;
  for (const auto& k : config_keys()) known.emplace_back(k.path);
  for (const auto& [section, body] : pt) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      const std::string path = section + "." + key;
      if (std::find(known.begin(), known.end(), path) == known.end()) throw ConfigError("config: unknown key '" + path + "'");
    }
  }

  ExperimentConfig c;
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = pt.get_optional<std::string>(boost::property_tree::ptree::path_type(path, '.'))) return *v;
    return std::nullopt;
  };
  using detail::parse_bool;
  using detail::parse_number;
  auto str = [&](const char* p, std::string& dst) { if (auto v = get(p)) dst = *v; };
  auto size = [&](const char* p, std::size_t& dst) { if (auto v = get(p)) dst = parse_number<std::size_t>(p, *v); };
  auto u64 = [&](const char* p, std::uint64_t& dst) { if (auto v = get(p)) dst = parse_number<std::uint64_t>(p, *v); };
  auto real = [&](const char* p, double& dst) { if (auto v = get(p)) dst = parse_number<double>(p, *v); };
  auto flag = [&](const char* p, bool& dst) { if (auto v = get(p)) dst = parse_bool(p, *v); };

  str("experiment.name", c.name);
  u64("experiment.seed", c.seed);
  if (auto v = get("experiment.output")) c.output = *v;
  if (auto v = get("experiment.variant")) {
    if (*v != "context" && *v != "baseline") throw ConfigError("experiment.variant must be context or baseline");
    c.baseline = *v == "baseline";
  }
  size("data.image_size", c.image_size);
  size("data.frames", c.frames);
  size("data.video_frames", c.video_frames);
  size("data.stride_min", c.stride_min);
  size("data.stride_max", c.stride_max);
  size("data.train_clips", c.train_clips);
  size("data.eval_clips", c.eval_clips);
  if (auto v = get("data.trajectories")) {
    c.trajectories.clear();
    for (const auto& k : detail::split_list(*v)) c.trajectories.push_back(parse_trajectory_kind(k));
  }
  real("data.step_min", c.step_min);
  real("data.step_max", c.step_max);
  real("data.fov", c.fov);
  if (auto v = get("data.supersample")) c.supersample = parse_number<int>("data.supersample", *v);

  if (auto v = get("context.strategy")) c.strategy = parse_context_strategy(*v);
  if (auto v = get("context.train_strategy")) c.train_strategy = parse_context_strategy(*v);
  size("context.n", c.context_n);
  flag("context.epipolar_mask", c.epipolar_mask);
  real("context.mask_delta", c.mask_delta);
  flag("context.temporal_embedding", c.temporal_embedding);
  if (auto v = get("context.stream")) c.stream = encoder::parse_stream(*v);

  size("codec.patch", c.codec.patch);
  size("codec.channels", c.codec.channels);
  size("codec.fit_frames", c.codec_fit_frames);

  size("model.dim", c.dim);
  size("model.heads", c.heads);
  size("model.blocks", c.blocks);
  size("model.ffn_mult", c.ffn_mult);
  size("model.native_queries", c.native_queries);
  size("model.native_layers", c.native_layers);
  size("model.sem_queries", c.sem_queries);
  size("model.sem_layers", c.sem_layers);

  size("diffusion.steps", c.diffusion_steps);
  real("diffusion.beta_start", c.beta_start);
  real("diffusion.beta_end", c.beta_end);

  size("train.steps", c.train.steps);
  size("train.batch", c.train.batch);
  real("train.lr", c.train.adam.lr);
  flag("train.log_weighted", c.train.log_weighted);
  real("train.cond_dropout", c.train.cond_dropout);
  flag("train.freeze_backbone", c.train.freeze_backbone);
  real("train.clip_grad_norm", c.train.clip_grad_norm);
  str("train.init", c.init_checkpoint);

  size("sample.ddim_steps", c.ddim_steps);
  real("sample.cfg_scale", c.cfg_scale);
  real("sample.clip_x0", c.clip_x0);
  flag("sample.anchor_reference", c.anchor_reference);
  u64("sample.seed", c.sample_seed);
  size("sample.save_frames", c.save_frames);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_config(in);
}

}  // namespace ctxvid::harness
