#pragma once

#include <filesystem>
#include <iomanip>
#include <memory>
#include <sstream>

#include "ctxvid/diffusion/sampler.hpp"
#include "ctxvid/harness/dataset.hpp"
#include "ctxvid/io/netpbm.hpp"
#include "ctxvid/metrics/report.hpp"
#include "ctxvid/nn/checkpoint.hpp"

namespace ctxvid::harness {

namespace fs = std::filesystem;

/// Error from one experiment stage, prefixed with the stage name.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage + ": " + e.what());
  }
}

inline std::string numbered(const std::string& stem, std::size_t i, int width = 3) {
  std::ostringstream os;
  os << stem << std::setw(width) << std::setfill('0') << i;
  return os.str();
}

/// Codec weights live in their own store so model checkpoints stay separate.
struct CodecBundle {
  nn::ParamStore<double> store;
  nn::PatchCodec<double> codec;
  double rmse = 0;
};

inline std::unique_ptr<CodecBundle> make_codec(const ExperimentConfig& c) {
  auto b = std::make_unique<CodecBundle>();
  std::mt19937_64 rng(c.seed ^ 0xc0decull);
  b->codec = nn::PatchCodec<double>(b->store, c.codec, rng);
  return b;
}

inline std::unique_ptr<CodecBundle> train_codec(const ExperimentConfig& c, const Dataset& d) {
  auto b = make_codec(c);
  b->rmse = fit_codec(b->codec, c, d);
  return b;
}

struct ModelBundle {
  nn::ParamStore<double> store;
  std::unique_ptr<diffusion::Denoiser<double>> model;
  std::vector<diffusion::LossRow> losses;
};

/// Model with freshly initialized parameters. The initializer stream depends
/// on the seed only, so a baseline and a context model share backbone values.
inline std::unique_ptr<ModelBundle> make_model(const ExperimentConfig& c) {
  auto b = std::make_unique<ModelBundle>();
  std::mt19937_64 rng(c.seed ^ 0x90de1ull);
  b->model = std::make_unique<diffusion::Denoiser<double>>(b->store, c.model_config(), rng);
  return b;
}

inline diffusion::NoiseSchedule make_schedule(const ExperimentConfig& c) {
  return diffusion::build_schedule(c.diffusion_steps, c.beta_start, c.beta_end);
}

/// Training samples, context drawn with the training strategy.
inline std::vector<TrainSample<double>> training_samples(const ExperimentConfig& c, const Dataset& d, const nn::PatchCodec<double>& codec) {
  std::mt19937_64 rng(c.seed ^ 0x7a1ull);
  std::vector<TrainSample<double>> out;
  out.reserve(d.train.size());
  for (const auto& v : d.train) out.push_back(make_example(c, v, codec, c.train_strategy, rng).sample);
  return out;
}

inline std::unique_ptr<ModelBundle> train_model(const ExperimentConfig& c, const Dataset& d, const nn::PatchCodec<double>& codec,
                                                 const std::function<void(const diffusion::LossRow&)>& on_step = {}) {
  auto b = make_model(c);
  if (!c.init_checkpoint.empty()) nn::load_into(nn::read_checkpoint(c.init_checkpoint), b->store, true);
  const auto samples = training_samples(c, d, codec);
  auto tc = c.train;
  tc.seed = c.seed;
  b->losses = diffusion::train(*b->model, b->store, samples, make_schedule(c), tc, on_step);
  return b;
}

/// Quantizes an image in [0, 1] to 8 bits and returns it on the 0-255 scale,
/// matching what a written PPM decodes to.
inline Tensor<double> to_byte_scale(const Tensor<double>& image) {
  Tensor<double> out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = double(io::to_byte(image[i]));
  return out;
}

inline std::vector<Tensor<double>> decode_video(const nn::PatchCodec<double>& codec, const Tensor<double>& latent, std::size_t frames,
                                                std::size_t h, std::size_t w) {
  const std::size_t C = latent.cols(), per = h * w * C;
  std::vector<Tensor<double>> out;
  for (std::size_t t = 0; t < frames; ++t) {
    Tensor<double> z({h, w, C});
    std::copy_n(latent.data() + t * per, per, z.data());
    out.push_back(codec.decode(z));
  }
  return out;
}

/// Report header annotations describing the run.
inline std::vector<std::pair<std::string, std::string>> report_header(const ExperimentConfig& c, ContextStrategy strategy) {
  return {{"name", c.name},
          {"variant", c.baseline ? "baseline" : "context"},
          {"seed", std::to_string(c.seed)},
          {"ctx_strategy", to_string(strategy)},
          {"ctx_n", std::to_string(c.context_n)},
          {"epipolar_mask", c.epipolar_mask ? "on" : "off"},
          {"temporal_embedding", c.temporal_embedding ? "on" : "off"},
          {"stream", encoder::to_string(c.stream)},
          {"cfg_scale", metrics::format_number(c.cfg_scale)},
          {"ddim_steps", std::to_string(c.ddim_steps)},
          {"clip_x0", metrics::format_number(c.clip_x0)},
          {"anchor_reference", c.anchor_reference ? "on" : "off"}};
}

/// Evaluation example for clip `v`; the context draw depends only on the
/// seed and the clip id.
inline ClipExample eval_example(const ExperimentConfig& c, const VideoData& v, const nn::PatchCodec<double>& codec, ContextStrategy strategy) {
  std::mt19937_64 rng(c.seed ^ (0xe1a1ull + v.id * 0x10001ull));
  return make_example(c, v, codec, strategy, rng);
}

/// Samples one clip and returns decoded frames in [0, 1].
inline std::vector<Tensor<double>> sample_clip(const ExperimentConfig& c, const diffusion::Denoiser<double>& model,
                                               const nn::PatchCodec<double>& codec, const ClipExample& ex, std::size_t clip_id) {
  const auto latent = diffusion::ddim_sample(model, ex.sample.cond, c.ddim_steps, c.cfg_scale, c.sample_seed + clip_id, make_schedule(c),
                                            c.clip_x0, c.anchor_reference);
  const std::size_t h = c.latent_size();
  return decode_video(codec, latent, c.frames, h, h);
}

inline metrics::MetricReport score_clip(const ExperimentConfig& c, const VideoData& v, const ClipExample& ex,
                                        const std::vector<Tensor<double>>& generated, ContextStrategy strategy) {
  metrics::Video gen, gt;
  for (const auto& f : generated) gen.push_back(to_byte_scale(f));
  for (std::size_t k : v.clip.frame_indices()) gt.push_back(to_byte_scale(v.frames[k]));
  // Camera accuracy compares the poses the model was conditioned on with the
  // ground-truth trajectory; no pose estimator runs on the samples.
  metrics::TrajectoryPair tp;
  tp.estimated = ex.clip_poses;
  for (std::size_t k : v.clip.frame_indices()) tp.reference.push_back(v.poses[k]);
  auto r = metrics::evaluate(gen, gt, tp);
  r.header = report_header(c, strategy);
  r.header.emplace_back("clip", std::to_string(v.id));
  return r;
}

/// Per-frame mean over clip reports; trajectory errors are averaged too.
inline metrics::MetricReport aggregate(const std::vector<metrics::MetricReport>& reports,
                                       std::vector<std::pair<std::string, std::string>> header) {
  if (reports.empty()) throw ConfigError("aggregate: no reports");
  metrics::MetricReport out;
  out.header = std::move(header);
  out.header.emplace_back("clips", std::to_string(reports.size()));
  const std::size_t T = reports.front().mse_per_frame.size();
  out.mse_per_frame.assign(T, 0.0);
  out.ssim_per_frame.assign(T, 0.0);
  for (const auto& r : reports) {
    for (std::size_t t = 0; t < T; ++t) {
      out.mse_per_frame[t] += r.mse_per_frame[t];
      out.ssim_per_frame[t] += r.ssim_per_frame[t];
    }
    out.rot_err += r.rot_err;
    out.trans_err += r.trans_err;
    out.cam_mc += r.cam_mc;
  }
  const double n = double(reports.size());
  for (std::size_t t = 0; t < T; ++t) {
    out.mse_per_frame[t] /= n;
    out.ssim_per_frame[t] /= n;
  }
  out.rot_err /= n;
  out.trans_err /= n;
  out.cam_mc /= n;
  return out;
}

/// Samples and scores every evaluation clip, clips in parallel. With
/// `out_dir`, writes per-clip reports under clips/ and PPM frames of the
/// first `save_frames` clips.
inline metrics::MetricReport evaluate_model(const ExperimentConfig& c, const Dataset& d, const nn::PatchCodec<double>& codec,
                                            const diffusion::Denoiser<double>& model, ContextStrategy strategy,
                                            const fs::path& out_dir = {}) {
  struct ClipResult {
    metrics::MetricReport report;
    std::vector<Tensor<double>> frames;
  };
  auto results = parallel_map(d.eval.size(), [&](std::size_t i) {
    const auto& v = d.eval[i];
    const auto ex = eval_example(c, v, codec, strategy);
    auto frames = sample_clip(c, model, codec, ex, v.id);
    auto report = score_clip(c, v, ex, frames, strategy);
    return ClipResult{std::move(report), std::move(frames)};
  });
  std::vector<metrics::MetricReport> reports;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& v = d.eval[i];
    const auto& frames = results[i].frames;
    reports.push_back(results[i].report);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir / "clips");
      metrics::write_report(out_dir / "clips" / (numbered("clip_", v.id) + ".csv"), reports.back());
      if (v.id < c.save_frames) {
        const auto dir = out_dir / "frames" / numbered("clip_", v.id);
        fs::create_directories(dir);
        const auto idx = v.clip.frame_indices();
        for (std::size_t t = 0; t < frames.size(); ++t) {
          io::write_ppm(dir / (numbered("gen_", t, 2) + ".ppm"), frames[t]);
          io::write_ppm(dir / (numbered("gt_", t, 2) + ".ppm"), v.frames[idx[t]]);
        }
      }
    }
  }
  auto agg = aggregate(reports, report_header(c, strategy));
  if (!out_dir.empty()) metrics::write_report(out_dir / "report.csv", agg);
  return agg;
}

inline nlohmann::json checkpoint_meta(const ExperimentConfig& c, const std::string& kind) {
  return {{"kind", kind},
          {"name", c.name},
          {"seed", c.seed},
          {"variant", c.baseline ? "baseline" : "context"},
          {"stream", encoder::to_string(c.stream)},
          {"temporal_embedding", c.temporal_embedding},
          {"epipolar_mask", c.epipolar_mask}};
}

/// Loads codec.ckpt from the output directory.
inline std::unique_ptr<CodecBundle> load_codec(const ExperimentConfig& c) {
  auto b = make_codec(c);
  nn::load_into(nn::read_checkpoint(c.output / "codec.ckpt"), b->store);
  return b;
}

/// Loads model.ckpt from the output directory (or `path`).
inline std::unique_ptr<ModelBundle> load_model(const ExperimentConfig& c, const fs::path& path = {}) {
  auto b = make_model(c);
  nn::load_into(nn::read_checkpoint(path.empty() ? c.output / "model.ckpt" : path), b->store);
  return b;
}

/// Full pipeline: data, codec, training, sampling with DDIM and CFG,
/// evaluation. Writes codec.ckpt, model.ckpt, loss.csv, report.csv, per-clip
/// reports and sample frames under `c.output`; returns the aggregate report.
inline metrics::MetricReport run_experiment(const ExperimentConfig& c) {
  run_stage("config", [&] { c.validate(); });
  fs::create_directories(c.output);
  const Dataset d = run_stage("synth", [&] { return build_dataset(c); });
  auto codec = run_stage("codec", [&] {
    auto b = train_codec(c, d);
    nn::write_checkpoint(c.output / "codec.ckpt", b->store, checkpoint_meta(c, "codec"));
    return b;
  });
  auto model = run_stage("train", [&] {
    auto b = train_model(c, d, codec->codec);
    nn::write_checkpoint(c.output / "model.ckpt", b->store, checkpoint_meta(c, "model"));
    diffusion::write_loss_csv(c.output / "loss.csv", b->losses);
    return b;
  });
  return run_stage("eval", [&] { return evaluate_model(c, d, codec->codec, *model->model, c.strategy, c.output); });
}

}  // namespace ctxvid::harness
