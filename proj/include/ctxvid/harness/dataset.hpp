#pragma once

#include <memory>

#include "ctxvid/diffusion/trainer.hpp"
#include "ctxvid/geometry/epipolar.hpp"
#include "ctxvid/harness/config.hpp"
#include "ctxvid/harness/parallel.hpp"
#include "ctxvid/harness/renderer.hpp"
#include "ctxvid/nn/codec.hpp"

namespace ctxvid::harness {

using diffusion::ConditionSet;
using diffusion::TrainSample;

/// One full synthetic video and the clip cut from it.
struct VideoData {
  std::size_t id = 0;
  ClipSpec clip;
  Scene scene;
  TrajectoryParams params;
  std::vector<CameraPose> poses;       // every video frame
  std::vector<Tensor<double>> frames;  // every video frame, (S, S, 3) in [0, 1]
  std::string caption;
  std::vector<std::size_t> text;
};

/// Seeds of training and evaluation scenes never overlap.
inline std::uint64_t scene_seed(std::uint64_t master, bool eval, std::size_t index) {
  return master * 0x9e3779b97f4a7c15ull + (eval ? 0x100000000ull : 0) + index;
}

inline Intrinsics image_intrinsics(const ExperimentConfig& c) {
  return Intrinsics::from_fov(c.fov, int(c.image_size), int(c.image_size));
}

inline Intrinsics latent_intrinsics(const ExperimentConfig& c) { return image_intrinsics(c).downsampled(int(c.codec.patch)); }

/// Trajectory and clip layout for a scene, drawn from the scene seed.
inline VideoData make_video(const ExperimentConfig& c, std::uint64_t seed, std::size_t id, bool render = true) {
  VideoData v;
  v.id = id;
  v.scene = generate_scene(seed);
  std::mt19937_64 rng(seed ^ 0x7a11e5ull);
  std::uniform_int_distribution<std::size_t> kind(0, c.trajectories.size() - 1), stride(c.stride_min, c.stride_max);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  v.clip.scene_seed = seed;
  v.clip.kind = c.trajectories[kind(rng)];
  v.clip.frames = c.frames;
  v.clip.stride = stride(rng);
  v.clip.context_count = c.context_n;
  const double direction = u01(rng) < 0.5 ? -1.0 : 1.0;
  v.params.start = 2 * M_PI * u01(rng);
  v.params.step = direction * (c.step_min + (c.step_max - c.step_min) * u01(rng));
  v.params.radius = 6.5 + u01(rng);
  v.params.height = -0.8 - 0.8 * u01(rng);
  v.params.pitch = 0.15;
  // Pan and dolly cameras sit outside the object region looking inwards.
  const double r = v.params.radius;
  v.params.eye = Eigen::Vector3d(-r * std::sin(v.params.start), v.params.height, -r * std::cos(v.params.start));
  if (v.clip.kind == TrajectoryKind::dolly) v.params.step = std::abs(v.params.step) * 2.0;  // units per frame
  v.poses = make_trajectory(v.clip.kind, c.video_frames, v.params);
  v.caption = make_caption(v.scene, v.clip.kind);
  v.text = tokenize(v.caption);
  if (render) {
    const auto K = image_intrinsics(c);
    for (const auto& p : v.poses) v.frames.push_back(render_view(v.scene, p, K, c.image_size, c.image_size, c.supersample));
  }
  return v;
}

struct Dataset {
  std::vector<VideoData> train, eval;
};

inline Dataset build_dataset(const ExperimentConfig& c) {
  c.validate();
  Dataset d;
  d.train = parallel_map(c.train_clips, [&](std::size_t i) { return make_video(c, scene_seed(c.seed, false, i), i); });
  d.eval = parallel_map(c.eval_clips, [&](std::size_t i) { return make_video(c, scene_seed(c.seed, true, i), i); });
  return d;
}

/// Fits the patch codec on frames drawn from the training videos.
inline double fit_codec(nn::PatchCodec<double>& codec, const ExperimentConfig& c, const Dataset& d) {
  std::mt19937_64 rng(c.seed ^ 0xc0dec0deull);
  std::vector<Tensor<double>> images;
  std::uniform_int_distribution<std::size_t> pick_video(0, d.train.size() - 1), pick_frame(0, c.video_frames - 1);
  for (std::size_t i = 0; i < c.codec_fit_frames; ++i) images.push_back(d.train[pick_video(rng)].frames[pick_frame(rng)]);
  return codec.fit(images);
}

/// (h, w, C) latent as (h*w, C) rows.
inline Tensor<double> latent_rows(const nn::PatchCodec<double>& codec, const Tensor<double>& image) {
  auto z = codec.encode(image);
  return std::move(z).reshaped({z.dim(0) * z.dim(1), z.dim(2)});
}

inline Tensor<double> stack_rows(const std::vector<Tensor<double>>& parts) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Tensor<double> out = Tensor<double>::matrix(rows, parts.front().cols());
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off);
    off += p.size();
  }
  return out;
}

/// Plücker rows (h*w, 6) of a pose on the latent grid.
inline Tensor<double> plucker_rows(const Intrinsics& K, const CameraPose& pose, std::size_t h, std::size_t w) {
  return geometry::plucker_embedding(K, pose, h, w).data.reshaped({h * w, 6});
}

/// Everything the model sees for one clip, plus the ground-truth latents.
struct ClipExample {
  TrainSample<double> sample;
  std::vector<std::size_t> context_frames;  // video indices
  std::vector<CameraPose> clip_poses;       // rebased to the first clip frame
  std::vector<CameraPose> context_poses;    // same frame
};

inline double mask_threshold(const ExperimentConfig& c) {
  return c.mask_delta > 0 ? c.mask_delta : geometry::default_threshold(c.latent_size(), c.latent_size());
}

/// Builds latents, Plücker fields, the epipolar mask and temporal indices for
/// one video under a context strategy. Poses are expressed relative to the
/// first clip frame; temporal indices count video frames from the clip start.
inline ClipExample make_example(const ExperimentConfig& c, const VideoData& v, const nn::PatchCodec<double>& codec,
                                ContextStrategy strategy, std::mt19937_64& rng) {
  ClipSpec clip = v.clip;
  clip.strategy = strategy;
  ClipExample ex;
  ex.context_frames = sample_context(clip, v.poses.size(), rng);
  const auto clip_idx = clip.frame_indices();
  const std::size_t h = c.latent_size(), w = h;
  const auto K = latent_intrinsics(c);
  const CameraPose inv0 = v.poses[clip_idx.front()].inverse();

  std::vector<Tensor<double>> z, pl, zc, pc;
  for (std::size_t k : clip_idx) {
    z.push_back(latent_rows(codec, v.frames[k]));
    ex.clip_poses.push_back(k == clip_idx.front() ? CameraPose::identity() : v.poses[k] * inv0);
    pl.push_back(plucker_rows(K, ex.clip_poses.back(), h, w));
  }
  for (std::size_t k : ex.context_frames) {
    zc.push_back(latent_rows(codec, v.frames[k]));
    ex.context_poses.push_back(v.poses[k] * inv0);
    pc.push_back(plucker_rows(K, ex.context_poses.back(), h, w));
  }

  auto& s = ex.sample;
  s.z0 = stack_rows(z);
  s.cond.z_ref = z.front();
  s.cond.plucker = stack_rows(pl);
  s.cond.text = v.text;
  s.cond.context.latents = stack_rows(zc);
  s.cond.context.plucker = stack_rows(pc);
  for (std::size_t k : ex.context_frames) s.cond.context.source_index.push_back(k - clip.start);
  for (std::size_t k : clip_idx) s.cond.frame_index.push_back(k - clip.start);
  if (c.epipolar_mask)
    s.cond.mask = std::make_shared<const BitMatrix>(geometry::epipolar_mask(ex.clip_poses, ex.context_poses, K, h, w, mask_threshold(c)));
  // Without the mask, attention is unrestricted (equivalent to all ones).
  return ex;
}

}  // namespace ctxvid::harness
