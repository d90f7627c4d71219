#pragma once

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ctxvid/geometry/camera.hpp"

namespace ctxvid::harness {

using geometry::CameraPose;

enum class TrajectoryKind { pan, orbit, dolly };

inline TrajectoryKind parse_trajectory_kind(const std::string& s) {
  if (s == "pan") return TrajectoryKind::pan;
  if (s == "orbit") return TrajectoryKind::orbit;
  if (s == "dolly") return TrajectoryKind::dolly;
  throw ConfigError("unknown trajectory kind '" + s + "' (expected pan, orbit or dolly)");
}

inline std::string to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::pan: return "pan";
    case TrajectoryKind::orbit: return "orbit";
    case TrajectoryKind::dolly: return "dolly";
  }
  return "pan";
}

/// Angles in radians, distances in world units. Per-frame quantities are the
/// change between consecutive frames.
///   pan:   camera fixed at `eye`, yaw advances by `step` per frame.
///   orbit: camera on a horizontal circle of `radius` around `target` at
///          height offset `height`, azimuth advancing by `step`, looking at target.
///   dolly: camera starts at `eye` looking along yaw `start`, moves forward by `step`.
struct TrajectoryParams {
  Eigen::Vector3d eye{0, -0.5, -7};
  Eigen::Vector3d target{0, 0, 0};
  double radius = 7.0;
  double height = -1.0;
  double start = 0.0;  // initial yaw / azimuth
  double step = 0.02;
  double pitch = 0.0;  // pan/dolly only; positive looks down
};

namespace detail {
// Camera looking along yaw (rotation about world y) with the given pitch.
inline Eigen::Matrix3d yaw_pitch_rotation(double yaw, double pitch) {
  // Camera-to-world: columns are camera x, y, z axes in world coordinates.
  const Eigen::Matrix3d c2w =
      (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) * Eigen::AngleAxisd(-pitch, Eigen::Vector3d::UnitX())).toRotationMatrix();
  return c2w.transpose();
}
}  // namespace detail

/// T poses along the requested path.
inline std::vector<CameraPose> make_trajectory(TrajectoryKind kind, std::size_t T, const TrajectoryParams& p) {
  if (T < 1) throw ConfigError("trajectory needs at least one frame");
  std::vector<CameraPose> poses;
  poses.reserve(T);
  for (std::size_t k = 0; k < T; ++k) {
    const double s = double(k) * p.step;
    CameraPose pose;
    switch (kind) {
      case TrajectoryKind::pan:
        pose.rotation = detail::yaw_pitch_rotation(p.start + s, p.pitch);
        pose.translation = -pose.rotation * p.eye;
        break;
      case TrajectoryKind::orbit: {
        const double a = p.start + s;
        const Eigen::Vector3d eye = p.target + Eigen::Vector3d(p.radius * std::sin(a), p.height, -p.radius * std::cos(a));
        pose = CameraPose::look_at(eye, p.target);
        break;
      }
      case TrajectoryKind::dolly: {
        pose.rotation = detail::yaw_pitch_rotation(p.start, p.pitch);
        const Eigen::Vector3d forward = pose.rotation.row(2).transpose();
        pose.translation = -pose.rotation * (p.eye + s * forward);
        break;
      }
    }
    poses.push_back(pose);
  }
  return poses;
}

/// Which frames after the clip window become context.
enum class ContextStrategy { range_after_end, end_plus_1, furthest };

inline ContextStrategy parse_context_strategy(const std::string& s) {
  if (s == "range_after_end") return ContextStrategy::range_after_end;
  if (s == "end_plus_1") return ContextStrategy::end_plus_1;
  if (s == "furthest") return ContextStrategy::furthest;
  throw ConfigError("unknown context strategy '" + s + "' (expected range_after_end, end_plus_1 or furthest)");
}

inline std::string to_string(ContextStrategy s) {
  switch (s) {
    case ContextStrategy::range_after_end: return "range_after_end";
    case ContextStrategy::end_plus_1: return "end_plus_1";
    case ContextStrategy::furthest: return "furthest";
  }
  return "end_plus_1";
}

class InsufficientContextError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One training/evaluation clip cut from a longer video: frames
/// start + k*stride for k < frames.
struct ClipSpec {
  std::uint64_t scene_seed = 0;
  TrajectoryKind kind = TrajectoryKind::orbit;
  std::size_t frames = 16;
  std::size_t stride = 1;
  std::size_t start = 0;
  ContextStrategy strategy = ContextStrategy::end_plus_1;
  std::size_t context_count = 1;

  void validate() const {
    if (frames < 1) throw ConfigError("clip needs at least one frame");
    if (stride < 1 || stride > 10) throw ConfigError("clip stride " + std::to_string(stride) + " outside [1, 10]");
    if (context_count < 1 || context_count > 4) throw ConfigError("context count " + std::to_string(context_count) + " outside [1, 4]");
  }
  std::size_t last_frame() const { return start + (frames - 1) * stride; }
  std::vector<std::size_t> frame_indices() const {
    std::vector<std::size_t> idx(frames);
    for (std::size_t k = 0; k < frames; ++k) idx[k] = start + k * stride;
    return idx;
  }
};

/// Video indices of the context frames, all strictly after the clip window.
///   end_plus_1:      end+1, end+2, ...
///   furthest:        M-1, M-2, ...
///   range_after_end: distinct uniform draws from (end, M-1], ascending.
inline std::vector<std::size_t> sample_context(const ClipSpec& clip, std::size_t video_frames, std::mt19937_64& rng) {
  clip.validate();
  const std::size_t end = clip.last_frame();
  const std::size_t available = video_frames > end + 1 ? video_frames - end - 1 : 0;
  if (available < clip.context_count)
    throw InsufficientContextError("video of " + std::to_string(video_frames) + " frames leaves " + std::to_string(available) +
                                   " frames after the clip window ending at " + std::to_string(end) + ", need " +
                                   std::to_string(clip.context_count));
  std::vector<std::size_t> idx;
  switch (clip.strategy) {
    case ContextStrategy::end_plus_1:
      for (std::size_t j = 0; j < clip.context_count; ++j) idx.push_back(end + 1 + j);
      break;
    case ContextStrategy::furthest:
      for (std::size_t j = 0; j < clip.context_count; ++j) idx.push_back(video_frames - 1 - j);
      break;
    case ContextStrategy::range_after_end: {
      std::vector<std::size_t> pool(available);
      for (std::size_t i = 0; i < available; ++i) pool[i] = end + 1 + i;
      // Partial Fisher-Yates.
      for (std::size_t j = 0; j < clip.context_count; ++j) {
        std::uniform_int_distribution<std::size_t> d(j, available - 1);
        std::swap(pool[j], pool[d(rng)]);
        idx.push_back(pool[j]);
      }
      std::sort(idx.begin(), idx.end());
      break;
    }
  }
  return idx;
}

}  // namespace ctxvid::harness
