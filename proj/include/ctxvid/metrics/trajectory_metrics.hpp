#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ctxvid/geometry/camera.hpp"

namespace ctxvid::metrics {

using geometry::CameraPose;

/// Estimated and reference trajectories of equal length.
struct TrajectoryPair {
  std::vector<CameraPose> estimated;
  std::vector<CameraPose> reference;

  void validate(double tol = 1e-6) const {
    if (estimated.size() != reference.size())
      throw ShapeError("trajectory lengths differ: " + std::to_string(estimated.size()) + " vs " + std::to_string(reference.size()));
    for (const auto& p : estimated) p.validate(tol);
    for (const auto& p : reference) p.validate(tol);
  }
};

/// Geodesic angle between two rotations, radians: arccos((tr(R~ R^T) - 1) / 2)
/// with the argument clamped to [-1, 1]. Evaluated as atan2 of the sine (from
/// the antisymmetric part) and the clamped cosine; arccos alone returns ~1e-8
/// for identical rotations because of its infinite slope at 1.
inline double rotation_angle(const Eigen::Matrix3d& est, const Eigen::Matrix3d& ref) {
  // Explicit loop: R(i,j) and R(j,i) use the same operation order, so the
  // antisymmetric part is exactly zero when est == ref.
  Eigen::Matrix3d R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R(i, j) = est(i, 0) * ref(j, 0) + est(i, 1) * ref(j, 1) + est(i, 2) * ref(j, 2);
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * axis.norm(), c);
}

/// Sum of per-frame geodesic rotation errors.
inline double rot_err(const TrajectoryPair& tp) {
  tp.validate();
  double s = 0;
  for (std::size_t i = 0; i < tp.estimated.size(); ++i) s += rotation_angle(tp.estimated[i].rotation, tp.reference[i].rotation);
  return s;
}

/// Sum of per-frame translation distances.
inline double trans_err(const TrajectoryPair& tp) {
  tp.validate();
  double s = 0;
  for (std::size_t i = 0; i < tp.estimated.size(); ++i) s += (tp.estimated[i].translation - tp.reference[i].translation).norm();
  return s;
}

/// Sum of per-frame Frobenius norms of the 3x4 extrinsic differences.
inline double cam_mc(const TrajectoryPair& tp) {
  tp.validate();
  double s = 0;
  for (std::size_t i = 0; i < tp.estimated.size(); ++i) {
    Eigen::Matrix<double, 3, 4> d;
    d.leftCols<3>() = tp.estimated[i].rotation - tp.reference[i].rotation;
    d.col(3) = tp.estimated[i].translation - tp.reference[i].translation;
    s += d.norm();
  }
  return s;
}

/// Total length of the camera-centre path.
inline double path_length(const std::vector<CameraPose>& poses) {
  double len = 0;
  for (std::size_t i = 1; i < poses.size(); ++i) len += (poses[i].center() - poses[i - 1].center()).norm();
  return len;
}

/// Rebases both trajectories to their first frame and divides every
/// translation by the reference path length (skipped when that length is 0).
inline TrajectoryPair normalize_trajectory(const TrajectoryPair& tp) {
  if (tp.reference.empty()) throw ShapeError("normalize_trajectory: empty trajectory");
  if (tp.estimated.size() != tp.reference.size()) throw ShapeError("normalize_trajectory: length mismatch");
  TrajectoryPair out{geometry::rebase_to_first(tp.estimated), geometry::rebase_to_first(tp.reference)};
  const double len = path_length(out.reference);
  if (len > 0) {
    for (auto* traj : {&out.estimated, &out.reference})
      for (auto& p : *traj) p.translation /= len;
  }
  return out;
}

}  // namespace ctxvid::metrics
