#pragma once

#include <cmath>
#include <vector>

#include "ctxvid/geometry/camera.hpp"
#include "ctxvid/nn/bit_matrix.hpp"

namespace ctxvid::geometry {

using nn::Tensor;

/// Unnormalized ray direction of pixel (u, v) in the pose's reference frame:
/// d = R^T K^-1 [u, v, 1]^T.
inline Eigen::Vector3d ray_direction(const Intrinsics& K, const CameraPose& pose, double u, double v) {
  return pose.rotation.transpose() * (K.inverse() * Eigen::Vector3d(u, v, 1.0));
}

/// h x w x 3 tensor of per-pixel ray directions.
inline Tensor<double> ray_directions(const Intrinsics& K, const CameraPose& pose, std::size_t h, std::size_t w) {
  K.validate();
  if (h < 1 || w < 1) throw ShapeError("ray_directions: empty grid");
  const Eigen::Matrix3d M = pose.rotation.transpose() * K.inverse();
  Tensor<double> out({h, w, 3});
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u) {
      const Eigen::Vector3d d = M * Eigen::Vector3d(double(u), double(v), 1.0);
      for (int c = 0; c < 3; ++c) out[(v * w + u) * 3 + c] = d[c];
    }
  return out;
}

/// Per-pixel Plücker coordinates (o x d', d'): channels 0-2 hold the moment,
/// channels 3-5 the unit direction; o is the camera centre.
struct PluckerField {
  std::size_t height = 0, width = 0;
  Tensor<double> data;  // (height, width, 6)

  Eigen::Vector3d moment(std::size_t u, std::size_t v) const {
    const double* p = data.data() + (v * width + u) * 6;
    return {p[0], p[1], p[2]};
  }
  Eigen::Vector3d direction(std::size_t u, std::size_t v) const {
    const double* p = data.data() + (v * width + u) * 6 + 3;
    return {p[0], p[1], p[2]};
  }
};

inline PluckerField plucker_embedding(const Intrinsics& K, const CameraPose& pose, std::size_t h, std::size_t w) {
  const Tensor<double> dirs = ray_directions(K, pose, h, w);
  const Eigen::Vector3d o = pose.center();
  PluckerField f{h, w, Tensor<double>({h, w, 6})};
  for (std::size_t i = 0; i < h * w; ++i) {
    const Eigen::Vector3d d = Eigen::Vector3d(dirs[i * 3], dirs[i * 3 + 1], dirs[i * 3 + 2]).normalized();
    const Eigen::Vector3d m = o.cross(d);
    for (int c = 0; c < 3; ++c) {
      f.data[i * 6 + c] = m[c];
      f.data[i * 6 + 3 + c] = d[c];
    }
  }
  return f;
}

/// Transform taking camera-a coordinates to camera-b coordinates.
inline CameraPose relative_pose(const CameraPose& a, const CameraPose& b) {
  CameraPose r;
  r.rotation = b.rotation * a.rotation.transpose();
  r.translation = b.translation - r.rotation * a.translation;
  return r;
}

/// F with x_b^T F x_a = 0 for corresponding pixels: K_b^-T [t]x R K_a^-1,
/// (R, t) being the a-to-b relative pose.
inline Eigen::Matrix3d fundamental_matrix(const CameraPose& a, const Intrinsics& Ka, const CameraPose& b, const Intrinsics& Kb) {
  const CameraPose rel = relative_pose(a, b);
  return Kb.inverse().transpose() * skew(rel.translation) * rel.rotation * Ka.inverse();
}

/// Line A u' + B v' + C = 0 in the second view.
struct EpipolarLine {
  double a = 0, b = 0, c = 0;
  bool degenerate = true;
};

inline constexpr double kDegenerateLineNorm2 = 1e-18;
inline constexpr double kPureRotationTranslation = 1e-6;

class DegenerateLineError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline EpipolarLine epipolar_line(const Eigen::Matrix3d& F, double u, double v) {
  const Eigen::Vector3d l = F * Eigen::Vector3d(u, v, 1.0);
  return {l.x(), l.y(), l.z(), l.x() * l.x() + l.y() * l.y() <= kDegenerateLineNorm2};
}

/// Unsigned distance from (u', v') to the line.
inline double point_line_distance(const EpipolarLine& line, double u, double v) {
  if (line.degenerate) throw DegenerateLineError("distance to a degenerate epipolar line");
  return std::abs(line.a * u + line.b * v + line.c) / std::sqrt(line.a * line.a + line.b * line.b);
}

/// Half the diagonal of an h x w grid.
inline double default_threshold(std::size_t h, std::size_t w) { return 0.5 * std::sqrt(double(h * h + w * w)); }

/// Binary relevance of context pixels for generated-frame pixels, shape
/// (T*h*w) x (N*h*w). Row (t, v, u), column (j, v', u'). Entry is set when
/// (u', v') lies within `delta` of the epipolar line of (u, v) from query
/// view t in context view j.
///
/// Fallbacks: the block of context view j is all ones when the pair is a
/// pure rotation or the query pixel's line is degenerate; a row left
/// without any admissible entry becomes all ones.
using EpipolarMask = BitMatrix;

inline EpipolarMask epipolar_mask(const std::vector<CameraPose>& query_poses, const std::vector<CameraPose>& ctx_poses,
                                  const Intrinsics& K, std::size_t h, std::size_t w, double delta) {
  if (query_poses.empty() || ctx_poses.empty()) throw ShapeError("epipolar_mask: need at least one query and one context pose");
  if (std::size_t(K.width) != w || std::size_t(K.height) != h)
    throw ShapeError("epipolar_mask: intrinsics are " + std::to_string(K.width) + "x" + std::to_string(K.height) +
                     " but grid is " + std::to_string(w) + "x" + std::to_string(h));
  if (!(delta > 0)) throw ConfigError("epipolar_mask: threshold must be positive");
  K.validate();
  const std::size_t T = query_poses.size(), N = ctx_poses.size(), hw = h * w;
  EpipolarMask mask(T * hw, N * hw);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < N; ++j) {
      const CameraPose rel = relative_pose(query_poses[t], ctx_poses[j]);
      const bool pure_rotation = rel.translation.norm() < kPureRotationTranslation;
      const Eigen::Matrix3d F = fundamental_matrix(query_poses[t], K, ctx_poses[j], K);
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t row = t * hw + p;
        const std::size_t col0 = j * hw;
        const EpipolarLine line = epipolar_line(F, double(p % w), double(p / w));
        if (pure_rotation || line.degenerate) {
          mask.fill_range(row, col0, col0 + hw, true);
          continue;
        }
        const double norm = std::sqrt(line.a * line.a + line.b * line.b);
        for (std::size_t q = 0; q < hw; ++q) {
          const double d = std::abs(line.a * double(q % w) + line.b * double(q / w) + line.c) / norm;
          if (d <= delta) mask.set(row, col0 + q, true);
        }
      }
    }
  }
  for (std::size_t r = 0; r < mask.rows(); ++r)
    if (mask.count_row(r) == 0) mask.fill_row(r, true);
  return mask;
}

}  // namespace ctxvid::geometry
