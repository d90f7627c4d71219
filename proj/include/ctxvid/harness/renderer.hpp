#pragma once

#include <cmath>
#include <limits>

#include "ctxvid/geometry/epipolar.hpp"
#include "ctxvid/harness/scene.hpp"

namespace ctxvid::harness {

using geometry::CameraPose;
using geometry::Intrinsics;
using nn::Tensor;

struct Hit {
  double depth = std::numeric_limits<double>::infinity();  // ray parameter along the unnormalized pixel ray = camera z
  Eigen::Vector3d color{0, 0, 0};
  bool valid() const { return std::isfinite(depth); }
};

namespace detail {

// Face shading per axis so box sides stay distinguishable.
inline double face_shade(int axis, bool negative_side) {
  if (axis == 1) return negative_side ? 1.0 : 0.55;  // top (y down) is brightest
  return axis == 0 ? (negative_side ? 0.85 : 0.75) : (negative_side ? 0.7 : 0.62);
}

inline void intersect_box(const Box& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d, Hit& best) {
  double t0 = 0, t1 = std::numeric_limits<double>::infinity();
  int axis = -1;
  bool neg = false;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return;
      continue;
    }
    double ta = (b.lo[a] - o[a]) / d[a], tb = (b.hi[a] - o[a]) / d[a];
    bool entering_lo = true;
    if (ta > tb) {
      std::swap(ta, tb);
      entering_lo = false;
    }
    if (ta > t0) {
      t0 = ta;
      axis = a;
      neg = entering_lo;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return;
  }
  if (axis < 0 || t0 <= 1e-9 || t0 >= best.depth) return;  // camera inside the box or farther than current hit
  const auto& c = palette()[b.color];
  const double s = face_shade(axis, neg);
  best.depth = t0;
  best.color = {c.r * s, c.g * s, c.b * s};
}

inline void intersect_splat(const Splat& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d, Hit& best) {
  const Eigen::Vector3d oc = o - p.center;
  const double a = d.squaredNorm(), hb = oc.dot(d), c = oc.squaredNorm() - p.radius * p.radius;
  const double disc = hb * hb - a * c;
  if (disc < 0) return;
  const double t = (-hb - std::sqrt(disc)) / a;
  if (t <= 1e-9 || t >= best.depth) return;
  const Eigen::Vector3d n = (o + t * d - p.center) / p.radius;
  const double lambert = 0.45 + 0.55 * std::max(0.0, n.dot(Eigen::Vector3d(0.3, -0.8, -0.5).normalized()));
  const auto& col = palette()[p.color];
  best.depth = t;
  best.color = {col.r * lambert, col.g * lambert, col.b * lambert};
}

}  // namespace detail

/// Nearest surface along the ray through pixel (u, v). Depth is the camera
/// z of the hit because the ray direction is R^T K^-1 [u, v, 1].
inline Hit cast_ray(const Scene& scene, const CameraPose& pose, const Intrinsics& K, double u, double v) {
  const Eigen::Vector3d o = pose.center();
  const Eigen::Vector3d d = geometry::ray_direction(K, pose, u, v);
  Hit best;
  for (const auto& b : scene.boxes) detail::intersect_box(b, o, d, best);
  for (const auto& p : scene.splats) detail::intersect_splat(p, o, d, best);
  return best;
}

/// z-buffered ray-cast render, (h, w, 3) in [0, 1]. `supersample` s > 1
/// averages an s x s grid of sub-pixel rays per pixel.
inline Tensor<double> render_view(const Scene& scene, const CameraPose& pose, const Intrinsics& K, std::size_t h, std::size_t w,
                                  int supersample = 1) {
  pose.validate(1e-6);
  K.validate();
  if (supersample < 1) throw ConfigError("render: supersample must be >= 1");
  Tensor<double> img({h, w, 3});
  const int s = supersample;
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u) {
      Eigen::Vector3d acc(0, 0, 0);
      for (int sy = 0; sy < s; ++sy)
        for (int sx = 0; sx < s; ++sx) {
          const double du = (sx + 0.5) / s - 0.5, dv = (sy + 0.5) / s - 0.5;
          const Hit hit = cast_ray(scene, pose, K, double(u) + du, double(v) + dv);
          acc += hit.valid() ? hit.color : Eigen::Vector3d(scene.background[0], scene.background[1], scene.background[2]);
        }
      acc /= double(s * s);
      for (int c = 0; c < 3; ++c) img[(v * w + u) * 3 + c] = acc[c];
    }
  return img;
}

/// Per-pixel hit depth at the pixel centre, +inf for background.
inline Tensor<double> render_depth(const Scene& scene, const CameraPose& pose, const Intrinsics& K, std::size_t h, std::size_t w) {
  Tensor<double> depth({h, w});
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u) depth[v * w + u] = cast_ray(scene, pose, K, double(u), double(v)).depth;
  return depth;
}

}  // namespace ctxvid::harness
