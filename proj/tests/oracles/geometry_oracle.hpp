#pragma once

// Reference computations for the geometry tests. They avoid the library's own
// helpers (relative_pose, skew, Intrinsics::inverse) so agreement is a real
// cross-check rather than a tautology.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "ctxvid/geometry/camera.hpp"
#include "ctxvid/nn/bit_matrix.hpp"

namespace ctxvid::oracle {

using geometry::CameraPose;
using geometry::Intrinsics;

inline Eigen::Matrix<double, 3, 4> projection(const Intrinsics& K, const CameraPose& p) {
  Eigen::Matrix<double, 3, 4> Rt;
  Rt.leftCols<3>() = p.rotation;
  Rt.col(3) = p.translation;
  return K.matrix() * Rt;
}

/// F from camera matrices: [e']x P' P^+, with e' the image of the first
/// camera centre in the second view.
inline Eigen::Matrix3d fundamental_from_projections(const Intrinsics& Ka, const CameraPose& a, const Intrinsics& Kb, const CameraPose& b) {
  const auto Pa = projection(Ka, a), Pb = projection(Kb, b);
  const Eigen::Matrix<double, 4, 3> pinv = Pa.transpose() * (Pa * Pa.transpose()).inverse();
  Eigen::Vector4d C;
  C.head<3>() = -a.rotation.transpose() * a.translation;
  C[3] = 1;
  const Eigen::Vector3d e = Pb * C;
  Eigen::Matrix3d ex;
  ex << 0, -e[2], e[1], e[2], 0, -e[0], -e[1], e[0], 0;
  return ex * Pb * pinv;
}

inline Eigen::Vector3d project(const Intrinsics& K, const CameraPose& p, const Eigen::Vector3d& X) {
  return projection(K, p) * X.homogeneous();
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

/// Two cameras on a sphere of radius 3-5 around the origin, both looking at a
/// jittered point near it, so a cloud around the origin is visible in both.
struct Rig {
  Intrinsics K;
  CameraPose a, b;
};

inline Rig random_rig(std::mt19937_64& rng, int size = 16) {
  std::uniform_real_distribution<double> u(-1, 1), r(3, 5);
  auto eye = [&] {
    Eigen::Vector3d d(u(rng), u(rng), u(rng));
    while (d.norm() < 0.2) d = {u(rng), u(rng), u(rng)};
    return Eigen::Vector3d(d.normalized() * r(rng));
  };
  Rig rig;
  rig.K = Intrinsics::from_fov(1.2, size, size);
  const Eigen::Vector3d tgt(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng));
  const Eigen::Vector3d down = Eigen::Vector3d(u(rng), 1.0, u(rng)).normalized();
  rig.a = CameraPose::look_at(eye(), tgt, down);
  rig.b = CameraPose::look_at(eye(), tgt, down);
  return rig;
}

/// Pairwise thresholded-distance mask with the same fallback rules as the
/// library, built one (query pixel, context pixel) pair at a time.
inline BitMatrix brute_force_mask(const std::vector<CameraPose>& qs, const std::vector<CameraPose>& cs, const Intrinsics& K,
                                      std::size_t h, std::size_t w, double delta) {
  const std::size_t hw = h * w;
  BitMatrix m(qs.size() * hw, cs.size() * hw);
  for (std::size_t t = 0; t < qs.size(); ++t)
    for (std::size_t j = 0; j < cs.size(); ++j) {
      const Eigen::Vector3d ca = -qs[t].rotation.transpose() * qs[t].translation;
      const Eigen::Vector3d cb = -cs[j].rotation.transpose() * cs[j].translation;
      const bool same_centre = (ca - cb).norm() < 1e-6;
      const Eigen::Matrix3d F = fundamental_from_projections(K, qs[t], K, cs[j]);
      for (std::size_t v = 0; v < h; ++v)
        for (std::size_t u = 0; u < w; ++u) {
          const Eigen::Vector3d l = F * Eigen::Vector3d(double(u), double(v), 1);
          const double n2 = l[0] * l[0] + l[1] * l[1];
          for (std::size_t v2 = 0; v2 < h; ++v2)
            for (std::size_t u2 = 0; u2 < w; ++u2) {
              bool admit;
              if (same_centre || n2 <= 1e-18) {
                admit = true;
              } else {
                admit = std::abs(l[0] * double(u2) + l[1] * double(v2) + l[2]) / std::sqrt(n2) <= delta;
              }
              m.set(t * hw + v * w + u, j * hw + v2 * w + u2, admit);
            }
        }
    }
  for (std::size_t r = 0; r < m.rows(); ++r)
    if (m.count_row(r) == 0) m.fill_row(r, true);
  return m;
}

}  // namespace ctxvid::oracle
