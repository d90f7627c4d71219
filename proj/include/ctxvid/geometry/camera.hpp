#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid::geometry {

class InvalidIntrinsics : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidPose : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Pinhole intrinsics in pixels. Pixel (u, v) denotes the sample at integer
/// coordinates: column u, row v.
struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw InvalidIntrinsics("focal lengths must be positive (fx=" + std::to_string(fx) + ", fy=" + std::to_string(fy) + ")");
    if (width < 1 || height < 1) throw InvalidIntrinsics("image size must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw InvalidIntrinsics("principal point (" + std::to_string(cx) + ", " + std::to_string(cy) + ") outside image");
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d K;
    K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return K;
  }

  Eigen::Matrix3d inverse() const {
    if (fx == 0 || fy == 0) throw InvalidIntrinsics("singular intrinsics");
    Eigen::Matrix3d Ki;
    Ki << 1 / fx, 0, -cx / fx, 0, 1 / fy, -cy / fy, 0, 0, 1;
    return Ki;
  }

  /// Intrinsics of the grid obtained by averaging non-overlapping f x f
  /// pixel blocks: grid sample (u, v) sits at the block centre.
  Intrinsics downsampled(int factor) const {
    if (factor < 1 || width % factor || height % factor) throw InvalidIntrinsics("downsample factor must divide image size");
    const double off = (factor - 1) / 2.0;
    return Intrinsics{fx / factor, fy / factor, (cx - off) / factor, (cy - off) / factor, width / factor, height / factor};
  }

  /// Symmetric pinhole with the given horizontal field of view (radians),
  /// principal point at the image centre.
  static Intrinsics from_fov(double fov_x, int width, int height) {
    const double f = 0.5 * width / std::tan(0.5 * fov_x);
    return Intrinsics{f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
  }
};

/// World-to-camera rigid transform x_cam = R x_world + t.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static CameraPose identity() { return {}; }

  /// Throws unless R is orthonormal with det +1 within `tol`.
  void validate(double tol = 1e-9) const {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= tol)) throw InvalidPose("rotation not orthonormal (max |RtR - I| = " + std::to_string(ortho) + ")");
    const double det = rotation.determinant();
    if (!(std::abs(det - 1.0) <= tol)) throw InvalidPose("rotation determinant " + std::to_string(det) + " != 1");
    if (!translation.allFinite()) throw InvalidPose("translation not finite");
  }

  /// Camera centre in world coordinates, -R^T t.
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  CameraPose inverse() const { return {rotation.transpose(), -rotation.transpose() * translation}; }

  /// (this after other): first apply `other`, then this transform.
  CameraPose operator*(const CameraPose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Pose whose camera sits at `eye` looking at `target` with image-down
  /// axis roughly along `down` (OpenCV convention: x right, y down, z forward).
  static CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                            const Eigen::Vector3d& down = Eigen::Vector3d(0, 1, 0)) {
    const Eigen::Vector3d z = (target - eye).normalized();
    const Eigen::Vector3d x = down.cross(z).normalized();
    const Eigen::Vector3d y = z.cross(x);
    CameraPose p;
    p.rotation.row(0) = x.transpose();
    p.rotation.row(1) = y.transpose();
    p.rotation.row(2) = z.transpose();
    p.translation = -p.rotation * eye;
    return p;
  }
};

/// Poses re-expressed relative to the first one: the first becomes identity.
inline std::vector<CameraPose> rebase_to_first(const std::vector<CameraPose>& poses) {
  if (poses.empty()) return {};
  const CameraPose inv0 = poses.front().inverse();
  std::vector<CameraPose> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(p * inv0);
  out.front() = CameraPose::identity();
  return out;
}

/// Skew-symmetric matrix with skew(a) b = a x b.
inline Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d m;
  m << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return m;
}

}  // namespace ctxvid::geometry
