#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace u2nerf {

/// Pinhole intrinsics with a single radial distortion coefficient
/// (COLMAP SIMPLE_RADIAL when fx == fy).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double k1 = 0.0;
  int width = 1;
  int height = 1;

  /// Throws when focal lengths, principal point or size are out of range.
  void validate() const;
};

/// Rigid world -> camera transform: x_cam = rotation * x_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Camera center in world coordinates.
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  /// Unit optical axis (camera +z) in world coordinates.
  Eigen::Vector3d optical_axis() const { return rotation.row(2).transpose(); }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }

  /// Throws unless the rotation is orthonormal with det +1 (tol 1e-6) and
  /// the camera center is finite.
  void validate() const;

  /// Camera at `center` looking at `target`; image y axis points along
  /// world `down` projected onto the image plane.
  static Pose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& down = Eigen::Vector3d::UnitY());
};

struct Camera {
  CameraIntrinsics intrinsics;
  Pose pose;
};

}  // namespace u2nerf
