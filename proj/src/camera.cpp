#include "u2nerf/camera.hpp"

#include <cmath>

#include "u2nerf/common.hpp"

namespace u2nerf {

void CameraIntrinsics::validate() const {
  require(width >= 1 && height >= 1, "image size must be positive, got ", width, "x", height);
  require(fx > 0.0 && fy > 0.0, "focal lengths must be positive, got fx=", fx, " fy=", fy);
  require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height, "principal point (", cx, ", ", cy,
          ") outside ", width, "x", height, " image");
  require(std::isfinite(k1), "distortion coefficient must be finite");
}

void Pose::validate() const {
  require(rotation.allFinite() && translation.allFinite(), "pose has non-finite entries");
  const double orth_err = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                              .cwiseAbs()
                              .maxCoeff();
  require(orth_err <= 1e-6, "rotation is not orthonormal (max |R^T R - I| = ", orth_err, ")");
  require(std::abs(rotation.determinant() - 1.0) <= 1e-6, "rotation determinant is ",
          rotation.determinant(), ", expected +1");
  require(center().allFinite(), "camera center is not finite");
}

Pose Pose::look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& down) {
  const Eigen::Vector3d forward = (target - center).normalized();
  Eigen::Vector3d right = down.cross(forward);
  require(right.norm() > 1e-9, "look_at: down vector is parallel to the viewing direction");
  right.normalize();
  const Eigen::Vector3d image_down = forward.cross(right);

  Pose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = image_down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * center;
  return pose;
}

}  // namespace u2nerf
