#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "u2nerf/camera.hpp"
#include "u2nerf/common.hpp"

namespace u2nerf {

// Pixel convention: integer coordinates address pixel centers, so pixel
// (u, v) covers [u - 0.5, u + 0.5) x [v - 0.5, v + 0.5).

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();

  Eigen::Vector3d at(double t) const { return origin + t * direction; }
};

struct RaySamples {
  std::vector<double> depths;
  std::vector<Eigen::Vector3d> positions;
};

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;
  bool in_front = false;
};

/// Camera-frame depths at or below this are treated as behind the camera.
inline constexpr double kMinProjectionDepth = 1e-8;

Ray pixel_to_ray(const Camera& camera, const Eigen::Vector2d& pixel);

/// Deterministic mode: linspace over [near, far] including both ends.
/// Stratified mode: one uniform draw per equal-width bin.
RaySamples sample_along_ray(const Ray& ray, double near, double far, int count, bool stratified,
                            Rng& rng);

/// Depths only; same rules as sample_along_ray.
std::vector<double> sample_depths(double near, double far, int count, bool stratified, Rng& rng);

Projection project(const Eigen::Vector3d& point, const Camera& camera);

/// True when the pixel lies inside the image footprint.
bool in_image(const CameraIntrinsics& intrinsics, const Eigen::Vector2d& pixel);

/// Angle between optical axes in radians.
double axis_angle(const Pose& a, const Pose& b);

/// Indices of `views` ordered from nearest to farthest: angle between
/// optical axes first, camera-center distance to break ties.
std::vector<size_t> rank_by_nearness(const Pose& target, std::span<const Pose> views,
                                     std::optional<size_t> exclude = std::nullopt);

/// Pool of the k*N nearest views, then N uniform draws without replacement.
/// When k*N exceeds the available views the pool is every view.
std::vector<size_t> select_source_views(const Pose& target, std::span<const Pose> views,
                                        int pool_multiplier, int count, Rng& rng,
                                        std::optional<size_t> exclude = std::nullopt);

}  // namespace u2nerf
