#include "u2nerf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "u2nerf/data_io.hpp"

namespace u2nerf {

Ray pixel_to_ray(const Camera& camera, const Eigen::Vector2d& pixel) {
  const auto& k = camera.intrinsics;
  const Eigen::Vector2d ideal = undistort_pixel(k, pixel);
  const Eigen::Vector3d dir_cam((ideal.x() - k.cx) / k.fx, (ideal.y() - k.cy) / k.fy, 1.0);
  Ray ray;
  ray.origin = camera.pose.center();
  ray.direction = (camera.pose.rotation.transpose() * dir_cam).normalized();
  return ray;
}

std::vector<double> sample_depths(double near, double far, int count, bool stratified, Rng& rng) {
  require(count >= 1, "sample count must be at least 1");
  require(near > 0.0 && near < far, "need 0 < near < far, got near=", near, " far=", far);
  std::vector<double> depths(static_cast<size_t>(count));
  if (!stratified) {
    if (count == 1) {
      depths[0] = 0.5 * (near + far);
      return depths;
    }
    for (int j = 0; j < count; ++j) {
      depths[j] = near + (far - near) * static_cast<double>(j) / (count - 1);
    }
    depths.back() = far;
    return depths;
  }
  const double width = (far - near) / count;
  for (int j = 0; j < count; ++j) {
    depths[j] = near + width * (j + uniform(rng, 0.0, 1.0));
  }
  return depths;
}

RaySamples sample_along_ray(const Ray& ray, double near, double far, int count, bool stratified,
                            Rng& rng) {
  RaySamples samples;
  samples.depths = sample_depths(near, far, count, stratified, rng);
  samples.positions.reserve(samples.depths.size());
  for (double t : samples.depths) samples.positions.push_back(ray.at(t));
  return samples;
}

Projection project(const Eigen::Vector3d& point, const Camera& camera) {
  const auto& k = camera.intrinsics;
  const Eigen::Vector3d cam = camera.pose.to_camera(point);
  Projection out;
  out.depth = cam.z();
  out.in_front = cam.z() > kMinProjectionDepth;
  // Keep the divide finite for points on or behind the image plane.
  const double z = out.in_front ? cam.z() : std::max(std::abs(cam.z()), kMinProjectionDepth);
  const Eigen::Vector2d ideal(k.fx * cam.x() / z + k.cx, k.fy * cam.y() / z + k.cy);
  out.pixel = distort_pixel(k, ideal);
  return out;
}

bool in_image(const CameraIntrinsics& intrinsics, const Eigen::Vector2d& pixel) {
  return pixel.x() >= -0.5 && pixel.x() <= intrinsics.width - 0.5 && pixel.y() >= -0.5 &&
         pixel.y() <= intrinsics.height - 0.5;
}

double axis_angle(const Pose& a, const Pose& b) {
  const double c = std::clamp(a.optical_axis().dot(b.optical_axis()), -1.0, 1.0);
  return std::acos(c);
}

std::vector<size_t> rank_by_nearness(const Pose& target, std::span<const Pose> views,
                                     std::optional<size_t> exclude) {
  struct Entry {
    double angle;
    double distance;
    size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(views.size());
  const Eigen::Vector3d target_center = target.center();
  for (size_t i = 0; i < views.size(); ++i) {
    if (exclude && *exclude == i) continue;
    entries.push_back({axis_angle(target, views[i]), (views[i].center() - target_center).norm(), i});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.angle != b.angle) return a.angle < b.angle;
    return a.distance < b.distance;
  });
  std::vector<size_t> order;
  order.reserve(entries.size());
  for (const auto& e : entries) order.push_back(e.index);
  return order;
}

std::vector<size_t> select_source_views(const Pose& target, std::span<const Pose> views,
                                        int pool_multiplier, int count, Rng& rng,
                                        std::optional<size_t> exclude) {
  require(pool_multiplier >= 1, "pool multiplier k must be >= 1");
  require(count >= 1, "source view count N must be >= 1");
  std::vector<size_t> ranked = rank_by_nearness(target, views, exclude);
  require(static_cast<size_t>(count) <= ranked.size(), "requested ", count,
          " source views but only ", ranked.size(), " are available");
  const size_t pool = std::min(ranked.size(), static_cast<size_t>(pool_multiplier) * count);
  ranked.resize(pool);
  // Partial Fisher-Yates: the first `count` entries become a uniform draw
  // without replacement.
  for (size_t i = 0; i < static_cast<size_t>(count); ++i) {
    const auto j = static_cast<size_t>(uniform_int(rng, static_cast<int64_t>(i),
                                                   static_cast<int64_t>(pool) - 1));
    std::swap(ranked[i], ranked[j]);
  }
  ranked.resize(static_cast<size_t>(count));
  return ranked;
}

}  // namespace u2nerf
