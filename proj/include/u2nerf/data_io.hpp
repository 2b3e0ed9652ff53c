#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "u2nerf/camera.hpp"
#include "u2nerf/common.hpp"

namespace u2nerf {

enum class SceneSplit { kEasy, kMedium, kHard, kSynthetic };

std::string to_string(SceneSplit split);
SceneSplit parse_split(const std::string& text);

/// Multi-view posed images. Images are H x W x 3 tensors in [0, 1].
struct SceneDataset {
  std::vector<torch::Tensor> images;
  std::vector<Camera> cameras;
  std::vector<std::string> view_ids;
  double near = 0.0;
  double far = 0.0;
  SceneSplit split = SceneSplit::kSynthetic;

  size_t size() const { return images.size(); }

  /// Throws on any violated dataset invariant.
  void validate() const;
};

/// Per-channel coefficients of the exponential underwater forward model.
struct DegradationParams {
  std::array<double, 3> beta_d{0.0, 0.0, 0.0};
  std::array<double, 3> beta_b{0.0, 0.0, 0.0};
  std::array<double, 3> ambient{0.0, 0.0, 0.0};

  void validate() const;
};

// ---------------------------------------------------------------------------
// COLMAP text format

struct ColmapView {
  Camera camera;
  std::string image_name;
  int camera_id = 0;
  int image_id = 0;
};

/// Reads cameras.txt / images.txt. Entries are ordered by image name.
std::vector<ColmapView> parse_colmap(const std::filesystem::path& cameras_path,
                                     const std::filesystem::path& images_path);

/// Writes cameras.txt / images.txt (one SIMPLE_RADIAL or RADIAL-free PINHOLE
/// camera per view; an empty points line follows each image line). Values are
/// printed with 17 significant digits so a re-parse is lossless.
void write_colmap(const std::vector<ColmapView>& views,
                  const std::filesystem::path& cameras_path,
                  const std::filesystem::path& images_path);

Eigen::Matrix3d quaternion_to_rotation(double qw, double qx, double qy, double qz);

// ---------------------------------------------------------------------------
// Radial distortion

/// Applies SIMPLE_RADIAL distortion to an ideal pinhole pixel.
Eigen::Vector2d distort_pixel(const CameraIntrinsics& intrinsics, const Eigen::Vector2d& ideal);

/// Inverts distort_pixel by fixed-point iteration (residual < 1e-8 px,
/// at most 50 iterations).
Eigen::Vector2d undistort_pixel(const CameraIntrinsics& intrinsics,
                                const Eigen::Vector2d& observed);

// ---------------------------------------------------------------------------
// Underwater forward model

/// I = J exp(-beta_d z) + (1 - exp(-beta_b z)) A, clamped to [0, 1].
/// `clean` is H x W x 3, `depth` is H x W.
torch::Tensor synthesize_underwater(const torch::Tensor& clean, const torch::Tensor& depth,
                                    const DegradationParams& params);

/// Exact transmission maps exp(-beta z) for a depth map, H x W x 3.
torch::Tensor exponential_transmission(const torch::Tensor& depth,
                                       const std::array<double, 3>& beta);

// ---------------------------------------------------------------------------
// Procedural toy scene

struct ToySceneConfig {
  int views = 8;
  int size = 64;
  uint64_t seed = 0;
  /// Cameras sit on an arc of this radius around the plane center.
  double arc_radius = 3.0;
  double arc_degrees = 40.0;
  /// Tilt of the arc plane above the textured plane normal (degrees).
  double elevation_degrees = 20.0;
  double focal_scale = 1.0;
  DegradationParams degradation = default_degradation();

  static DegradationParams default_degradation();
};

/// Degraded dataset plus everything needed to check a perfect decomposition.
struct ToyScene {
  SceneDataset dataset;
  std::vector<torch::Tensor> clean;  // J per view, H x W x 3
  std::vector<torch::Tensor> depth;  // range along each pixel ray, H x W
  DegradationParams params;

  torch::Tensor direct_transmission(size_t view) const;
  torch::Tensor backscatter_transmission(size_t view) const;
  /// Spatially constant ambient map, H x W x 3.
  torch::Tensor ambient_map(size_t view) const;
};

/// Renders a procedurally textured plane (z = 0) from poses on an arc and
/// applies synthesize_underwater. Images are float64.
ToyScene make_toy_scene(const ToySceneConfig& config);

/// Texture of the toy plane at world (x, y); values in [0.05, 0.95].
Eigen::Vector3d toy_texture(uint64_t seed, double x, double y);

// ---------------------------------------------------------------------------
// On-disk scenes

/// Flat `key = value` scene configuration. Known keys: near, far, split,
/// image_dir, colmap_dir.
struct SceneConfig {
  std::optional<double> near;
  std::optional<double> far;
  SceneSplit split = SceneSplit::kMedium;
  std::string image_dir = "images";
  std::string colmap_dir = "colmap";

  static SceneConfig read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

/// Parses `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Loads DIR/scene.cfg (optional), DIR/<colmap_dir>/{cameras,images}.txt and
/// the referenced images. Missing near/far default to (0.05, 5) x the median
/// distance from the cameras to the scene centroid.
SceneDataset load_scene(const std::filesystem::path& dir);

/// Writes images (PNG), COLMAP poses and scene.cfg so load_scene reads the
/// dataset back.
void write_scene(const SceneDataset& dataset, const std::filesystem::path& dir);

/// Least-squares intersection of the optical axes; falls back to the mean
/// camera center one unit ahead when axes are near parallel.
Eigen::Vector3d scene_centroid(const std::vector<Camera>& cameras);

}  // namespace u2nerf
