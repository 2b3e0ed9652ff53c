#include <filesystem>
#include <fstream>

#include "test_support.hpp"
#include "u2nerf/data_io.hpp"
#include "u2nerf/geometry.hpp"
#include "u2nerf/image_io.hpp"

using namespace u2nerf;
using u2nerf::testing::f64;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("u2nerf_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

const char* kCameras =
    "# Camera list\n"
    "1 SIMPLE_RADIAL 640 480 500 320 240 0.01\n";

}  // namespace

TEST(ParseColmap, IdentityQuaternion) {
  const auto dir = scratch("colmap_identity");
  write_text(dir / "cameras.txt", kCameras);
  write_text(dir / "images.txt", "# header\n1 1 0 0 0 0 0 0 1 a.png\n\n");
  const auto views = parse_colmap(dir / "cameras.txt", dir / "images.txt");
  ASSERT_EQ(views.size(), 1u);
  EXPECT_TRUE(views[0].camera.pose.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  EXPECT_EQ(views[0].camera.pose.translation.norm(), 0.0);
  EXPECT_EQ(views[0].image_name, "a.png");
}

TEST(ParseColmap, SimpleRadialIntrinsics) {
  const auto dir = scratch("colmap_intr");
  write_text(dir / "cameras.txt", kCameras);
  write_text(dir / "images.txt", "1 1 0 0 0 0 0 0 1 a.png\n\n");
  const auto k = parse_colmap(dir / "cameras.txt", dir / "images.txt")[0].camera.intrinsics;
  EXPECT_EQ(k.fx, 500);
  EXPECT_EQ(k.fy, 500);
  EXPECT_EQ(k.cx, 320);
  EXPECT_EQ(k.cy, 240);
  EXPECT_EQ(k.k1, 0.01);
  EXPECT_EQ(k.width, 640);
  EXPECT_EQ(k.height, 480);
}

TEST(ParseColmap, QuarterTurnAboutY) {
  const auto dir = scratch("colmap_quat");
  write_text(dir / "cameras.txt", kCameras);
  write_text(dir / "images.txt", "1 0.7071 0 0.7071 0 1 2 3 1 a.png\n\n");
  const auto r = parse_colmap(dir / "cameras.txt", dir / "images.txt")[0].camera.pose.rotation;
  // Hamilton quaternion -> matrix, evaluated by hand for (w, 0, y, 0) after
  // normalisation.
  const double n = std::sqrt(2 * 0.7071 * 0.7071);
  const double w = 0.7071 / n, y = 0.7071 / n;
  Eigen::Matrix3d expected;
  expected << 1 - 2 * y * y, 0, 2 * w * y, 0, 1, 0, -2 * w * y, 0, 1 - 2 * y * y;
  EXPECT_LT((r - expected).norm(), 1e-9);
  EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).norm(), 1e-6);
  EXPECT_NEAR(r(0, 2), 1.0, 1e-6);  // 90 degrees about +y sends z to x
}

TEST(ParseColmap, Errors) {
  const auto dir = scratch("colmap_errors");
  write_text(dir / "images.txt", "1 1 0 0 0 0 0 0 1 a.png\n\n");
  write_text(dir / "cameras.txt", "1 OPENCV_FISHEYE 640 480 1 2 3 4 5 6 7 8\n");
  try {
    parse_colmap(dir / "cameras.txt", dir / "images.txt");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("OPENCV_FISHEYE"), std::string::npos);
  }
  write_text(dir / "cameras.txt", std::string(kCameras) + "2 PINHOLE 640 480 500\n");
  try {
    parse_colmap(dir / "cameras.txt", dir / "images.txt");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("cameras.txt:3:"), std::string::npos) << e.what();
  }
  write_text(dir / "cameras.txt", kCameras);
  write_text(dir / "images.txt", "1 1.01 0 0 0 0 0 0 1 a.png\n\n");
  EXPECT_THROW(parse_colmap(dir / "cameras.txt", dir / "images.txt"), Error);
}

TEST(ParseColmap, OrderedByNameAndRoundTrips) {
  Rng rng(5);
  std::vector<ColmapView> views;
  for (int i = 0; i < 4; ++i) {
    ColmapView v;
    v.camera.intrinsics = {480.5 + i, 480.5 + i, 320.25, 239.75, 0.0123 * i, 640, 480};
    const Eigen::Vector3d axis =
        Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)).normalized();
    v.camera.pose.rotation = Eigen::AngleAxisd(uniform(rng, -3, 3), axis).toRotationMatrix();
    v.camera.pose.translation = {uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5)};
    v.image_name = std::string(1, static_cast<char>('d' - i)) + ".png";
    v.camera_id = v.image_id = i + 1;
    views.push_back(v);
  }
  const auto dir = scratch("colmap_roundtrip");
  write_colmap(views, dir / "cameras.txt", dir / "images.txt");
  const auto back = parse_colmap(dir / "cameras.txt", dir / "images.txt");
  ASSERT_EQ(back.size(), 4u);
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].image_name, std::string(1, static_cast<char>('a' + i)) + ".png");
    const auto& orig = views[3 - i].camera;
    const auto& got = back[i].camera;
    EXPECT_LT((orig.pose.rotation - got.pose.rotation).norm(), 1e-9);
    EXPECT_LT((orig.pose.translation - got.pose.translation).norm(), 1e-9);
    EXPECT_NEAR(orig.intrinsics.fx, got.intrinsics.fx, 1e-9);
    EXPECT_NEAR(orig.intrinsics.k1, got.intrinsics.k1, 1e-12);
  }
}

TEST(Distortion, ZeroCoefficientIsIdentity) {
  const CameraIntrinsics k{500, 500, 320, 240, 0.0, 640, 480};
  const Eigen::Vector2d p(123.4, 56.7);
  EXPECT_EQ(undistort_pixel(k, p), p);
}

TEST(Distortion, PrincipalPointFixed) {
  const CameraIntrinsics k{500, 500, 320, 240, 0.05, 640, 480};
  EXPECT_LT((undistort_pixel(k, {320, 240}) - Eigen::Vector2d(320, 240)).norm(), 1e-12);
}

TEST(Distortion, InvertsForwardModel) {
  const CameraIntrinsics k{500, 500, 320, 240, 0.05, 640, 480};
  const Eigen::Vector2d ideal(400, 300);
  const auto observed = distort_pixel(k, ideal);
  EXPECT_GT((observed - ideal).norm(), 1e-3);
  EXPECT_LT((undistort_pixel(k, observed) - ideal).norm(), 1e-6);
}

TEST(Synthesize, ZeroDepthIsClean) {
  Rng rng(1);
  const auto clean = u2nerf::testing::uniform_tensor({4, 5, 3}, 0, 1, rng);
  const auto out = synthesize_underwater(clean, torch::zeros({4, 5}, f64()), ToySceneConfig::default_degradation());
  EXPECT_TRUE(torch::equal(out, clean));
}

TEST(Synthesize, InfiniteDepthIsAmbient) {
  Rng rng(1);
  const auto clean = u2nerf::testing::uniform_tensor({3, 3, 3}, 0, 1, rng);
  const auto params = ToySceneConfig::default_degradation();
  const auto out = synthesize_underwater(clean, torch::full({3, 3}, 1e6, f64()), params);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(out.select(2, c).max().item<double>(), params.ambient[c], 1e-12);
    EXPECT_NEAR(out.select(2, c).min().item<double>(), params.ambient[c], 1e-12);
  }
}

TEST(Synthesize, ScalarPixel) {
  DegradationParams p;
  p.beta_d = {0.2, 0.1, 0.05};
  p.beta_b = {0.3, 0.15, 0.1};
  p.ambient = {0.1, 0.5, 0.6};
  const auto out = synthesize_underwater(torch::full({1, 1, 3}, 0.8, f64()), torch::ones({1, 1}, f64()), p);
  for (int c = 0; c < 3; ++c) {
    const double expected = 0.8 * std::exp(-p.beta_d[c]) + (1 - std::exp(-p.beta_b[c])) * p.ambient[c];
    EXPECT_NEAR(out[0][0][c].item<double>(), expected, 1e-9);
  }
}

TEST(Synthesize, ShapeMismatch) {
  EXPECT_THROW(synthesize_underwater(torch::zeros({4, 4, 3}, f64()), torch::zeros({4, 5}, f64()),
                                     ToySceneConfig::default_degradation()),
               Error);
}

TEST(Synthesize, MonotoneTowardAmbientForEqualCoefficients) {
  // With beta_D == beta_B, I - A = (J - A) exp(-beta z) shrinks with depth.
  DegradationParams p;
  p.beta_d = p.beta_b = {0.4, 0.2, 0.1};
  p.ambient = {0.1, 0.45, 0.55};
  Rng rng(7);
  const auto clean = u2nerf::testing::uniform_tensor({6, 6, 3}, 0, 1, rng);
  const auto a = torch::tensor({p.ambient[0], p.ambient[1], p.ambient[2]}, f64());
  torch::Tensor prev;
  for (double z = 0.0; z <= 10.0; z += 0.5) {
    const auto dev = (synthesize_underwater(clean, torch::full({6, 6}, z, f64()), p) - a).abs();
    if (prev.defined()) EXPECT_TRUE((dev <= prev + 1e-15).all().item<bool>()) << "z = " << z;
    prev = dev;
  }
}

TEST(ToyScene, ZeroDegradationMatchesClean) {
  ToySceneConfig cfg;
  cfg.views = 3;
  cfg.size = 16;
  cfg.degradation = DegradationParams{};
  const auto scene = make_toy_scene(cfg);
  for (size_t v = 0; v < 3; ++v) EXPECT_TRUE(torch::equal(scene.dataset.images[v], scene.clean[v]));
}

TEST(ToyScene, DefaultSceneIsValid) {
  const auto scene = make_toy_scene(ToySceneConfig{});
  EXPECT_EQ(scene.dataset.size(), 8u);
  EXPECT_NO_THROW(scene.dataset.validate());
  for (const auto& img : scene.dataset.images) {
    EXPECT_EQ(img.sizes(), (std::vector<int64_t>{64, 64, 3}));
    EXPECT_GE(img.min().item<double>(), 0.0);
    EXPECT_LE(img.max().item<double>(), 1.0);
  }
}

TEST(ToyScene, CenterDepthMatchesRayPlaneIntersection) {
  ToySceneConfig cfg;
  cfg.size = 33;  // odd: the principal point is a pixel center
  const auto scene = make_toy_scene(cfg);
  for (size_t v = 0; v < scene.dataset.size(); ++v) {
    const auto& cam = scene.dataset.cameras[v];
    const auto ray = pixel_to_ray(cam, {16, 16});
    const double t = -ray.origin.z() / ray.direction.z();
    EXPECT_NEAR(scene.depth[v][16][16].item<double>(), t, 1e-6);
    EXPECT_NEAR(t, cfg.arc_radius, 1e-6);  // cameras look at the plane origin
  }
}

TEST(ToyScene, NeedsTwoViews) {
  ToySceneConfig cfg;
  cfg.views = 1;
  EXPECT_THROW(make_toy_scene(cfg), Error);
}

TEST(SceneFiles, WriteThenLoad) {
  ToySceneConfig cfg;
  cfg.views = 3;
  cfg.size = 32;
  const auto scene = make_toy_scene(cfg);
  const auto dir = scratch("scene_io");
  write_scene(scene.dataset, dir);
  const auto back = load_scene(dir);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_NEAR(back.near, scene.dataset.near, 1e-12);
  EXPECT_NEAR(back.far, scene.dataset.far, 1e-12);
  EXPECT_EQ(back.split, SceneSplit::kSynthetic);
  for (size_t v = 0; v < 3; ++v) {
    EXPECT_EQ(back.view_ids[v], scene.dataset.view_ids[v]);
    // 16-bit PNG quantisation.
    EXPECT_LT((back.images[v] - scene.dataset.images[v]).abs().max().item<double>(), 1.0 / 65535);
    EXPECT_LT((back.cameras[v].pose.rotation - scene.dataset.cameras[v].pose.rotation).norm(), 1e-9);
  }
}

TEST(SceneFiles, DefaultBoundsFromCentroid) {
  ToySceneConfig cfg;
  cfg.views = 4;
  cfg.size = 16;
  const auto scene = make_toy_scene(cfg);
  const auto dir = scratch("scene_bounds");
  write_scene(scene.dataset, dir);
  write_text(dir / "scene.cfg", "split = hard\n");
  const auto back = load_scene(dir);
  // Every camera looks at the origin from radius 3.
  EXPECT_NEAR(back.near, 0.05 * 3.0, 1e-6);
  EXPECT_NEAR(back.far, 5.0 * 3.0, 1e-6);
  EXPECT_EQ(back.split, SceneSplit::kHard);
}

TEST(SceneFiles, RejectsUnknownImageFormat) {
  const auto dir = scratch("bad_image");
  write_text(dir / "x.bmp", "BM");
  EXPECT_THROW(read_image(dir / "x.bmp"), Error);
}

TEST(SceneDataset, Invariants) {
  auto ds = make_toy_scene(ToySceneConfig{.views = 2, .size = 8}).dataset;
  EXPECT_NO_THROW(ds.validate());
  auto bad = ds;
  bad.near = bad.far;
  EXPECT_THROW(bad.validate(), Error);
  bad = ds;
  bad.images[0] = bad.images[0] + 2.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = ds;
  bad.view_ids.pop_back();
  EXPECT_THROW(bad.validate(), Error);
}
