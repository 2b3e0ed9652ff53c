#include "u2nerf/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "u2nerf/geometry.hpp"
#include "u2nerf/image_io.hpp"

namespace u2nerf {
namespace fs = std::filesystem;

std::string to_string(SceneSplit split) {
  switch (split) {
    case SceneSplit::kEasy:
      return "easy";
    case SceneSplit::kMedium:
      return "medium";
    case SceneSplit::kHard:
      return "hard";
    case SceneSplit::kSynthetic:
      return "synthetic";
  }
  return "synthetic";
}

SceneSplit parse_split(const std::string& text) {
  if (text == "easy") return SceneSplit::kEasy;
  if (text == "medium") return SceneSplit::kMedium;
  if (text == "hard") return SceneSplit::kHard;
  if (text == "synthetic") return SceneSplit::kSynthetic;
  fail("unknown scene split '", text, "' (expected easy, medium, hard or synthetic)");
}

void SceneDataset::validate() const {
  require(images.size() >= 2, "a scene needs at least 2 views, got ", images.size());
  require(images.size() == cameras.size() && images.size() == view_ids.size(),
          "images, cameras and view ids differ in length");
  require(near > 0.0 && near < far, "scene bounds must satisfy 0 < near < far, got ", near, ", ",
          far);
  for (size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    const auto& k = cameras[i].intrinsics;
    k.validate();
    cameras[i].pose.validate();
    require(img.dim() == 3 && img.size(2) == 3, "view ", view_ids[i], " is not H x W x 3");
    require(img.size(0) == k.height && img.size(1) == k.width, "view ", view_ids[i],
            " size does not match its intrinsics");
    require(all_finite(img), "view ", view_ids[i], " has non-finite pixels");
    require(img.min().item<double>() >= 0.0 && img.max().item<double>() <= 1.0, "view ",
            view_ids[i], " has pixels outside [0, 1]");
  }
}

void DegradationParams::validate() const {
  for (int c = 0; c < 3; ++c) {
    require(std::isfinite(beta_d[c]) && beta_d[c] >= 0.0, "beta_D must be finite and >= 0");
    require(std::isfinite(beta_b[c]) && beta_b[c] >= 0.0, "beta_B must be finite and >= 0");
    require(std::isfinite(ambient[c]) && ambient[c] >= 0.0 && ambient[c] <= 1.0,
            "ambient light must lie in [0, 1]");
  }
}

// ---------------------------------------------------------------------------
// COLMAP

Eigen::Matrix3d quaternion_to_rotation(double qw, double qx, double qy, double qz) {
  const double norm = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
  require(norm > 0.0, "zero quaternion");
  qw /= norm;
  qx /= norm;
  qy /= norm;
  qz /= norm;
  Eigen::Matrix3d r;
  r << 1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy),
      2 * (qx * qy + qw * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qw * qx),
      2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy);
  return r;
}

namespace {

struct NumberedLine {
  int number;
  std::string text;
};

std::vector<NumberedLine> read_lines(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open ", path.string());
  std::vector<NumberedLine> lines;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') continue;
    lines.push_back({number, line});
  }
  return lines;
}

bool is_blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double to_double(const std::string& tok, const fs::path& path, int line) {
  try {
    size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(path.filename().string(), ":", line, ": malformed number '", tok, "'");
  }
}

int to_int(const std::string& tok, const fs::path& path, int line) {
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(path.filename().string(), ":", line, ": malformed integer '", tok, "'");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

Eigen::Vector4d rotation_to_quaternion(const Eigen::Matrix3d& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

}  // namespace

std::vector<ColmapView> parse_colmap(const fs::path& cameras_path, const fs::path& images_path) {
  std::map<int, CameraIntrinsics> intrinsics;
  for (const auto& [number, text] : read_lines(cameras_path)) {
    if (is_blank(text)) continue;
    const auto tok = split_tokens(text);
    const auto where = [&] { return cameras_path.filename().string() + ":" + std::to_string(number); };
    require(tok.size() >= 4, where(), ": malformed camera line (expected CAM_ID MODEL W H PARAMS...)");
    const int id = to_int(tok[0], cameras_path, number);
    const std::string& model = tok[1];
    CameraIntrinsics k;
    k.width = to_int(tok[2], cameras_path, number);
    k.height = to_int(tok[3], cameras_path, number);
    std::vector<double> params;
    for (size_t i = 4; i < tok.size(); ++i) params.push_back(to_double(tok[i], cameras_path, number));
    if (model == "SIMPLE_RADIAL") {
      require(params.size() == 4, where(), ": SIMPLE_RADIAL expects 4 params (f cx cy k), got ",
              params.size());
      k.fx = k.fy = params[0];
      k.cx = params[1];
      k.cy = params[2];
      k.k1 = params[3];
    } else if (model == "SIMPLE_PINHOLE") {
      require(params.size() == 3, where(), ": SIMPLE_PINHOLE expects 3 params, got ", params.size());
      k.fx = k.fy = params[0];
      k.cx = params[1];
      k.cy = params[2];
    } else if (model == "PINHOLE") {
      require(params.size() == 4, where(), ": PINHOLE expects 4 params, got ", params.size());
      k.fx = params[0];
      k.fy = params[1];
      k.cx = params[2];
      k.cy = params[3];
    } else {
      fail(where(), ": unsupported camera model ", model);
    }
    k.validate();
    intrinsics[id] = k;
  }

  const auto lines = read_lines(images_path);
  std::vector<ColmapView> views;
  size_t i = 0;
  while (i < lines.size()) {
    const auto& [number, text] = lines[i];
    if (is_blank(text)) {
      ++i;
      continue;
    }
    const auto where = images_path.filename().string() + ":" + std::to_string(number);
    const auto tok = split_tokens(text);
    require(tok.size() >= 10, where,
            ": malformed image line (expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME)");
    ColmapView view;
    view.image_id = to_int(tok[0], images_path, number);
    double q[4];
    for (int j = 0; j < 4; ++j) q[j] = to_double(tok[1 + j], images_path, number);
    const double qnorm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    require(std::abs(qnorm - 1.0) <= 1e-3, where, ": quaternion norm ", qnorm,
            " differs from 1 by more than 1e-3");
    view.camera.pose.rotation = quaternion_to_rotation(q[0], q[1], q[2], q[3]);
    for (int j = 0; j < 3; ++j) {
      view.camera.pose.translation[j] = to_double(tok[5 + j], images_path, number);
    }
    view.camera_id = to_int(tok[8], images_path, number);
    const auto cam = intrinsics.find(view.camera_id);
    require(cam != intrinsics.end(), where, ": unknown camera id ", view.camera_id);
    view.camera.intrinsics = cam->second;
    // Names may contain spaces; everything after the camera id is the name.
    std::istringstream is(text);
    std::string skip;
    for (int j = 0; j < 9; ++j) is >> skip;
    std::getline(is >> std::ws, view.image_name);
    while (!view.image_name.empty() && std::isspace(static_cast<unsigned char>(view.image_name.back()))) {
      view.image_name.pop_back();
    }
    views.push_back(std::move(view));
    i += 2;  // the POINTS2D line (possibly empty) follows every image line
  }
  std::stable_sort(views.begin(), views.end(),
                   [](const ColmapView& a, const ColmapView& b) { return a.image_name < b.image_name; });
  return views;
}

void write_colmap(const std::vector<ColmapView>& views, const fs::path& cameras_path,
                  const fs::path& images_path) {
  std::ofstream cams(cameras_path);
  std::ofstream imgs(images_path);
  require(cams.good() && imgs.good(), "cannot write COLMAP files next to ", cameras_path.string());
  cams << "# Camera list with one line of data per camera:\n"
       << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
       << "# Number of cameras: " << views.size() << "\n";
  imgs << "# Image list with two lines of data per image:\n"
       << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
       << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
       << "# Number of images: " << views.size() << "\n";
  for (size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const auto& k = v.camera.intrinsics;
    const int cam_id = static_cast<int>(i) + 1;
    cams << cam_id << ' ';
    if (k.fx == k.fy) {
      cams << "SIMPLE_RADIAL " << k.width << ' ' << k.height << ' ' << format_double(k.fx) << ' '
           << format_double(k.cx) << ' ' << format_double(k.cy) << ' ' << format_double(k.k1);
    } else {
      require(k.k1 == 0.0, "cannot write fx != fy with radial distortion in COLMAP text");
      cams << "PINHOLE " << k.width << ' ' << k.height << ' ' << format_double(k.fx) << ' '
           << format_double(k.fy) << ' ' << format_double(k.cx) << ' ' << format_double(k.cy);
    }
    cams << '\n';
    const Eigen::Vector4d q = rotation_to_quaternion(v.camera.pose.rotation);
    const auto& t = v.camera.pose.translation;
    imgs << (v.image_id > 0 ? v.image_id : cam_id) << ' ' << format_double(q[0]) << ' '
         << format_double(q[1]) << ' ' << format_double(q[2]) << ' ' << format_double(q[3]) << ' '
         << format_double(t.x()) << ' ' << format_double(t.y()) << ' ' << format_double(t.z())
         << ' ' << cam_id << ' ' << v.image_name << "\n\n";
  }
}

// ---------------------------------------------------------------------------
// Distortion

Eigen::Vector2d distort_pixel(const CameraIntrinsics& k, const Eigen::Vector2d& ideal) {
  if (k.k1 == 0.0) return ideal;
  const double x = (ideal.x() - k.cx) / k.fx;
  const double y = (ideal.y() - k.cy) / k.fy;
  const double scale = 1.0 + k.k1 * (x * x + y * y);
  return {k.fx * x * scale + k.cx, k.fy * y * scale + k.cy};
}

Eigen::Vector2d undistort_pixel(const CameraIntrinsics& k, const Eigen::Vector2d& observed) {
  if (k.k1 == 0.0) return observed;
  const double xd = (observed.x() - k.cx) / k.fx;
  const double yd = (observed.y() - k.cy) / k.fy;
  double x = xd;
  double y = yd;
  for (int iter = 0; iter < 50; ++iter) {
    const double scale = 1.0 + k.k1 * (x * x + y * y);
    const double rx = k.fx * (x * scale - xd);
    const double ry = k.fy * (y * scale - yd);
    if (std::hypot(rx, ry) < 1e-8) return {k.fx * x + k.cx, k.fy * y + k.cy};
    require(std::abs(scale) > 1e-12, "undistortion diverged (pathological distortion k1=", k.k1, ")");
    x = xd / scale;
    y = yd / scale;
  }
  fail("undistortion of pixel (", observed.x(), ", ", observed.y(),
       ") did not converge in 50 iterations (k1=", k.k1, ")");
}

// ---------------------------------------------------------------------------
// Forward model

torch::Tensor exponential_transmission(const torch::Tensor& depth, const std::array<double, 3>& beta) {
  const auto beta_t = torch::tensor({beta[0], beta[1], beta[2]}, depth.options());
  return torch::exp(-depth.unsqueeze(-1) * beta_t);
}

torch::Tensor synthesize_underwater(const torch::Tensor& clean, const torch::Tensor& depth,
                                    const DegradationParams& params) {
  params.validate();
  require(clean.dim() == 3 && clean.size(2) == 3, "clean image must be H x W x 3");
  require(depth.dim() == 2 && depth.size(0) == clean.size(0) && depth.size(1) == clean.size(1),
          "depth map shape ", depth.sizes(), " does not match image ", clean.sizes());
  require(depth.min().item<double>() >= 0.0, "depth must be non-negative");
  const auto d = depth.to(clean.scalar_type());
  const auto t_direct = exponential_transmission(d, params.beta_d);
  const auto t_back = exponential_transmission(d, params.beta_b);
  const auto ambient =
      torch::tensor({params.ambient[0], params.ambient[1], params.ambient[2]}, clean.options());
  return (clean * t_direct + (1.0 - t_back) * ambient).clamp(0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Toy scene

DegradationParams ToySceneConfig::default_degradation() {
  DegradationParams p;
  p.beta_d = {0.30, 0.12, 0.08};
  p.beta_b = {0.25, 0.18, 0.15};
  p.ambient = {0.10, 0.45, 0.55};
  return p;
}

Eigen::Vector3d toy_texture(uint64_t seed, double x, double y) {
  // A few low-frequency plane waves per channel, fixed by the seed.
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  Eigen::Vector3d color;
  for (int c = 0; c < 3; ++c) {
    double v = 0.5;
    for (int wave = 0; wave < 3; ++wave) {
      const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double freq = uniform(rng, 0.6, 1.8);
      const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double amp = uniform(rng, 0.08, 0.16);
      v += amp * std::sin(freq * (std::cos(angle) * x + std::sin(angle) * y) * 2.0 + phase);
    }
    color[c] = std::clamp(v, 0.05, 0.95);
  }
  return color;
}

torch::Tensor ToyScene::direct_transmission(size_t view) const {
  return exponential_transmission(depth.at(view), params.beta_d);
}

torch::Tensor ToyScene::backscatter_transmission(size_t view) const {
  return exponential_transmission(depth.at(view), params.beta_b);
}

torch::Tensor ToyScene::ambient_map(size_t view) const {
  const auto& d = depth.at(view);
  const auto a = torch::tensor({params.ambient[0], params.ambient[1], params.ambient[2]},
                               d.options());
  return a.expand({d.size(0), d.size(1), 3}).contiguous();
}

ToyScene make_toy_scene(const ToySceneConfig& config) {
  require(config.views >= 2, "toy scene needs at least 2 views, got ", config.views);
  require(config.size >= 4, "toy scene image size must be at least 4");
  config.degradation.validate();

  ToyScene scene;
  scene.params = config.degradation;
  auto& ds = scene.dataset;
  ds.split = SceneSplit::kSynthetic;

  const int s = config.size;
  CameraIntrinsics k;
  k.width = k.height = s;
  k.fx = k.fy = config.focal_scale * s;
  k.cx = k.cy = 0.5 * (s - 1);

  const double elevation = config.elevation_degrees * std::numbers::pi / 180.0;
  const double arc = config.arc_degrees * std::numbers::pi / 180.0;
  double min_range = std::numeric_limits<double>::infinity();
  double max_range = 0.0;
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  for (int v = 0; v < config.views; ++v) {
    const double phi = config.views == 1 ? 0.0 : -0.5 * arc + arc * v / (config.views - 1);
    const Eigen::Vector3d center(config.arc_radius * std::sin(phi) * std::cos(elevation),
                                 -config.arc_radius * std::sin(elevation),
                                 -config.arc_radius * std::cos(phi) * std::cos(elevation));
    Camera cam{k, Pose::look_at(center, Eigen::Vector3d::Zero())};

    auto clean = torch::empty({s, s, 3}, opts);
    auto depth = torch::empty({s, s}, opts);
    auto c_acc = clean.accessor<double, 3>();
    auto d_acc = depth.accessor<double, 2>();
    for (int row = 0; row < s; ++row) {
      for (int col = 0; col < s; ++col) {
        const Ray ray = pixel_to_ray(cam, Eigen::Vector2d(col, row));
        require(ray.direction.z() > 1e-9, "toy camera ray misses the textured plane");
        const double t = -ray.origin.z() / ray.direction.z();
        const Eigen::Vector3d hit = ray.at(t);
        const Eigen::Vector3d color = toy_texture(config.seed, hit.x(), hit.y());
        for (int c = 0; c < 3; ++c) c_acc[row][col][c] = color[c];
        d_acc[row][col] = t;
        min_range = std::min(min_range, t);
        max_range = std::max(max_range, t);
      }
    }
    ds.images.push_back(synthesize_underwater(clean, depth, config.degradation));
    ds.cameras.push_back(cam);
    std::ostringstream id;
    id << "view_" << std::setw(3) << std::setfill('0') << v << ".png";
    ds.view_ids.push_back(id.str());
    scene.clean.push_back(clean);
    scene.depth.push_back(depth);
  }
  ds.near = std::max(0.05, 0.5 * min_range);
  ds.far = 1.5 * max_range;
  ds.validate();
  return scene;
}

// ---------------------------------------------------------------------------
// Scene files

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open ", path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, path.filename().string(), ":", number,
            ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

SceneConfig SceneConfig::read(const fs::path& path) {
  SceneConfig cfg;
  for (const auto& [key, value] : read_key_values(path)) {
    if (key == "near") {
      cfg.near = std::stod(value);
    } else if (key == "far") {
      cfg.far = std::stod(value);
    } else if (key == "split") {
      cfg.split = parse_split(value);
    } else if (key == "image_dir") {
      cfg.image_dir = value;
    } else if (key == "colmap_dir") {
      cfg.colmap_dir = value;
    } else {
      fail(path.filename().string(), ": unknown scene key '", key, "'");
    }
  }
  return cfg;
}

void SceneConfig::write(const fs::path& path) const {
  std::ofstream out(path);
  require(out.good(), "cannot write ", path.string());
  out << std::setprecision(17);
  if (near) out << "near = " << *near << '\n';
  if (far) out << "far = " << *far << '\n';
  out << "split = " << to_string(split) << '\n'
      << "image_dir = " << image_dir << '\n'
      << "colmap_dir = " << colmap_dir << '\n';
}

Eigen::Vector3d scene_centroid(const std::vector<Camera>& cameras) {
  require(!cameras.empty(), "scene_centroid needs cameras");
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_center = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_axis = Eigen::Vector3d::Zero();
  for (const auto& cam : cameras) {
    const Eigen::Vector3d c = cam.pose.center();
    const Eigen::Vector3d d = cam.pose.optical_axis();
    const Eigen::Matrix3d proj = Eigen::Matrix3d::Identity() - d * d.transpose();
    a += proj;
    b += proj * c;
    mean_center += c;
    mean_axis += d;
  }
  mean_center /= static_cast<double>(cameras.size());
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(a);
  const auto sv = svd.singularValues();
  if (sv(2) > 1e-3 * sv(0)) return a.ldlt().solve(b);
  return mean_center + mean_axis.normalized();
}

SceneDataset load_scene(const fs::path& dir) {
  const fs::path cfg_path = dir / "scene.cfg";
  const SceneConfig cfg = fs::exists(cfg_path) ? SceneConfig::read(cfg_path) : SceneConfig{};
  const fs::path colmap = dir / cfg.colmap_dir;
  const auto views = parse_colmap(colmap / "cameras.txt", colmap / "images.txt");

  SceneDataset ds;
  ds.split = cfg.split;
  for (const auto& v : views) {
    auto img = read_image(dir / cfg.image_dir / v.image_name);
    require(img.size(0) == v.camera.intrinsics.height && img.size(1) == v.camera.intrinsics.width,
            "image ", v.image_name, " is ", img.size(1), "x", img.size(0), " but its camera says ",
            v.camera.intrinsics.width, "x", v.camera.intrinsics.height);
    ds.images.push_back(std::move(img));
    ds.cameras.push_back(v.camera);
    ds.view_ids.push_back(v.image_name);
  }
  require(ds.cameras.size() >= 2, "scene ", dir.string(), " has fewer than 2 views");

  if (!cfg.near || !cfg.far) {
    const Eigen::Vector3d centroid = scene_centroid(ds.cameras);
    std::vector<double> dist;
    for (const auto& cam : ds.cameras) dist.push_back((cam.pose.center() - centroid).norm());
    std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
    const double median = dist[dist.size() / 2];
    ds.near = cfg.near.value_or(0.05 * median);
    ds.far = cfg.far.value_or(5.0 * median);
  } else {
    ds.near = *cfg.near;
    ds.far = *cfg.far;
  }
  ds.validate();
  return ds;
}

void write_scene(const SceneDataset& dataset, const fs::path& dir) {
  dataset.validate();
  SceneConfig cfg;
  cfg.near = dataset.near;
  cfg.far = dataset.far;
  cfg.split = dataset.split;
  fs::create_directories(dir / cfg.image_dir);
  fs::create_directories(dir / cfg.colmap_dir);
  std::vector<ColmapView> views;
  for (size_t i = 0; i < dataset.size(); ++i) {
    write_png(dir / cfg.image_dir / dataset.view_ids[i], dataset.images[i], /*sixteen_bit=*/true);
    views.push_back({dataset.cameras[i], dataset.view_ids[i], static_cast<int>(i) + 1,
                     static_cast<int>(i) + 1});
  }
  write_colmap(views, dir / cfg.colmap_dir / "cameras.txt", dir / cfg.colmap_dir / "images.txt");
  std::ofstream(dir / cfg.colmap_dir / "points3D.txt") << "# 3D point list (empty)\n";
  cfg.write(dir / "scene.cfg");
}

}  // namespace u2nerf
