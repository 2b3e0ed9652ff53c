#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "u2nerf/data_io.hpp"
#include "u2nerf/pipeline.hpp"

namespace u2nerf {

// ---------------------------------------------------------------------------
// Full-reference metrics. Images are H x W x 3 in [0, 1].

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE), capped; MSE = 0 gives the cap.
double psnr(const torch::Tensor& a, const torch::Tensor& b, double cap = kPsnrCap);
double psnr_from_mse(double mse, double cap = kPsnrCap);

/// Single-scale SSIM on Rec.601 luma: 11 x 11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1, mean over windows that fit inside
/// the image. Inputs may also be H x W (already luma).
double ssim(const torch::Tensor& a, const torch::Tensor& b);

torch::Tensor luma(const torch::Tensor& image);

// ---------------------------------------------------------------------------
// No-reference underwater metrics.

/// UIQM = 0.0282 UICM + 0.2953 UISM + 3.5753 UIConM, on a 0..255 scale.
struct UiqmComponents {
  double uicm = 0, uism = 0, uiconm = 0, uiqm = 0;
};
inline constexpr double kUiqmC1 = 0.0282, kUiqmC2 = 0.2953, kUiqmC3 = 3.5753;
/// Fraction trimmed from each tail in the colourfulness statistics.
inline constexpr double kUicmTrim = 0.1;
/// Side of the square blocks used by the EME / logAMEE measures.
inline constexpr int kUiqmBlock = 10;

double uicm(const torch::Tensor& image);
double uism(const torch::Tensor& image);
double uiconm(const torch::Tensor& image);
UiqmComponents uiqm_components(const torch::Tensor& image);
double uiqm(const torch::Tensor& image);

/// UCIQE = 0.4680 sigma_chroma + 0.2745 contrast_luma + 0.2576 mu_saturation,
/// in CIELab (D65) with L, a and b divided by 100.
struct UciqeComponents {
  double chroma_std = 0, luma_contrast = 0, saturation_mean = 0, uciqe = 0;
};
inline constexpr double kUciqeW1 = 0.4680, kUciqeW2 = 0.2745, kUciqeW3 = 0.2576;

/// sRGB -> CIELab (D65 white), H x W x 3 with L in [0, 100].
torch::Tensor rgb_to_lab(const torch::Tensor& image);
UciqeComponents uciqe_from_lab(const torch::Tensor& lab);
UciqeComponents uciqe_components(const torch::Tensor& image);
double uciqe(const torch::Tensor& image);

// ---------------------------------------------------------------------------
// Rendering

struct ViewComponents {
  torch::Tensor radiance;                  // J, restored output
  torch::Tensor composed;                  // I, self-reconstruction
  torch::Tensor direct_transmission;       // T_D
  torch::Tensor backscatter_transmission;  // T_B
  torch::Tensor ambient;                   // A
};

/// Nearest `count` views to `target` (by optical-axis angle), excluding one.
std::vector<size_t> nearest_views(const SceneDataset& dataset, const Pose& target, int count,
                                  std::optional<size_t> exclude);

/// Tiles the target with non-overlapping p x p patches and renders each with
/// deterministic samples, z = mu for the light and `source_count` nearest
/// sources. Image size must be divisible by p.
ViewComponents render_view(U2NerfModel& model, const SceneDataset& dataset, const Camera& target,
                           int source_count, std::optional<size_t> exclude = std::nullopt,
                           int patches_per_chunk = 256);

/// Maps a view index to its components; lets evaluation run on rendered
/// views or on injected ground truth.
using ComponentProvider = std::function<ViewComponents(size_t view)>;

/// Ground-truth components of a toy scene.
ComponentProvider oracle_provider(const ToyScene& scene);
ComponentProvider model_provider(U2NerfModel& model, const SceneDataset& dataset, int source_count);

struct ViewMetrics {
  std::string view_id;
  std::optional<double> psnr;  // J vs clean, when clean is known
  std::optional<double> ssim;
  double psnr_input = 0;       // I vs degraded input
  double uiqm = 0, uciqe = 0;
  double l_trans = 0;          // on the rendered T_B
  std::optional<double> lpips;
};

struct MetricsReport {
  std::string scene_id;
  std::string config_hash;
  std::vector<ViewMetrics> views;
  ViewMetrics mean;
};

/// Reads "view_id score" lines from an external perceptual-metric run.
std::map<std::string, double> read_score_file(const std::filesystem::path& path);

/// CRC-32 of the config text as 8 hex digits.
std::string config_hash(const std::string& config_text);

MetricsReport evaluate_views(const SceneDataset& dataset, const std::vector<size_t>& views,
                             const ComponentProvider& provider,
                             const std::vector<torch::Tensor>* clean = nullptr,
                             const std::map<std::string, double>* lpips = nullptr);

/// One JSON object per view, then a summary object; also writes a plain-text
/// table next to it (`<path>.txt`).
void write_report(const MetricsReport& report, const std::filesystem::path& path);

/// Writes J, I, T_D, T_B and A as PNGs into `dir`.
void write_components(const ViewComponents& view, const std::filesystem::path& dir,
                      const std::string& stem, bool sixteen_bit);

/// Camera `t` in [0, 1] along the path through the dataset cameras in order
/// (slerp on rotations, linear on centers).
Camera interpolate_camera(const SceneDataset& dataset, double t);

/// Renders `frames` restored frames along the camera path into `dir`.
void render_sequence(U2NerfModel& model, const SceneDataset& dataset, int frames, int source_count,
                     const std::filesystem::path& dir);

}  // namespace u2nerf
