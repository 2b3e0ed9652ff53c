#pragma once

#include <optional>
#include <span>
#include <vector>

#include "u2nerf/camera.hpp"
#include "u2nerf/common.hpp"
#include "u2nerf/formation.hpp"

namespace u2nerf {

struct VaeConfig {
  std::vector<int> encoder_widths{16, 32, 64, 128};
  int latent_dim = 100;
  std::vector<int> decoder_widths{128, 64, 32};

  void validate() const;
  /// Spatial reduction of the encoder (one stride-2 conv per width).
  int encoder_stride() const { return 1 << encoder_widths.size(); }
};

enum class LatentMode { kTrain, kEval };

inline constexpr double kMaxLogVar = 20.0;

/// z = mu + exp(log_var / 2) * eta.
torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& log_var,
                             const torch::Tensor& eta);

/// Variational autoencoder mapping the nearest source image to a spatial
/// background-light map A.
class BackgroundLightNetImpl : public torch::nn::Module {
 public:
  explicit BackgroundLightNetImpl(const VaeConfig& config);

  /// image: H x W x 3, H and W divisible by the encoder stride.
  /// Train mode samples eta ~ N(0, I) from `rng` unless `eta` is given;
  /// eval mode uses z = mu.
  BackgroundLight estimate(const torch::Tensor& image, LatentMode mode, Rng& rng,
                           const std::optional<torch::Tensor>& eta = std::nullopt);

  /// Encoder only: (mu, log_var), each latent_dim.
  std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& image);

  /// Decoder only: latent -> H x W x 3 in [0, 1].
  torch::Tensor decode(const torch::Tensor& z, int64_t height, int64_t width);

  const VaeConfig& config() const { return config_; }

 private:
  VaeConfig config_;
  torch::nn::Sequential encoder{nullptr};
  torch::nn::Linear fc_mu{nullptr}, fc_log_var{nullptr}, fc_seed{nullptr};
  torch::nn::ModuleList decoder{nullptr};
  torch::nn::Conv2d to_rgb{nullptr};
};
TORCH_MODULE(BackgroundLightNet);

/// Index of the source whose optical axis is closest in angle to the
/// target's (ties broken by camera-center distance).
size_t select_nearest_source(const Pose& target, std::span<const Pose> sources);

/// Draws a standard normal vector from `rng` (stable across platforms for a
/// given libstdc++).
torch::Tensor standard_normal(int64_t n, Rng& rng, torch::TensorOptions options);

}  // namespace u2nerf
