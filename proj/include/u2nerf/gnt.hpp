#pragma once

#include <optional>

#include "u2nerf/common.hpp"

namespace u2nerf {

struct TransformerConfig {
  int dim = 64;
  int view_heads = 1;
  int ray_heads = 4;
  int ff_hidden = 256;
  int depth = 4;             // (view, ray) block pairs
  int samples_per_ray = 192;
  int patch_size = 4;
  int decoder_width = 64;
  bool position_encoding = true;

  void validate() const;
};

struct AttentionOutput {
  torch::Tensor output;   // ... x Lq x Dv
  torch::Tensor weights;  // ... x heads x Lq x Lk
};

/// Multi-head scaled dot-product attention on already-projected inputs.
/// q: ... x Lq x D, k: ... x Lk x D, v: ... x Lk x Dv; `valid` (optional)
/// broadcasts to ... x Lq x Lk and zeroes the weight of false entries.
/// Throws when every key is masked for some query.
AttentionOutput scaled_dot_product_attention(const torch::Tensor& q, const torch::Tensor& k,
                                             const torch::Tensor& v,
                                             const std::optional<torch::Tensor>& valid,
                                             int heads);

struct FeedForwardImpl : torch::nn::Module {
  FeedForwardImpl(int dim, int hidden);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(FeedForward);

/// Pre-norm cross-attention from a point token to its N epipolar features,
/// then a pre-norm feed-forward; residual after each.
struct ViewTransformerImpl : torch::nn::Module {
  ViewTransformerImpl(int dim, int feature_channels, int ff_hidden, int heads);
  /// tokens: P x dim, features: P x N x d, valid: P x N -> P x dim.
  torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& features,
                        const torch::Tensor& valid);
  AttentionOutput attend(const torch::Tensor& tokens, const torch::Tensor& features,
                         const torch::Tensor& valid);

  int heads;
  torch::nn::LayerNorm norm_query{nullptr}, norm_feature{nullptr}, norm_ff{nullptr};
  torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr}, proj{nullptr};
  FeedForward ff{nullptr};
};
TORCH_MODULE(ViewTransformer);

/// Pre-norm multi-head self-attention along the samples of each ray.
struct RayTransformerImpl : torch::nn::Module {
  RayTransformerImpl(int dim, int ff_hidden, int heads);
  /// tokens: R x M x dim -> R x M x dim.
  torch::Tensor forward(const torch::Tensor& tokens);
  AttentionOutput attend(const torch::Tensor& tokens);

  int heads;
  torch::nn::LayerNorm norm_attn{nullptr}, norm_ff{nullptr};
  torch::nn::Linear qkv{nullptr}, proj{nullptr};
  FeedForward ff{nullptr};
};
TORCH_MODULE(RayTransformer);

/// One output head: 1 x 1 seed -> log2(p) x (nearest x2 upsample + 3x3 conv
/// + ReLU) -> 1x1 conv to 3 channels.
struct PatchHeadImpl : torch::nn::Module {
  PatchHeadImpl(int dim, int width, int patch_size);
  /// ray_features: R x dim -> R x p x p x 3 (unconstrained).
  torch::Tensor forward(const torch::Tensor& ray_features);

  torch::nn::ModuleList stages{nullptr};
  torch::nn::Conv2d project{nullptr};
};
TORCH_MODULE(PatchHead);

struct RawPatch {
  torch::Tensor radiance, direct, backscatter;  // R x p x p x 3 each
};

/// Alternating view / ray transformer stack with mean pooling and three
/// separate patch heads (J, T_D, T_B).
class GntRendererImpl : public torch::nn::Module {
 public:
  GntRendererImpl(const TransformerConfig& config, int feature_channels);

  /// Query initialisation: projection of [mean of valid features, direction
  /// encoding]. features: P x N x d, valid: P x N, directions: P x 3.
  torch::Tensor initial_query(const torch::Tensor& features, const torch::Tensor& valid,
                              const torch::Tensor& directions);

  /// First view-transformer pass for P points -> P x dim.
  torch::Tensor view_aggregate(const torch::Tensor& features, const torch::Tensor& valid,
                               const torch::Tensor& directions);

  /// Ray transformer stack on R x M x dim tokens, refreshing tokens with the
  /// remaining view blocks in between, then mean pooling and the output
  /// projection -> R x dim. features: R x M x N x d, valid: R x M x N.
  torch::Tensor ray_aggregate(const torch::Tensor& point_tokens, const torch::Tensor& features,
                              const torch::Tensor& valid);

  /// view_aggregate followed by ray_aggregate. directions: R x 3.
  torch::Tensor ray_features(const torch::Tensor& features, const torch::Tensor& valid,
                             const torch::Tensor& directions);

  RawPatch decode_patch(const torch::Tensor& ray_features);

  const TransformerConfig& config() const { return config_; }
  int feature_channels() const { return feature_channels_; }

  torch::nn::Linear direction_encoding{nullptr}, query_init{nullptr};
  torch::nn::ModuleList view_blocks{nullptr}, ray_blocks{nullptr};
  torch::Tensor position_embedding;
  torch::nn::LayerNorm pool_norm{nullptr};
  torch::nn::Linear output_projection{nullptr};
  PatchHead head_radiance{nullptr}, head_direct{nullptr}, head_backscatter{nullptr};

 private:
  TransformerConfig config_;
  int feature_channels_;
};
TORCH_MODULE(GntRenderer);

struct VolumeRenderResult {
  torch::Tensor color;    // ... x 3
  torch::Tensor weights;  // ... x M
};

/// Cap used for the final quadrature interval.
inline constexpr double kLastIntervalCap = 1e10;

/// Classical quadrature of the volume rendering integral (reference path for
/// the NeRF baseline). colors: ... x M x 3, sigmas and depths: ... x M.
VolumeRenderResult volume_render_reference(const torch::Tensor& colors, const torch::Tensor& sigmas,
                                           const torch::Tensor& depths);

}  // namespace u2nerf
