#pragma once

#include <Eigen/Core>

#include "u2nerf/common.hpp"

namespace u2nerf {

enum class EncoderDepth {
  kFull,  // ResNet34 stem + layer1..layer3 (stride 16)
  kTiny,  // three plain conv stages, width <= 16 (stride 16)
};

struct BackboneConfig {
  EncoderDepth encoder = EncoderDepth::kTiny;
  int feature_width = 32;
  int upsample_stages = 2;

  void validate() const;
  /// Channels of the output grid: learned features plus pooled RGB.
  int grid_channels() const { return feature_width + 3; }
  static constexpr int kEncoderStride = 16;
  static constexpr int kOutputStride = 4;
};

/// Per-source feature grid; `data` is H' x W' x d with RGB in the last three
/// channels. Grid node (gx, gy) sits at image pixel (gx * stride + (stride-1)/2,
/// gy * stride + (stride-1)/2).
struct FeatureGrid {
  torch::Tensor data;
  double stride = BackboneConfig::kOutputStride;
  int source_id = 0;
};

struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int in_channels, int out_channels, int stride);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

/// U-Net style extractor: stride-16 encoder, two x2 decoder stages with skip
/// connections, output at stride 4 with average-pooled RGB appended.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(const BackboneConfig& config);

  /// images: N x H x W x 3 in [0, 1] -> N x d x H/4 x W/4.
  torch::Tensor forward(const torch::Tensor& images);

  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  // full
  torch::nn::Sequential stem{nullptr}, layer1{nullptr}, layer2{nullptr}, layer3{nullptr};
  // tiny
  torch::nn::Sequential stage1{nullptr}, stage2{nullptr}, stage3{nullptr};
  // decoder
  torch::nn::Conv2d up1{nullptr}, up2{nullptr}, out{nullptr};
};
TORCH_MODULE(FeatureExtractor);

/// Runs the extractor on one H x W x 3 image. H and W must be multiples of 16.
FeatureGrid extract_features(const torch::Tensor& image, FeatureExtractor& extractor,
                             int source_id = 0);

struct FeatureSample {
  torch::Tensor value;  // d-vector
  bool valid = false;   // false when z lies outside the grid footprint
};

/// Bilinear lookup at image pixel z. Out-of-footprint points are clamped to
/// the border and flagged invalid.
FeatureSample bilinear_sample(const FeatureGrid& grid, const Eigen::Vector2d& z);

/// Batched bilinear lookup. grids: N x d x h x w, pixels: N x P x 2 (image
/// pixels, x then y). Returns N x P x d, border-clamped.
torch::Tensor sample_feature_grids(const torch::Tensor& grids, const torch::Tensor& pixels,
                                   double stride);

}  // namespace u2nerf
