#include "u2nerf/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace u2nerf {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

void BackboneConfig::validate() const {
  require(feature_width >= 4, "feature_width must be >= 4, got ", feature_width);
  require(upsample_stages == 2, "the decoder has exactly 2 upsampling stages");
}

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, bool bias = true) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(bias));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

nn::Sequential resnet_layer(int in, int out, int blocks, int stride) {
  nn::Sequential layer;
  layer->push_back(BasicBlock(in, out, stride));
  for (int i = 1; i < blocks; ++i) layer->push_back(BasicBlock(out, out, 1));
  return layer;
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int in_channels, int out_channels, int stride) {
  conv1 = register_module("conv1", conv(in_channels, out_channels, 3, stride, false));
  bn1 = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2 = register_module("conv2", conv(out_channels, out_channels, 3, 1, false));
  bn2 = register_module("bn2", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample = register_module(
        "downsample", nn::Sequential(conv(in_channels, out_channels, 1, stride, false),
                                     nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1(conv1(x)));
  y = bn2(conv2(y));
  const auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(y + identity);
}

FeatureExtractorImpl::FeatureExtractorImpl(const BackboneConfig& config) : config_(config) {
  config_.validate();
  int skip1 = 0;
  int skip2 = 0;
  int bottom = 0;
  if (config_.encoder == EncoderDepth::kFull) {
    stem = register_module(
        "stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)),
                               nn::BatchNorm2d(64), nn::ReLU(),
                               nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
    layer1 = register_module("layer1", resnet_layer(64, 64, 3, 1));
    layer2 = register_module("layer2", resnet_layer(64, 128, 4, 2));
    layer3 = register_module("layer3", resnet_layer(128, 256, 6, 2));
    skip1 = 64;
    skip2 = 128;
    bottom = 256;
  } else {
    stage1 = register_module("stage1", nn::Sequential(conv(3, 8, 3, 2), nn::ReLU(), conv(8, 8, 3, 2),
                                                      nn::ReLU()));
    stage2 = register_module("stage2", nn::Sequential(conv(8, 16, 3, 2), nn::ReLU()));
    stage3 = register_module("stage3", nn::Sequential(conv(16, 16, 3, 2), nn::ReLU()));
    skip1 = 8;
    skip2 = 16;
    bottom = 16;
  }
  const int mid = config_.encoder == EncoderDepth::kFull ? 128 : 16;
  const int low = config_.encoder == EncoderDepth::kFull ? 64 : 16;
  up1 = register_module("up1", conv(bottom + skip2, mid, 3));
  up2 = register_module("up2", conv(mid + skip1, low, 3));
  out = register_module("out", conv(low, config_.feature_width, 1));
}

torch::Tensor FeatureExtractorImpl::forward(const torch::Tensor& images) {
  require(images.dim() == 4 && images.size(3) == 3, "feature extractor expects N x H x W x 3");
  const int64_t h = images.size(1);
  const int64_t w = images.size(2);
  require(h % BackboneConfig::kEncoderStride == 0 && w % BackboneConfig::kEncoderStride == 0,
          "image size ", w, "x", h, " is not divisible by the encoder stride ",
          BackboneConfig::kEncoderStride, "; pad the images to a multiple of 16");
  const auto x = images.permute({0, 3, 1, 2}).contiguous();

  torch::Tensor s1, s2, s3;
  if (config_.encoder == EncoderDepth::kFull) {
    s1 = layer1->forward(stem->forward(x));
    s2 = layer2->forward(s1);
    s3 = layer3->forward(s2);
  } else {
    s1 = stage1->forward(x);
    s2 = stage2->forward(s1);
    s3 = stage3->forward(s2);
  }
  auto y = torch::relu(up1(torch::cat({upsample2(s3), s2}, 1)));
  y = torch::relu(up2(torch::cat({upsample2(y), s1}, 1)));
  y = out(y);
  const auto rgb = F::avg_pool2d(x, F::AvgPool2dFuncOptions(BackboneConfig::kOutputStride));
  return torch::cat({y, rgb}, 1);
}

FeatureGrid extract_features(const torch::Tensor& image, FeatureExtractor& extractor,
                             int source_id) {
  require(image.dim() == 3 && image.size(2) == 3, "extract_features expects H x W x 3");
  FeatureGrid grid;
  grid.data = extractor->forward(image.unsqueeze(0)).squeeze(0).permute({1, 2, 0}).contiguous();
  grid.stride = BackboneConfig::kOutputStride;
  grid.source_id = source_id;
  return grid;
}

FeatureSample bilinear_sample(const FeatureGrid& grid, const Eigen::Vector2d& z) {
  const int64_t h = grid.data.size(0);
  const int64_t w = grid.data.size(1);
  const double s = grid.stride;
  const double offset = 0.5 * (s - 1.0);
  FeatureSample out;
  out.valid = z.x() >= -0.5 && z.x() <= w * s - 0.5 && z.y() >= -0.5 && z.y() <= h * s - 0.5;
  const double gx = std::clamp((z.x() - offset) / s, 0.0, static_cast<double>(w - 1));
  const double gy = std::clamp((z.y() - offset) / s, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<int64_t>(std::floor(gx));
  const auto y0 = static_cast<int64_t>(std::floor(gy));
  const int64_t x1 = std::min(x0 + 1, w - 1);
  const int64_t y1 = std::min(y0 + 1, h - 1);
  const double fx = gx - x0;
  const double fy = gy - y0;
  out.value = (1 - fx) * (1 - fy) * grid.data[y0][x0] + fx * (1 - fy) * grid.data[y0][x1] +
              (1 - fx) * fy * grid.data[y1][x0] + fx * fy * grid.data[y1][x1];
  return out;
}

torch::Tensor sample_feature_grids(const torch::Tensor& grids, const torch::Tensor& pixels,
                                   double stride) {
  require(grids.dim() == 4 && pixels.dim() == 3 && pixels.size(2) == 2 &&
              pixels.size(0) == grids.size(0),
          "sample_feature_grids expects N x d x h x w grids and N x P x 2 pixels");
  const int64_t h = grids.size(2);
  const int64_t w = grids.size(3);
  const double offset = 0.5 * (stride - 1.0);
  auto g = (pixels.to(grids.scalar_type()) - offset) / stride;  // grid units
  // align_corners=true maps -1 / +1 onto the first / last node.
  const auto scale = torch::tensor({2.0 / std::max<int64_t>(w - 1, 1), 2.0 / std::max<int64_t>(h - 1, 1)},
                                   grids.options());
  g = g * scale - 1.0;
  const auto sampled = F::grid_sample(grids, g.unsqueeze(1),
                                      F::GridSampleFuncOptions()
                                          .mode(torch::kBilinear)
                                          .padding_mode(torch::kBorder)
                                          .align_corners(true));  // N x d x 1 x P
  return sampled.squeeze(2).permute({0, 2, 1});
}

}  // namespace u2nerf
