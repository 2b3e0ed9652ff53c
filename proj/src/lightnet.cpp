#include "u2nerf/lightnet.hpp"

#include "u2nerf/geometry.hpp"

namespace u2nerf {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

void VaeConfig::validate() const {
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(!encoder_widths.empty() && !decoder_widths.empty(), "VAE needs encoder and decoder layers");
  for (int w : encoder_widths) require(w > 0, "encoder widths must be positive");
  for (int w : decoder_widths) require(w > 0, "decoder widths must be positive");
  require(decoder_widths.size() + 1 == encoder_widths.size(),
          "decoder stages plus the final upsample must undo the encoder stride");
}

torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& log_var,
                             const torch::Tensor& eta) {
  return mu + torch::exp(0.5 * log_var) * eta;
}

torch::Tensor standard_normal(int64_t n, Rng& rng, torch::TensorOptions options) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(static_cast<size_t>(n));
  for (auto& v : values) v = normal(rng);
  return torch::tensor(values, torch::TensorOptions().dtype(torch::kFloat64)).to(options);
}

BackgroundLightNetImpl::BackgroundLightNetImpl(const VaeConfig& config) : config_(config) {
  config_.validate();
  encoder = nn::Sequential();
  int in = 3;
  for (int w : config_.encoder_widths) {
    encoder->push_back(nn::Conv2d(nn::Conv2dOptions(in, w, 3).stride(2).padding(1)));
    encoder->push_back(nn::ReLU());
    in = w;
  }
  register_module("encoder", encoder);
  fc_mu = register_module("fc_mu", nn::Linear(in, config_.latent_dim));
  fc_log_var = register_module("fc_log_var", nn::Linear(in, config_.latent_dim));
  const int seed_width = config_.decoder_widths.front();
  fc_seed = register_module("fc_seed", nn::Linear(config_.latent_dim, seed_width));
  decoder = register_module("decoder", nn::ModuleList());
  int prev = seed_width;
  for (int w : config_.decoder_widths) {
    decoder->push_back(nn::Conv2d(nn::Conv2dOptions(prev, w, 3).padding(1)));
    prev = w;
  }
  to_rgb = register_module("to_rgb", nn::Conv2d(nn::Conv2dOptions(prev, 3, 3).padding(1)));
}

std::pair<torch::Tensor, torch::Tensor> BackgroundLightNetImpl::encode(const torch::Tensor& image) {
  require(image.dim() == 3 && image.size(2) == 3, "background light net expects H x W x 3");
  const int stride = config_.encoder_stride();
  require(image.size(0) % stride == 0 && image.size(1) % stride == 0, "image size ", image.size(1),
          "x", image.size(0), " is not divisible by ", stride);
  const auto x = image.permute({2, 0, 1}).unsqueeze(0);
  const auto h = encoder->forward(x).mean({2, 3}).squeeze(0);  // global average pool
  return {fc_mu(h), fc_log_var(h).clamp_max(kMaxLogVar)};
}

torch::Tensor BackgroundLightNetImpl::decode(const torch::Tensor& z, int64_t height, int64_t width) {
  const int stride = config_.encoder_stride();
  const int64_t sh = height / stride;
  const int64_t sw = width / stride;
  auto x = torch::relu(fc_seed(z)).view({1, -1, 1, 1}).expand({1, -1, sh, sw});
  const auto up = [](const torch::Tensor& t) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
  };
  for (const auto& stage : *decoder) {
    x = torch::relu(stage->as<nn::Conv2d>()->forward(up(x)));
  }
  x = torch::sigmoid(to_rgb(up(x)));
  return x.squeeze(0).permute({1, 2, 0});
}

BackgroundLight BackgroundLightNetImpl::estimate(const torch::Tensor& image, LatentMode mode,
                                                 Rng& rng, const std::optional<torch::Tensor>& eta) {
  BackgroundLight out;
  std::tie(out.mu, out.log_var) = encode(image);
  if (mode == LatentMode::kEval) {
    out.z = out.mu;
  } else {
    const auto noise = eta ? *eta : standard_normal(config_.latent_dim, rng, out.mu.options());
    require(noise.sizes() == out.mu.sizes(), "eta must have latent_dim entries");
    out.z = reparameterize(out.mu, out.log_var, noise);
  }
  out.ambient = decode(out.z, image.size(0), image.size(1));
  return out;
}

size_t select_nearest_source(const Pose& target, std::span<const Pose> sources) {
  require(!sources.empty(), "select_nearest_source: no source views");
  return rank_by_nearness(target, sources).front();
}

}  // namespace u2nerf
