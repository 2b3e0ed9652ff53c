#include "u2nerf/gnt.hpp"

#include <cmath>
#include <limits>

namespace u2nerf {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

void TransformerConfig::validate() const {
  require(dim >= 1 && ray_heads >= 1 && view_heads >= 1, "transformer dims must be positive");
  require(dim % ray_heads == 0, "dim ", dim, " is not divisible by ray_heads ", ray_heads);
  require(dim % view_heads == 0, "dim ", dim, " is not divisible by view_heads ", view_heads);
  require(depth >= 1, "depth must be >= 1");
  require(ff_hidden >= 1 && decoder_width >= 1, "hidden widths must be positive");
  require(samples_per_ray >= 1, "samples_per_ray must be >= 1");
  require(patch_size == 2 || patch_size == 4 || patch_size == 8, "patch size must be 2, 4 or 8, got ",
          patch_size);
}

AttentionOutput scaled_dot_product_attention(const torch::Tensor& q, const torch::Tensor& k,
                                             const torch::Tensor& v,
                                             const std::optional<torch::Tensor>& valid, int heads) {
  require(q.dim() >= 2 && k.dim() == q.dim() && v.dim() == q.dim(), "attention rank mismatch");
  require(k.size(-2) == v.size(-2), "attention: key and value counts differ (", k.size(-2), " vs ",
          v.size(-2), ")");
  require(q.size(-1) == k.size(-1), "attention: query and key widths differ");
  require(heads >= 1 && q.size(-1) % heads == 0 && v.size(-1) % heads == 0,
          "attention: widths not divisible by heads");

  const auto split = [heads](const torch::Tensor& t) {
    auto shape = t.sizes().vec();
    const int64_t len = shape[shape.size() - 2];
    const int64_t width = shape.back();
    shape.pop_back();
    shape.pop_back();
    auto out_shape = shape;
    out_shape.push_back(len);
    out_shape.push_back(heads);
    out_shape.push_back(width / heads);
    return t.reshape(out_shape).transpose(-3, -2);  // ... x heads x L x w/h
  };
  const auto qh = split(q);
  const auto kh = split(k);
  const auto vh = split(v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1) / heads));
  auto logits = torch::matmul(qh, kh.transpose(-2, -1)) * scale;  // ... x h x Lq x Lk

  if (valid) {
    const auto mask = valid->to(torch::kBool).unsqueeze(-3);  // ... x 1 x Lq x Lk
    const auto any_valid = mask.any(-1);
    require(any_valid.all().item<bool>(),
            "attention: every key is masked for at least one query (no visible source)");
    logits = logits.masked_fill(mask.logical_not(), -std::numeric_limits<double>::infinity());
  }
  const auto weights = torch::softmax(logits, -1);
  auto out = torch::matmul(weights, vh).transpose(-3, -2);  // ... x Lq x h x w/h
  auto out_shape = out.sizes().vec();
  out_shape.pop_back();
  out_shape.back() = v.size(-1);
  return {out.reshape(out_shape), weights};
}

FeedForwardImpl::FeedForwardImpl(int dim, int hidden) {
  fc1 = register_module("fc1", nn::Linear(dim, hidden));
  fc2 = register_module("fc2", nn::Linear(hidden, dim));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) {
  return fc2(torch::relu(fc1(x)));
}

ViewTransformerImpl::ViewTransformerImpl(int dim, int feature_channels, int ff_hidden, int heads_)
    : heads(heads_) {
  norm_query = register_module("norm_query", nn::LayerNorm(nn::LayerNormOptions({dim})));
  norm_feature =
      register_module("norm_feature", nn::LayerNorm(nn::LayerNormOptions({feature_channels})));
  query = register_module("query", nn::Linear(nn::LinearOptions(dim, dim).bias(false)));
  key = register_module("key", nn::Linear(nn::LinearOptions(feature_channels, dim).bias(false)));
  value = register_module("value", nn::Linear(nn::LinearOptions(feature_channels, dim).bias(false)));
  proj = register_module("proj", nn::Linear(dim, dim));
  norm_ff = register_module("norm_ff", nn::LayerNorm(nn::LayerNormOptions({dim})));
  ff = register_module("ff", FeedForward(dim, ff_hidden));
}

AttentionOutput ViewTransformerImpl::attend(const torch::Tensor& tokens,
                                            const torch::Tensor& features,
                                            const torch::Tensor& valid) {
  const auto q = query(norm_query(tokens)).unsqueeze(-2);  // P x 1 x dim
  const auto f = norm_feature(features);
  return scaled_dot_product_attention(q, key(f), value(f), valid.unsqueeze(-2), heads);
}

torch::Tensor ViewTransformerImpl::forward(const torch::Tensor& tokens,
                                           const torch::Tensor& features,
                                           const torch::Tensor& valid) {
  auto x = tokens + proj(attend(tokens, features, valid).output.squeeze(-2));
  return x + ff(norm_ff(x));
}

RayTransformerImpl::RayTransformerImpl(int dim, int ff_hidden, int heads_) : heads(heads_) {
  norm_attn = register_module("norm_attn", nn::LayerNorm(nn::LayerNormOptions({dim})));
  qkv = register_module("qkv", nn::Linear(nn::LinearOptions(dim, 3 * dim).bias(false)));
  proj = register_module("proj", nn::Linear(dim, dim));
  norm_ff = register_module("norm_ff", nn::LayerNorm(nn::LayerNormOptions({dim})));
  ff = register_module("ff", FeedForward(dim, ff_hidden));
}

AttentionOutput RayTransformerImpl::attend(const torch::Tensor& tokens) {
  const auto parts = qkv(norm_attn(tokens)).chunk(3, -1);
  return scaled_dot_product_attention(parts[0], parts[1], parts[2], std::nullopt, heads);
}

torch::Tensor RayTransformerImpl::forward(const torch::Tensor& tokens) {
  auto x = tokens + proj(attend(tokens).output);
  return x + ff(norm_ff(x));
}

PatchHeadImpl::PatchHeadImpl(int dim, int width, int patch_size) {
  stages = register_module("stages", nn::ModuleList());
  int in = dim;
  for (int size = 1; size < patch_size; size *= 2) {
    stages->push_back(nn::Conv2d(nn::Conv2dOptions(in, width, 3).padding(1)));
    in = width;
  }
  project = register_module("project", nn::Conv2d(nn::Conv2dOptions(in, 3, 1)));
}

torch::Tensor PatchHeadImpl::forward(const torch::Tensor& ray_features) {
  auto x = ray_features.unsqueeze(-1).unsqueeze(-1);  // R x dim x 1 x 1
  for (const auto& stage : *stages) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    x = torch::relu(stage->as<nn::Conv2d>()->forward(x));
  }
  return project(x).permute({0, 2, 3, 1});
}

GntRendererImpl::GntRendererImpl(const TransformerConfig& config, int feature_channels)
    : config_(config), feature_channels_(feature_channels) {
  config_.validate();
  require(feature_channels >= 1, "feature_channels must be positive");
  const int dim = config_.dim;
  direction_encoding = register_module("direction_encoding", nn::Linear(3, dim));
  query_init = register_module("query_init", nn::Linear(feature_channels + dim, dim));
  view_blocks = register_module("view_blocks", nn::ModuleList());
  ray_blocks = register_module("ray_blocks", nn::ModuleList());
  for (int i = 0; i < config_.depth; ++i) {
    view_blocks->push_back(
        ViewTransformer(dim, feature_channels, config_.ff_hidden, config_.view_heads));
    ray_blocks->push_back(RayTransformer(dim, config_.ff_hidden, config_.ray_heads));
  }
  position_embedding = register_parameter(
      "position_embedding", torch::randn({config_.samples_per_ray, dim}) * 0.02);
  pool_norm = register_module("pool_norm", nn::LayerNorm(nn::LayerNormOptions({dim})));
  output_projection = register_module("output_projection", nn::Linear(dim, dim));
  head_radiance =
      register_module("head_radiance", PatchHead(dim, config_.decoder_width, config_.patch_size));
  head_direct = register_module("head_direct", PatchHead(dim, config_.decoder_width, config_.patch_size));
  head_backscatter =
      register_module("head_backscatter", PatchHead(dim, config_.decoder_width, config_.patch_size));
}

torch::Tensor GntRendererImpl::initial_query(const torch::Tensor& features,
                                             const torch::Tensor& valid,
                                             const torch::Tensor& directions) {
  require(features.dim() == 3 && features.size(2) == feature_channels_,
          "view features must be P x N x ", feature_channels_);
  const auto w = valid.to(features.scalar_type()).unsqueeze(-1);  // P x N x 1
  const auto count = w.sum(1);
  require(count.min().item<double>() > 0.0, "view_aggregate: a point has no valid source view");
  const auto mean = (features * w).sum(1) / count;
  return query_init(torch::cat({mean, direction_encoding(directions)}, -1));
}

torch::Tensor GntRendererImpl::view_aggregate(const torch::Tensor& features,
                                              const torch::Tensor& valid,
                                              const torch::Tensor& directions) {
  const auto tokens = initial_query(features, valid, directions);
  return view_blocks[0]->as<ViewTransformerImpl>()->forward(tokens, features, valid);
}

torch::Tensor GntRendererImpl::ray_aggregate(const torch::Tensor& point_tokens,
                                             const torch::Tensor& features,
                                             const torch::Tensor& valid) {
  require(point_tokens.dim() == 3 && point_tokens.size(2) == config_.dim,
          "ray tokens must be R x M x dim");
  const int64_t rays = point_tokens.size(0);
  const int64_t samples = point_tokens.size(1);
  auto x = point_tokens;
  if (config_.position_encoding) {
    require(samples == config_.samples_per_ray, "position encoding expects ",
            config_.samples_per_ray, " samples per ray, got ", samples);
    x = x + position_embedding.unsqueeze(0);
  }
  for (int i = 0; i < config_.depth; ++i) {
    if (i > 0) {
      const auto flat = x.reshape({rays * samples, config_.dim});
      const auto f = features.reshape({rays * samples, features.size(2), features.size(3)});
      const auto m = valid.reshape({rays * samples, valid.size(2)});
      x = view_blocks[i]->as<ViewTransformerImpl>()->forward(flat, f, m).reshape(
          {rays, samples, config_.dim});
    }
    x = ray_blocks[i]->as<RayTransformerImpl>()->forward(x);
  }
  return output_projection(pool_norm(x.mean(1)));
}

torch::Tensor GntRendererImpl::ray_features(const torch::Tensor& features, const torch::Tensor& valid,
                                            const torch::Tensor& directions) {
  require(features.dim() == 4 && valid.dim() == 3, "features must be R x M x N x d");
  const int64_t rays = features.size(0);
  const int64_t samples = features.size(1);
  const int64_t views = features.size(2);
  const auto dirs = directions.unsqueeze(1).expand({rays, samples, 3}).reshape({rays * samples, 3});
  const auto tokens = view_aggregate(features.reshape({rays * samples, views, features.size(3)}),
                                     valid.reshape({rays * samples, views}), dirs);
  return ray_aggregate(tokens.reshape({rays, samples, config_.dim}), features, valid);
}

RawPatch GntRendererImpl::decode_patch(const torch::Tensor& ray_features) {
  return {head_radiance(ray_features), head_direct(ray_features), head_backscatter(ray_features)};
}

VolumeRenderResult volume_render_reference(const torch::Tensor& colors, const torch::Tensor& sigmas,
                                           const torch::Tensor& depths) {
  require(sigmas.sizes() == depths.sizes(), "sigmas and depths differ in shape");
  require(colors.dim() == sigmas.dim() + 1 && colors.size(-1) == 3 &&
              colors.size(-2) == sigmas.size(-1),
          "colors must be ... x M x 3");
  require(sigmas.detach().min().item<double>() >= 0.0, "densities must be non-negative");
  const int64_t m = depths.size(-1);
  auto deltas = torch::empty_like(depths);
  if (m > 1) {
    const auto diff = depths.narrow(-1, 1, m - 1) - depths.narrow(-1, 0, m - 1);
    require(diff.detach().min().item<double>() >= 0.0, "sample depths must be sorted");
    deltas = torch::cat({diff, torch::full_like(depths.narrow(-1, 0, 1), kLastIntervalCap)}, -1);
  } else {
    deltas = torch::full_like(depths, kLastIntervalCap);
  }
  const auto optical = sigmas * deltas;
  const auto alpha = -torch::expm1(-optical);
  // Transmittance before each sample: exp(-sum_{i<j} sigma_i delta_i).
  const auto before =
      torch::cat({torch::zeros_like(optical.narrow(-1, 0, 1)),
                  torch::cumsum(optical.narrow(-1, 0, m - 1), -1)},
                 -1);
  const auto weights = alpha * torch::exp(-before);
  return {(weights.unsqueeze(-1) * colors).sum(-2), weights};
}

}  // namespace u2nerf
