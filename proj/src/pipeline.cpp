#include "u2nerf/pipeline.hpp"

#include "u2nerf/geometry.hpp"

namespace u2nerf {

U2NerfModelImpl::U2NerfModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  backbone = register_module("backbone", FeatureExtractor(config_.backbone));
  gnt = register_module("gnt", GntRenderer(config_.transformer, config_.backbone.grid_channels()));
  lightnet = register_module("lightnet", BackgroundLightNet(config_.vae));
  to(config_.dtype);
}

SourceContext prepare_sources(U2NerfModel& model, const SceneDataset& dataset,
                              const std::vector<size_t>& sources) {
  require(!sources.empty(), "no source views");
  SourceContext ctx;
  std::vector<torch::Tensor> images;
  for (size_t id : sources) {
    require(id < dataset.size(), "source view ", id, " out of range");
    images.push_back(dataset.images[id].to(model->options()));
    ctx.cameras.push_back(dataset.cameras[id]);
  }
  ctx.view_ids = sources;
  ctx.grids = model->backbone->forward(torch::stack(images));
  return ctx;
}

BackgroundLight estimate_light(U2NerfModel& model, const SceneDataset& dataset,
                               const Pose& target, const std::vector<size_t>& sources,
                               LatentMode mode, Rng& rng) {
  std::vector<Pose> poses;
  for (size_t id : sources) poses.push_back(dataset.cameras.at(id).pose);
  const size_t nearest = sources[select_nearest_source(target, poses)];
  return model->lightnet->estimate(dataset.images[nearest].to(model->options()), mode, rng);
}

EpipolarSamples trace_patch_rays(const Camera& target, const std::vector<Camera>& sources,
                                 const std::vector<PatchOrigin>& origins, int patch_size,
                                 int samples, double near, double far, bool stratified, Rng& rng) {
  const auto views = static_cast<int64_t>(sources.size());
  const auto rays = static_cast<int64_t>(origins.size());
  require(views >= 1 && rays >= 1, "trace_patch_rays needs sources and patches");
  auto pixels = torch::empty({views, rays * samples, 2}, torch::kFloat64);
  auto valid = torch::empty({rays, samples, views}, torch::kBool);
  auto dirs = torch::empty({rays, 3}, torch::kFloat64);
  auto px = pixels.accessor<double, 3>();
  auto ok = valid.accessor<bool, 3>();
  auto dr = dirs.accessor<double, 2>();
  const double half = 0.5 * (patch_size - 1);
  for (int64_t r = 0; r < rays; ++r) {
    const Eigen::Vector2d center(origins[r][0] + half, origins[r][1] + half);
    const Ray ray = pixel_to_ray(target, center);
    for (int c = 0; c < 3; ++c) dr[r][c] = ray.direction[c];
    const auto depths = sample_depths(near, far, samples, stratified, rng);
    for (int m = 0; m < samples; ++m) {
      const Eigen::Vector3d x = ray.at(depths[m]);
      for (int64_t n = 0; n < views; ++n) {
        const auto proj = project(x, sources[n]);
        const int64_t k = r * samples + m;
        px[n][k][0] = proj.pixel.x();
        px[n][k][1] = proj.pixel.y();
        ok[r][m][n] = proj.in_front && in_image(sources[n].intrinsics, proj.pixel);
      }
    }
  }
  // Points seen by no source fall back to the border-clamped samples of
  // every view so attention stays defined.
  const auto none = valid.logical_not().all(-1, true);
  valid = valid.logical_or(none);
  return {pixels, valid, dirs};
}

torch::Tensor crop_patches(const torch::Tensor& map, const std::vector<PatchOrigin>& origins,
                           int patch_size) {
  require(map.dim() == 3, "crop_patches expects H x W x C");
  const auto b = static_cast<int64_t>(origins.size());
  auto rows = torch::empty({b, patch_size}, torch::kLong);
  auto cols = torch::empty({b, patch_size}, torch::kLong);
  auto ra = rows.accessor<int64_t, 2>();
  auto ca = cols.accessor<int64_t, 2>();
  for (int64_t i = 0; i < b; ++i) {
    const auto [x0, y0] = origins[i];
    require(x0 >= 0 && y0 >= 0 && x0 + patch_size <= map.size(1) && y0 + patch_size <= map.size(0),
            "patch at (", x0, ", ", y0, ") leaves the ", map.size(1), "x", map.size(0), " image");
    for (int j = 0; j < patch_size; ++j) {
      ra[i][j] = y0 + j;
      ca[i][j] = x0 + j;
    }
  }
  return map.index({rows.unsqueeze(2), cols.unsqueeze(1)});
}

PatchRender render_patches(U2NerfModel& model, const SourceContext& sources,
                           const BackgroundLight& light, const Camera& target,
                           const std::vector<PatchOrigin>& origins, double near, double far,
                           bool stratified, Rng& rng) {
  const auto& tc = model->config().transformer;
  const int p = tc.patch_size;
  const int m = tc.samples_per_ray;
  const auto rays = static_cast<int64_t>(origins.size());
  const auto views = static_cast<int64_t>(sources.cameras.size());
  const auto samples =
      trace_patch_rays(target, sources.cameras, origins, p, m, near, far, stratified, rng);
  const auto opts = model->options();
  const auto feats = sample_feature_grids(sources.grids, samples.pixels.to(opts),
                                          BackboneConfig::kOutputStride);  // N x (B*M) x d
  const auto d = feats.size(2);
  const auto features = feats.permute({1, 0, 2}).reshape({rays, m, views, d});
  const auto ray = model->gnt->ray_features(features, samples.valid, samples.directions.to(opts));
  const auto raw = model->gnt->decode_patch(ray);
  PatchRender out;
  out.components = map_raw_to_components(raw.radiance, raw.direct, raw.backscatter);
  out.ambient = crop_patches(light.ambient, origins, p);
  out.composed = compose(out.components, out.ambient);
  return out;
}

}  // namespace u2nerf
