#pragma once

#include <array>
#include <vector>

#include "u2nerf/backbone.hpp"
#include "u2nerf/config.hpp"
#include "u2nerf/data_io.hpp"
#include "u2nerf/formation.hpp"
#include "u2nerf/gnt.hpp"
#include "u2nerf/lightnet.hpp"

namespace u2nerf {

/// Backbone, transformer renderer and background-light VAE. Parameter names
/// are prefixed with "backbone.", "gnt." and "lightnet.".
class U2NerfModelImpl : public torch::nn::Module {
 public:
  explicit U2NerfModelImpl(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  torch::TensorOptions options() const { return torch::TensorOptions().dtype(config_.dtype); }

  FeatureExtractor backbone{nullptr};
  GntRenderer gnt{nullptr};
  BackgroundLightNet lightnet{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(U2NerfModel);

/// Feature grids and cameras of the source views used for one target.
struct SourceContext {
  torch::Tensor grids;  // N x d x H/4 x W/4
  std::vector<Camera> cameras;
  std::vector<size_t> view_ids;
};

SourceContext prepare_sources(U2NerfModel& model, const SceneDataset& dataset,
                              const std::vector<size_t>& sources);

/// Background light from the source whose optical axis is nearest to the
/// target's.
BackgroundLight estimate_light(U2NerfModel& model, const SceneDataset& dataset,
                               const Pose& target, const std::vector<size_t>& sources,
                               LatentMode mode, Rng& rng);

/// Top-left pixel (x, y) of a p x p patch.
using PatchOrigin = std::array<int, 2>;

struct PatchRender {
  ComponentPatch components;  // B x p x p x 3 each
  torch::Tensor ambient;      // A cropped at the patches, B x p x p x 3
  torch::Tensor composed;     // I, B x p x p x 3
};

/// Epipolar samples for B patch rays: the ray through each patch center is
/// sampled M times in [near, far] and projected into every source view.
struct EpipolarSamples {
  torch::Tensor pixels;      // N x (B*M) x 2, source image pixels
  torch::Tensor valid;       // B x M x N, bool
  torch::Tensor directions;  // B x 3, unit world directions
};

EpipolarSamples trace_patch_rays(const Camera& target, const std::vector<Camera>& sources,
                                 const std::vector<PatchOrigin>& origins, int patch_size,
                                 int samples, double near, double far, bool stratified, Rng& rng);

/// Renders B patches of the target view and composes them with A.
PatchRender render_patches(U2NerfModel& model, const SourceContext& sources,
                           const BackgroundLight& light, const Camera& target,
                           const std::vector<PatchOrigin>& origins, double near, double far,
                           bool stratified, Rng& rng);

/// Gathers B x p x p x C crops of an H x W x C map.
torch::Tensor crop_patches(const torch::Tensor& map, const std::vector<PatchOrigin>& origins,
                           int patch_size);

}  // namespace u2nerf
