#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "u2nerf/checkpoint.hpp"
#include "u2nerf/config.hpp"
#include "u2nerf/data_io.hpp"
#include "u2nerf/losses.hpp"
#include "u2nerf/pipeline.hpp"

namespace u2nerf {

struct Batch {
  size_t target = 0;
  int k = 1;
  int n = 1;
  std::vector<size_t> sources;
  std::vector<PatchOrigin> origins;
  torch::Tensor target_patches;  // B x p x p x 3, degraded observations
};

/// Target view uniform over the dataset, k and N uniform over their ranges,
/// sources from the k*N nearest views, patch origins on the stride-p grid
/// drawn without replacement.
Batch build_batch(const SceneDataset& dataset, const TrainConfig& config, int patch_size, Rng& rng);

/// Forward pass plus losses for one batch (no parameter update).
LossTerms evaluate_batch(U2NerfModel& model, const SceneDataset& dataset, const Batch& batch,
                         bool stratified, Rng& rng, PatchRender* render = nullptr);

/// Learning rates of the (backbone, model) groups at `step`.
std::array<double, 2> learning_rates(const TrainConfig& config, int64_t step);

/// Checkpoint array names for the model: "<prefix>.<param>" for parameters
/// and buffers.
std::vector<NamedTensor> model_arrays(U2NerfModel& model);

/// Copies matching arrays into the model. Throws listing every missing or
/// shape-mismatched entry.
void load_model_arrays(U2NerfModel& model, const Checkpoint& checkpoint);

/// Builds a model from a checkpoint's config snapshot and loads its weights.
U2NerfModel model_from_checkpoint(const Checkpoint& checkpoint);

/// Owns the model, the Adam optimiser and the random stream of one run.
class Trainer {
 public:
  Trainer(const RunConfig& config, SceneDataset dataset);

  /// Draws a batch and applies one update.
  LossReport step();
  /// One update on a given batch (lr schedule, NaN guard, Adam step).
  LossReport train_step(const Batch& batch);

  /// Runs until `config.train.steps`; writes one JSON line per logged step.
  void run(const std::optional<std::filesystem::path>& log_path = std::nullopt,
           const std::function<bool(int64_t, const LossReport&)>& callback = {});

  Checkpoint checkpoint() const;
  /// Restores weights, optimiser moments, step counter and rng state. The
  /// checkpoint's model config must match.
  void restore(const Checkpoint& checkpoint);
  /// Loads pretrained weights only; optimiser and step start fresh.
  void load_weights(const Checkpoint& checkpoint);

  int64_t step_count() const { return step_; }
  const RunConfig& config() const { return config_; }
  RunConfig& mutable_config() { return config_; }
  U2NerfModel& model() { return model_; }
  const SceneDataset& dataset() const { return dataset_; }
  Rng& rng() { return rng_; }

 private:
  void reset_optimizer();

  RunConfig config_;
  SceneDataset dataset_;
  U2NerfModel model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::vector<std::pair<std::string, torch::Tensor>> named_params_;
  Rng rng_;
  int64_t step_ = 0;
};

/// Fine-tunes a pretrained checkpoint on a scene. `config` carries the
/// fine-tuning schedule; its model section must match the checkpoint.
Checkpoint finetune(const Checkpoint& pretrained, const SceneDataset& scene, const RunConfig& config,
                    const std::optional<std::filesystem::path>& log_path = std::nullopt);

/// Fine-tuning defaults: 50k steps, 256 rays, rates 5e-4 / 2e-4.
RunConfig finetune_defaults(RunConfig base);

/// Rejects model sections that differ, listing each differing key.
void check_compatible(const ModelConfig& expected, const ModelConfig& actual);

/// Serialises an rng state to text and back.
std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

/// Config snapshot of the model section only.
std::string model_config_text(const RunConfig& config);

}  // namespace u2nerf
