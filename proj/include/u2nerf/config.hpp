#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "u2nerf/backbone.hpp"
#include "u2nerf/gnt.hpp"
#include "u2nerf/lightnet.hpp"
#include "u2nerf/losses.hpp"

namespace u2nerf {

/// Everything that shapes the networks. Two checkpoints are compatible when
/// their ModelConfigs agree.
struct ModelConfig {
  BackboneConfig backbone;
  TransformerConfig transformer;
  VaeConfig vae;
  torch::Dtype dtype = torch::kFloat32;

  void validate() const;
};

/// Optimisation settings. Defaults follow the single-scene schedule.
struct TrainConfig {
  int64_t steps = 250000;
  int rays_per_batch = 512;
  double lr_backbone = 1e-3;
  double lr_model = 5e-4;
  /// lr(steps) = lr_decay_final * lr(0); exponential in between.
  double lr_decay_final = 0.1;
  int k_min = 1, k_max = 3;
  int n_min = 8, n_max = 12;
  uint64_t seed = 0;
  bool deterministic = false;
  bool stratified = true;
  LossWeights weights;
  int log_every = 100;
  int checkpoint_every = 0;  // 0 = only at the end

  void validate(const ModelConfig& model) const;
  /// Per-step decay factor gamma with gamma^steps = lr_decay_final.
  double decay_per_step() const;
  double learning_rate(double base, int64_t step) const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  /// Tiny networks used by tests and the toy experiment.
  static RunConfig tiny();
  /// Full-size networks (ResNet34 backbone, dim 64, depth 4, M 192).
  static RunConfig full();

  /// Applies `key = value` overrides. Unknown keys throw.
  void apply(const std::map<std::string, std::string>& values);
  static RunConfig from_file(const std::filesystem::path& path, RunConfig base = full());
  /// Canonical `key = value` text; apply(parse(to_text())) is the identity.
  std::string to_text() const;
  static RunConfig from_text(const std::string& text, RunConfig base = full());
};

std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace u2nerf
