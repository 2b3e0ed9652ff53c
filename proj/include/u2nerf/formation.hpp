#pragma once

#include "u2nerf/common.hpp"

namespace u2nerf {

/// Per-patch decomposition. All three tensors share a shape ending in 3
/// (e.g. B x p x p x 3). J in [0, 1]; T_D, T_B in [kTransmissionFloor, 1].
struct ComponentPatch {
  torch::Tensor radiance;               // J
  torch::Tensor direct_transmission;    // T_D
  torch::Tensor backscatter_transmission;  // T_B

  /// Throws when shapes differ, values are non-finite or out of range.
  void validate() const;
};

/// Global background light estimate for one target view.
struct BackgroundLight {
  torch::Tensor ambient;  // A, H x W x 3 in [0, 1]
  torch::Tensor mu;       // latent mean
  torch::Tensor log_var;  // latent log variance, <= 20
  torch::Tensor z;        // sampled latent
};

/// J = sigmoid(raw_J); T = eps_T + (1 - eps_T) sigmoid(raw_T), evaluated as
/// 1 - (1 - eps_T) sigmoid(-raw_T) so T never exceeds 1 in finite precision.
ComponentPatch map_raw_to_components(const torch::Tensor& raw_radiance,
                                     const torch::Tensor& raw_direct,
                                     const torch::Tensor& raw_backscatter);

/// Underwater image formation: I = J T_D + (1 - T_B) A, element-wise.
torch::Tensor compose(const ComponentPatch& components, const torch::Tensor& ambient);

struct ComposeGradients {
  torch::Tensor radiance;
  torch::Tensor direct_transmission;
  torch::Tensor backscatter_transmission;
  torch::Tensor ambient;
};

/// Hand-derived vector-Jacobian product of compose for an upstream gradient.
ComposeGradients compose_gradients(const ComponentPatch& components, const torch::Tensor& ambient,
                                   const torch::Tensor& upstream);

}  // namespace u2nerf
