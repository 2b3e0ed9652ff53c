#pragma once

#include <array>
#include <string>

#include "u2nerf/common.hpp"

namespace u2nerf {

// Self-supervision terms. Every term reduces with a mean over elements, so
// the weights do not depend on batch or patch counts. Patch batches are
// B x p x p x 3 (any leading shape ending in H x W x 3 works).

/// Mean squared error between composed and observed (degraded) patches.
torch::Tensor l_rec(const torch::Tensor& predicted, const torch::Tensor& target);

/// Mean of (V - S)^2 with V = max(R,G,B), S = (V - min) / max(V, eps_S).
torch::Tensor l_con(const torch::Tensor& radiance);

/// Sum over channels of (spatial mean - 0.5)^2 (gray-world prior).
torch::Tensor l_col(const torch::Tensor& radiance);

/// KL(N(mu, exp(log_var)) || N(0, I)) summed over latent dimensions.
torch::Tensor l_kl(const torch::Tensor& mu, const torch::Tensor& log_var);

/// Channel-pair term of l_trans: ratio of clamped logs, squared deviation
/// from its per-patch mean, averaged over pixels and patches.
torch::Tensor l_trans_pair(const torch::Tensor& first_channel, const torch::Tensor& second_channel);

/// Sum of l_trans_pair over (R,G), (R,B), (G,B). Input: B x p x p x 3 or
/// H x W x 3 (treated as one patch).
torch::Tensor l_trans(const torch::Tensor& backscatter);

inline constexpr int kGlobalWindow = 7;

/// Variance inside the w x w window centred at every pixel (reflect padding).
/// Input and output are H x W x C.
torch::Tensor local_variance_map(const torch::Tensor& map, int window = kGlobalWindow);

/// Mean of local_variance_map over all pixels and channels.
torch::Tensor l_glob(const torch::Tensor& ambient, int window = kGlobalWindow);

struct LossWeights {
  double rec = 1.0;
  double con = 0.1;
  double col = 1.0;
  double kl = 1.0;
  double trans = 0.1;
  double glob = 0.1;

  void validate() const;
};

/// The six unweighted terms as (differentiable) scalar tensors.
struct LossTerms {
  torch::Tensor rec, con, col, kl, trans, glob;
};

struct LossReport {
  double rec = 0, con = 0, col = 0, kl = 0, trans = 0, glob = 0;
  double total = 0;
};

inline constexpr std::array<const char*, 6> kLossNames = {"rec", "con", "col", "kl", "trans", "glob"};

/// Weighted sum as a differentiable scalar. Throws naming any non-finite term.
torch::Tensor weighted_total(const LossTerms& terms, const LossWeights& weights);

/// Scalar form of the weighted sum. Throws naming any non-finite term.
LossReport total_loss(const std::array<double, 6>& terms, const LossWeights& weights);

LossReport make_report(const LossTerms& terms, const LossWeights& weights);

}  // namespace u2nerf
