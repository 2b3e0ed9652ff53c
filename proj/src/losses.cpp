#include "u2nerf/losses.hpp"

#include <cmath>

namespace u2nerf {

torch::Tensor l_rec(const torch::Tensor& predicted, const torch::Tensor& target) {
  require(predicted.sizes() == target.sizes(), "l_rec shape mismatch: ", predicted.sizes(), " vs ",
          target.sizes());
  return (predicted - target).square().mean();
}

torch::Tensor l_con(const torch::Tensor& radiance) {
  require(radiance.size(-1) == 3, "l_con expects RGB in the last dimension");
  const auto value = std::get<0>(radiance.max(-1));
  const auto minimum = std::get<0>(radiance.min(-1));
  const auto saturation = (value - minimum) / value.clamp_min(kSaturationEps);
  return (value - saturation).square().mean();
}

torch::Tensor l_col(const torch::Tensor& radiance) {
  require(radiance.size(-1) == 3, "l_col expects RGB in the last dimension");
  const auto channel_mean = radiance.reshape({-1, 3}).mean(0);
  return (channel_mean - 0.5).square().sum();
}

torch::Tensor l_kl(const torch::Tensor& mu, const torch::Tensor& log_var) {
  require(mu.sizes() == log_var.sizes(), "l_kl: mu and log_var differ in shape");
  require(log_var.detach().max().item<double>() <= 20.0, "l_kl: log_var exceeds 20");
  return 0.5 * (log_var.exp() + mu.square() - 1.0 - log_var).sum();
}

torch::Tensor l_trans_pair(const torch::Tensor& first_channel, const torch::Tensor& second_channel) {
  require(first_channel.sizes() == second_channel.sizes(), "l_trans: channel shape mismatch");
  require(first_channel.dim() >= 2, "l_trans: channels must be at least 2-D (p x p)");
  const auto clamp_log = [](const torch::Tensor& t) {
    return torch::log(t.clamp(kTransmissionFloor, 1.0 - kTransmissionFloor));
  };
  const auto ratio = clamp_log(first_channel) / clamp_log(second_channel);
  // Per-patch spatial mean over the last two (p x p) dimensions.
  const auto patch_mean = ratio.mean({-2, -1}, /*keepdim=*/true);
  return (ratio - patch_mean).square().mean();
}

torch::Tensor l_trans(const torch::Tensor& backscatter) {
  require(backscatter.dim() >= 3 && backscatter.size(-1) == 3,
          "l_trans expects ... x p x p x 3");
  const auto r = backscatter.select(-1, 0);
  const auto g = backscatter.select(-1, 1);
  const auto b = backscatter.select(-1, 2);
  return l_trans_pair(r, g) + l_trans_pair(r, b) + l_trans_pair(g, b);
}

torch::Tensor local_variance_map(const torch::Tensor& map, int window) {
  require(map.dim() == 3, "local_variance_map expects H x W x C");
  require(window >= 1 && window % 2 == 1, "window must be a positive odd size");
  require(map.size(0) >= window && map.size(1) >= window, "map ", map.size(0), "x", map.size(1),
          " is smaller than the ", window, "x", window, " window");
  const int64_t pad = window / 2;
  auto x = map.permute({2, 0, 1}).unsqueeze(0);  // 1 x C x H x W
  if (pad > 0) {
    x = torch::nn::functional::pad(
        x, torch::nn::functional::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect));
  }
  // Two-pass variance of each window shifted by its center value: exact zero
  // on constants, since the shift cancels before any rounding.
  namespace F = torch::nn::functional;
  const int64_t channels = map.size(2);
  const int64_t area = int64_t{window} * window;
  auto windows = F::unfold(x, F::UnfoldFuncOptions({window, window})).view({channels, area, -1});
  windows = windows - windows.narrow(1, area / 2, 1);
  const auto mean = windows.mean(1, /*keepdim=*/true);
  const auto variance = (windows - mean).square().mean(1);  // C x (H*W)
  return variance.view({channels, map.size(0), map.size(1)}).permute({1, 2, 0});
}

torch::Tensor l_glob(const torch::Tensor& ambient, int window) {
  return local_variance_map(ambient, window).mean();
}

void LossWeights::validate() const {
  for (double w : {rec, con, col, kl, trans, glob}) {
    require(std::isfinite(w) && w >= 0.0, "loss weights must be finite and non-negative");
  }
}

namespace {

std::array<double, 6> weight_array(const LossWeights& w) {
  return {w.rec, w.con, w.col, w.kl, w.trans, w.glob};
}

std::array<torch::Tensor, 6> term_array(const LossTerms& t) {
  return {t.rec, t.con, t.col, t.kl, t.trans, t.glob};
}

}  // namespace

torch::Tensor weighted_total(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  const auto w = weight_array(weights);
  const auto t = term_array(terms);
  torch::Tensor total;
  for (size_t i = 0; i < t.size(); ++i) {
    require(t[i].defined() && t[i].numel() == 1, "loss term ", kLossNames[i], " is not a scalar");
    require(std::isfinite(t[i].item<double>()), "loss term ", kLossNames[i], " is not finite");
    const auto weighted = w[i] * t[i];
    total = total.defined() ? total + weighted : weighted;
  }
  return total;
}

LossReport total_loss(const std::array<double, 6>& terms, const LossWeights& weights) {
  weights.validate();
  const auto w = weight_array(weights);
  LossReport report;
  double* fields[6] = {&report.rec, &report.con, &report.col, &report.kl, &report.trans, &report.glob};
  for (size_t i = 0; i < 6; ++i) {
    require(std::isfinite(terms[i]), "loss term ", kLossNames[i], " is not finite (", terms[i], ")");
    *fields[i] = terms[i];
    report.total += w[i] * terms[i];
  }
  return report;
}

LossReport make_report(const LossTerms& terms, const LossWeights& weights) {
  const auto t = term_array(terms);
  std::array<double, 6> values{};
  for (size_t i = 0; i < 6; ++i) {
    require(t[i].defined(), "loss term ", kLossNames[i], " is missing");
    values[i] = t[i].item<double>();
  }
  return total_loss(values, weights);
}

}  // namespace u2nerf
