#pragma once

#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "u2nerf/common.hpp"

namespace u2nerf::testing {

inline torch::TensorOptions f64() { return torch::TensorOptions().dtype(torch::kFloat64); }

/// Uniform tensor in [lo, hi) drawn from an explicit generator.
inline torch::Tensor uniform_tensor(std::vector<int64_t> shape, double lo, double hi, Rng& rng) {
  auto t = torch::empty(shape, f64());
  auto* p = t.data_ptr<double>();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = uniform(rng, lo, hi);
  return t;
}

/// Central finite-difference gradient of a scalar function.
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f,
                                      const torch::Tensor& x, double h) {
  auto grad = torch::zeros_like(x);
  auto probe = x.detach().clone();
  auto* p = probe.data_ptr<double>();
  auto* g = grad.data_ptr<double>();
  for (int64_t i = 0; i < probe.numel(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(probe);
    p[i] = keep - h;
    const double down = f(probe);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Autograd gradient of a scalar tensor function.
inline torch::Tensor analytic_gradient(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                       const torch::Tensor& x) {
  auto leaf = x.detach().clone().requires_grad_(true);
  f(leaf).backward();
  return leaf.grad().detach();
}

/// max |a - n| / max |n|, the worst error relative to the gradient scale.
inline double relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
  const double scale = numeric.abs().max().item<double>();
  const double diff = (analytic - numeric).abs().max().item<double>();
  return scale > 0.0 ? diff / scale : diff;
}

inline double fd_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                const torch::Tensor& x, double h = 1e-6) {
  const auto a = analytic_gradient(f, x);
  const auto n = numeric_gradient([&](const torch::Tensor& t) { return f(t).item<double>(); }, x, h);
  return relative_error(a, n);
}

}  // namespace u2nerf::testing
