#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

namespace u2nerf {

/// Error raised for every contract violation in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Explicit random source. Never global; passed by reference into every
/// operation that draws samples.
using Rng = std::mt19937_64;

/// Lower bound of the transmission maps. Keeps |log T| <= ~9.2.
inline constexpr double kTransmissionFloor = 1e-4;

/// Guard in the saturation denominator of the contrast loss.
inline constexpr double kSaturationEps = 1e-6;

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw Error(os.str());
}

template <typename... Args>
void require(bool condition, Args&&... args) {
  if (!condition) fail(std::forward<Args>(args)...);
}

/// Draws a double uniformly from [lo, hi).
inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Draws an integer uniformly from [lo, hi] (inclusive).
inline int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

/// True when every element of `t` is finite.
inline bool all_finite(const torch::Tensor& t) {
  return torch::isfinite(t).all().item<bool>();
}

}  // namespace u2nerf
