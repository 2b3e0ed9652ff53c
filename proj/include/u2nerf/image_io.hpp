#pragma once

#include <filesystem>

#include "u2nerf/common.hpp"

namespace u2nerf {

/// Reads a PNG or JPEG into an H x W x 3 float64 RGB tensor in [0, 1].
torch::Tensor read_image(const std::filesystem::path& path);

/// Writes an H x W x 3 (or H x W) tensor in [0, 1] as PNG. Values are clamped.
void write_png(const std::filesystem::path& path, const torch::Tensor& image,
               bool sixteen_bit = false);

}  // namespace u2nerf
