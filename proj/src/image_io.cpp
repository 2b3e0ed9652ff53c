#include "u2nerf/image_io.hpp"

#include <algorithm>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace u2nerf {

torch::Tensor read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  require(ext == ".png" || ext == ".jpg" || ext == ".jpeg", "unsupported image format '", ext,
          "' for ", path.string(), " (PNG and JPEG only)");
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  require(!raw.empty(), "cannot decode image ", path.string());
  double scale = 1.0;
  if (raw.depth() == CV_8U) {
    scale = 1.0 / 255.0;
  } else if (raw.depth() == CV_16U) {
    scale = 1.0 / 65535.0;
  } else {
    fail("unsupported pixel depth in ", path.string());
  }
  cv::Mat as_double;
  raw.convertTo(as_double, CV_64FC3, scale);
  auto bgr = torch::from_blob(as_double.data, {as_double.rows, as_double.cols, 3},
                              torch::TensorOptions().dtype(torch::kFloat64));
  return bgr.flip(-1).contiguous();
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image, bool sixteen_bit) {
  require(image.dim() == 3 || image.dim() == 2, "write_png expects H x W x C or H x W");
  auto img = image.detach().to(torch::kCPU, torch::kFloat64).clamp(0.0, 1.0);
  if (img.dim() == 2) img = img.unsqueeze(-1).expand({img.size(0), img.size(1), 3});
  require(img.size(2) == 3, "write_png expects 3 channels");
  img = img.flip(-1).contiguous();
  cv::Mat bgr(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)), CV_64FC3,
              img.data_ptr<double>());
  cv::Mat out;
  if (sixteen_bit) {
    bgr.convertTo(out, CV_16UC3, 65535.0);
  } else {
    bgr.convertTo(out, CV_8UC3, 255.0);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  require(cv::imwrite(path.string(), out), "cannot write ", path.string());
}

}  // namespace u2nerf
