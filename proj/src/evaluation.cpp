#include "u2nerf/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "u2nerf/geometry.hpp"
#include "u2nerf/image_io.hpp"
#include "u2nerf/losses.hpp"

namespace u2nerf {
namespace F = torch::nn::functional;

namespace {

void check_rgb(const torch::Tensor& image, const char* what) {
  require(image.dim() == 3 && image.size(2) == 3, what, " expects an H x W x 3 RGB image, got ",
          image.sizes());
}

torch::Tensor gaussian_window(int size, double sigma) {
  auto x = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g = torch::exp(-(x * x) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g).view({1, 1, size, size});
}

// Block statistics over the k1 x k2 whole blocks of an H x W (x C) map;
// the remainder rows and columns are ignored.
std::pair<torch::Tensor, torch::Tensor> block_extrema(const torch::Tensor& map, int block) {
  const auto m = map.dim() == 2 ? map.unsqueeze(-1) : map;
  const int64_t k1 = m.size(0) / block;
  const int64_t k2 = m.size(1) / block;
  require(k1 >= 1 && k2 >= 1, "image smaller than one ", block, "x", block, " block");
  const auto blocks = m.narrow(0, 0, k1 * block)
                          .narrow(1, 0, k2 * block)
                          .reshape({k1, block, k2, block, m.size(2)})
                          .permute({0, 2, 1, 3, 4})
                          .reshape({k1, k2, -1});
  return {std::get<0>(blocks.max(-1)), std::get<0>(blocks.min(-1))};
}

double trimmed_mean(torch::Tensor values, double trim) {
  values = std::get<0>(values.flatten().sort());
  const int64_t k = values.numel();
  const auto lo = static_cast<int64_t>(std::ceil(trim * k));
  const auto hi = static_cast<int64_t>(std::floor(trim * k));
  require(k - lo - hi > 0, "trimmed mean of an empty set");
  return values.narrow(0, lo, k - lo - hi).mean().item<double>();
}

torch::Tensor sobel_magnitude(const torch::Tensor& channel) {
  const auto kx = torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, torch::kFloat64)
                      .view({1, 1, 3, 3});
  const auto ky = kx.transpose(2, 3).contiguous();
  const auto x = F::pad(channel.view({1, 1, channel.size(0), channel.size(1)}),
                        F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  const auto gx = F::conv2d(x, kx);
  const auto gy = F::conv2d(x, ky);
  return torch::sqrt(gx * gx + gy * gy).view({channel.size(0), channel.size(1)});
}

// Enhancement measure: 2 / (k1 k2) sum log(max / min); zero extrema count as 1.
double eme(const torch::Tensor& map, int block) {
  auto [mx, mn] = block_extrema(map, block);
  mx = torch::where(mx == 0, torch::ones_like(mx), mx);
  mn = torch::where(mn == 0, torch::ones_like(mn), mn);
  return 2.0 / static_cast<double>(mx.numel()) * torch::log(mx / mn).sum().item<double>();
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b, double cap) {
  require(a.sizes() == b.sizes(), "psnr: shapes ", a.sizes(), " and ", b.sizes(), " differ");
  return psnr_from_mse((a.to(torch::kFloat64) - b.to(torch::kFloat64)).square().mean().item<double>(), cap);
}

double psnr_from_mse(double mse, double cap) {
  require(mse >= 0.0, "psnr: negative mse ", mse);
  if (mse == 0.0) return cap;
  return std::min(cap, -10.0 * std::log10(mse));
}

torch::Tensor luma(const torch::Tensor& image) {
  check_rgb(image, "luma");
  const auto x = image.to(torch::kFloat64);
  return 0.299 * x.select(2, 0) + 0.587 * x.select(2, 1) + 0.114 * x.select(2, 2);
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.sizes() == b.sizes(), "ssim: shapes ", a.sizes(), " and ", b.sizes(), " differ");
  const auto ya = a.dim() == 3 ? luma(a) : a.to(torch::kFloat64);
  const auto yb = b.dim() == 3 ? luma(b) : b.to(torch::kFloat64);
  constexpr int kWindow = 11;
  require(ya.size(0) >= kWindow && ya.size(1) >= kWindow, "ssim needs images of at least 11x11");
  const auto w = gaussian_window(kWindow, 1.5);
  const auto filt = [&](const torch::Tensor& t) {
    return F::conv2d(t.view({1, 1, t.size(0), t.size(1)}), w);
  };
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const auto mu1 = filt(ya);
  const auto mu2 = filt(yb);
  const auto s11 = filt(ya * ya) - mu1 * mu1;
  const auto s22 = filt(yb * yb) - mu2 * mu2;
  const auto s12 = filt(ya * yb) - mu1 * mu2;
  const auto map = ((2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)) /
                   ((mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2));
  return map.mean().item<double>();
}

double uicm(const torch::Tensor& image) {
  check_rgb(image, "uicm");
  const auto x = image.to(torch::kFloat64) * 255.0;
  const auto r = x.select(2, 0), g = x.select(2, 1), b = x.select(2, 2);
  const auto rg = r - g;
  const auto yb = 0.5 * (r + g) - b;
  const double mu_rg = trimmed_mean(rg, kUicmTrim);
  const double mu_yb = trimmed_mean(yb, kUicmTrim);
  const double var_rg = (rg - mu_rg).square().mean().item<double>();
  const double var_yb = (yb - mu_yb).square().mean().item<double>();
  return -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);
}

double uism(const torch::Tensor& image) {
  check_rgb(image, "uism");
  const auto x = image.to(torch::kFloat64) * 255.0;
  const double lambda[3] = {0.299, 0.587, 0.114};
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const auto channel = x.select(2, c).contiguous();
    auto mag = sobel_magnitude(channel);
    const double peak = mag.max().item<double>();
    if (peak > 0.0) mag = mag * (255.0 / peak);
    total += lambda[c] * eme(mag * channel / 255.0, kUiqmBlock);
  }
  return total;
}

double uiconm(const torch::Tensor& image) {
  check_rgb(image, "uiconm");
  const auto x = image.to(torch::kFloat64) * 255.0;
  const auto [mx, mn] = block_extrema(x, kUiqmBlock);
  const auto top = mx - mn;
  const auto bot = mx + mn;
  const auto used = (top > 0).logical_and(bot > 0);
  const auto ratio = torch::where(used, top / torch::where(used, bot, torch::ones_like(bot)),
                                  torch::ones_like(top));
  // ratio == 1 where unused, so those blocks contribute r log r = 0.
  return -(ratio * torch::log(ratio)).sum().item<double>() / static_cast<double>(mx.numel());
}

UiqmComponents uiqm_components(const torch::Tensor& image) {
  UiqmComponents c;
  c.uicm = uicm(image);
  c.uism = uism(image);
  c.uiconm = uiconm(image);
  c.uiqm = kUiqmC1 * c.uicm + kUiqmC2 * c.uism + kUiqmC3 * c.uiconm;
  return c;
}

double uiqm(const torch::Tensor& image) { return uiqm_components(image).uiqm; }

torch::Tensor rgb_to_lab(const torch::Tensor& image) {
  check_rgb(image, "rgb_to_lab");
  const auto x = image.to(torch::kFloat64).clamp(0.0, 1.0);
  const auto lin = torch::where(x <= 0.04045, x / 12.92, torch::pow((x + 0.055) / 1.055, 2.4));
  const auto m = torch::tensor({{0.4124564, 0.3575761, 0.1804375},
                                {0.2126729, 0.7151522, 0.0721750},
                                {0.0193339, 0.1191920, 0.9503041}},
                               torch::kFloat64);
  auto xyz = torch::matmul(lin, m.t());
  xyz = xyz / torch::tensor({0.95047, 1.0, 1.08883}, torch::kFloat64);
  constexpr double kDelta = 6.0 / 29.0;
  const auto f = torch::where(xyz > kDelta * kDelta * kDelta, torch::pow(xyz, 1.0 / 3.0),
                              xyz / (3.0 * kDelta * kDelta) + 4.0 / 29.0);
  const auto fx = f.select(2, 0), fy = f.select(2, 1), fz = f.select(2, 2);
  return torch::stack({116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)}, 2);
}

UciqeComponents uciqe_from_lab(const torch::Tensor& lab) {
  require(lab.dim() == 3 && lab.size(2) == 3, "uciqe expects H x W x 3 Lab");
  const auto l = lab.select(2, 0).flatten() / 100.0;
  const auto a = lab.select(2, 1).flatten() / 100.0;
  const auto b = lab.select(2, 2).flatten() / 100.0;
  const auto chroma = torch::sqrt(a * a + b * b);
  const auto denom = torch::sqrt(chroma * chroma + l * l);
  const auto sat = torch::where(denom > 0, chroma / torch::where(denom > 0, denom, torch::ones_like(denom)),
                                torch::zeros_like(denom));
  UciqeComponents c;
  c.chroma_std = chroma.std(/*unbiased=*/false).item<double>();
  c.luma_contrast = (torch::quantile(l, 0.99) - torch::quantile(l, 0.01)).item<double>();
  c.saturation_mean = sat.mean().item<double>();
  c.uciqe = kUciqeW1 * c.chroma_std + kUciqeW2 * c.luma_contrast + kUciqeW3 * c.saturation_mean;
  return c;
}

UciqeComponents uciqe_components(const torch::Tensor& image) { return uciqe_from_lab(rgb_to_lab(image)); }

double uciqe(const torch::Tensor& image) { return uciqe_components(image).uciqe; }

std::vector<size_t> nearest_views(const SceneDataset& dataset, const Pose& target, int count,
                                  std::optional<size_t> exclude) {
  std::vector<Pose> poses;
  for (const auto& cam : dataset.cameras) poses.push_back(cam.pose);
  auto ranked = rank_by_nearness(target, poses, exclude);
  require(!ranked.empty(), "no source views available");
  ranked.resize(std::min(ranked.size(), static_cast<size_t>(std::max(count, 1))));
  return ranked;
}

ViewComponents render_view(U2NerfModel& model, const SceneDataset& dataset, const Camera& target,
                           int source_count, std::optional<size_t> exclude, int patches_per_chunk) {
  const int p = model->config().transformer.patch_size;
  const int w = target.intrinsics.width;
  const int h = target.intrinsics.height;
  require(w % p == 0 && h % p == 0, "image size ", w, "x", h, " is not divisible by patch size ", p);
  torch::NoGradGuard guard;
  model->eval();
  Rng rng(0);  // unused: deterministic samples and z = mu
  const auto sources = nearest_views(dataset, target.pose, source_count, exclude);
  const auto ctx = prepare_sources(model, dataset, sources);
  const auto light = estimate_light(model, dataset, target.pose, sources, LatentMode::kEval, rng);
  require(light.ambient.size(0) == h && light.ambient.size(1) == w,
          "nearest source image size differs from the target view");
  std::vector<PatchOrigin> all;
  for (int y = 0; y < h; y += p) {
    for (int x = 0; x < w; x += p) all.push_back({x, y});
  }
  std::vector<torch::Tensor> j, td, tb, a, i;
  for (size_t start = 0; start < all.size(); start += patches_per_chunk) {
    const std::vector<PatchOrigin> chunk(all.begin() + start,
                                         all.begin() + std::min(all.size(), start + patches_per_chunk));
    const auto r = render_patches(model, ctx, light, target, chunk, dataset.near, dataset.far, false, rng);
    j.push_back(r.components.radiance);
    td.push_back(r.components.direct_transmission);
    tb.push_back(r.components.backscatter_transmission);
    a.push_back(r.ambient);
    i.push_back(r.composed);
  }
  const auto assemble = [&](const std::vector<torch::Tensor>& parts) {
    return torch::cat(parts)
        .view({h / p, w / p, p, p, 3})
        .permute({0, 2, 1, 3, 4})
        .reshape({h, w, 3})
        .to(torch::kFloat64);
  };
  return {assemble(j), assemble(i), assemble(td), assemble(tb), assemble(a)};
}

ComponentProvider oracle_provider(const ToyScene& scene) {
  return [&scene](size_t v) {
    ViewComponents c;
    c.radiance = scene.clean.at(v);
    c.direct_transmission = scene.direct_transmission(v);
    c.backscatter_transmission = scene.backscatter_transmission(v);
    c.ambient = scene.ambient_map(v);
    c.composed = compose({c.radiance, c.direct_transmission, c.backscatter_transmission}, c.ambient);
    return c;
  };
}

ComponentProvider model_provider(U2NerfModel& model, const SceneDataset& dataset, int source_count) {
  return [&model, &dataset, source_count](size_t v) {
    return render_view(model, dataset, dataset.cameras.at(v), source_count, v);
  };
}

std::map<std::string, double> read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open score file ", path.string());
  std::map<std::string, double> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string id;
    double score = 0.0;
    require(static_cast<bool>(fields >> id >> score), path.string(), ":", number,
            ": expected 'view_id score'");
    out[id] = score;
  }
  return out;
}

std::string config_hash(const std::string& config_text) {
  const auto value = crc32(0L, reinterpret_cast<const Bytef*>(config_text.data()),
                           static_cast<uInt>(config_text.size()));
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(value));
  return buf;
}

MetricsReport evaluate_views(const SceneDataset& dataset, const std::vector<size_t>& views,
                             const ComponentProvider& provider, const std::vector<torch::Tensor>* clean,
                             const std::map<std::string, double>* lpips) {
  require(!views.empty(), "no views to evaluate");
  MetricsReport report;
  double psnr_sum = 0, ssim_sum = 0, lp_sum = 0;
  size_t lp_count = 0;
  for (size_t v : views) {
    require(v < dataset.size(), "view ", v, " out of range");
    const auto c = provider(v);
    ViewMetrics m;
    m.view_id = dataset.view_ids.at(v);
    m.psnr_input = psnr(c.composed, dataset.images[v]);
    if (clean) {
      m.psnr = psnr(c.radiance, clean->at(v));
      m.ssim = ssim(c.radiance, clean->at(v));
      psnr_sum += *m.psnr;
      ssim_sum += *m.ssim;
    }
    m.uiqm = uiqm(c.radiance);
    m.uciqe = uciqe(c.radiance);
    m.l_trans = l_trans(c.backscatter_transmission.to(torch::kFloat64)).item<double>();
    if (lpips) {
      if (const auto it = lpips->find(m.view_id); it != lpips->end()) {
        m.lpips = it->second;
        lp_sum += it->second;
        ++lp_count;
      }
    }
    report.mean.psnr_input += m.psnr_input;
    report.mean.uiqm += m.uiqm;
    report.mean.uciqe += m.uciqe;
    report.mean.l_trans += m.l_trans;
    report.views.push_back(std::move(m));
  }
  const double n = static_cast<double>(views.size());
  report.mean.view_id = "mean";
  report.mean.psnr_input /= n;
  report.mean.uiqm /= n;
  report.mean.uciqe /= n;
  report.mean.l_trans /= n;
  if (clean) {
    report.mean.psnr = psnr_sum / n;
    report.mean.ssim = ssim_sum / n;
  }
  if (lp_count > 0) report.mean.lpips = lp_sum / static_cast<double>(lp_count);
  return report;
}

namespace {

nlohmann::json to_json(const ViewMetrics& m) {
  nlohmann::json j = {{"view", m.view_id},   {"psnr_input", m.psnr_input}, {"uiqm", m.uiqm},
                      {"uciqe", m.uciqe},    {"l_trans", m.l_trans}};
  j["psnr"] = m.psnr ? nlohmann::json(*m.psnr) : nlohmann::json(nullptr);
  j["ssim"] = m.ssim ? nlohmann::json(*m.ssim) : nlohmann::json(nullptr);
  j["lpips"] = m.lpips ? nlohmann::json(*m.lpips) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), "cannot write report ", path.string());
  for (const auto& v : report.views) {
    auto j = to_json(v);
    j["scene"] = report.scene_id;
    j["config_hash"] = report.config_hash;
    out << j.dump() << '\n';
  }
  auto summary = to_json(report.mean);
  summary["scene"] = report.scene_id;
  summary["config_hash"] = report.config_hash;
  summary["summary"] = true;
  summary["views"] = report.views.size();
  out << summary.dump() << '\n';

  std::ofstream table(path.string() + ".txt");
  const auto cell = [](const std::optional<double>& v) {
    std::ostringstream os;
    if (v) {
      os << std::fixed << std::setprecision(4) << *v;
    } else {
      os << "-";
    }
    return os.str();
  };
  table << std::left << std::setw(16) << "view" << std::setw(10) << "psnr" << std::setw(10) << "ssim"
        << std::setw(10) << "uiqm" << std::setw(10) << "uciqe" << std::setw(10) << "lpips" << '\n';
  auto row = [&](const ViewMetrics& m) {
    table << std::left << std::setw(16) << m.view_id << std::setw(10) << cell(m.psnr) << std::setw(10)
          << cell(m.ssim) << std::setw(10) << cell(m.uiqm) << std::setw(10) << cell(m.uciqe)
          << std::setw(10) << cell(m.lpips) << '\n';
  };
  for (const auto& v : report.views) row(v);
  row(report.mean);
}

void write_components(const ViewComponents& view, const std::filesystem::path& dir,
                      const std::string& stem, bool sixteen_bit) {
  write_png(dir / (stem + "_J.png"), view.radiance, sixteen_bit);
  write_png(dir / (stem + "_I.png"), view.composed, sixteen_bit);
  write_png(dir / (stem + "_TD.png"), view.direct_transmission, sixteen_bit);
  write_png(dir / (stem + "_TB.png"), view.backscatter_transmission, sixteen_bit);
  write_png(dir / (stem + "_A.png"), view.ambient, sixteen_bit);
}

Camera interpolate_camera(const SceneDataset& dataset, double t) {
  require(dataset.size() >= 1, "empty dataset");
  if (dataset.size() == 1) return dataset.cameras[0];
  const double s = std::clamp(t, 0.0, 1.0) * static_cast<double>(dataset.size() - 1);
  const auto i = std::min(static_cast<size_t>(s), dataset.size() - 2);
  const double f = s - static_cast<double>(i);
  const auto& a = dataset.cameras[i];
  const auto& b = dataset.cameras[i + 1];
  const Eigen::Quaterniond qa(a.pose.rotation), qb(b.pose.rotation);
  const Eigen::Matrix3d r = qa.slerp(f, qb).normalized().toRotationMatrix();
  const Eigen::Vector3d c = (1.0 - f) * a.pose.center() + f * b.pose.center();
  Camera out = a;
  out.pose.rotation = r;
  out.pose.translation = -r * c;
  return out;
}

void render_sequence(U2NerfModel& model, const SceneDataset& dataset, int frames, int source_count,
                     const std::filesystem::path& dir) {
  require(frames >= 1, "frames must be >= 1");
  std::filesystem::create_directories(dir);
  for (int k = 0; k < frames; ++k) {
    const double t = frames == 1 ? 0.0 : static_cast<double>(k) / (frames - 1);
    const auto view = render_view(model, dataset, interpolate_camera(dataset, t), source_count);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", k);
    write_png(dir / name, view.radiance);
  }
}

}  // namespace u2nerf
