#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "u2nerf/evaluation.hpp"
#include "u2nerf/trainer.hpp"

using namespace u2nerf;
using u2nerf::testing::f64;
using u2nerf::testing::uniform_tensor;

namespace {

// Independent windowed SSIM: explicit Gaussian weights and centred moments.
double naive_ssim(const torch::Tensor& x, const torch::Tensor& y) {
  const int win = 11;
  double g[win], total = 0;
  for (int i = 0; i < win; ++i) total += (g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5)));
  for (double& v : g) v /= total;
  const auto a = x.accessor<double, 2>();
  const auto b = y.accessor<double, 2>();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0;
  int count = 0;
  for (int64_t top = 0; top + win <= x.size(0); ++top) {
    for (int64_t left = 0; left + win <= x.size(1); ++left) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          ma += g[i] * g[j] * a[top + i][left + j];
          mb += g[i] * g[j] * b[top + i][left + j];
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double da = a[top + i][left + j] - ma, db = b[top + i][left + j] - mb;
          va += g[i] * g[j] * da * da;
          vb += g[i] * g[j] * db * db;
          cov += g[i] * g[j] * da * db;
        }
      }
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / count;
}

RunConfig micro_config() {
  auto c = RunConfig::tiny();
  c.model.dtype = torch::kFloat64;
  c.model.backbone.feature_width = 4;
  c.model.transformer.dim = 8;
  c.model.transformer.depth = 1;
  c.model.transformer.ff_hidden = 16;
  c.model.transformer.samples_per_ray = 4;
  c.model.transformer.patch_size = 4;
  c.model.transformer.decoder_width = 8;
  c.model.transformer.ray_heads = 2;
  c.model.vae.encoder_widths = {4, 4, 4, 4};
  c.model.vae.latent_dim = 4;
  c.model.vae.decoder_widths = {4, 4, 4};
  c.train.n_min = c.train.n_max = 2;
  return c;
}

const ToyScene& toy() {
  static const ToyScene scene = make_toy_scene(ToySceneConfig{.views = 4, .size = 16});
  return scene;
}

}  // namespace

TEST(Psnr, Anchors) {
  Rng rng(1);
  const auto a = uniform_tensor({5, 5, 3}, 0, 1, rng);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_EQ(psnr(a, a, 60.0), 60.0);
  EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
  EXPECT_NEAR(psnr_from_mse(0.0025), 26.0206, 1e-4);
  // 3 of 75 entries off by 0.5: MSE = 0.75 / 75 = 0.01.
  auto b = a.clone();
  b[0][0][0] += 0.5;
  b[2][3][1] += 0.5;
  b[4][4][2] -= 0.5;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  EXPECT_THROW(psnr(a, b.slice(0, 0, 4)), Error);
}

TEST(Ssim, IdentityIsExactlyOne) {
  Rng rng(2);
  const auto a = uniform_tensor({24, 20, 3}, 0, 1, rng);
  EXPECT_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, NegativeImageAgainstNaiveOracle) {
  Rng rng(3);
  const auto a = uniform_tensor({24, 28, 3}, 0, 1, rng);
  const double s = ssim(a, 1.0 - a);
  EXPECT_LT(s, 0.2);
  EXPECT_GE(s, -1.0);
  EXPECT_NEAR(s, naive_ssim(luma(a), luma(1.0 - a)), 1e-9);
  const auto b = (a + uniform_tensor({24, 28, 3}, -0.2, 0.2, rng)).clamp(0, 1);
  EXPECT_NEAR(ssim(a, b), naive_ssim(luma(a), luma(b)), 1e-9);
}

TEST(Ssim, ConstantClosedForm) {
  const double m1 = 0.3, m2 = 0.7;
  const double c1 = 1e-4;
  const double expected = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  EXPECT_NEAR(ssim(torch::full({16, 16, 3}, m1, f64()), torch::full({16, 16, 3}, m2, f64())), expected, 1e-12);
}

TEST(Uiqm, GrayImageHasNoColourfulness) {
  const auto gray = torch::full({20, 30, 3}, 0.4, f64());
  EXPECT_NEAR(uicm(gray), 0.0, 1e-12);
  EXPECT_NEAR(uism(gray), 0.0, 1e-12);
  const auto c = uiqm_components(gray);
  EXPECT_NEAR(c.uiqm, kUiqmC1 * c.uicm + kUiqmC2 * c.uism + kUiqmC3 * c.uiconm, 1e-12);
  EXPECT_EQ(uiqm(gray), c.uiqm);
}

TEST(Uiqm, ColourAndTextureRaiseComponents) {
  Rng rng(4);
  // Chroma spread is rewarded; a uniform cast is only penalised.
  auto tinted = torch::full({40, 40, 3}, 0.4, f64());
  tinted.select(-1, 0).fill_(0.8);
  EXPECT_LT(uicm(tinted), 0.0);
  EXPECT_GT(uicm(uniform_tensor({40, 40, 3}, 0, 1, rng)), 0.0);
  const auto texture = uniform_tensor({40, 40, 3}, 0, 1, rng);
  EXPECT_GT(uism(texture), uism(torch::full({40, 40, 3}, 0.5, f64())));
  EXPECT_TRUE(std::isfinite(uiconm(texture)));
  EXPECT_THROW(uiqm(torch::zeros({4, 4, 2}, f64())), Error);
}

TEST(Uciqe, GrayHasZeroSaturation) {
  const auto gray = torch::full({16, 16, 3}, 0.6, f64());
  const auto c = uciqe_components(gray);
  EXPECT_NEAR(c.saturation_mean, 0.0, 1e-6);
  EXPECT_NEAR(c.chroma_std, 0.0, 1e-6);
  EXPECT_NEAR(c.uciqe, kUciqeW1 * c.chroma_std + kUciqeW2 * c.luma_contrast + kUciqeW3 * c.saturation_mean,
              1e-12);
}

TEST(Uciqe, LabReferenceColours) {
  auto white = torch::ones({1, 1, 3}, f64());
  const auto lw = rgb_to_lab(white);
  EXPECT_NEAR(lw[0][0][0].item<double>(), 100.0, 1e-3);
  EXPECT_NEAR(lw[0][0][1].item<double>(), 0.0, 1e-3);
  EXPECT_NEAR(lw[0][0][2].item<double>(), 0.0, 1e-3);
  // sRGB red under D65.
  const auto lr = rgb_to_lab(torch::tensor({1.0, 0.0, 0.0}, f64()).view({1, 1, 3}));
  EXPECT_NEAR(lr[0][0][0].item<double>(), 53.24, 0.05);
  EXPECT_NEAR(lr[0][0][1].item<double>(), 80.09, 0.05);
  EXPECT_NEAR(lr[0][0][2].item<double>(), 67.20, 0.05);
}

TEST(Uciqe, ChromaStdIsHomogeneous) {
  Rng rng(5);
  auto lab = torch::empty({12, 12, 3}, f64());
  lab.select(-1, 0).copy_(uniform_tensor({12, 12}, 20, 80, rng));
  lab.select(-1, 1).copy_(uniform_tensor({12, 12}, -30, 30, rng));
  lab.select(-1, 2).copy_(uniform_tensor({12, 12}, -30, 30, rng));
  auto doubled = lab.clone();
  doubled.narrow(-1, 1, 2).mul_(2.0);
  EXPECT_NEAR(uciqe_from_lab(doubled).chroma_std, 2.0 * uciqe_from_lab(lab).chroma_std, 1e-12);
}

TEST(Uciqe, DistributionTermsIgnorePixelOrder) {
  Rng rng(6);
  const auto image = uniform_tensor({16, 16, 3}, 0, 1, rng);
  const auto perm = torch::randperm(256, torch::kLong);
  const auto shuffled = image.view({256, 3}).index_select(0, perm).view({16, 16, 3});
  const auto a = uciqe_components(image), b = uciqe_components(shuffled);
  EXPECT_NEAR(a.chroma_std, b.chroma_std, 1e-12);
  EXPECT_NEAR(a.saturation_mean, b.saturation_mean, 1e-12);
  EXPECT_NEAR(a.luma_contrast, b.luma_contrast, 1e-12);
}

TEST(RenderView, ShapesConsistencyAndDeterminism) {
  torch::manual_seed(1);
  const auto cfg = micro_config();
  U2NerfModel model(cfg.model);
  const auto& ds = toy().dataset;
  const auto a = render_view(model, ds, ds.cameras[1], 2, 1, 5);
  for (const auto& t : {a.radiance, a.composed, a.direct_transmission, a.backscatter_transmission, a.ambient}) {
    EXPECT_EQ(t.sizes(), (std::vector<int64_t>{16, 16, 3}));
    EXPECT_EQ(t.scalar_type(), torch::kFloat64);
  }
  const auto recomposed = compose({a.radiance, a.direct_transmission, a.backscatter_transmission}, a.ambient);
  EXPECT_LE((recomposed - a.composed).abs().max().item<double>(), 1e-6);
  const auto b = render_view(model, ds, ds.cameras[1], 2, 1, 5);
  EXPECT_TRUE(torch::equal(a.radiance, b.radiance));
  EXPECT_TRUE(torch::equal(a.composed, b.composed));
  // Chunking only regroups patches.
  const auto c = render_view(model, ds, ds.cameras[1], 2, 1);
  EXPECT_LE((a.composed - c.composed).abs().max().item<double>(), 1e-12);
}

TEST(RenderView, NearestViewsExcludeTarget) {
  const auto& ds = toy().dataset;
  const auto v = nearest_views(ds, ds.cameras[2].pose, 2, 2);
  ASSERT_EQ(v.size(), 2u);
  for (size_t i : v) EXPECT_NE(i, 2u);
  EXPECT_EQ(std::set<size_t>(v.begin(), v.end()), (std::set<size_t>{1, 3}));
}

TEST(Evaluate, OracleComponentsAreExact) {
  const auto& scene = toy();
  std::vector<size_t> views{0, 1, 2, 3};
  const auto report = evaluate_views(scene.dataset, views, oracle_provider(scene), &scene.clean);
  for (const auto& m : report.views) {
    ASSERT_TRUE(m.psnr.has_value());
    EXPECT_EQ(*m.psnr, kPsnrCap);
    EXPECT_EQ(*m.ssim, 1.0);
    EXPECT_LT(m.l_trans, 1e-10);
    EXPECT_GT(m.psnr_input, 40.0);
  }
  EXPECT_EQ(*report.mean.psnr, kPsnrCap);
}

TEST(Evaluate, ReportAndScoreHook) {
  const auto& scene = toy();
  const auto dir = std::filesystem::temp_directory_path() / "u2nerf_test_report";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream scores(dir / "lpips.txt");
    scores << "# external scores\n" << scene.dataset.view_ids[0] << " 0.25\n" << scene.dataset.view_ids[2] << " 0.75\n";
  }
  const auto lpips = read_score_file(dir / "lpips.txt");
  EXPECT_EQ(lpips.size(), 2u);
  auto report = evaluate_views(scene.dataset, {0, 1, 2}, oracle_provider(scene), nullptr, &lpips);
  report.scene_id = "toy";
  report.config_hash = config_hash("dim = 8\n");
  EXPECT_EQ(report.config_hash.size(), 8u);
  EXPECT_NE(report.config_hash, config_hash("dim = 9\n"));
  EXPECT_FALSE(report.views[0].psnr.has_value());
  EXPECT_EQ(*report.views[0].lpips, 0.25);
  EXPECT_FALSE(report.views[1].lpips.has_value());
  EXPECT_NEAR(*report.mean.lpips, 0.5, 1e-15);
  write_report(report, dir / "report.jsonl");

  std::ifstream in(dir / "report.jsonl");
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0]["scene"], "toy");
  EXPECT_EQ(lines[0]["config_hash"], report.config_hash);
  EXPECT_TRUE(lines[3]["summary"].get<bool>());
  EXPECT_TRUE(std::filesystem::exists(dir / "report.jsonl.txt"));
}

TEST(Sequence, InterpolationHitsEndpoints) {
  const auto& ds = toy().dataset;
  const auto first = interpolate_camera(ds, 0.0);
  const auto last = interpolate_camera(ds, 1.0);
  EXPECT_LT((first.pose.rotation - ds.cameras.front().pose.rotation).norm(), 1e-12);
  EXPECT_LT((last.pose.center() - ds.cameras.back().pose.center()).norm(), 1e-12);
  const auto mid = interpolate_camera(ds, 0.5);
  EXPECT_NO_THROW(mid.pose.validate());
}
