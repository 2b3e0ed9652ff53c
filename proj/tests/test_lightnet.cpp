#include <cmath>
#include <numbers>

#include "test_support.hpp"
#include "u2nerf/lightnet.hpp"
#include "u2nerf/losses.hpp"

using namespace u2nerf;
using u2nerf::testing::f64;
using u2nerf::testing::uniform_tensor;

namespace {

VaeConfig small_vae() {
  VaeConfig c;
  c.encoder_widths = {4, 4, 8, 8};
  c.latent_dim = 6;
  c.decoder_widths = {8, 4, 4};
  return c;
}

BackgroundLightNet make_net(uint64_t seed) {
  torch::manual_seed(seed);
  BackgroundLightNet net(small_vae());
  net->to(torch::kFloat64);
  return net;
}

Pose arc_pose(double angle) {
  const Eigen::Vector3d c(3 * std::sin(angle), 0, -3 * std::cos(angle));
  return Pose::look_at(c, Eigen::Vector3d::Zero());
}

}  // namespace

TEST(BackgroundLight, EvalModeIsDeterministic) {
  auto net = make_net(1);
  Rng rng(2), other(99);
  const auto image = uniform_tensor({32, 48, 3}, 0, 1, rng);
  const auto a = net->estimate(image, LatentMode::kEval, rng);
  const auto b = net->estimate(image, LatentMode::kEval, other);
  EXPECT_TRUE(torch::equal(a.ambient, b.ambient));
  EXPECT_TRUE(torch::equal(a.z, a.mu));
}

TEST(BackgroundLight, ShapeAndRange) {
  auto net = make_net(3);
  Rng rng(4);
  const auto image = uniform_tensor({48, 32, 3}, 0, 1, rng);
  const auto out = net->estimate(image, LatentMode::kTrain, rng);
  EXPECT_EQ(out.ambient.sizes(), image.sizes());
  EXPECT_GE(out.ambient.min().item<double>(), 0.0);
  EXPECT_LE(out.ambient.max().item<double>(), 1.0);
  EXPECT_EQ(out.mu.numel(), 6);
  EXPECT_EQ(out.log_var.numel(), 6);
  const double glob = l_glob(out.ambient).item<double>();
  EXPECT_TRUE(std::isfinite(glob));
  EXPECT_GE(glob, 0.0);
}

TEST(BackgroundLight, ZeroNoiseMatchesEval) {
  auto net = make_net(5);
  Rng rng(6);
  const auto image = uniform_tensor({32, 32, 3}, 0, 1, rng);
  const auto eval = net->estimate(image, LatentMode::kEval, rng);
  const auto train = net->estimate(image, LatentMode::kTrain, rng, torch::zeros({6}, f64()));
  EXPECT_LE((eval.ambient - train.ambient).abs().max().item<double>(), 1e-9);
}

TEST(BackgroundLight, TrainModeDrawsFromRng) {
  auto net = make_net(7);
  Rng rng(8);
  const auto image = uniform_tensor({32, 32, 3}, 0, 1, rng);
  Rng a(11), b(11), c(12);
  const auto za = net->estimate(image, LatentMode::kTrain, a).z;
  EXPECT_TRUE(torch::equal(za, net->estimate(image, LatentMode::kTrain, b).z));
  EXPECT_FALSE(torch::equal(za, net->estimate(image, LatentMode::kTrain, c).z));
}

TEST(BackgroundLight, RejectsIndivisibleSize) {
  auto net = make_net(9);
  Rng rng(0);
  EXPECT_THROW(net->estimate(torch::zeros({30, 32, 3}, f64()), LatentMode::kEval, rng), Error);
}

TEST(Reparameterize, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  const auto eta = uniform_tensor({5}, -2, 2, rng);
  const auto probe = uniform_tensor({5}, -1, 1, rng);
  const auto mu_lv = uniform_tensor({2, 5}, -1, 1, rng);
  // Scalar downstream loss: sum(probe * tanh(z)).
  const auto f = [&](const torch::Tensor& x) {
    return (probe * torch::tanh(reparameterize(x[0], x[1], eta))).sum();
  };
  EXPECT_LE(u2nerf::testing::fd_relative_error(f, mu_lv), 1e-5);

  // Closed form: dz/dmu = 1, dz/dlog_var = (z - mu) / 2.
  auto leaf = mu_lv.clone().requires_grad_(true);
  const auto z = reparameterize(leaf[0], leaf[1], eta);
  z.sum().backward();
  EXPECT_TRUE(torch::allclose(leaf.grad()[0], torch::ones({5}, f64()), 0, 1e-15));
  EXPECT_TRUE(torch::allclose(leaf.grad()[1], 0.5 * (z - leaf[0]).detach(), 0, 1e-15));
}

TEST(BackgroundLight, EncoderGradientFlowsThroughSample) {
  auto net = make_net(13);
  Rng rng(14);
  const auto image = uniform_tensor({32, 32, 3}, 0, 1, rng);
  const auto out = net->estimate(image, LatentMode::kTrain, rng);
  (out.ambient.mean() + l_kl(out.mu, out.log_var)).backward();
  double total = 0;
  for (const auto& p : net->parameters()) {
    ASSERT_TRUE(p.grad().defined());
    total += p.grad().abs().sum().item<double>();
  }
  EXPECT_GT(total, 0.0);
}

TEST(SelectNearestSource, SingleSource) {
  const std::vector<Pose> sources{arc_pose(1.0)};
  EXPECT_EQ(select_nearest_source(arc_pose(-2.0), sources), 0u);
}

TEST(SelectNearestSource, CoaxialWins) {
  const Pose target = arc_pose(0.3);
  Pose coaxial = target;
  coaxial.translation -= Eigen::Vector3d(0, 0, 2.0);  // slide back along the axis
  const std::vector<Pose> sources{arc_pose(0.35), coaxial};
  EXPECT_EQ(select_nearest_source(target, sources), 1u);
}

TEST(SelectNearestSource, ArcAgainstBruteForce) {
  std::vector<Pose> sources;
  for (int i = 0; i < 5; ++i) sources.push_back(arc_pose(-0.6 + 0.3 * i));
  // Centered between poses 2 and 3 but looking along pose 2's axis.
  Pose target = arc_pose(0.15);
  target.rotation = sources[2].rotation;
  target.translation = -target.rotation * arc_pose(0.15).center();
  size_t best = 0;
  double best_angle = INFINITY;
  for (size_t i = 0; i < sources.size(); ++i) {
    const double angle =
        std::acos(std::clamp(target.optical_axis().dot(sources[i].optical_axis()), -1.0, 1.0));
    if (angle < best_angle) {
      best_angle = angle;
      best = i;
    }
  }
  EXPECT_EQ(best, 2u);
  EXPECT_EQ(select_nearest_source(target, sources), best);
}

TEST(SelectNearestSource, EmptyIsAnError) {
  EXPECT_THROW(select_nearest_source(Pose{}, std::vector<Pose>{}), Error);
}

TEST(StandardNormal, ReproducibleFromSeed) {
  Rng a(3), b(3);
  const auto x = standard_normal(1000, a, f64());
  EXPECT_TRUE(torch::equal(x, standard_normal(1000, b, f64())));
  EXPECT_NEAR(x.mean().item<double>(), 0.0, 0.15);
  EXPECT_NEAR(x.std().item<double>(), 1.0, 0.1);
}
