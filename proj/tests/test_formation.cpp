#include <cmath>

#include "test_support.hpp"
#include "u2nerf/formation.hpp"

using namespace u2nerf;
using u2nerf::testing::f64;
using u2nerf::testing::uniform_tensor;

namespace {

struct RandomPatch {
  ComponentPatch c;
  torch::Tensor a;
};

RandomPatch random_patch(Rng& rng, std::vector<int64_t> shape = {2, 4, 4, 3}) {
  return {{uniform_tensor(shape, 0, 1, rng), uniform_tensor(shape, kTransmissionFloor, 1, rng),
           uniform_tensor(shape, kTransmissionFloor, 1, rng)},
          uniform_tensor(shape, 0, 1, rng)};
}

}  // namespace

TEST(MapRaw, ZeroRaw) {
  const auto z = torch::zeros({4, 4, 3}, f64());
  const auto c = map_raw_to_components(z, z, z);
  EXPECT_TRUE(torch::allclose(c.radiance, torch::full_like(z, 0.5), 0, 1e-15));
  const double t = kTransmissionFloor + (1 - kTransmissionFloor) * 0.5;
  EXPECT_NEAR(c.direct_transmission.max().item<double>(), t, 1e-15);
  EXPECT_NEAR(c.backscatter_transmission.min().item<double>(), t, 1e-15);
}

TEST(MapRaw, SaturatesAtBounds) {
  const auto big = torch::full({2, 2, 3}, 1e3, f64());
  const auto c = map_raw_to_components(big, big, -big);
  EXPECT_EQ(c.radiance.min().item<double>(), 1.0);
  EXPECT_EQ(c.direct_transmission.min().item<double>(), 1.0);
  EXPECT_NEAR(c.backscatter_transmission.max().item<double>(), kTransmissionFloor, 1e-15);
  EXPECT_NO_THROW(c.validate());
}

TEST(MapRaw, ScalarSigmoid) {
  const auto one = torch::ones({1, 1, 3}, f64());
  const auto c = map_raw_to_components(one, one, one);
  EXPECT_NEAR(c.radiance[0][0][0].item<double>(), 0.7310585786, 1e-9);
  EXPECT_NEAR(c.radiance[0][0][0].item<double>(), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Compose, ClearWaterIsIdentity) {
  Rng rng(2);
  const auto j = uniform_tensor({8, 8, 3}, 0, 1, rng);
  const auto ones = torch::ones_like(j);
  const auto out = compose({j, ones, ones}, uniform_tensor({8, 8, 3}, 0, 1, rng));
  EXPECT_TRUE(torch::equal(out, j));
}

TEST(Compose, BlackSceneFullBackscatter) {
  Rng rng(2);
  const auto a = uniform_tensor({3, 3, 3}, 0, 1, rng);
  const auto zero = torch::zeros_like(a);
  const auto floor = torch::full_like(a, kTransmissionFloor);
  const auto out = compose({zero, floor, floor}, a);
  EXPECT_TRUE(torch::allclose(out, (1 - kTransmissionFloor) * a, 0, 1e-15));
}

TEST(Compose, ScalarExample) {
  const auto s = [](double v) { return torch::full({1, 1, 3}, v, f64()); };
  const auto out = compose({s(0.6), s(0.7), s(0.4)}, s(0.5));
  EXPECT_NEAR(out[0][0][0].item<double>(), 0.72, 1e-15);
}

TEST(Compose, RejectsOutOfRange) {
  const auto s = [](double v) { return torch::full({1, 1, 3}, v, f64()); };
  EXPECT_THROW(compose({s(1.2), s(0.5), s(0.5)}, s(0.5)), Error);
  EXPECT_THROW(compose({s(0.5), s(0.0), s(0.5)}, s(0.5)), Error);
  EXPECT_THROW(compose({s(0.5), s(0.5), s(0.5)}, s(-0.1)), Error);
  EXPECT_THROW(compose({s(NAN), s(0.5), s(0.5)}, s(0.5)), Error);
  EXPECT_THROW(compose({s(0.5), s(0.5), torch::full({1, 2, 3}, 0.5, f64())}, s(0.5)), Error);
}

TEST(Compose, OutputBoundedAndMonotoneInAmbient) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_patch(rng);
    const auto out = compose(p.c, p.a);
    EXPECT_GE(out.min().item<double>(), 0.0);
    // J <= 1 and A <= 1 bound I by T_D + 1 - T_B.
    const auto bound = p.c.direct_transmission + 1 - p.c.backscatter_transmission;
    EXPECT_TRUE((out <= bound).all().item<bool>());
    const auto brighter = torch::clamp(p.a + uniform_tensor({2, 4, 4, 3}, 0, 0.5, rng), 0, 1);
    EXPECT_TRUE((compose(p.c, brighter) >= out).all().item<bool>());
  }
}

TEST(ComposeGradients, TrivialCases) {
  const auto ones = torch::ones({2, 2, 3}, f64());
  const auto j = torch::full_like(ones, 0.3);
  const auto a = torch::full_like(ones, 0.6);
  const auto g = compose_gradients({j, ones, torch::full_like(ones, 0.2)}, a, ones);
  EXPECT_TRUE(torch::equal(g.radiance, ones));
  EXPECT_TRUE((g.backscatter_transmission <= 0).all().item<bool>());
}

TEST(ComposeGradients, MatchesFiniteDifferences) {
  Rng rng(4);
  auto p = random_patch(rng, {4, 4, 3});
  // Keep the probes away from the range edges.
  p.c.radiance = p.c.radiance * 0.8 + 0.1;
  p.c.direct_transmission = p.c.direct_transmission * 0.8 + 0.1;
  p.c.backscatter_transmission = p.c.backscatter_transmission * 0.8 + 0.1;
  p.a = p.a * 0.8 + 0.1;
  const auto up = uniform_tensor({4, 4, 3}, -1, 1, rng);
  const auto g = compose_gradients(p.c, p.a, up);
  const auto scalar = [&](int which) {
    return [&, which](const torch::Tensor& x) {
      ComponentPatch c = p.c;
      torch::Tensor a = p.a;
      if (which == 0) c.radiance = x;
      if (which == 1) c.direct_transmission = x;
      if (which == 2) c.backscatter_transmission = x;
      if (which == 3) a = x;
      return (compose(c, a) * up).sum().item<double>();
    };
  };
  const torch::Tensor inputs[] = {p.c.radiance, p.c.direct_transmission, p.c.backscatter_transmission, p.a};
  const torch::Tensor analytic[] = {g.radiance, g.direct_transmission, g.backscatter_transmission, g.ambient};
  for (int w = 0; w < 4; ++w) {
    const auto numeric = u2nerf::testing::numeric_gradient(scalar(w), inputs[w], 1e-6);
    EXPECT_LE(u2nerf::testing::relative_error(analytic[w], numeric), 1e-6) << "input " << w;
  }
}

TEST(ComposeGradients, AgreesWithAutograd) {
  Rng rng(6);
  auto p = random_patch(rng);
  const auto up = uniform_tensor({2, 4, 4, 3}, -1, 1, rng);
  auto j = p.c.radiance.clone().requires_grad_(true);
  auto td = p.c.direct_transmission.clone().requires_grad_(true);
  auto tb = p.c.backscatter_transmission.clone().requires_grad_(true);
  auto a = p.a.clone().requires_grad_(true);
  (compose({j, td, tb}, a) * up).sum().backward();
  const auto g = compose_gradients(p.c, p.a, up);
  EXPECT_TRUE(torch::allclose(j.grad(), g.radiance, 0, 1e-15));
  EXPECT_TRUE(torch::allclose(td.grad(), g.direct_transmission, 0, 1e-15));
  EXPECT_TRUE(torch::allclose(tb.grad(), g.backscatter_transmission, 0, 1e-15));
  EXPECT_TRUE(torch::allclose(a.grad(), g.ambient, 0, 1e-15));
}
