#include "u2nerf/formation.hpp"

#include <limits>

namespace u2nerf {
namespace {

// Slack for range checks: a few ulps of the working precision.
double range_slack(const torch::Tensor& t) {
  return t.scalar_type() == torch::kFloat64 ? 8.0 * std::numeric_limits<double>::epsilon()
                                            : 8.0 * std::numeric_limits<float>::epsilon();
}

void check_range(const torch::Tensor& t, double lo, double hi, const char* name) {
  require(all_finite(t), name, " has non-finite values");
  const double slack = range_slack(t);
  const auto d = t.detach();
  const double min = d.min().item<double>();
  const double max = d.max().item<double>();
  require(min >= lo - slack && max <= hi + slack, name, " outside [", lo, ", ", hi, "]: min=", min,
          " max=", max);
}

}  // namespace

void ComponentPatch::validate() const {
  require(radiance.defined() && direct_transmission.defined() && backscatter_transmission.defined(),
          "component patch is missing a map");
  require(radiance.sizes() == direct_transmission.sizes() &&
              radiance.sizes() == backscatter_transmission.sizes(),
          "component maps differ in shape: J ", radiance.sizes(), ", T_D ",
          direct_transmission.sizes(), ", T_B ", backscatter_transmission.sizes());
  check_range(radiance, 0.0, 1.0, "scene radiance J");
  check_range(direct_transmission, kTransmissionFloor, 1.0, "direct transmission T_D");
  check_range(backscatter_transmission, kTransmissionFloor, 1.0, "backscatter transmission T_B");
}

ComponentPatch map_raw_to_components(const torch::Tensor& raw_radiance,
                                     const torch::Tensor& raw_direct,
                                     const torch::Tensor& raw_backscatter) {
  require(raw_radiance.sizes() == raw_direct.sizes() &&
              raw_radiance.sizes() == raw_backscatter.sizes(),
          "raw component maps differ in shape");
  const auto transmission = [](const torch::Tensor& raw) {
    return 1.0 - (1.0 - kTransmissionFloor) * torch::sigmoid(-raw);
  };
  return {torch::sigmoid(raw_radiance), transmission(raw_direct), transmission(raw_backscatter)};
}

torch::Tensor compose(const ComponentPatch& components, const torch::Tensor& ambient) {
  components.validate();
  require(ambient.sizes() == components.radiance.sizes(), "ambient patch shape ", ambient.sizes(),
          " does not match components ", components.radiance.sizes());
  check_range(ambient, 0.0, 1.0, "background light A");
  return components.radiance * components.direct_transmission +
         (1.0 - components.backscatter_transmission) * ambient;
}

ComposeGradients compose_gradients(const ComponentPatch& components, const torch::Tensor& ambient,
                                   const torch::Tensor& upstream) {
  require(upstream.sizes() == components.radiance.sizes(), "upstream gradient shape mismatch");
  require(ambient.sizes() == components.radiance.sizes(), "ambient patch shape mismatch");
  return {
      upstream * components.direct_transmission,
      upstream * components.radiance,
      -upstream * ambient,
      upstream * (1.0 - components.backscatter_transmission),
  };
}

}  // namespace u2nerf
