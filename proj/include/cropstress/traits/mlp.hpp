#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cropstress/core/plane.hpp"
#include "cropstress/scene/scene.hpp"

namespace cropstress::traits {

enum class TraitKind { LAI, CAB, CCC, FAPAR, FCOVER };

inline constexpr int kNumTraits = 5;

const char* trait_name(TraitKind trait);
TraitKind trait_from_name(const std::string& name);

// Plausibility window per trait (biophysical units).
struct ValidRange {
  double lo = 0.0;
  double hi = 1.0;
};
ValidRange default_valid_range(TraitKind trait);

// Geometry enters the networks as these three derived inputs.
inline constexpr const char* kGeometryInputNames[3] = {
    "cos_view_zenith", "cos_sun_zenith", "cos_rel_azimuth"};

struct GeometryAngles {
  double sun_zenith = 0.0;   // degrees
  double sun_azimuth = 0.0;
  double view_zenith = 0.0;
  double view_azimuth = 0.0;
};

// Loadable feed-forward network: selected inputs are affinely normalized to
// [-1,1], pushed through tanh hidden layers and a linear scalar output, then
// denormalized to trait units.
struct MlpSpec {
  TraitKind trait = TraitKind::LAI;
  std::vector<std::string> input_names;  // band names or geometry inputs
  std::vector<double> input_min;
  std::vector<double> input_max;
  struct Layer {
    std::vector<std::vector<double>> weights;  // [neuron][input]
    std::vector<double> biases;
  };
  std::vector<Layer> hidden;
  std::vector<double> output_weights;
  double output_bias = 0.0;
  double output_min = 0.0;
  double output_max = 1.0;
  ValidRange valid_range;
};

// Throws Error(data) when shapes do not chain or a min/max pair is inverted.
void validate_spec(const MlpSpec& spec);

MlpSpec load_mlp(const std::filesystem::path& path);
void save_mlp(const MlpSpec& spec, const std::filesystem::path& path);

// x -> 2(x-min)/(max-min) - 1, per input.
std::vector<double> normalize_inputs(const MlpSpec& spec, const std::vector<double>& raw);
// y -> (y+1)(max-min)/2 + min.
double denormalize_output(const MlpSpec& spec, double y);

// Raw input vector in spec order (bands from the spectrum, cosines from the
// angles).
std::vector<double> gather_inputs(const MlpSpec& spec,
                                  const std::array<double, scene::kNumBands>& spectrum,
                                  const GeometryAngles& geometry);

struct TraitValue {
  double value = 0.0;
  bool valid = false;
  bool plausible = false;
};

TraitValue infer_trait(const MlpSpec& spec, const scene::Scene::Spectrum& spectrum,
                       const GeometryAngles& geometry);

struct TraitPlane {
  TraitKind trait = TraitKind::LAI;
  core::Plane plane;
  std::vector<std::uint8_t> plausible;  // parallel to plane values
};

// One plane per spec, same order; geometry taken from the scene metadata.
std::vector<TraitPlane> infer_traits_plane(const scene::Scene& scene,
                                           const std::vector<MlpSpec>& specs);

// Deterministic demonstration spec (seeded from the trait name): 8 bands + 3
// geometry inputs, one tanh layer of 5 neurons, output spanning the trait's
// plausibility window. Ships as a loadable stand-in for published weights.
MlpSpec make_reference_spec(TraitKind trait);

}  // namespace cropstress::traits
