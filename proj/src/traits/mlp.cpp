#include "cropstress/traits/mlp.hpp"

#include <cmath>
#include <numbers>

#include "cropstress/core/error.hpp"
#include "cropstress/core/jsonio.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::traits {

using core::ErrorKind;
using core::require;

namespace {

constexpr const char* kTraitNames[kNumTraits] = {"LAI", "CAB", "CCC", "FAPAR", "FCOVER"};

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Input slots 0..11 are bands; 12..14 the geometry cosines.
int resolve_input(const std::string& name) {
  for (int g = 0; g < 3; ++g) {
    if (name == kGeometryInputNames[g]) return scene::kNumBands + g;
  }
  return static_cast<int>(scene::band_from_name(name));
}

}  // namespace

const char* trait_name(TraitKind trait) { return kTraitNames[static_cast<int>(trait)]; }

TraitKind trait_from_name(const std::string& name) {
  for (int i = 0; i < kNumTraits; ++i) {
    if (name == kTraitNames[i]) return static_cast<TraitKind>(i);
  }
  core::fail(ErrorKind::data, "unknown trait name: '" + name + "'");
}

ValidRange default_valid_range(TraitKind trait) {
  switch (trait) {
    case TraitKind::LAI:
      return {0.0, 8.0};
    case TraitKind::CAB:
    case TraitKind::CCC:
      return {0.0, 600.0};
    case TraitKind::FAPAR:
    case TraitKind::FCOVER:
      return {0.0, 1.0};
  }
  core::fail(ErrorKind::config, "unreachable trait kind");
}

void validate_spec(const MlpSpec& spec) {
  const std::size_t n_in = spec.input_names.size();
  require(n_in >= 1, ErrorKind::data, "MLP spec needs at least one input");
  require(spec.input_min.size() == n_in && spec.input_max.size() == n_in, ErrorKind::data,
          "MLP input min/max lists must match the input count");
  for (std::size_t i = 0; i < n_in; ++i) {
    resolve_input(spec.input_names[i]);  // throws on unknown name
    require(spec.input_min[i] < spec.input_max[i], ErrorKind::data,
            "MLP input '" + spec.input_names[i] + "' needs min < max");
  }

  std::size_t width = n_in;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const auto& layer = spec.hidden[l];
    require(!layer.weights.empty(), ErrorKind::data, "MLP hidden layer is empty");
    require(layer.biases.size() == layer.weights.size(), ErrorKind::data,
            "MLP hidden layer bias count must equal neuron count");
    for (const auto& row : layer.weights) {
      require(row.size() == width, ErrorKind::data,
              "MLP hidden layer " + std::to_string(l) + " expects weight rows of width " +
                  std::to_string(width));
    }
    width = layer.weights.size();
  }
  require(spec.output_weights.size() == width, ErrorKind::data,
          "MLP output layer expects " + std::to_string(width) + " weights");
  require(spec.output_min < spec.output_max, ErrorKind::data,
          "MLP output needs min < max");
  require(spec.valid_range.lo < spec.valid_range.hi, ErrorKind::data,
          "MLP valid_range needs lo < hi");
}

MlpSpec load_mlp(const std::filesystem::path& path) {
  const core::Json j = core::load_json(path);
  const std::string what = path.string();

  MlpSpec spec;
  spec.trait = trait_from_name(core::get_string(j, "trait", what));

  const core::Json& inputs = core::member(j, "inputs", what);
  require(inputs.is_array() && !inputs.empty(), ErrorKind::data,
          what + ": 'inputs' must be a non-empty array");
  for (const auto& in : inputs) {
    spec.input_names.push_back(core::get_string(in, "name", what));
    spec.input_min.push_back(core::get_number(in, "min", what));
    spec.input_max.push_back(core::get_number(in, "max", what));
  }

  const core::Json& layers = core::member(j, "hidden_layers", what);
  require(layers.is_array(), ErrorKind::data, what + ": 'hidden_layers' must be an array");
  for (const auto& l : layers) {
    MlpSpec::Layer layer;
    const core::Json& w = core::member(l, "weights", what);
    require(w.is_array(), ErrorKind::data, what + ": layer weights must be an array");
    for (const auto& row : w) {
      require(row.is_array(), ErrorKind::data, what + ": weight rows must be arrays");
      layer.weights.push_back(row.get<std::vector<double>>());
    }
    layer.biases = core::member(l, "biases", what).get<std::vector<double>>();
    spec.hidden.push_back(std::move(layer));
  }

  const core::Json& out = core::member(j, "output", what);
  spec.output_weights = core::member(out, "weights", what).get<std::vector<double>>();
  spec.output_bias = core::get_number(out, "bias", what);
  spec.output_min = core::get_number(j, "output_min", what);
  spec.output_max = core::get_number(j, "output_max", what);

  if (auto it = j.find("valid_range"); it != j.end()) {
    require(it->is_array() && it->size() == 2, ErrorKind::data,
            what + ": 'valid_range' must be [lo, hi]");
    spec.valid_range = {(*it)[0].get<double>(), (*it)[1].get<double>()};
  } else {
    spec.valid_range = default_valid_range(spec.trait);
  }

  validate_spec(spec);
  return spec;
}

void save_mlp(const MlpSpec& spec, const std::filesystem::path& path) {
  validate_spec(spec);
  core::Json j;
  j["trait"] = trait_name(spec.trait);
  core::Json inputs = core::Json::array();
  for (std::size_t i = 0; i < spec.input_names.size(); ++i) {
    inputs.push_back({{"name", spec.input_names[i]},
                      {"min", spec.input_min[i]},
                      {"max", spec.input_max[i]}});
  }
  j["inputs"] = std::move(inputs);
  core::Json layers = core::Json::array();
  for (const auto& layer : spec.hidden) {
    layers.push_back({{"weights", layer.weights}, {"biases", layer.biases}});
  }
  j["hidden_layers"] = std::move(layers);
  j["output"] = {{"weights", spec.output_weights}, {"bias", spec.output_bias}};
  j["output_min"] = spec.output_min;
  j["output_max"] = spec.output_max;
  j["valid_range"] = {spec.valid_range.lo, spec.valid_range.hi};
  core::spit(path, j.dump(2) + "\n");
}

std::vector<double> normalize_inputs(const MlpSpec& spec, const std::vector<double>& raw) {
  require(raw.size() == spec.input_names.size(), ErrorKind::config,
          "raw input vector length mismatch");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = 2.0 * (raw[i] - spec.input_min[i]) / (spec.input_max[i] - spec.input_min[i]) - 1.0;
  }
  return out;
}

double denormalize_output(const MlpSpec& spec, double y) {
  return (y + 1.0) * (spec.output_max - spec.output_min) / 2.0 + spec.output_min;
}

std::vector<double> gather_inputs(const MlpSpec& spec,
                                  const std::array<double, scene::kNumBands>& spectrum,
                                  const GeometryAngles& geometry) {
  const double geo[3] = {
      std::cos(geometry.view_zenith * kDegToRad),
      std::cos(geometry.sun_zenith * kDegToRad),
      std::cos((geometry.sun_azimuth - geometry.view_azimuth) * kDegToRad),
  };
  std::vector<double> raw(spec.input_names.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const int slot = resolve_input(spec.input_names[i]);
    raw[i] = slot < scene::kNumBands ? spectrum[slot] : geo[slot - scene::kNumBands];
  }
  return raw;
}

TraitValue infer_trait(const MlpSpec& spec, const scene::Scene::Spectrum& spectrum,
                       const GeometryAngles& geometry) {
  if (!spectrum.valid) return {};

  std::vector<double> act = normalize_inputs(spec, gather_inputs(spec, spectrum.values, geometry));
  for (const auto& layer : spec.hidden) {
    std::vector<double> next(layer.weights.size());
    for (std::size_t n = 0; n < layer.weights.size(); ++n) {
      double z = layer.biases[n];
      const auto& row = layer.weights[n];
      for (std::size_t i = 0; i < row.size(); ++i) z += row[i] * act[i];
      next[n] = std::tanh(z);
    }
    act = std::move(next);
  }
  double y = spec.output_bias;
  for (std::size_t i = 0; i < act.size(); ++i) y += spec.output_weights[i] * act[i];

  TraitValue out;
  out.value = denormalize_output(spec, y);
  out.valid = true;
  out.plausible = out.value >= spec.valid_range.lo && out.value <= spec.valid_range.hi;
  return out;
}

std::vector<TraitPlane> infer_traits_plane(const scene::Scene& scene,
                                           const std::vector<MlpSpec>& specs) {
  const int w = scene.meta.width;
  const int h = scene.meta.height;
  const GeometryAngles geometry{scene.meta.sun_zenith, scene.meta.sun_azimuth,
                                scene.meta.view_zenith, scene.meta.view_azimuth};

  std::vector<TraitPlane> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    validate_spec(spec);
    TraitPlane tp;
    tp.trait = spec.trait;
    tp.plane = core::Plane(w, h, 0.0, false);
    tp.plausible.assign(static_cast<std::size_t>(w) * h, 0);
    out.push_back(std::move(tp));
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto spectrum = scene.pixel_spectrum(x, y);
      if (!spectrum.valid) continue;
      for (std::size_t s = 0; s < specs.size(); ++s) {
        const TraitValue tv = infer_trait(specs[s], spectrum, geometry);
        out[s].plane.set(x, y, tv.value, tv.valid);
        out[s].plausible[out[s].plane.index(x, y)] = tv.plausible ? 1 : 0;
      }
    }
  }
  return out;
}

MlpSpec make_reference_spec(TraitKind trait) {
  core::Rng rng(core::fnv1a64(std::string("trait-spec-") + trait_name(trait)));

  MlpSpec spec;
  spec.trait = trait;
  const scene::BandId bands[] = {
      scene::BandId::B3, scene::BandId::B4, scene::BandId::B5,  scene::BandId::B6,
      scene::BandId::B7, scene::BandId::B8, scene::BandId::B8A, scene::BandId::B11,
  };
  for (scene::BandId b : bands) {
    spec.input_names.push_back(scene::band_name(b));
    spec.input_min.push_back(0.0);
    spec.input_max.push_back(1.2);
  }
  spec.input_names.push_back(kGeometryInputNames[0]);
  spec.input_min.push_back(0.7);
  spec.input_max.push_back(1.0);
  spec.input_names.push_back(kGeometryInputNames[1]);
  spec.input_min.push_back(0.2);
  spec.input_max.push_back(1.0);
  spec.input_names.push_back(kGeometryInputNames[2]);
  spec.input_min.push_back(-1.0);
  spec.input_max.push_back(1.0);

  MlpSpec::Layer layer;
  for (int n = 0; n < 5; ++n) {
    std::vector<double> row(spec.input_names.size());
    for (auto& w : row) w = rng.uniform(-0.8, 0.8);
    layer.weights.push_back(std::move(row));
    layer.biases.push_back(rng.uniform(-0.2, 0.2));
  }
  spec.hidden.push_back(std::move(layer));
  spec.output_weights.resize(5);
  for (auto& w : spec.output_weights) w = rng.uniform(-0.8, 0.8);
  spec.output_bias = 0.0;

  spec.valid_range = default_valid_range(trait);
  spec.output_min = spec.valid_range.lo;
  spec.output_max = spec.valid_range.hi;

  validate_spec(spec);
  return spec;
}

}  // namespace cropstress::traits
