#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cropstress/core/error.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/phenology/weather.hpp"
#include "cropstress/synth/synth.hpp"
#include "cropstress/traits/mlp.hpp"

namespace cropstress::synth {

using core::ErrorKind;
using core::require;
using scene::BandId;

namespace {

// Every trait network is the same invertible shape: one input band, one tanh
// unit with unit weights, so band = g^-1(trait) has a closed form.
struct TraitShape {
  BandId input;
  double out_min;
  double out_max;
};

constexpr double kInputMin = 0.0;
constexpr double kInputMax = 1.0;

TraitShape trait_shape(traits::TraitKind trait) {
  switch (trait) {
    case traits::TraitKind::LAI:    return {BandId::B8, 0.0, 8.0};
    case traits::TraitKind::CAB:    return {BandId::B5, 0.0, 600.0};
    case traits::TraitKind::CCC:    return {BandId::B9, -200.0, 500.0};
    case traits::TraitKind::FAPAR:  return {BandId::B8A, -0.6, 1.4};
    case traits::TraitKind::FCOVER: return {BandId::B4, 0.0, 1.0};
  }
  core::fail(ErrorKind::config, "unreachable trait kind");
}

double shape_inverse(const TraitShape& s, double trait_value) {
  const double z = 2.0 * (trait_value - s.out_min) / (s.out_max - s.out_min) - 1.0;
  require(z > -1.0 && z < 1.0, ErrorKind::config,
          "trait target outside the invertible output range");
  const double u = std::atanh(z);
  return kInputMin + (u + 1.0) * (kInputMax - kInputMin) / 2.0;
}

traits::MlpSpec build_spec(traits::TraitKind trait) {
  const TraitShape s = trait_shape(trait);
  traits::MlpSpec spec;
  spec.trait = trait;
  spec.input_names = {scene::band_name(s.input)};
  spec.input_min = {kInputMin};
  spec.input_max = {kInputMax};
  traits::MlpSpec::Layer layer;
  layer.weights = {{1.0}};
  layer.biases = {0.0};
  spec.hidden = {layer};
  spec.output_weights = {1.0};
  spec.output_bias = 0.0;
  spec.output_min = s.out_min;
  spec.output_max = s.out_max;
  spec.valid_range = traits::default_valid_range(trait);
  return spec;
}

// Trapezoid over the season fraction u in [0, 1], proportions taken from the
// step profile.
double season_value(const TrapezoidProfile& p, double u) {
  const double rise = static_cast<double>(p.rise) / p.steps;
  const double fall = static_cast<double>(p.fall) / p.steps;
  if (u < rise) return u / rise;
  if (u > 1.0 - fall) return (1.0 - u) / fall;
  return 1.0;
}

bool season_plateau(const TrapezoidProfile& p, double u) {
  const double rise = static_cast<double>(p.rise) / p.steps;
  const double fall = static_cast<double>(p.fall) / p.steps;
  return u >= rise && u <= 1.0 - fall;
}

struct TargetShape {
  double lo;     // early/late season level
  double hi;     // plateau level
  double noise;  // native-unit standard deviation
  double clamp_lo;
  double clamp_hi;
};

constexpr TargetShape kNdmiShape = {0.05, 0.35, 0.03, -0.8, 0.8};
constexpr TargetShape kCireShape = {0.20, 2.00, 0.10, -0.5, 7.0};
constexpr TargetShape kCccShape = {15.0, 180.0, 8.0, -150.0, 450.0};
constexpr TargetShape kFaparShape = {0.05, 0.80, 0.04, -0.5, 1.3};

double draw_target(const TargetShape& shape, double v, double offset_sd, core::Rng& rng) {
  const double mean = shape.lo + (shape.hi - shape.lo) * v + offset_sd * shape.noise;
  return std::clamp(mean + rng.normal(0.0, shape.noise), shape.clamp_lo, shape.clamp_hi);
}

std::string scene_dir_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", k);
  return buf;
}

}  // namespace

void validate_field_spec(const FieldSpec& spec) {
  require(spec.n_fields >= 2, ErrorKind::config, "campaign needs at least 2 fields");
  require(spec.margin >= 1, ErrorKind::config, "field margin must be >= 1");
  require(spec.width > 2 * spec.margin + 1 && spec.height > 2 * spec.margin + 1,
          ErrorKind::config, "field too small for its background margin");
  require(spec.scenes_per_field >= 12, ErrorKind::config,
          "campaign needs at least 12 scenes per field");
  require(spec.transplant < spec.harvest, ErrorKind::config,
          "transplant must precede harvest");
  require(core::days_between(spec.transplant, spec.harvest) >=
              2 * spec.scenes_per_field,
          ErrorKind::config, "season too short for the scene count");
}

CampaignResult gen_scene_series(const FieldSpec& fields, const SynthConfig& config,
                                const std::filesystem::path& root) {
  validate_field_spec(fields);
  validate_synth_config(config);
  for (const std::string& name : config.informative) {
    require(name == "NDMI" || name == "CHL_RED_EDGE" || name == "CCC" || name == "FAPAR",
            ErrorKind::config,
            "scene synthesis can only steer NDMI, CHL_RED_EDGE, CCC and FAPAR; got '" + name +
                "'");
  }
  const auto offset_for = [&](const char* name) {
    for (std::size_t i = 0; i < config.informative.size(); ++i) {
      if (config.informative[i] == name) return config.offsets[i];
    }
    return 0.0;
  };
  const double off_ndmi = offset_for("NDMI");
  const double off_cire = offset_for("CHL_RED_EDGE");
  const double off_ccc = offset_for("CCC");
  const double off_fapar = offset_for("FAPAR");

  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) {
    core::fail(ErrorKind::io, "cannot create " + root.string() + ": " + ec.message());
  }

  CampaignResult result;
  result.registry = root / "fields.json";
  result.weather_csv = root / "weather.csv";

  // shared season weather; always-warm days keep cumulative GDD strictly rising
  {
    core::Rng rng(core::Rng::derive(config.seed, core::fnv1a64("synth-weather"), 0));
    const std::int64_t season = core::days_between(fields.transplant, fields.harvest);
    phenology::WeatherSeries weather;
    for (std::int64_t d = -3; d <= season + 3; ++d) {
      const double u = static_cast<double>(d) / static_cast<double>(season);
      phenology::WeatherDay day;
      day.date = fields.transplant.plus_days(d);
      day.t_min = 11.0 + 4.0 * std::sin(3.14159265358979323846 * std::clamp(u, 0.0, 1.0)) +
                  rng.uniform(-0.5, 0.5);
      day.t_max = day.t_min + 8.0 + rng.uniform(0.0, 2.0);
      weather.push_back(day);
    }
    phenology::write_weather_csv(weather, result.weather_csv);
  }

  const std::filesystem::path mlp_dir = root / "mlp";
  std::vector<traits::MlpSpec> specs;
  for (int t = 0; t < traits::kNumTraits; ++t) {
    const auto kind = static_cast<traits::TraitKind>(t);
    const traits::MlpSpec spec = build_spec(kind);
    const std::filesystem::path path = mlp_dir / (std::string(traits::trait_name(kind)) + ".json");
    traits::save_mlp(spec, path);
    result.mlp_specs.push_back(path);
    specs.push_back(spec);
  }

  const std::int64_t season = core::days_between(fields.transplant, fields.harvest);
  std::vector<scene::FieldRecord> records;
  for (int fi = 0; fi < fields.n_fields; ++fi) {
    char id[16];
    std::snprintf(id, sizeof(id), "F%02d", fi + 1);
    const scene::FieldLabel label =
        fi % 2 == 0 ? scene::FieldLabel::infested : scene::FieldLabel::clean;

    scene::FieldRecord rec;
    rec.field_id = id;
    rec.label = label;
    rec.transplant_date = fields.transplant;
    rec.harvest_date = fields.harvest;
    rec.scene_dir = std::filesystem::path("fields") / id / "scenes";
    rec.weather_ref = "weather.csv";
    records.push_back(rec);

    CampaignResult::FieldTruth truth;
    truth.field_id = id;
    truth.label = label;
    truth.vegetation = core::Plane(fields.width, fields.height, 0.0);
    for (int y = fields.margin; y < fields.height - fields.margin; ++y) {
      for (int x = fields.margin; x < fields.width - fields.margin; ++x) {
        truth.vegetation.set(x, y, 1.0);
      }
    }

    core::Rng rng(
        core::Rng::derive(config.seed, core::fnv1a64("synth-field"), static_cast<std::uint64_t>(fi)));
    const bool shifted = label == scene::FieldLabel::clean;  // healthy class carries the offsets
    for (int k = 0; k < fields.scenes_per_field; ++k) {
      const std::int64_t day =
          4 + k * (season - 8) / static_cast<std::int64_t>(fields.scenes_per_field - 1);
      const double u = static_cast<double>(day) / static_cast<double>(season);
      const double v = season_value(config.profile, u);
      const bool offset_now =
          shifted && (!config.plateau_only || season_plateau(config.profile, u));

      scene::SceneMeta meta;
      meta.acquisition_date = fields.transplant.plus_days(day);
      meta.cloud_fraction = rng.uniform(0.0, 0.08);
      meta.sun_zenith = 35.0;
      meta.sun_azimuth = 150.0;
      meta.view_zenith = 4.0;
      meta.view_azimuth = 100.0;
      meta.width = fields.width;
      meta.height = fields.height;
      scene::Scene sc = scene::make_scene(meta);

      for (int y = 0; y < fields.height; ++y) {
        for (int x = 0; x < fields.width; ++x) {
          std::array<double, scene::kNumBands> b{};
          if (truth.vegetation.at(x, y) != 0.0) {
            const double ndmi = draw_target(kNdmiShape, v, offset_now ? off_ndmi : 0.0, rng);
            const double cire = draw_target(kCireShape, v, offset_now ? off_cire : 0.0, rng);
            const double ccc = draw_target(kCccShape, v, offset_now ? off_ccc : 0.0, rng);
            const double fapar = draw_target(kFaparShape, v, offset_now ? off_fapar : 0.0, rng);
            b[0] = 0.040 + rng.normal(0.0, 0.002);                      // B1
            b[1] = 0.050 + rng.normal(0.0, 0.003);                      // B2
            b[2] = 0.055 + 0.010 * v + rng.normal(0.0, 0.003);          // B3
            b[3] = std::clamp(0.065 - 0.025 * v + rng.normal(0.0, 0.003), 0.02, 0.12);  // B4
            b[6] = std::max(0.03, 0.08 + 0.30 * v + rng.normal(0.0, 0.010));            // B7
            b[4] = b[6] / (1.0 + cire);                                 // B5 realizes CHL_RED_EDGE
            b[5] = 0.220 + rng.normal(0.0, 0.004);                      // B6
            b[7] = std::max(0.05, 0.15 + 0.28 * v + rng.normal(0.0, 0.008));            // B8
            b[10] = b[7] * (1.0 - ndmi) / (1.0 + ndmi);                 // B11 realizes NDMI
            b[11] = std::max(0.02, 0.13 - 0.03 * v + rng.normal(0.0, 0.004));           // B12
            b[9] = shape_inverse(trait_shape(traits::TraitKind::CCC), ccc);      // B9
            b[8] = shape_inverse(trait_shape(traits::TraitKind::FAPAR), fapar);  // B8A
          } else {
            b[0] = 0.050 + rng.normal(0.0, 0.002);
            b[1] = 0.070 + rng.normal(0.0, 0.003);
            b[2] = 0.090 + rng.normal(0.0, 0.003);
            b[3] = 0.120 + rng.normal(0.0, 0.004);
            b[4] = 0.140 + rng.normal(0.0, 0.004);
            b[5] = 0.190 + rng.normal(0.0, 0.004);
            b[6] = 0.210 + rng.normal(0.0, 0.005);
            b[7] = 0.230 + rng.normal(0.0, 0.005);
            const double soil_ndmi = 0.02 + rng.normal(0.0, 0.01);
            b[10] = b[7] * (1.0 - soil_ndmi) / (1.0 + soil_ndmi);
            b[11] = 0.180 + rng.normal(0.0, 0.004);
            b[9] = shape_inverse(trait_shape(traits::TraitKind::CCC),
                                 2.0 + rng.normal(0.0, 0.5));
            b[8] = shape_inverse(trait_shape(traits::TraitKind::FAPAR),
                                 0.03 + rng.normal(0.0, 0.01));
          }
          for (int band = 0; band < scene::kNumBands; ++band) {
            sc.planes[band].set(x, y, b[band]);
          }
        }
      }
      scene::write_scene(sc, root / rec.scene_dir / scene_dir_name(k + 1));
    }
    result.truth.push_back(std::move(truth));
  }

  scene::write_fields(records, result.registry);
  return result;
}

}  // namespace cropstress::synth
