#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cropstress/core/error.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/masking/masking.hpp"
#include "cropstress/phenology/align.hpp"
#include "cropstress/phenology/gdd.hpp"
#include "cropstress/phenology/stages.hpp"
#include "cropstress/phenology/weather.hpp"
#include "cropstress/scene/scene.hpp"
#include "cropstress/synth/synth.hpp"
#include "cropstress/traits/mlp.hpp"
#include "doctest.h"

using namespace cropstress;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cropstress_synth" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int feature_index(const std::string& name) {
  const auto& names = phenology::canonical_feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  REQUIRE(it != names.end());
  return static_cast<int>(it - names.begin());
}

double cell(const lstm::Dataset& d, int p, int t, int f) {
  return d.inputs[(static_cast<std::size_t>(p) * d.steps + t) * d.features + f];
}

// mean over one class of one (feature, step) cell
double class_mean(const synth::SynthDataset& ds, std::uint8_t label, int f, int t) {
  double sum = 0.0;
  int count = 0;
  for (int p = 0; p < ds.data.n; ++p) {
    if (ds.data.labels[p] != label) continue;
    sum += cell(ds.data, p, t, f);
    ++count;
  }
  REQUIRE(count > 0);
  return sum / count;
}

}  // namespace

TEST_CASE("trapezoid profile rises, holds at one, and falls") {
  synth::TrapezoidProfile p;  // 48 steps, 12 rise, 12 fall
  CHECK(synth::profile_value(p, 0) > 0.0);
  CHECK(synth::profile_value(p, 0) < synth::profile_value(p, 5));
  CHECK(synth::profile_value(p, 5) < synth::profile_value(p, 11));
  CHECK(synth::profile_value(p, 11) < 1.0);
  for (int t = 12; t < 36; ++t) {
    CHECK(synth::profile_value(p, t) == 1.0);
    CHECK(synth::in_plateau(p, t));
  }
  CHECK_FALSE(synth::in_plateau(p, 11));
  CHECK_FALSE(synth::in_plateau(p, 36));
  CHECK(synth::profile_value(p, 36) < 1.0);
  CHECK(synth::profile_value(p, 47) > 0.0);
  CHECK(synth::profile_value(p, 47) < synth::profile_value(p, 40));
}

TEST_CASE("synth config validation rejects broken setups") {
  synth::SynthConfig base;
  CHECK_NOTHROW(synth::validate_synth_config(base));

  synth::SynthConfig cfg = base;
  cfg.pixels_per_class = 0;
  CHECK_THROWS_AS(synth::validate_synth_config(cfg), core::Error);

  cfg = base;
  cfg.offsets = {1.0, 1.0};
  CHECK_THROWS_AS(synth::validate_synth_config(cfg), core::Error);

  cfg = base;
  cfg.informative = {"NDMI", "NOT_A_FEATURE", "FAPAR", "CHL_RED_EDGE"};
  CHECK_THROWS_AS(synth::validate_synth_config(cfg), core::Error);

  cfg = base;
  cfg.informative = {"NDMI", "NDMI", "FAPAR", "CHL_RED_EDGE"};
  CHECK_THROWS_AS(synth::validate_synth_config(cfg), core::Error);

  cfg = base;
  cfg.noise_sd = 0.0;
  CHECK_THROWS_AS(synth::validate_synth_config(cfg), core::Error);

  cfg = base;
  cfg.profile.rise = 30;
  cfg.profile.fall = 30;
  CHECK_THROWS_AS(synth::validate_synth_config(cfg), core::Error);
}

TEST_CASE("generated dataset shape, label layout, and determinism") {
  synth::SynthConfig cfg;
  cfg.pixels_per_class = 50;
  cfg.seed = 9;
  const synth::SynthDataset ds = synth::gen_dataset(cfg);

  CHECK(ds.data.n == 100);
  CHECK(ds.data.steps == 48);
  CHECK(ds.data.features == 37);
  CHECK(ds.data.inputs.size() == 100u * 48u * 37u);
  for (int p = 0; p < 50; ++p) CHECK(ds.data.labels[p] == 1);
  for (int p = 50; p < 100; ++p) CHECK(ds.data.labels[p] == 0);
  CHECK(ds.truth.labels == ds.data.labels);
  CHECK(ds.truth.informative_features.size() == 4);
  for (int f : ds.truth.informative_features) {
    CHECK(f >= 0);
    CHECK(f < 37);
  }
  for (double v : ds.data.inputs) CHECK(std::isfinite(v));

  const synth::SynthDataset again = synth::gen_dataset(cfg);
  CHECK(again.data.inputs == ds.data.inputs);
  CHECK(again.data.labels == ds.data.labels);

  synth::SynthConfig other = cfg;
  other.seed = 10;
  CHECK(synth::gen_dataset(other).data.inputs != ds.data.inputs);
}

TEST_CASE("class shift lands on informative plateau cells only") {
  synth::SynthConfig cfg;
  cfg.pixels_per_class = 400;
  cfg.offsets = {0.8, 0.6, 0.5, 0.4};
  cfg.noise_sd = 0.5;
  cfg.seed = 3;
  const synth::SynthDataset ds = synth::gen_dataset(cfg);

  // diff-of-means noise: sd * sqrt(2 / n) per cell, ~0.035 here; averaged
  // over the 24 plateau steps it drops well below the checked tolerances
  for (std::size_t k = 0; k < cfg.informative.size(); ++k) {
    const int f = feature_index(cfg.informative[k]);
    double diff_plateau = 0.0;
    double diff_outside = 0.0;
    int n_plateau = 0;
    int n_outside = 0;
    for (int t = 0; t < 48; ++t) {
      const double d = class_mean(ds, 0, f, t) - class_mean(ds, 1, f, t);
      if (synth::in_plateau(cfg.profile, t)) {
        diff_plateau += d;
        ++n_plateau;
      } else {
        diff_outside += d;
        ++n_outside;
      }
    }
    CHECK(n_plateau == 24);
    CHECK(diff_plateau / n_plateau ==
          doctest::Approx(cfg.offsets[k] * cfg.noise_sd).epsilon(0.08));
    CHECK(std::abs(diff_outside / n_outside) < 0.02);
  }

  const int quiet = feature_index("NDVI");
  double diff = 0.0;
  for (int t = 0; t < 48; ++t) diff += class_mean(ds, 0, quiet, t) - class_mean(ds, 1, quiet, t);
  CHECK(std::abs(diff / 48) < 0.02);

  // infested pixels carry the bare profile
  const int f0 = feature_index("NDMI");
  CHECK(class_mean(ds, 1, f0, 20) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(class_mean(ds, 1, f0, 0) == doctest::Approx(synth::profile_value(cfg.profile, 0)).scale(1.0).epsilon(0.15));
}

TEST_CASE("zero offsets leave both oracles exactly at chance") {
  synth::SynthConfig cfg;
  cfg.offsets = {0.0, 0.0, 0.0, 0.0};
  CHECK(synth::closed_form_accuracy(cfg) == 0.5);
  const synth::BayesEstimate mc = synth::bayes_oracle(cfg, 5000);
  CHECK(mc.accuracy == 0.5);
  CHECK(mc.n_samples == 5000);
}

TEST_CASE("closed-form accuracy matches independently computed values") {
  synth::SynthConfig cfg;
  cfg.informative = {"NDMI"};
  cfg.offsets = {0.3};
  cfg.plateau_only = false;
  CHECK(synth::closed_form_accuracy(cfg) == doctest::Approx(0.8506512220025149).epsilon(1e-12));

  synth::SynthConfig def;
  CHECK(synth::closed_form_accuracy(def) == doctest::Approx(0.9999995183214957).epsilon(1e-12));

  synth::SynthConfig mid;
  mid.offsets = {0.5, 0.4, 0.3, 0.2};
  CHECK(synth::closed_form_accuracy(mid) == doctest::Approx(0.9640696808870741).epsilon(1e-12));

  // offsets are expressed in noise units, so the scale cancels exactly
  synth::SynthConfig scaled = mid;
  scaled.noise_sd = 2.5;
  CHECK(synth::closed_form_accuracy(scaled) == synth::closed_form_accuracy(mid));
}

TEST_CASE("monte-carlo oracle agrees with the closed form") {
  synth::SynthConfig mid;
  mid.offsets = {0.5, 0.4, 0.3, 0.2};
  mid.seed = 11;
  const double exact = synth::closed_form_accuracy(mid);
  const synth::BayesEstimate mc = synth::bayes_oracle(mid, 60000);
  CHECK(std::abs(mc.accuracy - exact) <= 1.5 * mc.ci_half_width);

  synth::SynthConfig flat;
  flat.informative = {"NDMI"};
  flat.offsets = {0.3};
  flat.plateau_only = false;
  flat.seed = 11;
  const synth::BayesEstimate mc2 = synth::bayes_oracle(flat, 60000);
  CHECK(std::abs(mc2.accuracy - synth::closed_form_accuracy(flat)) <= 1.5 * mc2.ci_half_width);

  synth::SynthConfig loud;
  loud.informative = {"NDMI"};
  loud.offsets = {5.0};
  CHECK(synth::bayes_oracle(loud, 4000).accuracy >= 0.999);
}

TEST_CASE("oracle interval shrinks like the square root of the sample count") {
  synth::SynthConfig mid;
  mid.offsets = {0.5, 0.4, 0.3, 0.2};
  const synth::BayesEstimate small = synth::bayes_oracle(mid, 2000);
  const synth::BayesEstimate large = synth::bayes_oracle(mid, 32000);
  CHECK(small.ci_half_width > 0.0);
  CHECK(large.ci_half_width > 0.0);
  const double ratio = small.ci_half_width / large.ci_half_width;
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("scene campaign writes a loadable, deterministic mini survey") {
  synth::FieldSpec spec;
  synth::SynthConfig cfg;
  cfg.seed = 42;
  const fs::path root = fresh_dir("campaign");
  const synth::CampaignResult camp = synth::gen_scene_series(spec, cfg, root);

  const std::vector<scene::FieldRecord> fields = scene::load_fields(camp.registry);
  REQUIRE(fields.size() == 6);
  CHECK(fields[0].field_id == "F01");
  CHECK(fields[5].field_id == "F06");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto want = i % 2 == 0 ? scene::FieldLabel::infested : scene::FieldLabel::clean;
    CHECK(fields[i].label == want);
    CHECK(fields[i].transplant_date == spec.transplant);
    CHECK(fields[i].harvest_date == spec.harvest);
  }

  SUBCASE("weather accumulates thermal time strictly") {
    const phenology::WeatherSeries weather = phenology::load_weather_csv(camp.weather_csv);
    CHECK_NOTHROW(phenology::validate_weather(weather));
    const phenology::GddCurve curve =
        phenology::cumulative_gdd(weather, spec.transplant, spec.harvest);
    REQUIRE(curve.cumulative.size() >= 2);
    for (std::size_t k = 1; k < curve.cumulative.size(); ++k) {
      CHECK(curve.cumulative[k] > curve.cumulative[k - 1]);
    }
  }

  SUBCASE("every field carries a dated in-season scene series") {
    for (const scene::FieldRecord& rec : fields) {
      const std::vector<scene::Scene> scenes = scene::load_scene_series(rec.scene_dir);
      REQUIRE(scenes.size() == 16);
      for (std::size_t k = 0; k < scenes.size(); ++k) {
        CHECK(scenes[k].meta.width == spec.width);
        CHECK(scenes[k].meta.height == spec.height);
        CHECK(spec.transplant < scenes[k].meta.acquisition_date);
        CHECK(scenes[k].meta.acquisition_date < spec.harvest);
        if (k > 0) CHECK(scenes[k - 1].meta.acquisition_date < scenes[k].meta.acquisition_date);
      }
    }
  }

  SUBCASE("trait networks load and separate crop from background") {
    REQUIRE(camp.mlp_specs.size() == 5);
    std::vector<traits::MlpSpec> specs;
    for (const fs::path& p : camp.mlp_specs) specs.push_back(traits::load_mlp(p));
    CHECK(specs[2].trait == traits::TraitKind::CCC);

    const std::vector<scene::Scene> scenes = scene::load_scene_series(fields[0].scene_dir);
    const scene::Scene& mid = scenes[8];  // mid season, on the plateau
    const std::vector<traits::TraitPlane> planes = traits::infer_traits_plane(mid, specs);
    REQUIRE(planes.size() == 5);

    const core::Plane& truth = camp.truth[0].vegetation;
    double veg = 0.0, soil = 0.0;
    int nveg = 0, nsoil = 0;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        (truth.at(x, y) != 0.0 ? veg : soil) += planes[2].plane.at(x, y);
        (truth.at(x, y) != 0.0 ? nveg : nsoil) += 1;
      }
    }
    CHECK(nveg == (spec.width - 2 * spec.margin) * (spec.height - 2 * spec.margin));
    CHECK(veg / nveg > soil / nsoil + 100.0);

    const masking::VegetationMaskResult mask = masking::vegetation_mask(planes, 0.95, 7);
    int agree = 0;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const bool a = mask.mask.at(x, y) != 0.0;
        const bool b = truth.at(x, y) != 0.0;
        agree += a == b;
      }
    }
    CHECK(static_cast<double>(agree) / (spec.width * spec.height) >= 0.99);
  }

  SUBCASE("phenology alignment runs end to end on one field") {
    std::vector<traits::MlpSpec> specs;
    for (const fs::path& p : camp.mlp_specs) specs.push_back(traits::load_mlp(p));
    const phenology::WeatherSeries weather = phenology::load_weather_csv(camp.weather_csv);
    const phenology::GddCurve curve =
        phenology::cumulative_gdd(weather, spec.transplant, spec.harvest);

    const std::vector<scene::Scene> scenes = scene::load_scene_series(fields[0].scene_dir);
    std::vector<phenology::SceneFeatures> features;
    std::vector<phenology::CccObservation> ccc;
    const int ccc_index = feature_index("CCC");
    const core::Plane& truth = camp.truth[0].vegetation;
    for (const scene::Scene& sc : scenes) {
      features.push_back(phenology::compute_scene_features(sc, specs));
      std::vector<double> values;
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          if (truth.at(x, y) != 0.0) values.push_back(features.back().planes[ccc_index].at(x, y));
        }
      }
      std::sort(values.begin(), values.end());
      ccc.push_back({sc.meta.acquisition_date, values[values.size() / 2]});
    }

    const phenology::StageEstimate stages = phenology::detect_stages(ccc, curve);
    CHECK(stages.transplant_gdd < stages.peak_gdd);
    CHECK(stages.peak_gdd < stages.harvest_gdd);

    const phenology::AlignedStack stack =
        phenology::assemble_feature_stack(fields[0], features, truth, curve, stages);
    CHECK(stack.n_pixels() ==
          (spec.width - 2 * spec.margin) * (spec.height - 2 * spec.margin));
    CHECK(stack.n_features() == 37);
    CHECK(stack.n_steps() == 48);
    for (int label : stack.labels) CHECK(label == 1);
    for (double v : stack.tensor) CHECK(std::isfinite(v));

    // mid-grid NDMI should sit near its plateau level
    const int ndmi = feature_index("NDMI");
    double mean = 0.0;
    for (int p = 0; p < stack.n_pixels(); ++p) mean += stack.at(p, ndmi, 24);
    mean /= stack.n_pixels();
    CHECK(mean > 0.25);
    CHECK(mean < 0.45);
  }

  SUBCASE("regeneration reproduces every artifact byte for byte") {
    const fs::path root2 = fresh_dir("campaign_again");
    const synth::CampaignResult camp2 = synth::gen_scene_series(spec, cfg, root2);
    const auto same = [&](const fs::path& a, const fs::path& b) {
      CHECK(core::slurp(a) == core::slurp(b));
    };
    same(camp.registry, camp2.registry);
    same(camp.weather_csv, camp2.weather_csv);
    same(camp.mlp_specs[2], camp2.mlp_specs[2]);
    same(root / "fields" / "F03" / "scenes" / "0007" / "meta.json",
         root2 / "fields" / "F03" / "scenes" / "0007" / "meta.json");
    same(root / "fields" / "F03" / "scenes" / "0007" / "bands.bin",
         root2 / "fields" / "F03" / "scenes" / "0007" / "bands.bin");
  }
}

TEST_CASE("campaign validation and io failures surface as typed errors") {
  synth::FieldSpec spec;
  spec.scenes_per_field = 8;
  CHECK_THROWS_AS(synth::validate_field_spec(spec), core::Error);

  synth::FieldSpec tiny;
  tiny.width = 4;
  CHECK_THROWS_AS(synth::validate_field_spec(tiny), core::Error);

  synth::SynthConfig off_target;
  off_target.informative = {"NDVI", "CCC", "FAPAR", "CHL_RED_EDGE"};
  const fs::path root = fresh_dir("campaign_bad");
  try {
    synth::gen_scene_series(synth::FieldSpec{}, off_target, root);
    FAIL("expected a config error");
  } catch (const core::Error& e) {
    CHECK(e.kind() == core::ErrorKind::config);
  }

  const fs::path blocker = fresh_dir("campaign_io") / "blocker";
  core::spit(blocker, "not a directory");
  try {
    synth::gen_scene_series(synth::FieldSpec{}, synth::SynthConfig{}, blocker / "sub");
    FAIL("expected an io error");
  } catch (const core::Error& e) {
    CHECK(e.kind() == core::ErrorKind::io);
  }
}
