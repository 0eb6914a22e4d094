#include "cropstress/scene/scene.hpp"

#include <algorithm>
#include <cmath>

#include "cropstress/core/error.hpp"
#include "cropstress/core/jsonio.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::scene {

using core::Error;
using core::ErrorKind;
using core::require;

namespace {

constexpr const char* kBandNames[kNumBands] = {
    "B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B11", "B12",
};

constexpr double kBandWavelengths[kNumBands] = {
    443, 490, 560, 665, 705, 740, 783, 842, 865, 945, 1610, 2190,
};

}  // namespace

const char* band_name(BandId band) { return kBandNames[static_cast<int>(band)]; }

double band_wavelength_nm(BandId band) { return kBandWavelengths[static_cast<int>(band)]; }

BandId band_from_name(const std::string& name) {
  for (int i = 0; i < kNumBands; ++i) {
    if (name == kBandNames[i]) return static_cast<BandId>(i);
  }
  core::fail(ErrorKind::data, "unknown band name: '" + name + "'");
}

void validate_meta(const SceneMeta& meta) {
  require(meta.cloud_fraction >= 0.0 && meta.cloud_fraction <= 1.0, ErrorKind::data,
          "cloud_fraction must lie in [0,1]");
  require(meta.sun_zenith >= 0.0 && meta.sun_zenith < 90.0, ErrorKind::data,
          "sun_zenith must lie in [0,90)");
  require(meta.view_zenith >= 0.0 && meta.view_zenith < 90.0, ErrorKind::data,
          "view_zenith must lie in [0,90)");
  require(meta.sun_azimuth >= 0.0 && meta.sun_azimuth < 360.0, ErrorKind::data,
          "sun_azimuth must lie in [0,360)");
  require(meta.view_azimuth >= 0.0 && meta.view_azimuth < 360.0, ErrorKind::data,
          "view_azimuth must lie in [0,360)");
  require(meta.width >= 1 && meta.height >= 1, ErrorKind::data,
          "scene dimensions must be >= 1");
  require(std::isfinite(meta.reflectance_scale) && meta.reflectance_scale > 0.0,
          ErrorKind::data, "reflectance_scale must be a positive real");
  require(std::isfinite(meta.no_data), ErrorKind::data, "no_data sentinel must be finite");
}

Scene::Spectrum Scene::pixel_spectrum(int x, int y) const {
  Spectrum s;
  s.valid = true;
  for (int b = 0; b < kNumBands; ++b) {
    s.values[b] = planes[b].at(x, y);
    s.valid = s.valid && planes[b].is_valid(x, y);
  }
  return s;
}

Scene make_scene(const SceneMeta& meta, double fill) {
  validate_meta(meta);
  Scene scene;
  scene.meta = meta;
  scene.planes.reserve(kNumBands);
  for (int b = 0; b < kNumBands; ++b) {
    scene.planes.emplace_back(meta.width, meta.height, fill, true);
  }
  return scene;
}

Scene load_scene(const std::filesystem::path& bundle_dir) {
  const auto meta_path = bundle_dir / "meta.json";
  const core::Json j = core::load_json(meta_path);
  const std::string what = meta_path.string();

  SceneMeta meta;
  meta.acquisition_date = core::Date::from_iso(core::get_string(j, "acquisition_date", what));
  meta.cloud_fraction = core::get_number(j, "cloud_fraction", what);
  meta.sun_zenith = core::get_number(j, "sun_zenith", what);
  meta.sun_azimuth = core::get_number(j, "sun_azimuth", what);
  meta.view_zenith = core::get_number(j, "view_zenith", what);
  meta.view_azimuth = core::get_number(j, "view_azimuth", what);
  meta.width = static_cast<int>(core::get_int(j, "width", what));
  meta.height = static_cast<int>(core::get_int(j, "height", what));
  meta.reflectance_scale = core::get_number(j, "reflectance_scale", what);
  meta.no_data = core::get_number(j, "no_data", what);
  validate_meta(meta);

  const core::Json& bands = core::member(j, "bands", what);
  require(bands.is_array() && bands.size() == kNumBands, ErrorKind::data,
          what + ": 'bands' must list exactly 12 bands");
  for (int b = 0; b < kNumBands; ++b) {
    require(bands[b].is_string() && bands[b].get<std::string>() == kBandNames[b],
            ErrorKind::data,
            what + ": band order must be the canonical B1..B12 layout");
  }

  const auto bin_path = bundle_dir / "bands.bin";
  const std::string payload = core::slurp(bin_path);
  const std::size_t pixels = static_cast<std::size_t>(meta.width) * meta.height;
  const std::size_t expect = pixels * kNumBands * sizeof(float);
  require(payload.size() == expect, ErrorKind::data,
          bin_path.string() + ": payload holds " + std::to_string(payload.size()) +
              " bytes, header declares " + std::to_string(expect));

  Scene scene = make_scene(meta);
  const float sentinel = static_cast<float>(meta.no_data);
  std::size_t pos = 0;
  for (int b = 0; b < kNumBands; ++b) {
    core::Plane& plane = scene.planes[b];
    for (std::size_t i = 0; i < pixels; ++i) {
      const float stored = core::get_f32(payload, pos);
      if (stored == sentinel) {
        plane.values[i] = 0.0;
        plane.valid[i] = 0;
        continue;
      }
      require(std::isfinite(stored), ErrorKind::data,
              bin_path.string() + ": non-finite stored value in band " +
                  kBandNames[b]);
      plane.values[i] = static_cast<double>(stored) * meta.reflectance_scale;
      plane.valid[i] = 1;
    }
  }
  return scene;
}

void write_scene(const Scene& scene, const std::filesystem::path& bundle_dir) {
  validate_meta(scene.meta);
  require(static_cast<int>(scene.planes.size()) == kNumBands, ErrorKind::data,
          "scene must hold exactly 12 planes");
  const std::size_t pixels =
      static_cast<std::size_t>(scene.meta.width) * scene.meta.height;
  for (const auto& plane : scene.planes) {
    require(plane.width == scene.meta.width && plane.height == scene.meta.height,
            ErrorKind::data, "plane dimensions disagree with scene metadata");
  }

  core::Json j;
  j["acquisition_date"] = scene.meta.acquisition_date.to_iso();
  j["cloud_fraction"] = scene.meta.cloud_fraction;
  j["sun_zenith"] = scene.meta.sun_zenith;
  j["sun_azimuth"] = scene.meta.sun_azimuth;
  j["view_zenith"] = scene.meta.view_zenith;
  j["view_azimuth"] = scene.meta.view_azimuth;
  j["width"] = scene.meta.width;
  j["height"] = scene.meta.height;
  j["reflectance_scale"] = scene.meta.reflectance_scale;
  j["no_data"] = scene.meta.no_data;
  core::Json bands = core::Json::array();
  for (const char* name : kBandNames) bands.push_back(name);
  j["bands"] = bands;

  std::string payload;
  payload.reserve(pixels * kNumBands * sizeof(float));
  const float sentinel = static_cast<float>(scene.meta.no_data);
  for (const auto& plane : scene.planes) {
    for (std::size_t i = 0; i < pixels; ++i) {
      if (plane.valid[i] == 0) {
        core::put_f32(payload, sentinel);
      } else {
        core::put_f32(payload,
                      static_cast<float>(plane.values[i] / scene.meta.reflectance_scale));
      }
    }
  }

  std::filesystem::create_directories(bundle_dir);
  core::spit(bundle_dir / "meta.json", j.dump(2) + "\n");
  core::spit(bundle_dir / "bands.bin", payload);
}

std::vector<Scene> load_scene_series(const std::filesystem::path& series_dir) {
  require(std::filesystem::is_directory(series_dir), ErrorKind::io,
          "scene series directory not found: " + series_dir.string());
  std::vector<std::filesystem::path> bundles;
  for (const auto& entry : std::filesystem::directory_iterator(series_dir)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.json")) {
      bundles.push_back(entry.path());
    }
  }
  std::sort(bundles.begin(), bundles.end());
  std::vector<Scene> scenes;
  scenes.reserve(bundles.size());
  for (const auto& path : bundles) scenes.push_back(load_scene(path));
  std::stable_sort(scenes.begin(), scenes.end(), [](const Scene& a, const Scene& b) {
    return a.meta.acquisition_date < b.meta.acquisition_date;
  });
  return scenes;
}

std::vector<Scene> filter_clear(std::vector<Scene> scenes, double max_cloud) {
  require(max_cloud >= 0.0 && max_cloud <= 1.0, ErrorKind::config,
          "max_cloud must lie in [0,1]");
  std::stable_sort(scenes.begin(), scenes.end(), [](const Scene& a, const Scene& b) {
    return a.meta.acquisition_date < b.meta.acquisition_date;
  });
  std::vector<Scene> kept;
  for (auto& scene : scenes) {
    if (scene.meta.cloud_fraction < max_cloud) kept.push_back(std::move(scene));
  }
  return kept;
}

const char* field_label_name(FieldLabel label) {
  return label == FieldLabel::infested ? "infested" : "clean";
}

FieldLabel field_label_from_name(const std::string& name) {
  if (name == "infested") return FieldLabel::infested;
  if (name == "clean") return FieldLabel::clean;
  core::fail(ErrorKind::data, "field label must be 'infested' or 'clean', got '" + name + "'");
}

std::vector<FieldRecord> load_fields(const std::filesystem::path& registry_path) {
  const core::Json j = core::load_json(registry_path);
  const std::string what = registry_path.string();
  const core::Json& list = core::member(j, "fields", what);
  require(list.is_array(), ErrorKind::data, what + ": 'fields' must be an array");
  const auto base = registry_path.parent_path();

  std::vector<FieldRecord> fields;
  fields.reserve(list.size());
  for (const auto& f : list) {
    FieldRecord rec;
    rec.field_id = core::get_string(f, "field_id", what);
    rec.label = field_label_from_name(core::get_string(f, "label", what));
    rec.transplant_date = core::Date::from_iso(core::get_string(f, "transplant_date", what));
    rec.harvest_date = core::Date::from_iso(core::get_string(f, "harvest_date", what));
    require(rec.transplant_date < rec.harvest_date, ErrorKind::data,
            what + ": field '" + rec.field_id + "' must transplant before harvest");
    std::filesystem::path scene_dir = core::get_string(f, "scene_dir", what);
    rec.scene_dir = scene_dir.is_absolute() ? scene_dir : base / scene_dir;
    rec.weather_ref = core::get_string(f, "weather_ref", what);
    if (!core::starts_with(rec.weather_ref, "fetch:")) {
      std::filesystem::path p = rec.weather_ref;
      if (!p.is_absolute()) rec.weather_ref = (base / p).string();
    }
    rec.has_ground_truth_dates = core::get_bool_or(f, "has_ground_truth_dates", true);
    fields.push_back(std::move(rec));
  }
  return fields;
}

void write_fields(const std::vector<FieldRecord>& fields,
                  const std::filesystem::path& registry_path) {
  core::Json list = core::Json::array();
  for (const auto& rec : fields) {
    core::Json f;
    f["field_id"] = rec.field_id;
    f["label"] = field_label_name(rec.label);
    f["transplant_date"] = rec.transplant_date.to_iso();
    f["harvest_date"] = rec.harvest_date.to_iso();
    f["scene_dir"] = rec.scene_dir.string();
    f["weather_ref"] = rec.weather_ref;
    f["has_ground_truth_dates"] = rec.has_ground_truth_dates;
    list.push_back(std::move(f));
  }
  core::Json j;
  j["fields"] = std::move(list);
  core::spit(registry_path, j.dump(2) + "\n");
}

}  // namespace cropstress::scene
