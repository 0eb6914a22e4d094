#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "cropstress/core/date.hpp"
#include "cropstress/core/plane.hpp"

namespace cropstress::scene {

// The 12 bands, in file-layout order. Downstream code indexes planes by this
// enum, so the ordering is load-bearing.
enum class BandId {
  B1, B2, B3, B4, B5, B6, B7, B8, B8A, B9, B11, B12,
};

inline constexpr int kNumBands = 12;

const char* band_name(BandId band);
double band_wavelength_nm(BandId band);
BandId band_from_name(const std::string& name);

struct SceneMeta {
  core::Date acquisition_date;
  double cloud_fraction = 0.0;
  double sun_zenith = 0.0;
  double sun_azimuth = 0.0;
  double view_zenith = 0.0;
  double view_azimuth = 0.0;
  int width = 0;
  int height = 0;
  double reflectance_scale = 1.0;
  double no_data = -9999.0;
};

// Throws Error(data) when any field is out of its documented range.
void validate_meta(const SceneMeta& meta);

struct Scene {
  SceneMeta meta;
  std::vector<core::Plane> planes;  // kNumBands planes, BandId order

  const core::Plane& plane(BandId band) const { return planes[static_cast<int>(band)]; }
  core::Plane& plane(BandId band) { return planes[static_cast<int>(band)]; }

  // All 12 bands at one pixel, BandId order. `valid` is false if any band is
  // masked there.
  struct Spectrum {
    std::array<double, kNumBands> values{};
    bool valid = false;
  };
  Spectrum pixel_spectrum(int x, int y) const;
};

// Allocates an all-valid scene with the given fill reflectance.
Scene make_scene(const SceneMeta& meta, double fill = 0.0);

// Bundle layout: <dir>/meta.json + <dir>/bands.bin (band-sequential,
// row-major, little-endian float32 in stored units; reflectance = stored *
// reflectance_scale; no_data sentinel marks invalid pixels).
Scene load_scene(const std::filesystem::path& bundle_dir);
void write_scene(const Scene& scene, const std::filesystem::path& bundle_dir);

// Every subdirectory holding a meta.json, loaded and sorted by date.
std::vector<Scene> load_scene_series(const std::filesystem::path& series_dir);

// Keeps scenes with cloud_fraction strictly below max_cloud, in
// chronological order.
std::vector<Scene> filter_clear(std::vector<Scene> scenes, double max_cloud);

enum class FieldLabel { clean = 0, infested = 1 };

const char* field_label_name(FieldLabel label);
FieldLabel field_label_from_name(const std::string& name);

struct FieldRecord {
  std::string field_id;
  FieldLabel label = FieldLabel::clean;
  core::Date transplant_date;
  core::Date harvest_date;
  std::filesystem::path scene_dir;
  std::string weather_ref;  // CSV path, or "fetch:<lat>,<lon>" descriptor
  bool has_ground_truth_dates = true;
};

// Reads the fields.json registry; paths resolve relative to the registry's
// directory.
std::vector<FieldRecord> load_fields(const std::filesystem::path& registry_path);
void write_fields(const std::vector<FieldRecord>& fields,
                  const std::filesystem::path& registry_path);

}  // namespace cropstress::scene
