#include <filesystem>
#include <string>
#include <vector>

#include "cropstress/core/error.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/scene/scene.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cropstress;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cropstress_scene_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nlohmann::json base_meta(int w, int h, double scale) {
  nlohmann::json j;
  j["acquisition_date"] = "2021-06-05";
  j["cloud_fraction"] = 0.05;
  j["sun_zenith"] = 28.5;
  j["sun_azimuth"] = 145.0;
  j["view_zenith"] = 4.0;
  j["view_azimuth"] = 102.0;
  j["width"] = w;
  j["height"] = h;
  j["reflectance_scale"] = scale;
  j["no_data"] = -9999.0;
  j["bands"] = {"B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B11", "B12"};
  return j;
}

void write_bundle(const fs::path& dir, const nlohmann::json& meta,
                  const std::vector<float>& stored) {
  std::string payload;
  for (float v : stored) core::put_f32(payload, v);
  core::spit(dir / "meta.json", meta.dump(2));
  core::spit(dir / "bands.bin", payload);
}

}  // namespace

TEST_CASE("stored values scale to reflectance and sentinel pixels go invalid") {
  const auto dir = fresh_dir("scaling");
  std::vector<float> stored(12 * 4, 1000.0f);
  stored[0] = 5000.0f;       // B1 at pixel (0,0)
  stored[12 * 4 - 1] = -9999.0f;  // B12 at pixel (1,1)
  write_bundle(dir, base_meta(2, 2, 1e-4), stored);

  const scene::Scene s = scene::load_scene(dir);
  CHECK(s.meta.width == 2);
  CHECK(s.plane(scene::BandId::B1).at(0, 0) == doctest::Approx(0.5));
  CHECK(s.plane(scene::BandId::B2).at(0, 0) == doctest::Approx(0.1));
  CHECK(!s.plane(scene::BandId::B12).is_valid(1, 1));
  CHECK(s.plane(scene::BandId::B12).is_valid(0, 1));
}

TEST_CASE("payload holding fewer planes than declared is rejected") {
  const auto dir = fresh_dir("short_payload");
  write_bundle(dir, base_meta(2, 2, 1e-4), std::vector<float>(11 * 4, 100.0f));
  CHECK_THROWS_AS(scene::load_scene(dir), core::Error);
}

TEST_CASE("malformed metadata is rejected") {
  const std::vector<float> stored(12 * 4, 100.0f);

  auto expect_reject = [&](nlohmann::json meta, const std::string& tag) {
    const auto dir = fresh_dir("meta_" + tag);
    write_bundle(dir, meta, stored);
    CHECK_THROWS_AS(scene::load_scene(dir), core::Error);
  };

  auto meta = base_meta(2, 2, 1e-4);
  meta["cloud_fraction"] = 1.5;
  expect_reject(meta, "cloud");

  meta = base_meta(2, 2, 1e-4);
  meta["sun_zenith"] = 95.0;
  expect_reject(meta, "zenith");

  meta = base_meta(2, 2, 1e-4);
  meta["reflectance_scale"] = 0.0;
  expect_reject(meta, "scale");

  meta = base_meta(2, 2, 1e-4);
  meta["bands"] = {"B2", "B1", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B11", "B12"};
  expect_reject(meta, "order");

  meta = base_meta(2, 2, 1e-4);
  meta["bands"].erase(11);
  expect_reject(meta, "count");

  meta = base_meta(2, 2, 1e-4);
  meta.erase("width");
  expect_reject(meta, "missing_key");
}

TEST_CASE("write after load reproduces the payload bit-exactly") {
  core::Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(6));
    const int h = 1 + static_cast<int>(rng.below(6));
    const double scale = trial % 2 == 0 ? 1e-4 : 2.5e-4;
    std::vector<float> stored;
    stored.reserve(static_cast<std::size_t>(12) * w * h);
    for (int i = 0; i < 12 * w * h; ++i) {
      if (rng.uniform() < 0.1) {
        stored.push_back(-9999.0f);
      } else {
        stored.push_back(static_cast<float>(rng.uniform(0.0, 12000.0)));
      }
    }
    const auto src = fresh_dir("rt_src_" + std::to_string(trial));
    write_bundle(src, base_meta(w, h, scale), stored);

    const scene::Scene s = scene::load_scene(src);
    const auto dst = fresh_dir("rt_dst_" + std::to_string(trial));
    scene::write_scene(s, dst);

    CHECK(core::slurp(dst / "bands.bin") == core::slurp(src / "bands.bin"));
    const scene::Scene s2 = scene::load_scene(dst);
    CHECK(s2.meta.acquisition_date == s.meta.acquisition_date);
    CHECK(s2.meta.reflectance_scale == s.meta.reflectance_scale);
  }
}

TEST_CASE("pixel spectrum matches plane accessors and propagates masks") {
  scene::SceneMeta meta;
  meta.acquisition_date = core::Date{2021, 7, 1};
  meta.width = 3;
  meta.height = 2;
  meta.reflectance_scale = 1e-4;
  scene::Scene s = scene::make_scene(meta, 0.3);

  const auto spec = s.pixel_spectrum(1, 1);
  CHECK(spec.valid);
  for (double v : spec.values) CHECK(v == doctest::Approx(0.3));

  s.plane(scene::BandId::B11).invalidate(1, 1);
  const auto masked = s.pixel_spectrum(1, 1);
  CHECK(!masked.valid);
  CHECK(masked.values[0] == doctest::Approx(0.3));

  core::Rng rng(7);
  for (auto& plane : s.planes) {
    for (auto& v : plane.values) v = rng.uniform(0.0, 1.0);
  }
  for (int b = 0; b < scene::kNumBands; ++b) {
    CHECK(s.pixel_spectrum(2, 0).values[b] ==
          s.planes[b].at(2, 0));
  }
  CHECK_THROWS_AS(s.pixel_spectrum(3, 0), core::Error);
}

TEST_CASE("cloud filter keeps strictly clearer scenes in date order") {
  scene::SceneMeta meta;
  meta.width = 1;
  meta.height = 1;
  meta.reflectance_scale = 1e-4;

  auto with = [&](core::Date d, double cloud) {
    meta.acquisition_date = d;
    meta.cloud_fraction = cloud;
    return scene::make_scene(meta, 0.2);
  };

  std::vector<scene::Scene> scenes;
  scenes.push_back(with(core::Date{2021, 6, 20}, 0.09));
  scenes.push_back(with(core::Date{2021, 6, 1}, 0.05));
  scenes.push_back(with(core::Date{2021, 6, 10}, 0.12));

  const auto kept = scene::filter_clear(std::move(scenes), 0.10);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].meta.acquisition_date == core::Date{2021, 6, 1});
  CHECK(kept[1].meta.acquisition_date == core::Date{2021, 6, 20});
  CHECK(kept[0].meta.cloud_fraction == doctest::Approx(0.05));

  // Idempotence and the two degenerate thresholds.
  std::vector<scene::Scene> again;
  for (const auto& s : kept) {
    again.push_back(with(s.meta.acquisition_date, s.meta.cloud_fraction));
  }
  CHECK(scene::filter_clear(std::move(again), 0.10).size() == 2);

  std::vector<scene::Scene> any;
  any.push_back(with(core::Date{2021, 6, 1}, 0.0));
  CHECK(scene::filter_clear(std::move(any), 0.0).empty());

  std::vector<scene::Scene> clear;
  for (int i = 0; i < 3; ++i) clear.push_back(with(core::Date{2021, 6, 1 + i}, 0.0));
  CHECK(scene::filter_clear(std::move(clear), 0.10).size() == 3);
}

TEST_CASE("scene series loads sorted by acquisition date") {
  const auto dir = fresh_dir("series");
  const std::vector<float> stored(12, 1000.0f);

  auto meta = base_meta(1, 1, 1e-4);
  meta["acquisition_date"] = "2021-07-20";
  write_bundle(dir / "b_late", meta, stored);
  meta["acquisition_date"] = "2021-06-01";
  write_bundle(dir / "z_early", meta, stored);

  const auto series = scene::load_scene_series(dir);
  REQUIRE(series.size() == 2);
  CHECK(series[0].meta.acquisition_date == core::Date{2021, 6, 1});
  CHECK(series[1].meta.acquisition_date == core::Date{2021, 7, 20});
  CHECK_THROWS_AS(scene::load_scene_series(dir / "missing"), core::Error);
}

TEST_CASE("field registry round-trips and enforces date ordering") {
  const auto dir = fresh_dir("fields");
  std::vector<scene::FieldRecord> fields(2);
  fields[0].field_id = "F01";
  fields[0].label = scene::FieldLabel::infested;
  fields[0].transplant_date = core::Date{2021, 5, 2};
  fields[0].harvest_date = core::Date{2021, 9, 14};
  fields[0].scene_dir = dir / "scenes" / "F01";
  fields[0].weather_ref = (dir / "weather" / "F01.csv").string();
  fields[1].field_id = "F02";
  fields[1].label = scene::FieldLabel::clean;
  fields[1].transplant_date = core::Date{2021, 5, 10};
  fields[1].harvest_date = core::Date{2021, 9, 20};
  fields[1].scene_dir = dir / "scenes" / "F02";
  fields[1].weather_ref = "fetch:36.75,-119.77";
  fields[1].has_ground_truth_dates = false;

  const auto path = dir / "fields.json";
  scene::write_fields(fields, path);
  const auto back = scene::load_fields(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].field_id == "F01");
  CHECK(back[0].label == scene::FieldLabel::infested);
  CHECK(back[0].transplant_date == core::Date{2021, 5, 2});
  CHECK(back[1].weather_ref == "fetch:36.75,-119.77");
  CHECK(back[1].has_ground_truth_dates == false);
  CHECK(back[0].has_ground_truth_dates == true);

  // Relative paths resolve against the registry directory.
  nlohmann::json j;
  j["fields"] = {{
      {"field_id", "F03"},
      {"label", "clean"},
      {"transplant_date", "2021-05-01"},
      {"harvest_date", "2021-09-01"},
      {"scene_dir", "scenes/F03"},
      {"weather_ref", "weather/F03.csv"},
  }};
  core::spit(path, j.dump());
  const auto rel = scene::load_fields(path);
  CHECK(rel[0].scene_dir == dir / "scenes" / "F03");
  CHECK(rel[0].weather_ref == (dir / "weather" / "F03.csv").string());

  j["fields"][0]["harvest_date"] = "2021-04-01";
  core::spit(path, j.dump());
  CHECK_THROWS_AS(scene::load_fields(path), core::Error);
}
