#include <array>
#include <cmath>
#include <filesystem>

#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/indices/indices.hpp"
#include "cropstress/scene/scene.hpp"
#include "doctest.h"

using namespace cropstress;
using indices::IndexKind;
using scene::BandId;

namespace {

std::array<double, scene::kNumBands> spectrum_with(
    std::initializer_list<std::pair<BandId, double>> bands, double fill = 0.3) {
  std::array<double, scene::kNumBands> v;
  v.fill(fill);
  for (auto [b, value] : bands) v[static_cast<int>(b)] = value;
  return v;
}

scene::Scene random_scene(core::Rng& rng, int w = 6, int h = 5) {
  scene::SceneMeta meta;
  meta.acquisition_date = core::Date{2021, 7, 1};
  meta.width = w;
  meta.height = h;
  meta.reflectance_scale = 1e-4;
  scene::Scene s = scene::make_scene(meta);
  for (auto& plane : s.planes) {
    for (auto& v : plane.values) v = rng.uniform(0.01, 1.2);
  }
  return s;
}

}  // namespace

TEST_CASE("hand-evaluated formulas") {
  using indices::evaluate_index;

  CHECK(*evaluate_index(IndexKind::NDVI,
                        spectrum_with({{BandId::B8, 0.5}, {BandId::B4, 0.1}})) ==
        doctest::Approx(0.6666666666666666));
  CHECK(*evaluate_index(IndexKind::NDVI,
                        spectrum_with({{BandId::B8, 0.2}, {BandId::B4, 0.2}})) ==
        doctest::Approx(0.0));

  CHECK(*evaluate_index(
            IndexKind::EVI,
            spectrum_with({{BandId::B8, 0.4}, {BandId::B4, 0.1}, {BandId::B2, 0.05}})) ==
        doctest::Approx(0.46153846153846156).epsilon(1e-12));

  CHECK(*evaluate_index(
            IndexKind::REPO,
            spectrum_with({{BandId::B4, 0.1}, {BandId::B7, 0.5}, {BandId::B5, 0.2},
                           {BandId::B6, 0.4}})) == doctest::Approx(722.5));

  CHECK(*evaluate_index(IndexKind::ARI,
                        spectrum_with({{BandId::B3, 0.2}, {BandId::B5, 0.4}})) ==
        doctest::Approx(2.5));
  CHECK(*evaluate_index(
            IndexKind::mARI,
            spectrum_with({{BandId::B3, 0.2}, {BandId::B5, 0.4}, {BandId::B7, 0.5}})) ==
        doctest::Approx(1.25));

  CHECK(*evaluate_index(
            IndexKind::MCRI,
            spectrum_with({{BandId::B5, 0.4}, {BandId::B4, 0.2}, {BandId::B3, 0.3}})) ==
        doctest::Approx(0.36));

  CHECK(*evaluate_index(
            IndexKind::PSRI,
            spectrum_with({{BandId::B4, 0.3}, {BandId::B2, 0.1}, {BandId::B6, 0.4}})) ==
        doctest::Approx(0.5));

  CHECK(*evaluate_index(IndexKind::CHL_RED_EDGE,
                        spectrum_with({{BandId::B7, 0.6}, {BandId::B5, 0.2}})) ==
        doctest::Approx(2.0));
  CHECK(*evaluate_index(IndexKind::PSSRb1,
                        spectrum_with({{BandId::B8, 0.8}, {BandId::B4, 0.2}})) ==
        doctest::Approx(4.0));
  CHECK(*evaluate_index(
            IndexKind::SAVI,
            spectrum_with({{BandId::B8, 0.5}, {BandId::B4, 0.1}})) ==
        doctest::Approx(1.5 * 0.4 / 1.1).epsilon(1e-12));
  CHECK(*evaluate_index(
            IndexKind::EVI2,
            spectrum_with({{BandId::B8, 0.5}, {BandId::B4, 0.1}})) ==
        doctest::Approx(2.5 * 0.4 / (0.5 + 0.24 + 1.0)).epsilon(1e-12));

  // Singular denominators come back empty instead of huge.
  CHECK(!evaluate_index(IndexKind::SIPI,
                        spectrum_with({{BandId::B8, 0.4}, {BandId::B4, 0.4}})));
  CHECK(!evaluate_index(IndexKind::REPO,
                        spectrum_with({{BandId::B6, 0.2}, {BandId::B5, 0.2}})));
  CHECK(!evaluate_index(IndexKind::ARI, spectrum_with({{BandId::B3, 0.0}})));
}

TEST_CASE("names map 1:1 onto kinds") {
  for (int i = 0; i < indices::kNumIndices; ++i) {
    const auto kind = static_cast<IndexKind>(i);
    CHECK(indices::index_from_name(indices::index_name(kind)) == kind);
  }
  CHECK_THROWS_AS(indices::index_from_name("NOPE"), core::Error);
}

TEST_CASE("compute_all equals per-kind computation in declaration order") {
  core::Rng rng(11);
  const scene::Scene s = random_scene(rng);
  const auto all = indices::compute_all(s);
  REQUIRE(all.size() == indices::kNumIndices);
  for (int i = 0; i < indices::kNumIndices; ++i) {
    const auto kind = static_cast<IndexKind>(i);
    CHECK(all[i].kind == kind);
    const auto single = indices::compute_index(s, kind);
    CHECK(all[i].plane.values == single.plane.values);
    CHECK(all[i].plane.valid == single.plane.valid);
  }
}

TEST_CASE("normalized differences stay in [-1,1] on valid pixels") {
  core::Rng rng(13);
  const scene::Scene s = random_scene(rng, 12, 9);
  for (IndexKind kind : {IndexKind::NDVI, IndexKind::GNDVI, IndexKind::NDMI,
                         IndexKind::NDWI, IndexKind::NDMIMS, IndexKind::NDCI,
                         IndexKind::NDYI, IndexKind::MI}) {
    const auto p = indices::compute_index(s, kind);
    for (std::size_t i = 0; i < p.plane.size(); ++i) {
      if (p.plane.valid[i]) {
        CHECK(p.plane.values[i] >= -1.0);
        CHECK(p.plane.values[i] <= 1.0);
      }
    }
  }
}

TEST_CASE("swapping the operands of a normalized difference negates it") {
  struct Pair {
    IndexKind kind;
    BandId a, b;
  };
  const Pair pairs[] = {
      {IndexKind::NDVI, BandId::B8, BandId::B4},
      {IndexKind::GNDVI, BandId::B8, BandId::B3},
      {IndexKind::NDMI, BandId::B8, BandId::B11},
      {IndexKind::NDWI, BandId::B3, BandId::B8},
      {IndexKind::NDMIMS, BandId::B8, BandId::B12},
      {IndexKind::NDCI, BandId::B5, BandId::B4},
      {IndexKind::NDYI, BandId::B3, BandId::B2},
      {IndexKind::MI, BandId::B8A, BandId::B11},
  };
  core::Rng rng(17);
  for (const auto& [kind, a, b] : pairs) {
    for (int trial = 0; trial < 50; ++trial) {
      auto v = spectrum_with({}, 0.0);
      for (auto& x : v) x = rng.uniform(0.01, 1.2);
      auto swapped = v;
      std::swap(swapped[static_cast<int>(a)], swapped[static_cast<int>(b)]);
      const auto fwd = indices::evaluate_index(kind, v);
      const auto rev = indices::evaluate_index(kind, swapped);
      REQUIRE(fwd.has_value());
      REQUIRE(rev.has_value());
      CHECK(*fwd == -*rev);
    }
  }
}

TEST_CASE("pure-ratio indices are invariant under band rescaling") {
  const IndexKind ratio_kinds[] = {
      IndexKind::NDVI, IndexKind::GNDVI, IndexKind::NDMI, IndexKind::NDWI,
      IndexKind::NDMIMS, IndexKind::NDCI, IndexKind::NDYI, IndexKind::MI,
      IndexKind::CHL_RED_EDGE, IndexKind::PSSRb1, IndexKind::SIPI,
  };
  core::Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    auto v = spectrum_with({}, 0.0);
    for (auto& x : v) x = rng.uniform(0.01, 1.2);
    const double c = rng.uniform(0.1, 10.0);
    auto scaled = v;
    for (auto& x : scaled) x *= c;
    for (IndexKind kind : ratio_kinds) {
      const auto base = indices::evaluate_index(kind, v);
      const auto after = indices::evaluate_index(kind, scaled);
      if (!base || !after) continue;  // a guard tripped on one side
      // 1e-12 absolute for O(1) values, relative once a near-singular
      // denominator pushes the magnitude up.
      CHECK(std::abs(*base - *after) < 1e-12 * std::max(1.0, std::abs(*base)));
    }
  }

  // EVI and SAVI carry additive constants, so rescaling must move them.
  auto v = spectrum_with({{BandId::B8, 0.5}, {BandId::B4, 0.1}, {BandId::B2, 0.05}});
  auto scaled = v;
  for (auto& x : scaled) x *= 2.0;
  CHECK(std::abs(*indices::evaluate_index(IndexKind::EVI, v) -
                 *indices::evaluate_index(IndexKind::EVI, scaled)) > 1e-3);
  CHECK(std::abs(*indices::evaluate_index(IndexKind::SAVI, v) -
                 *indices::evaluate_index(IndexKind::SAVI, scaled)) > 1e-3);
}

TEST_CASE("invalid input pixels never produce numbers") {
  core::Rng rng(23);
  scene::Scene s = random_scene(rng, 4, 4);
  s.plane(BandId::B4).invalidate(1, 2);   // feeds NDVI but not NDMI
  s.plane(BandId::B11).invalidate(3, 0);  // feeds NDMI but not NDVI

  const auto ndvi = indices::compute_index(s, IndexKind::NDVI);
  const auto ndmi = indices::compute_index(s, IndexKind::NDMI);
  CHECK(!ndvi.plane.is_valid(1, 2));
  CHECK(ndvi.plane.is_valid(3, 0));
  CHECK(!ndmi.plane.is_valid(3, 0));
  CHECK(ndmi.plane.is_valid(1, 2));

  // Denominator guard: B8 == B4 makes SIPI singular at that pixel only.
  scene::Scene t = random_scene(rng, 2, 2);
  t.plane(BandId::B8).set(0, 0, 0.4);
  t.plane(BandId::B4).set(0, 0, 0.4);
  const auto sipi = indices::compute_index(t, IndexKind::SIPI);
  CHECK(!sipi.plane.is_valid(0, 0));
  CHECK(sipi.plane.is_valid(1, 1));
}

TEST_CASE("index CSV lists only pixels valid in every plane") {
  core::Rng rng(29);
  scene::Scene s = random_scene(rng, 2, 2);
  s.plane(BandId::B8).invalidate(0, 0);  // kills most indices at (0,0)
  const auto planes = indices::compute_all(s);

  const auto path = std::filesystem::temp_directory_path() / "cropstress_idx.csv";
  indices::write_index_csv(planes, path);
  const auto text = core::slurp(path);
  const auto lines = core::split(core::trim(text), '\n');
  CHECK(lines[0] ==
        "x,y,NDVI,ARI,mARI,ARVI,CHL_RED_EDGE,REPO,EVI,EVI2,GNDVI,MCRI,MI,NDMI,"
        "NDWI,NDMIMS,NDCI,PSSRb1,SAVI,SIPI,PSRI,NDYI");
  CHECK(lines.size() == 4);  // header + the three fully valid pixels
  for (std::size_t i = 1; i < lines.size(); ++i) {
    CHECK(!core::starts_with(lines[i], "0,0"));
  }
  std::filesystem::remove(path);
}
