#include "cropstress/indices/indices.hpp"

#include <cmath>

#include "cropstress/core/error.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::indices {

using core::ErrorKind;
using core::require;
using scene::BandId;

namespace {

constexpr const char* kIndexNames[kNumIndices] = {
    "NDVI", "ARI", "mARI", "ARVI", "CHL_RED_EDGE", "REPO", "EVI", "EVI2",
    "GNDVI", "MCRI", "MI", "NDMI", "NDWI", "NDMIMS", "NDCI", "PSSRb1",
    "SAVI", "SIPI", "PSRI", "NDYI",
};

double band(const std::array<double, scene::kNumBands>& v, BandId b) {
  return v[static_cast<int>(b)];
}

// (a - b) / (a + b), guarded.
std::optional<double> norm_diff(double a, double b) {
  const double den = a + b;
  if (std::abs(den) < kDenominatorEpsilon) return std::nullopt;
  return (a - b) / den;
}

}  // namespace

const char* index_name(IndexKind kind) { return kIndexNames[static_cast<int>(kind)]; }

IndexKind index_from_name(const std::string& name) {
  for (int i = 0; i < kNumIndices; ++i) {
    if (name == kIndexNames[i]) return static_cast<IndexKind>(i);
  }
  core::fail(ErrorKind::data, "unknown index name: '" + name + "'");
}

const std::vector<BandId>& index_bands(IndexKind kind) {
  static const std::vector<BandId> tables[kNumIndices] = {
      /* NDVI */ {BandId::B8, BandId::B4},
      /* ARI */ {BandId::B3, BandId::B5},
      /* mARI */ {BandId::B3, BandId::B5, BandId::B7},
      /* ARVI */ {BandId::B8, BandId::B4, BandId::B2},
      /* CHL_RED_EDGE */ {BandId::B7, BandId::B5},
      /* REPO */ {BandId::B4, BandId::B7, BandId::B5, BandId::B6},
      /* EVI */ {BandId::B8, BandId::B4, BandId::B2},
      /* EVI2 */ {BandId::B8, BandId::B4},
      /* GNDVI */ {BandId::B8, BandId::B3},
      /* MCRI */ {BandId::B5, BandId::B4, BandId::B3},
      /* MI */ {BandId::B8A, BandId::B11},
      /* NDMI */ {BandId::B8, BandId::B11},
      /* NDWI */ {BandId::B3, BandId::B8},
      /* NDMIMS */ {BandId::B8, BandId::B12},
      /* NDCI */ {BandId::B5, BandId::B4},
      /* PSSRb1 */ {BandId::B8, BandId::B4},
      /* SAVI */ {BandId::B8, BandId::B4},
      /* SIPI */ {BandId::B8, BandId::B1, BandId::B4},
      /* PSRI */ {BandId::B4, BandId::B2, BandId::B6},
      /* NDYI */ {BandId::B3, BandId::B2},
  };
  return tables[static_cast<int>(kind)];
}

std::optional<double> evaluate_index(IndexKind kind,
                                     const std::array<double, scene::kNumBands>& v) {
  const double b1 = band(v, BandId::B1);
  const double b2 = band(v, BandId::B2);
  const double b3 = band(v, BandId::B3);
  const double b4 = band(v, BandId::B4);
  const double b5 = band(v, BandId::B5);
  const double b6 = band(v, BandId::B6);
  const double b7 = band(v, BandId::B7);
  const double b8 = band(v, BandId::B8);
  const double b8a = band(v, BandId::B8A);
  const double b11 = band(v, BandId::B11);
  const double b12 = band(v, BandId::B12);

  auto ratio = [](double num, double den) -> std::optional<double> {
    if (std::abs(den) < kDenominatorEpsilon) return std::nullopt;
    return num / den;
  };

  switch (kind) {
    case IndexKind::NDVI:
      return norm_diff(b8, b4);
    case IndexKind::ARI: {
      if (std::abs(b3) < kDenominatorEpsilon || std::abs(b5) < kDenominatorEpsilon)
        return std::nullopt;
      return 1.0 / b3 - 1.0 / b5;
    }
    case IndexKind::mARI: {
      if (std::abs(b3) < kDenominatorEpsilon || std::abs(b5) < kDenominatorEpsilon)
        return std::nullopt;
      return (1.0 / b3 - 1.0 / b5) * b7;
    }
    case IndexKind::ARVI: {
      const double rb = 2.0 * b4 - b2;
      return ratio(b8 - rb, b8 + rb);
    }
    case IndexKind::CHL_RED_EDGE: {
      auto r = ratio(b7, b5);
      if (!r) return std::nullopt;
      return *r - 1.0;
    }
    case IndexKind::REPO: {
      auto r = ratio((b4 + b7) / 2.0 - b5, b6 - b5);
      if (!r) return std::nullopt;
      return 705.0 + 35.0 * *r;
    }
    case IndexKind::EVI:
      return ratio(2.5 * (b8 - b4), b8 + 6.0 * b4 - 7.5 * b2 + 1.0);
    case IndexKind::EVI2:
      return ratio(2.5 * (b8 - b4), b8 + 2.4 * b4 + 1.0);
    case IndexKind::GNDVI:
      return norm_diff(b8, b3);
    case IndexKind::MCRI: {
      auto r = ratio(b5, b4);
      if (!r) return std::nullopt;
      return ((b5 - b4) - 0.2 * (b5 - b3)) * *r;
    }
    case IndexKind::MI:
      return norm_diff(b8a, b11);
    case IndexKind::NDMI:
      return norm_diff(b8, b11);
    case IndexKind::NDWI:
      return norm_diff(b3, b8);
    case IndexKind::NDMIMS:
      return norm_diff(b8, b12);
    case IndexKind::NDCI:
      return norm_diff(b5, b4);
    case IndexKind::PSSRb1:
      return ratio(b8, b4);
    case IndexKind::SAVI:
      return ratio(1.5 * (b8 - b4), b8 + b4 + 0.5);
    case IndexKind::SIPI:
      return ratio(b8 - b1, b8 - b4);
    case IndexKind::PSRI:
      return ratio(b4 - b2, b6);
    case IndexKind::NDYI:
      return norm_diff(b3, b2);
  }
  core::fail(ErrorKind::config, "unreachable index kind");
}

IndexPlane compute_index(const scene::Scene& scene, IndexKind kind) {
  require(static_cast<int>(scene.planes.size()) == scene::kNumBands, ErrorKind::data,
          "scene must hold 12 planes");
  const int w = scene.meta.width;
  const int h = scene.meta.height;
  IndexPlane out;
  out.kind = kind;
  out.plane = core::Plane(w, h, 0.0, false);

  const auto& used = index_bands(kind);
  std::array<double, scene::kNumBands> spectrum{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool ok = true;
      for (BandId b : used) {
        const auto& plane = scene.plane(b);
        if (!plane.is_valid(x, y)) {
          ok = false;
          break;
        }
        spectrum[static_cast<int>(b)] = plane.at(x, y);
      }
      if (!ok) continue;
      if (const auto value = evaluate_index(kind, spectrum)) {
        out.plane.set(x, y, *value, true);
      }
    }
  }
  return out;
}

std::vector<IndexPlane> compute_all(const scene::Scene& scene) {
  std::vector<IndexPlane> out;
  out.reserve(kNumIndices);
  for (int i = 0; i < kNumIndices; ++i) {
    out.push_back(compute_index(scene, static_cast<IndexKind>(i)));
  }
  return out;
}

void write_index_csv(const std::vector<IndexPlane>& planes,
                     const std::filesystem::path& path) {
  require(static_cast<int>(planes.size()) == kNumIndices, ErrorKind::config,
          "index CSV needs all 20 planes");
  const int w = planes[0].plane.width;
  const int h = planes[0].plane.height;
  for (const auto& p : planes) {
    require(p.plane.width == w && p.plane.height == h, ErrorKind::config,
            "index planes disagree in shape");
  }

  std::string csv = "x,y";
  for (int i = 0; i < kNumIndices; ++i) {
    csv += ',';
    csv += kIndexNames[i];
  }
  csv += '\n';
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool all_valid = true;
      for (const auto& p : planes) all_valid = all_valid && p.plane.is_valid(x, y);
      if (!all_valid) continue;
      csv += std::to_string(x);
      csv += ',';
      csv += std::to_string(y);
      for (const auto& p : planes) {
        csv += ',';
        csv += core::format_double(p.plane.at(x, y));
      }
      csv += '\n';
    }
  }
  core::spit(path, csv);
}

}  // namespace cropstress::indices
