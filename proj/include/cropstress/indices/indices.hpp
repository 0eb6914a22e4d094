#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cropstress/core/plane.hpp"
#include "cropstress/scene/scene.hpp"

namespace cropstress::indices {

// The 20 vegetation indices, in canonical order. Feature vectors and CSV
// columns follow this ordering.
enum class IndexKind {
  NDVI, ARI, mARI, ARVI, CHL_RED_EDGE, REPO, EVI, EVI2, GNDVI, MCRI,
  MI, NDMI, NDWI, NDMIMS, NDCI, PSSRb1, SAVI, SIPI, PSRI, NDYI,
};

inline constexpr int kNumIndices = 20;

// Denominator guard: pixels whose formula divides by something smaller than
// this (in reflectance units) are flagged invalid instead of exploding.
inline constexpr double kDenominatorEpsilon = 1e-6;

const char* index_name(IndexKind kind);
IndexKind index_from_name(const std::string& name);

// Bands the formula reads; an invalid pixel in any of them invalidates the
// output pixel.
const std::vector<scene::BandId>& index_bands(IndexKind kind);

// Formula on one spectrum (BandId order). nullopt when a denominator guard
// trips.
std::optional<double> evaluate_index(IndexKind kind,
                                     const std::array<double, scene::kNumBands>& bands);

struct IndexPlane {
  IndexKind kind = IndexKind::NDVI;
  core::Plane plane;
};

IndexPlane compute_index(const scene::Scene& scene, IndexKind kind);

// All 20, in IndexKind declaration order.
std::vector<IndexPlane> compute_all(const scene::Scene& scene);

// One row per pixel that is valid in every plane; columns are the index
// acronyms in canonical order.
void write_index_csv(const std::vector<IndexPlane>& planes,
                     const std::filesystem::path& path);

}  // namespace cropstress::indices
