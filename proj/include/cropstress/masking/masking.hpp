#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cropstress/core/plane.hpp"
#include "cropstress/traits/mlp.hpp"

namespace cropstress::masking {

// Row-major pixels x dims matrix; small enough that a flat buffer beats a
// full linear-algebra dependency in the public API.
struct RowMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct Standardized {
  RowMatrix matrix;
  std::vector<double> means;
  std::vector<double> scales;  // population standard deviation; 1 for flat columns
};

// Zero-mean, unit-variance per column (population convention). Flat columns
// pass through centered with scale 1.
Standardized standardize(const RowMatrix& input);

struct PcaModel {
  std::vector<double> means;                    // per input dimension
  std::vector<std::vector<double>> components;  // [component][dim], orthonormal
  std::vector<double> explained_variance;      // non-increasing
  int retained = 0;                             // smallest count reaching the target
};

// Covariance eigendecomposition (population 1/N). Throws Error(numeric) on
// all-zero input; requires rows >= cols.
PcaModel fit_pca(const RowMatrix& standardized, double variance_target = 0.95);

// Projects onto the first n_components axes (model.retained when <= 0).
RowMatrix project(const PcaModel& model, const RowMatrix& input, int n_components = 0);

struct ClusterModel {
  std::vector<std::vector<double>> centroids;  // k x dims
  std::vector<int> assignment;                 // per point
  double objective = 0.0;                      // within-cluster sum of squares
  std::vector<double> objective_trace;         // one entry per Lloyd assignment pass
  bool degenerate = false;  // empty-cluster repair found no distinct point
};

// Seeded farthest-point initialization + Lloyd iterations; deterministic per
// seed. Empty clusters re-seed to the point farthest from its own centroid.
ClusterModel kmeans(const RowMatrix& points, int k, std::uint64_t seed, int max_iter = 100);

struct VegetationMaskResult {
  core::Plane mask;  // value 1 = vegetation; validity mirrors the trait planes
  PcaModel pca;
  ClusterModel clusters;
  bool degenerate_warning = false;
};

// standardize -> PCA -> k-means(k=2) on the five trait planes; the cluster
// with higher mean raw CCC becomes vegetation.
VegetationMaskResult vegetation_mask(const std::vector<traits::TraitPlane>& trait_planes,
                                     double variance_target, std::uint64_t seed);

// CSV rows x,y,is_vegetation for valid pixels.
void write_mask_csv(const core::Plane& mask, const std::filesystem::path& path);
core::Plane load_mask_csv(const std::filesystem::path& path, int width, int height);

}  // namespace cropstress::masking
