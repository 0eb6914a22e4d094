#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cropstress/core/plane.hpp"
#include "cropstress/phenology/gdd.hpp"
#include "cropstress/phenology/resample.hpp"
#include "cropstress/phenology/stages.hpp"
#include "cropstress/scene/scene.hpp"
#include "cropstress/traits/mlp.hpp"

namespace cropstress::phenology {

// 12 bands + 20 indices + 5 traits.
inline constexpr int kNumFeatures = 37;

const std::vector<std::string>& canonical_feature_names();

// All 37 feature planes of one acquisition.
struct SceneFeatures {
  core::Date date;
  std::vector<core::Plane> planes;  // canonical feature order
};

// Band planes copied, indices computed, traits inferred with the given specs
// (exactly one per trait, in TraitKind order).
SceneFeatures compute_scene_features(const scene::Scene& scene,
                                     const std::vector<traits::MlpSpec>& specs);

// Per-field tensor of vegetation pixels x 37 features x n GDD steps.
struct AlignedStack {
  std::string field_id;
  std::vector<std::string> feature_names;
  std::vector<double> gdd_grid;
  struct Pixel {
    int x = 0;
    int y = 0;
  };
  std::vector<Pixel> pixels;
  std::vector<int> labels;     // 0 = clean, 1 = infested, per pixel
  std::vector<double> tensor;  // [pixel][feature][step]

  int n_pixels() const { return static_cast<int>(pixels.size()); }
  int n_features() const { return static_cast<int>(feature_names.size()); }
  int n_steps() const { return static_cast<int>(gdd_grid.size()); }
  double at(int p, int f, int t) const {
    return tensor[(static_cast<std::size_t>(p) * n_features() + f) * n_steps() + t];
  }
};

// Resamples every masked vegetation pixel's 37 feature series onto the
// uniform GDD grid ending at the harvest-stage GDD. Scenes outside the curve
// range are dropped; at least 2 in-season scenes are required.
AlignedStack assemble_feature_stack(const scene::FieldRecord& field,
                                    const std::vector<SceneFeatures>& scenes,
                                    const core::Plane& vegetation_mask,
                                    const GddCurve& curve, const StageEstimate& stages,
                                    int n_steps = kDefaultGddSteps);

// Versioned binary container for one or more field stacks (checksummed).
void save_stacks(const std::vector<AlignedStack>& stacks, const std::filesystem::path& path);
std::vector<AlignedStack> load_stacks(const std::filesystem::path& path);

}  // namespace cropstress::phenology
