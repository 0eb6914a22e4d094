#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cropstress/core/date.hpp"
#include "cropstress/core/plane.hpp"
#include "cropstress/lstm/train.hpp"
#include "cropstress/scene/scene.hpp"

namespace cropstress::synth {

// Rise-plateau-fall season shape; value is 1 exactly on steps
// [rise, steps - fall).
struct TrapezoidProfile {
  int steps = 48;
  int rise = 12;
  int fall = 12;
};

double profile_value(const TrapezoidProfile& profile, int step);
bool in_plateau(const TrapezoidProfile& profile, int step);

// Generative model for labeled pixel sequences: every feature follows the
// trapezoid base profile plus white noise; clean (healthy) pixels
// additionally receive the per-feature offsets, scaled by noise_sd, on the
// informative features — by default only during the plateau.
struct SynthConfig {
  int pixels_per_class = 2000;
  std::vector<std::string> informative = {"NDMI", "CCC", "FAPAR", "CHL_RED_EDGE"};
  std::vector<double> offsets = {1.0, 1.0, 1.0, 1.0};  // in noise_sd units
  bool plateau_only = true;
  TrapezoidProfile profile;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
};

void validate_synth_config(const SynthConfig& config);

// Canonical feature indices of config.informative.
std::vector<int> informative_feature_indices(const SynthConfig& config);

struct SynthTruth {
  SynthConfig config;
  std::vector<int> informative_features;  // canonical indices
  std::vector<std::uint8_t> labels;       // copy of the dataset labels
};

struct SynthDataset {
  lstm::Dataset data;  // 37 canonical features, infested pixels first
  SynthTruth truth;
};

SynthDataset gen_dataset(const SynthConfig& config);

struct BayesEstimate {
  double accuracy = 0.0;
  double ci_half_width = 0.0;  // Wald 95% interval
  int n_samples = 0;
};

// Monte-Carlo accuracy of the likelihood-ratio classifier under the known
// generative model (only the offset cells enter the ratio; everything else
// is class-independent and cancels). Ties predict clean.
BayesEstimate bayes_oracle(const SynthConfig& config, int n_samples);

// Phi(|delta| / 2) with |delta|^2 summed over every offset cell, the exact
// accuracy the Monte-Carlo run estimates.
double closed_form_accuracy(const SynthConfig& config);

// On-disk mini-campaign: dated scene bundles per field, a shared weather
// file, loadable trait networks, and the field registry.
struct FieldSpec {
  int n_fields = 6;  // labels alternate infested, clean, ...
  int width = 24;
  int height = 18;
  int margin = 2;  // background border; the interior is planted
  int scenes_per_field = 16;
  core::Date transplant{2021, 4, 20};
  core::Date harvest{2021, 9, 10};
};

void validate_field_spec(const FieldSpec& spec);

struct CampaignResult {
  std::filesystem::path registry;     // fields.json
  std::filesystem::path weather_csv;  // shared by every field
  std::vector<std::filesystem::path> mlp_specs;  // TraitKind order

  struct FieldTruth {
    std::string field_id;
    scene::FieldLabel label = scene::FieldLabel::clean;
    core::Plane vegetation;  // 1 = planted, 0 = background
  };
  std::vector<FieldTruth> truth;
};

// Reflectances are constructed so the downstream NDMI, CHL_RED_EDGE, CCC and
// FAPAR features track the configured class profiles, background pixels stay
// trait-flat for masking, and cumulative GDD increases strictly.
CampaignResult gen_scene_series(const FieldSpec& fields, const SynthConfig& config,
                                const std::filesystem::path& root);

}  // namespace cropstress::synth
