#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cropstress/core/error.hpp"
#include "cropstress/core/jsonio.hpp"
#include "cropstress/core/plane.hpp"
#include "cropstress/lstm/lstm.hpp"
#include "cropstress/lstm/train.hpp"
#include "cropstress/synth/synth.hpp"

namespace cropstress::cli {

// One flat JSON object of dotted keys; every key is optional, unknown keys
// are rejected, lists are comma-separated strings. The single `seed` feeds
// every seeded stage (synthesis, masking, training, importance).
struct RunConfig {
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;
  bool force = false;               // --stage-force: ignore cached manifests
  std::filesystem::path cache_dir;  // weather cache; CROPSTRESS_CACHE_DIR wins

  std::filesystem::path registry;  // input.registry; empty = synthetic input

  double max_cloud = 0.10;        // ingest.max_cloud
  std::filesystem::path mlp_dir;  // traits.mlp_dir; empty = reference specs
  double variance_target = 0.95;  // mask.variance_target
  double t_base = 10.0;           // gdd.t_base
  double theta_low = 0.2;         // stages.theta_low
  double theta_high = 0.5;        // stages.theta_high
  int stage_window = 3;           // stages.window
  int gdd_steps = 48;             // align.steps

  std::string synth_mode = "dataset";  // synth.mode: dataset | scenes | off
  synth::SynthConfig synth;
  synth::FieldSpec field_spec;

  lstm::LstmConfig lstm;   // units / dropout / dense; shape comes from data
  lstm::TrainConfig train;
  int importance_repeats = 5;  // importance.repeats
  int density_features = 4;    // report.density_features
};

RunConfig parse_run_config(const core::Json& flat);
RunConfig load_run_config(const std::filesystem::path& path);

// Container for a scene's computed feature planes (name + values + validity),
// checksummed like the other binary artifacts.
struct NamedPlane {
  std::string name;
  core::Plane plane;
};

void save_planes(const std::vector<NamedPlane>& planes, const std::filesystem::path& path);
std::vector<NamedPlane> load_planes(const std::filesystem::path& path);

enum class StageStatus {
  done,     // work performed, manifest written
  cached,   // manifest matched inputs, params, and outputs: no-op
  skipped,  // stage does not apply to this configuration
};

const char* stage_status_name(StageStatus status);

struct StageOutcome {
  std::string stage;
  StageStatus status = StageStatus::done;
  std::vector<std::filesystem::path> outputs;
};

// Execution order of `pipeline`.
const std::vector<std::string>& stage_names();

// Runs one named stage against the configured out directory, writing
// out/manifests/<stage>.json. Throws core::Error with the stage name in the
// message.
StageOutcome run_stage(const std::string& name, const RunConfig& config);

std::vector<StageOutcome> run_pipeline(const RunConfig& config);

// config -> 2, data -> 3, io -> 3, numeric -> 4.
int exit_code_for(const core::Error& error);

}  // namespace cropstress::cli
