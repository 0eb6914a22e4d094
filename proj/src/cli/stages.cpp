#include "cropstress/cli/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <utility>

#include "cropstress/analysis/analysis.hpp"
#include "cropstress/core/date.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/indices/indices.hpp"
#include "cropstress/masking/masking.hpp"
#include "cropstress/phenology/align.hpp"
#include "cropstress/phenology/gdd.hpp"
#include "cropstress/phenology/stages.hpp"
#include "cropstress/phenology/weather.hpp"
#include "cropstress/scene/scene.hpp"
#include "cropstress/traits/mlp.hpp"

namespace cropstress::cli {

using core::ErrorKind;
using core::Json;
using core::require;

namespace fs = std::filesystem;

// --- configuration -----------------------------------------------------------

namespace {

std::vector<std::string> parse_list(const std::string& raw, const std::string& key) {
  std::vector<std::string> out;
  for (const std::string& piece : core::split(raw, ',')) {
    const std::string item = core::trim(piece);
    require(!item.empty(), ErrorKind::config, "config key '" + key + "': empty list entry");
    out.push_back(item);
  }
  require(!out.empty(), ErrorKind::config, "config key '" + key + "': empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& raw, const std::string& key) {
  std::vector<double> out;
  for (const std::string& item : parse_list(raw, key)) {
    try {
      out.push_back(core::parse_double(item));
    } catch (const core::Error&) {
      core::fail(ErrorKind::config, "config key '" + key + "': '" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& raw, const std::string& key) {
  std::vector<int> out;
  for (const std::string& item : parse_list(raw, key)) {
    try {
      out.push_back(static_cast<int>(core::parse_int(item)));
    } catch (const core::Error&) {
      core::fail(ErrorKind::config, "config key '" + key + "': '" + item + "' is not an integer");
    }
  }
  return out;
}

core::Date parse_date_value(const std::string& raw, const std::string& key) {
  try {
    return core::Date::from_iso(raw);
  } catch (const core::Error&) {
    core::fail(ErrorKind::config, "config key '" + key + "': '" + raw + "' is not a date");
  }
}

}  // namespace

RunConfig parse_run_config(const Json& flat) {
  require(flat.is_object(), ErrorKind::config, "run config must be a JSON object");
  RunConfig cfg;

  const auto str = [](const Json& v, const std::string& key) {
    require(v.is_string(), ErrorKind::config, "config key '" + key + "' must be a string");
    return v.get<std::string>();
  };
  const auto num = [](const Json& v, const std::string& key) {
    require(v.is_number(), ErrorKind::config, "config key '" + key + "' must be a number");
    return v.get<double>();
  };
  const auto integer = [](const Json& v, const std::string& key) {
    require(v.is_number_integer(), ErrorKind::config,
            "config key '" + key + "' must be an integer");
    return static_cast<int>(v.get<std::int64_t>());
  };
  const auto boolean = [](const Json& v, const std::string& key) {
    require(v.is_boolean(), ErrorKind::config, "config key '" + key + "' must be a boolean");
    return v.get<bool>();
  };

  for (const auto& [key, value] : flat.items()) {
    if (key == "out") {
      cfg.out = str(value, key);
    } else if (key == "seed") {
      require(value.is_number_integer(), ErrorKind::config, "config key 'seed' must be an integer");
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "cache_dir") {
      cfg.cache_dir = str(value, key);
    } else if (key == "input.registry") {
      cfg.registry = str(value, key);
    } else if (key == "ingest.max_cloud") {
      cfg.max_cloud = num(value, key);
    } else if (key == "traits.mlp_dir") {
      cfg.mlp_dir = str(value, key);
    } else if (key == "mask.variance_target") {
      cfg.variance_target = num(value, key);
    } else if (key == "gdd.t_base") {
      cfg.t_base = num(value, key);
    } else if (key == "stages.theta_low") {
      cfg.theta_low = num(value, key);
    } else if (key == "stages.theta_high") {
      cfg.theta_high = num(value, key);
    } else if (key == "stages.window") {
      cfg.stage_window = integer(value, key);
    } else if (key == "align.steps") {
      cfg.gdd_steps = integer(value, key);
    } else if (key == "synth.mode") {
      cfg.synth_mode = str(value, key);
      require(cfg.synth_mode == "dataset" || cfg.synth_mode == "scenes" ||
                  cfg.synth_mode == "off",
              ErrorKind::config, "synth.mode must be dataset, scenes, or off");
    } else if (key == "synth.pixels_per_class") {
      cfg.synth.pixels_per_class = integer(value, key);
    } else if (key == "synth.informative") {
      cfg.synth.informative = parse_list(str(value, key), key);
    } else if (key == "synth.offsets") {
      cfg.synth.offsets = parse_double_list(str(value, key), key);
    } else if (key == "synth.plateau_only") {
      cfg.synth.plateau_only = boolean(value, key);
    } else if (key == "synth.noise_sd") {
      cfg.synth.noise_sd = num(value, key);
    } else if (key == "synth.rise") {
      cfg.synth.profile.rise = integer(value, key);
    } else if (key == "synth.fall") {
      cfg.synth.profile.fall = integer(value, key);
    } else if (key == "synth.fields") {
      cfg.field_spec.n_fields = integer(value, key);
    } else if (key == "synth.width") {
      cfg.field_spec.width = integer(value, key);
    } else if (key == "synth.height") {
      cfg.field_spec.height = integer(value, key);
    } else if (key == "synth.margin") {
      cfg.field_spec.margin = integer(value, key);
    } else if (key == "synth.scenes_per_field") {
      cfg.field_spec.scenes_per_field = integer(value, key);
    } else if (key == "synth.transplant") {
      cfg.field_spec.transplant = parse_date_value(str(value, key), key);
    } else if (key == "synth.harvest") {
      cfg.field_spec.harvest = parse_date_value(str(value, key), key);
    } else if (key == "lstm.units") {
      cfg.lstm.lstm_units = parse_int_list(str(value, key), key);
    } else if (key == "lstm.dropout") {
      cfg.lstm.dropout_rate = num(value, key);
    } else if (key == "lstm.dense") {
      cfg.lstm.dense_units = integer(value, key);
    } else if (key == "train.epochs") {
      cfg.train.epochs = integer(value, key);
    } else if (key == "train.folds") {
      cfg.train.folds = integer(value, key);
    } else if (key == "train.test_fraction") {
      cfg.train.test_fraction = num(value, key);
    } else if (key == "train.validation_fraction") {
      cfg.train.validation_fraction = num(value, key);
    } else if (key == "train.learning_rate") {
      cfg.train.learning_rate = num(value, key);
    } else if (key == "train.batch_size") {
      cfg.train.batch_size = integer(value, key);
    } else if (key == "importance.repeats") {
      cfg.importance_repeats = integer(value, key);
    } else if (key == "report.density_features") {
      cfg.density_features = integer(value, key);
    } else {
      core::fail(ErrorKind::config, "unknown config key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  require(fs::exists(path), ErrorKind::config, "config file not found: " + path.string());
  return parse_run_config(core::load_json(path));
}

// --- named-plane container ---------------------------------------------------

namespace {

constexpr char kPlaneMagic[8] = {'C', 'S', 'P', 'L', 'A', 'N', 'E', '1'};

}  // namespace

void save_planes(const std::vector<NamedPlane>& planes, const fs::path& path) {
  require(!planes.empty(), ErrorKind::config, "no planes to save");
  Json header;
  Json list = Json::array();
  for (const NamedPlane& np : planes) {
    require(!np.name.empty(), ErrorKind::config, "plane needs a name");
    require(np.plane.size() == np.plane.valid.size(), ErrorKind::config,
            "plane validity size mismatch");
    list.push_back({{"name", np.name}, {"width", np.plane.width}, {"height", np.plane.height}});
  }
  header["planes"] = std::move(list);

  std::string blob;
  blob.append(kPlaneMagic, sizeof(kPlaneMagic));
  const std::string header_text = header.dump();
  core::put_u32(blob, static_cast<std::uint32_t>(header_text.size()));
  blob += header_text;
  for (const NamedPlane& np : planes) {
    for (double v : np.plane.values) core::put_f64(blob, v);
    blob.append(reinterpret_cast<const char*>(np.plane.valid.data()), np.plane.valid.size());
  }
  core::put_u32(blob, core::crc32(blob.data(), blob.size()));
  core::spit(path, blob);
}

std::vector<NamedPlane> load_planes(const fs::path& path) {
  const std::string blob = core::slurp(path);
  require(blob.size() >= sizeof(kPlaneMagic) + 8, ErrorKind::data,
          path.string() + ": truncated plane file");
  require(std::equal(kPlaneMagic, kPlaneMagic + sizeof(kPlaneMagic), blob.begin()),
          ErrorKind::data, path.string() + ": not a plane file (bad magic)");
  const std::size_t tail = blob.size() - 4;
  const std::uint32_t declared = core::crc32(blob.data(), tail);
  std::size_t pos = tail;
  require(core::get_u32(blob, pos) == declared, ErrorKind::data,
          path.string() + ": checksum mismatch");

  pos = sizeof(kPlaneMagic);
  const std::uint32_t header_len = core::get_u32(blob, pos);
  require(pos + header_len <= tail, ErrorKind::data, path.string() + ": corrupt header length");
  const Json header = core::parse_json(blob.substr(pos, header_len), path.string());
  pos += header_len;

  std::vector<NamedPlane> out;
  for (const Json& entry : core::member(header, "planes", path.string())) {
    NamedPlane np;
    np.name = core::get_string(entry, "name", path.string());
    const int w = static_cast<int>(core::get_int(entry, "width", path.string()));
    const int h = static_cast<int>(core::get_int(entry, "height", path.string()));
    require(w > 0 && h > 0, ErrorKind::data, path.string() + ": bad plane shape");
    const std::size_t count = static_cast<std::size_t>(w) * h;
    require(pos + count * 9 <= tail, ErrorKind::data, path.string() + ": truncated plane data");
    np.plane = core::Plane(w, h);
    for (std::size_t i = 0; i < count; ++i) np.plane.values[i] = core::get_f64(blob, pos);
    for (std::size_t i = 0; i < count; ++i) {
      np.plane.valid[i] = static_cast<std::uint8_t>(blob[pos++]);
    }
    out.push_back(std::move(np));
  }
  require(pos == tail, ErrorKind::data, path.string() + ": trailing bytes");
  return out;
}

// --- manifests ---------------------------------------------------------------

namespace {

using StringMap = std::map<std::string, std::string>;

std::string hash_file(const fs::path& path) {
  const std::string body = core::slurp(path);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(core::fnv1a64(body.data(), body.size())));
  return buf;
}

fs::path manifest_path(const RunConfig& cfg, const std::string& stage) {
  return cfg.out / "manifests" / (stage + ".json");
}

void write_manifest(const RunConfig& cfg, const std::string& stage, const std::string& status,
                    const std::string& note, const StringMap& inputs, const StringMap& params,
                    const std::vector<fs::path>& outputs) {
  Json j;
  j["stage"] = stage;
  j["status"] = status;
  if (!note.empty()) j["note"] = note;
  j["inputs"] = inputs;
  j["params"] = params;
  Json out_list = Json::array();
  Json out_hashes = Json::object();
  for (const fs::path& p : outputs) {
    out_list.push_back(p.string());
    out_hashes[p.string()] = hash_file(p);
  }
  j["outputs"] = std::move(out_list);
  j["output_hashes"] = std::move(out_hashes);
  core::spit(manifest_path(cfg, stage), j.dump(2) + "\n");
}

// A completed manifest whose inputs, params, and outputs all still match
// makes the stage a no-op.
std::optional<std::vector<fs::path>> try_cached(const RunConfig& cfg, const std::string& stage,
                                                const StringMap& inputs,
                                                const StringMap& params) {
  if (cfg.force) return std::nullopt;
  const fs::path path = manifest_path(cfg, stage);
  if (!fs::exists(path)) return std::nullopt;
  Json j;
  try {
    j = core::load_json(path);
  } catch (const core::Error&) {
    return std::nullopt;
  }
  if (!j.is_object() || j.value("status", "") != "done") return std::nullopt;
  const auto same_map = [&](const char* key, const StringMap& want) {
    if (!j.contains(key) || !j[key].is_object()) return false;
    StringMap got;
    for (const auto& [k, v] : j[key].items()) {
      if (!v.is_string()) return false;
      got[k] = v.get<std::string>();
    }
    return got == want;
  };
  if (!same_map("inputs", inputs) || !same_map("params", params)) return std::nullopt;
  if (!j.contains("outputs") || !j["outputs"].is_array() || !j["output_hashes"].is_object()) {
    return std::nullopt;
  }
  std::vector<fs::path> outputs;
  for (const Json& entry : j["outputs"]) {
    if (!entry.is_string()) return std::nullopt;
    const fs::path out_path = entry.get<std::string>();
    const Json& hashes = j["output_hashes"];
    if (!fs::exists(out_path) || !hashes.contains(out_path.string()) ||
        !hashes[out_path.string()].is_string() ||
        hash_file(out_path) != hashes[out_path.string()].get<std::string>()) {
      return std::nullopt;
    }
    outputs.push_back(out_path);
  }
  return outputs;
}

StageOutcome skip_stage(const RunConfig& cfg, const std::string& stage, const std::string& note) {
  write_manifest(cfg, stage, "skipped", note, {}, {}, {});
  return {stage, StageStatus::skipped, {}};
}

// --- shared helpers ----------------------------------------------------------

Json num_json(double v) { return Json(core::format_double(v)); }

double num_from(const Json& j, const std::string& what) {
  require(j.is_string(), ErrorKind::data, what + ": expected a numeric string");
  return core::parse_double(j.get<std::string>());
}

bool scene_mode(const RunConfig& cfg) {
  return !cfg.registry.empty() || cfg.synth_mode == "scenes";
}

void validate_run(const RunConfig& cfg) {
  require(cfg.registry.empty() || cfg.synth_mode != "scenes", ErrorKind::config,
          "input.registry and synth.mode=scenes are mutually exclusive");
  require(cfg.gdd_steps >= 2, ErrorKind::config, "align.steps must be at least 2");
  require(cfg.importance_repeats >= 1, ErrorKind::config, "importance.repeats must be positive");
  require(cfg.density_features >= 1, ErrorKind::config,
          "report.density_features must be positive");
}

fs::path effective_registry(const RunConfig& cfg) {
  return cfg.registry.empty() ? cfg.out / "campaign" / "fields.json" : cfg.registry;
}

fs::path effective_cache_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("CROPSTRESS_CACHE_DIR")) return fs::path(env);
  return cfg.cache_dir.empty() ? cfg.out / "cache" : cfg.cache_dir;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

std::string join_doubles(const std::vector<double>& items) {
  std::vector<std::string> text;
  for (double v : items) text.push_back(core::format_double(v));
  return join_list(text);
}

std::string join_ints(const std::vector<int>& items) {
  std::vector<std::string> text;
  for (int v : items) text.push_back(std::to_string(v));
  return join_list(text);
}

// catalog of clear scenes, written by ingest and consumed by every scene stage
struct CatalogScene {
  std::string name;  // bundle directory name, unique per field
  fs::path dir;
  core::Date date;
};

struct CatalogField {
  std::string field_id;
  scene::FieldLabel label = scene::FieldLabel::clean;
  core::Date transplant;
  core::Date harvest;
  std::string weather_ref;
  fs::path scene_dir;
  std::vector<CatalogScene> scenes;
};

fs::path catalog_path(const RunConfig& cfg) { return cfg.out / "ingest" / "catalog.json"; }

std::vector<CatalogField> load_catalog(const fs::path& path) {
  require(fs::exists(path), ErrorKind::data,
          "missing scene catalog " + path.string() + "; run the ingest stage first");
  const Json j = core::load_json(path);
  std::vector<CatalogField> out;
  for (const Json& f : core::member(j, "fields", path.string())) {
    CatalogField field;
    field.field_id = core::get_string(f, "field_id", path.string());
    field.label = scene::field_label_from_name(core::get_string(f, "label", path.string()));
    field.transplant = core::Date::from_iso(core::get_string(f, "transplant", path.string()));
    field.harvest = core::Date::from_iso(core::get_string(f, "harvest", path.string()));
    field.weather_ref = core::get_string(f, "weather_ref", path.string());
    field.scene_dir = core::get_string(f, "scene_dir", path.string());
    for (const Json& s : core::member(f, "scenes", path.string())) {
      CatalogScene cs;
      cs.name = core::get_string(s, "name", path.string());
      cs.dir = core::get_string(s, "dir", path.string());
      cs.date = core::Date::from_iso(core::get_string(s, "date", path.string()));
      field.scenes.push_back(std::move(cs));
    }
    require(!field.scenes.empty(), ErrorKind::data,
            path.string() + ": field '" + field.field_id + "' lists no scenes");
    out.push_back(std::move(field));
  }
  require(!out.empty(), ErrorKind::data, path.string() + ": no fields");
  return out;
}

// every bundle under a field's scene directory, sorted by name
std::vector<fs::path> bundle_dirs(const fs::path& scene_dir) {
  require(fs::is_directory(scene_dir), ErrorKind::config,
          "scene directory not found: " + scene_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(scene_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

void hash_scene_inputs(const std::vector<CatalogField>& catalog, StringMap& inputs) {
  for (const CatalogField& field : catalog) {
    for (const CatalogScene& cs : field.scenes) {
      inputs[(cs.dir / "meta.json").string()] = hash_file(cs.dir / "meta.json");
      inputs[(cs.dir / "bands.bin").string()] = hash_file(cs.dir / "bands.bin");
    }
  }
}

fs::path indices_path(const RunConfig& cfg, const CatalogField& field, const CatalogScene& cs) {
  return cfg.out / "indices" / field.field_id / (cs.name + ".bin");
}

fs::path traits_path(const RunConfig& cfg, const CatalogField& field, const CatalogScene& cs) {
  return cfg.out / "traits" / field.field_id / (cs.name + ".bin");
}

fs::path mask_path(const RunConfig& cfg, const CatalogField& field) {
  return cfg.out / "mask" / (field.field_id + ".csv");
}

fs::path stacks_path(const RunConfig& cfg) { return cfg.out / "align" / "stacks.bin"; }
fs::path cv_path(const RunConfig& cfg) { return cfg.out / "train" / "cv.json"; }
fs::path model_path(const RunConfig& cfg) { return cfg.out / "train" / "model.bin"; }
fs::path metrics_path(const RunConfig& cfg) { return cfg.out / "evaluate" / "metrics.json"; }
fs::path importance_path(const RunConfig& cfg) {
  return cfg.out / "importance" / "importance.json";
}

void require_artifact(const fs::path& path, const std::string& producer) {
  require(fs::exists(path), ErrorKind::data,
          "missing " + path.string() + "; run the " + producer + " stage first");
}

// explicit traits.mlp_dir wins; a synthesized campaign ships its own networks;
// otherwise fall back to the built-in reference networks
fs::path effective_mlp_dir(const RunConfig& cfg) {
  if (!cfg.mlp_dir.empty()) return cfg.mlp_dir;
  if (cfg.registry.empty() && cfg.synth_mode == "scenes") return cfg.out / "campaign" / "mlp";
  return {};
}

// five specs in TraitKind order: from a directory of <TRAIT>.json files, or
// the reference networks (written out for the record)
std::vector<traits::MlpSpec> resolve_specs(const RunConfig& cfg,
                                           std::vector<fs::path>* written) {
  const fs::path dir = effective_mlp_dir(cfg);
  std::vector<traits::MlpSpec> specs;
  for (int t = 0; t < traits::kNumTraits; ++t) {
    const auto kind = static_cast<traits::TraitKind>(t);
    if (dir.empty()) {
      specs.push_back(traits::make_reference_spec(kind));
      if (written) {
        const fs::path path =
            cfg.out / "traits" / "specs" / (std::string(traits::trait_name(kind)) + ".json");
        traits::save_mlp(specs.back(), path);
        written->push_back(path);
      }
    } else {
      specs.push_back(traits::load_mlp(dir / (std::string(traits::trait_name(kind)) + ".json")));
    }
  }
  return specs;
}

void spec_inputs(const RunConfig& cfg, StringMap& inputs) {
  const fs::path dir = effective_mlp_dir(cfg);
  if (dir.empty()) return;
  for (int t = 0; t < traits::kNumTraits; ++t) {
    const fs::path p =
        dir / (std::string(traits::trait_name(static_cast<traits::TraitKind>(t))) + ".json");
    require(fs::exists(p), ErrorKind::config, "trait network not found: " + p.string());
    inputs[p.string()] = hash_file(p);
  }
}

lstm::Dataset dataset_from_stacks(const std::vector<phenology::AlignedStack>& stacks) {
  require(!stacks.empty(), ErrorKind::data, "no aligned stacks");
  lstm::Dataset data;
  data.features = stacks[0].n_features();
  data.steps = stacks[0].n_steps();
  for (const auto& stack : stacks) {
    require(stack.n_features() == data.features && stack.n_steps() == data.steps,
            ErrorKind::data, "stacks disagree in shape");
    data.n += stack.n_pixels();
  }
  data.inputs.reserve(static_cast<std::size_t>(data.n) * data.steps * data.features);
  for (const auto& stack : stacks) {
    for (int p = 0; p < stack.n_pixels(); ++p) {
      for (int t = 0; t < data.steps; ++t) {
        for (int f = 0; f < data.features; ++f) data.inputs.push_back(stack.at(p, f, t));
      }
      const int label = stack.labels[p];
      require(label == 0 || label == 1, ErrorKind::data, "stack labels must be 0/1");
      data.labels.push_back(static_cast<std::uint8_t>(label));
    }
  }
  return data;
}

phenology::AlignedStack stack_from_dataset(const lstm::Dataset& data) {
  require(data.features == phenology::kNumFeatures, ErrorKind::config,
          "synthetic dataset must carry the 37 canonical features");
  phenology::AlignedStack stack;
  stack.field_id = "SYNTH";
  stack.feature_names = phenology::canonical_feature_names();
  stack.gdd_grid = phenology::make_gdd_grid(25.0 * (data.steps - 1), data.steps);
  stack.tensor.reserve(data.inputs.size());
  for (int p = 0; p < data.n; ++p) {
    stack.pixels.push_back({p, 0});
    stack.labels.push_back(data.labels[p]);
    for (int f = 0; f < data.features; ++f) {
      for (int t = 0; t < data.steps; ++t) {
        stack.tensor.push_back(
            data.inputs[(static_cast<std::size_t>(p) * data.steps + t) * data.features + f]);
      }
    }
  }
  return stack;
}

// --- stages ------------------------------------------------------------------

StageOutcome run_synth(const RunConfig& cfg) {
  const std::string stage = "synth";
  if (cfg.synth_mode == "off") return skip_stage(cfg, stage, "synthesis disabled");
  if (!cfg.registry.empty()) {
    return skip_stage(cfg, stage, "external field registry provided");
  }

  StringMap params;
  params["seed"] = std::to_string(cfg.seed);
  params["synth.mode"] = cfg.synth_mode;
  params["synth.informative"] = join_list(cfg.synth.informative);
  params["synth.offsets"] = join_doubles(cfg.synth.offsets);
  params["synth.plateau_only"] = cfg.synth.plateau_only ? "true" : "false";
  params["synth.noise_sd"] = core::format_double(cfg.synth.noise_sd);
  params["synth.rise"] = std::to_string(cfg.synth.profile.rise);
  params["synth.fall"] = std::to_string(cfg.synth.profile.fall);

  synth::SynthConfig scfg = cfg.synth;
  scfg.seed = cfg.seed;

  if (cfg.synth_mode == "dataset") {
    params["align.steps"] = std::to_string(cfg.gdd_steps);
    params["synth.pixels_per_class"] = std::to_string(cfg.synth.pixels_per_class);
    if (auto cached = try_cached(cfg, stage, {}, params)) {
      return {stage, StageStatus::cached, *cached};
    }
    scfg.profile.steps = cfg.gdd_steps;
    const synth::SynthDataset ds = synth::gen_dataset(scfg);
    phenology::save_stacks({stack_from_dataset(ds.data)}, stacks_path(cfg));

    Json truth;
    truth["informative_features"] = ds.truth.informative_features;
    truth["informative_names"] = scfg.informative;
    truth["offsets"] = scfg.offsets;
    truth["closed_form_accuracy"] = num_json(synth::closed_form_accuracy(scfg));
    truth["labels"] = ds.truth.labels;
    const fs::path truth_path = cfg.out / "synth" / "truth.json";
    core::spit(truth_path, truth.dump(2) + "\n");

    const std::vector<fs::path> outputs = {stacks_path(cfg), truth_path};
    write_manifest(cfg, stage, "done", "", {}, params, outputs);
    return {stage, StageStatus::done, outputs};
  }

  // scenes mode: a full on-disk campaign under out/campaign
  params["synth.fields"] = std::to_string(cfg.field_spec.n_fields);
  params["synth.width"] = std::to_string(cfg.field_spec.width);
  params["synth.height"] = std::to_string(cfg.field_spec.height);
  params["synth.margin"] = std::to_string(cfg.field_spec.margin);
  params["synth.scenes_per_field"] = std::to_string(cfg.field_spec.scenes_per_field);
  params["synth.transplant"] = cfg.field_spec.transplant.to_iso();
  params["synth.harvest"] = cfg.field_spec.harvest.to_iso();
  if (auto cached = try_cached(cfg, stage, {}, params)) {
    return {stage, StageStatus::cached, *cached};
  }
  const synth::CampaignResult camp =
      synth::gen_scene_series(cfg.field_spec, scfg, cfg.out / "campaign");
  std::vector<fs::path> outputs = {camp.registry, camp.weather_csv};
  outputs.insert(outputs.end(), camp.mlp_specs.begin(), camp.mlp_specs.end());
  for (const scene::FieldRecord& rec : scene::load_fields(camp.registry)) {
    for (const fs::path& dir : bundle_dirs(rec.scene_dir)) {
      outputs.push_back(dir / "meta.json");
      outputs.push_back(dir / "bands.bin");
    }
  }
  write_manifest(cfg, stage, "done", "", {}, params, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_ingest(const RunConfig& cfg) {
  const std::string stage = "ingest";
  if (!scene_mode(cfg)) return skip_stage(cfg, stage, "input is a synthetic dataset");

  const fs::path registry = effective_registry(cfg);
  require(fs::exists(registry), ErrorKind::config,
          "field registry not found: " + registry.string());

  StringMap params;
  params["ingest.max_cloud"] = core::format_double(cfg.max_cloud);
  StringMap inputs;
  inputs[registry.string()] = hash_file(registry);

  const std::vector<scene::FieldRecord> fields = scene::load_fields(registry);
  // hash every bundle on disk: a cloud-threshold change is a param change,
  // new or edited scenes are input changes
  std::vector<std::pair<scene::FieldRecord, std::vector<fs::path>>> listed;
  for (const scene::FieldRecord& rec : fields) {
    std::vector<fs::path> dirs = bundle_dirs(rec.scene_dir);
    for (const fs::path& dir : dirs) {
      inputs[(dir / "meta.json").string()] = hash_file(dir / "meta.json");
      inputs[(dir / "bands.bin").string()] = hash_file(dir / "bands.bin");
    }
    listed.emplace_back(rec, std::move(dirs));
  }

  if (auto cached = try_cached(cfg, stage, inputs, params)) {
    return {stage, StageStatus::cached, *cached};
  }

  Json field_list = Json::array();
  for (const auto& [rec, dirs] : listed) {
    struct Entry {
      fs::path dir;
      core::Date date;
    };
    std::vector<Entry> clear;
    for (const fs::path& dir : dirs) {
      const scene::Scene sc = scene::load_scene(dir);
      if (sc.meta.cloud_fraction < cfg.max_cloud) clear.push_back({dir, sc.meta.acquisition_date});
    }
    std::stable_sort(clear.begin(), clear.end(),
                     [](const Entry& a, const Entry& b) { return a.date < b.date; });
    require(!clear.empty(), ErrorKind::data,
            "field '" + rec.field_id + "' has no scenes under the cloud threshold");

    Json scenes = Json::array();
    for (const Entry& e : clear) {
      scenes.push_back({{"name", e.dir.filename().string()},
                        {"dir", e.dir.string()},
                        {"date", e.date.to_iso()}});
    }
    Json f;
    f["field_id"] = rec.field_id;
    f["label"] = scene::field_label_name(rec.label);
    f["transplant"] = rec.transplant_date.to_iso();
    f["harvest"] = rec.harvest_date.to_iso();
    f["weather_ref"] = rec.weather_ref;
    f["scene_dir"] = rec.scene_dir.string();
    f["scenes"] = std::move(scenes);
    field_list.push_back(std::move(f));
  }
  Json catalog;
  catalog["fields"] = std::move(field_list);
  core::spit(catalog_path(cfg), catalog.dump(2) + "\n");

  const std::vector<fs::path> outputs = {catalog_path(cfg)};
  write_manifest(cfg, stage, "done", "", inputs, params, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_indices(const RunConfig& cfg) {
  const std::string stage = "indices";
  if (!scene_mode(cfg)) return skip_stage(cfg, stage, "input is a synthetic dataset");
  require_artifact(catalog_path(cfg), "ingest");
  const std::vector<CatalogField> catalog = load_catalog(catalog_path(cfg));

  StringMap inputs;
  inputs[catalog_path(cfg).string()] = hash_file(catalog_path(cfg));
  hash_scene_inputs(catalog, inputs);
  if (auto cached = try_cached(cfg, stage, inputs, {})) {
    return {stage, StageStatus::cached, *cached};
  }

  std::vector<fs::path> outputs;
  for (const CatalogField& field : catalog) {
    for (const CatalogScene& cs : field.scenes) {
      const scene::Scene sc = scene::load_scene(cs.dir);
      std::vector<NamedPlane> planes;
      for (indices::IndexPlane& ip : indices::compute_all(sc)) {
        planes.push_back({indices::index_name(ip.kind), std::move(ip.plane)});
      }
      const fs::path path = indices_path(cfg, field, cs);
      save_planes(planes, path);
      outputs.push_back(path);
    }
  }
  write_manifest(cfg, stage, "done", "", inputs, {}, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_traits(const RunConfig& cfg) {
  const std::string stage = "traits";
  if (!scene_mode(cfg)) return skip_stage(cfg, stage, "input is a synthetic dataset");
  require_artifact(catalog_path(cfg), "ingest");
  const std::vector<CatalogField> catalog = load_catalog(catalog_path(cfg));

  StringMap params;
  const fs::path mlp_dir = effective_mlp_dir(cfg);
  params["traits.mlp_dir"] = mlp_dir.empty() ? std::string("<reference>") : mlp_dir.string();
  StringMap inputs;
  inputs[catalog_path(cfg).string()] = hash_file(catalog_path(cfg));
  hash_scene_inputs(catalog, inputs);
  spec_inputs(cfg, inputs);
  if (auto cached = try_cached(cfg, stage, inputs, params)) {
    return {stage, StageStatus::cached, *cached};
  }

  std::vector<fs::path> outputs;
  const std::vector<traits::MlpSpec> specs = resolve_specs(cfg, &outputs);
  for (const CatalogField& field : catalog) {
    for (const CatalogScene& cs : field.scenes) {
      const scene::Scene sc = scene::load_scene(cs.dir);
      std::vector<NamedPlane> planes;
      for (traits::TraitPlane& tp : traits::infer_traits_plane(sc, specs)) {
        planes.push_back({traits::trait_name(tp.trait), std::move(tp.plane)});
      }
      const fs::path path = traits_path(cfg, field, cs);
      save_planes(planes, path);
      outputs.push_back(path);
    }
  }
  write_manifest(cfg, stage, "done", "", inputs, params, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_mask(const RunConfig& cfg) {
  const std::string stage = "mask";
  if (!scene_mode(cfg)) return skip_stage(cfg, stage, "input is a synthetic dataset");
  require_artifact(catalog_path(cfg), "ingest");
  const std::vector<CatalogField> catalog = load_catalog(catalog_path(cfg));

  StringMap params;
  params["mask.variance_target"] = core::format_double(cfg.variance_target);
  params["seed"] = std::to_string(cfg.seed);
  StringMap inputs;
  inputs[catalog_path(cfg).string()] = hash_file(catalog_path(cfg));
  for (const CatalogField& field : catalog) {
    for (const CatalogScene& cs : field.scenes) {
      const fs::path tp = traits_path(cfg, field, cs);
      require_artifact(tp, "traits");
      inputs[tp.string()] = hash_file(tp);
    }
  }
  if (auto cached = try_cached(cfg, stage, inputs, params)) {
    return {stage, StageStatus::cached, *cached};
  }

  std::vector<fs::path> outputs;
  Json peaks;
  for (const CatalogField& field : catalog) {
    // peak = scene with the highest mean CCC over its valid pixels
    int best = -1;
    double best_ccc = 0.0;
    std::vector<NamedPlane> best_planes;
    for (std::size_t k = 0; k < field.scenes.size(); ++k) {
      std::vector<NamedPlane> planes = load_planes(traits_path(cfg, field, field.scenes[k]));
      const auto it = std::find_if(planes.begin(), planes.end(),
                                   [](const NamedPlane& np) { return np.name == "CCC"; });
      require(it != planes.end(), ErrorKind::data, "traits container lacks a CCC plane");
      double sum = 0.0;
      int count = 0;
      for (std::size_t i = 0; i < it->plane.size(); ++i) {
        if (it->plane.valid[i]) {
          sum += it->plane.values[i];
          ++count;
        }
      }
      require(count > 0, ErrorKind::data,
              "field '" + field.field_id + "': scene " + field.scenes[k].name +
                  " has no valid CCC pixels");
      const double mean = sum / count;
      if (best < 0 || mean > best_ccc) {
        best = static_cast<int>(k);
        best_ccc = mean;
        best_planes = std::move(planes);
      }
    }

    std::vector<traits::TraitPlane> trait_planes;
    for (NamedPlane& np : best_planes) {
      traits::TraitPlane tp;
      tp.trait = traits::trait_from_name(np.name);
      tp.plane = std::move(np.plane);
      trait_planes.push_back(std::move(tp));
    }
    const masking::VegetationMaskResult result =
        masking::vegetation_mask(trait_planes, cfg.variance_target, cfg.seed);
    const fs::path path = mask_path(cfg, field);
    masking::write_mask_csv(result.mask, path);
    outputs.push_back(path);
    peaks[field.field_id] = {{"scene", field.scenes[best].name},
                             {"mean_ccc", num_json(best_ccc)},
                             {"degenerate", result.degenerate_warning}};
  }
  const fs::path peaks_path = cfg.out / "mask" / "peaks.json";
  core::spit(peaks_path, peaks.dump(2) + "\n");
  outputs.push_back(peaks_path);
  write_manifest(cfg, stage, "done", "", inputs, params, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_align(const RunConfig& cfg) {
  const std::string stage = "align";
  if (!scene_mode(cfg)) {
    return skip_stage(cfg, stage, "aligned stacks come straight from synthesis");
  }
  require_artifact(catalog_path(cfg), "ingest");
  const std::vector<CatalogField> catalog = load_catalog(catalog_path(cfg));

  StringMap params;
  params["gdd.t_base"] = core::format_double(cfg.t_base);
  params["stages.theta_low"] = core::format_double(cfg.theta_low);
  params["stages.theta_high"] = core::format_double(cfg.theta_high);
  params["stages.window"] = std::to_string(cfg.stage_window);
  params["align.steps"] = std::to_string(cfg.gdd_steps);

  StringMap inputs;
  inputs[catalog_path(cfg).string()] = hash_file(catalog_path(cfg));
  hash_scene_inputs(catalog, inputs);
  for (const CatalogField& field : catalog) {
    if (core::starts_with(field.weather_ref, "fetch:")) {
      inputs["weather:" + field.field_id] = field.weather_ref;
    } else {
      require(fs::exists(field.weather_ref), ErrorKind::config,
              "weather file not found: " + field.weather_ref);
      inputs[field.weather_ref] = hash_file(field.weather_ref);
    }
    for (const CatalogScene& cs : field.scenes) {
      const fs::path ip = indices_path(cfg, field, cs);
      const fs::path tp = traits_path(cfg, field, cs);
      require_artifact(ip, "indices");
      require_artifact(tp, "traits");
      inputs[ip.string()] = hash_file(ip);
      inputs[tp.string()] = hash_file(tp);
    }
    const fs::path mp = mask_path(cfg, field);
    require_artifact(mp, "mask");
    inputs[mp.string()] = hash_file(mp);
  }
  if (auto cached = try_cached(cfg, stage, inputs, params)) {
    return {stage, StageStatus::cached, *cached};
  }

  const auto& names = phenology::canonical_feature_names();
  std::vector<phenology::AlignedStack> stacks;
  Json stage_log;
  for (const CatalogField& field : catalog) {
    phenology::WeatherSeries weather;
    if (core::starts_with(field.weather_ref, "fetch:")) {
      const std::vector<std::string> parts =
          core::split(field.weather_ref.substr(6), ',');
      require(parts.size() == 2, ErrorKind::config,
              "weather descriptor must be fetch:<lat>,<lon>: " + field.weather_ref);
      weather = phenology::fetch_weather(core::parse_double(core::trim(parts[0])),
                                         core::parse_double(core::trim(parts[1])),
                                         field.transplant.plus_days(-5),
                                         field.harvest.plus_days(5), effective_cache_dir(cfg));
    } else {
      weather = phenology::load_weather_csv(field.weather_ref);
    }
    const phenology::GddCurve curve =
        phenology::cumulative_gdd(weather, field.transplant, field.harvest, cfg.t_base);

    std::vector<phenology::SceneFeatures> features;
    for (const CatalogScene& cs : field.scenes) {
      const scene::Scene sc = scene::load_scene(cs.dir);
      std::map<std::string, core::Plane> by_name;
      for (int b = 0; b < scene::kNumBands; ++b) {
        by_name[scene::band_name(static_cast<scene::BandId>(b))] = sc.planes[b];
      }
      for (NamedPlane& np : load_planes(indices_path(cfg, field, cs))) {
        by_name[np.name] = std::move(np.plane);
      }
      for (NamedPlane& np : load_planes(traits_path(cfg, field, cs))) {
        by_name[np.name] = std::move(np.plane);
      }
      phenology::SceneFeatures sf;
      sf.date = cs.date;
      for (const std::string& name : names) {
        const auto it = by_name.find(name);
        require(it != by_name.end(), ErrorKind::data,
                "feature plane '" + name + "' missing for scene " + cs.name);
        sf.planes.push_back(std::move(it->second));
      }
      features.push_back(std::move(sf));
    }

    const int w = features[0].planes[0].width;
    const int h = features[0].planes[0].height;
    const core::Plane mask = masking::load_mask_csv(mask_path(cfg, field), w, h);

    const int ccc_index =
        static_cast<int>(std::find(names.begin(), names.end(), "CCC") - names.begin());
    std::vector<phenology::CccObservation> observations;
    for (std::size_t k = 0; k < features.size(); ++k) {
      const core::Plane& ccc = features[k].planes[ccc_index];
      std::vector<double> values;
      for (std::size_t i = 0; i < ccc.size(); ++i) {
        if (mask.values[i] != 0.0 && ccc.valid[i]) values.push_back(ccc.values[i]);
      }
      require(!values.empty(), ErrorKind::data,
              "field '" + field.field_id + "': no masked CCC pixels in scene " +
                  field.scenes[k].name);
      std::sort(values.begin(), values.end());
      observations.push_back({features[k].date, values[values.size() / 2]});
    }
    const phenology::StageEstimate stages = phenology::detect_stages(
        observations, curve, cfg.theta_low, cfg.theta_high, cfg.stage_window);
    stage_log[field.field_id] = {{"transplant", stages.transplant_date.to_iso()},
                                 {"peak", stages.peak_date.to_iso()},
                                 {"harvest", stages.harvest_date.to_iso()},
                                 {"transplant_gdd", num_json(stages.transplant_gdd)},
                                 {"peak_gdd", num_json(stages.peak_gdd)},
                                 {"harvest_gdd", num_json(stages.harvest_gdd)}};

    scene::FieldRecord rec;
    rec.field_id = field.field_id;
    rec.label = field.label;
    rec.transplant_date = field.transplant;
    rec.harvest_date = field.harvest;
    rec.scene_dir = field.scene_dir;
    rec.weather_ref = field.weather_ref;
    stacks.push_back(
        phenology::assemble_feature_stack(rec, features, mask, curve, stages, cfg.gdd_steps));
  }
  phenology::save_stacks(stacks, stacks_path(cfg));
  const fs::path stages_path = cfg.out / "align" / "stages.json";
  core::spit(stages_path, stage_log.dump(2) + "\n");

  const std::vector<fs::path> outputs = {stacks_path(cfg), stages_path};
  write_manifest(cfg, stage, "done", "", inputs, params, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_train(const RunConfig& cfg) {
  const std::string stage = "train";
  require_artifact(stacks_path(cfg), scene_mode(cfg) ? "align" : "synth");

  StringMap params;
  params["seed"] = std::to_string(cfg.seed);
  params["lstm.units"] = join_ints(cfg.lstm.lstm_units);
  params["lstm.dropout"] = core::format_double(cfg.lstm.dropout_rate);
  params["lstm.dense"] = std::to_string(cfg.lstm.dense_units);
  params["train.epochs"] = std::to_string(cfg.train.epochs);
  params["train.folds"] = std::to_string(cfg.train.folds);
  params["train.test_fraction"] = core::format_double(cfg.train.test_fraction);
  params["train.validation_fraction"] = core::format_double(cfg.train.validation_fraction);
  params["train.learning_rate"] = core::format_double(cfg.train.learning_rate);
  params["train.batch_size"] = std::to_string(cfg.train.batch_size);
  StringMap inputs;
  inputs[stacks_path(cfg).string()] = hash_file(stacks_path(cfg));
  if (auto cached = try_cached(cfg, stage, inputs, params)) {
    return {stage, StageStatus::cached, *cached};
  }

  const lstm::Dataset data = dataset_from_stacks(phenology::load_stacks(stacks_path(cfg)));
  lstm::LstmConfig lc = cfg.lstm;
  lc.input_size = data.features;
  lc.sequence_length = data.steps;
  lstm::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  const lstm::CvResult cv = lstm::cross_validate(data, lc, tc);
  lstm::save_checkpoint(cv.final_model, model_path(cfg));

  Json j;
  j["n"] = data.n;
  j["steps"] = data.steps;
  j["features"] = data.features;
  j["test_indices"] = cv.test_indices;
  Json folds = Json::array();
  for (std::size_t k = 0; k < cv.fold_results.size(); ++k) {
    folds.push_back(
        {{"validation_loss", num_json(cv.fold_results[k].validation_loss)},
         {"validation_accuracy", num_json(cv.fold_results[k].validation_accuracy)},
         {"n_validation", static_cast<int>(cv.fold_results[k].validation_indices.size())}});
  }
  j["fold_results"] = std::move(folds);
  Json history = Json::array();
  for (const lstm::EpochStats& e : cv.final_model.history) {
    history.push_back({{"train_loss", num_json(e.train_loss)},
                       {"train_accuracy", num_json(e.train_accuracy)},
                       {"validation_loss", num_json(e.validation_loss)},
                       {"validation_accuracy", num_json(e.validation_accuracy)},
                       {"has_validation", e.has_validation}});
  }
  j["final_history"] = std::move(history);
  Json probs = Json::array();
  for (double p : cv.test_probabilities) probs.push_back(num_json(p));
  j["test_probabilities"] = std::move(probs);
  j["test_labels"] = cv.test_labels;
  core::spit(cv_path(cfg), j.dump(2) + "\n");

  const std::vector<fs::path> outputs = {model_path(cfg), cv_path(cfg)};
  write_manifest(cfg, stage, "done", "", inputs, params, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_evaluate(const RunConfig& cfg) {
  const std::string stage = "evaluate";
  require_artifact(cv_path(cfg), "train");

  StringMap inputs;
  inputs[cv_path(cfg).string()] = hash_file(cv_path(cfg));
  if (auto cached = try_cached(cfg, stage, inputs, {})) {
    return {stage, StageStatus::cached, *cached};
  }

  const Json cv = core::load_json(cv_path(cfg));
  std::vector<double> probabilities;
  for (const Json& p : core::member(cv, "test_probabilities", "cv.json")) {
    probabilities.push_back(num_from(p, "cv.json test probability"));
  }
  const auto labels = core::member(cv, "test_labels", "cv.json").get<std::vector<std::uint8_t>>();
  const std::vector<std::uint8_t> predictions = lstm::predict_labels(probabilities);
  const analysis::ConfusionMatrix cm = analysis::confusion(labels, predictions);
  const analysis::MetricSet metrics = analysis::metrics(cm);

  Json j;
  j["n_test"] = static_cast<int>(labels.size());
  Json norm = Json::array();
  for (int r = 0; r < 2; ++r) {
    Json row = Json::array();
    for (int c = 0; c < 2; ++c) row.push_back(num_json(cm.normalized[r][c]));
    norm.push_back(std::move(row));
  }
  j["confusion"] = {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
  j["confusion"]["normalized"] = std::move(norm);
  Json m;
  m["accuracy"] = num_json(metrics.accuracy);
  m["precision"] = metrics.precision ? num_json(*metrics.precision) : Json();
  m["recall"] = metrics.recall ? num_json(*metrics.recall) : Json();
  m["f1"] = metrics.f1 ? num_json(*metrics.f1) : Json();
  j["metrics"] = std::move(m);
  core::spit(metrics_path(cfg), j.dump(2) + "\n");

  const std::vector<fs::path> outputs = {metrics_path(cfg)};
  write_manifest(cfg, stage, "done", "", inputs, {}, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_importance(const RunConfig& cfg) {
  const std::string stage = "importance";
  require_artifact(stacks_path(cfg), scene_mode(cfg) ? "align" : "synth");
  require_artifact(model_path(cfg), "train");
  require_artifact(cv_path(cfg), "train");

  StringMap params;
  params["importance.repeats"] = std::to_string(cfg.importance_repeats);
  params["seed"] = std::to_string(cfg.seed);
  StringMap inputs;
  inputs[stacks_path(cfg).string()] = hash_file(stacks_path(cfg));
  inputs[model_path(cfg).string()] = hash_file(model_path(cfg));
  inputs[cv_path(cfg).string()] = hash_file(cv_path(cfg));
  if (auto cached = try_cached(cfg, stage, inputs, params)) {
    return {stage, StageStatus::cached, *cached};
  }

  const std::vector<phenology::AlignedStack> stacks = phenology::load_stacks(stacks_path(cfg));
  const lstm::Dataset data = dataset_from_stacks(stacks);
  const Json cv = core::load_json(cv_path(cfg));
  const auto test_indices = core::member(cv, "test_indices", "cv.json").get<std::vector<int>>();
  const lstm::Dataset test = lstm::subset(data, test_indices);
  const lstm::FitResult model = lstm::load_checkpoint(model_path(cfg));

  const analysis::ImportanceReport report = analysis::permutation_importance(
      model, test, stacks[0].feature_names, cfg.importance_repeats, cfg.seed);

  Json j;
  j["baseline_accuracy"] = num_json(report.baseline_accuracy);
  j["features"] = report.features;
  Json mean = Json::array();
  Json sd = Json::array();
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    mean.push_back(num_json(report.mean_drop[f]));
    sd.push_back(num_json(report.std_drop[f]));
  }
  j["mean_drop"] = std::move(mean);
  j["std_drop"] = std::move(sd);
  j["ranking"] = report.ranking;
  core::spit(importance_path(cfg), j.dump(2) + "\n");

  const std::vector<fs::path> outputs = {importance_path(cfg)};
  write_manifest(cfg, stage, "done", "", inputs, params, outputs);
  return {stage, StageStatus::done, outputs};
}

StageOutcome run_report(const RunConfig& cfg) {
  const std::string stage = "report";
  require_artifact(metrics_path(cfg), "evaluate");
  require_artifact(cv_path(cfg), "train");
  require_artifact(importance_path(cfg), "importance");
  require_artifact(stacks_path(cfg), scene_mode(cfg) ? "align" : "synth");

  StringMap params;
  params["report.density_features"] = std::to_string(cfg.density_features);
  StringMap inputs;
  inputs[metrics_path(cfg).string()] = hash_file(metrics_path(cfg));
  inputs[cv_path(cfg).string()] = hash_file(cv_path(cfg));
  inputs[importance_path(cfg).string()] = hash_file(importance_path(cfg));
  inputs[stacks_path(cfg).string()] = hash_file(stacks_path(cfg));
  if (auto cached = try_cached(cfg, stage, inputs, params)) {
    return {stage, StageStatus::cached, *cached};
  }

  analysis::Report report;

  const Json mj = core::load_json(metrics_path(cfg));
  const Json& cj = core::member(mj, "confusion", "metrics.json");
  report.confusion.tp = core::get_int(cj, "tp", "metrics.json");
  report.confusion.fp = core::get_int(cj, "fp", "metrics.json");
  report.confusion.fn = core::get_int(cj, "fn", "metrics.json");
  report.confusion.tn = core::get_int(cj, "tn", "metrics.json");
  const Json& norm = core::member(cj, "normalized", "metrics.json");
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      report.confusion.normalized[r][c] = num_from(norm[r][c], "metrics.json normalized");
    }
  }
  const Json& metr = core::member(mj, "metrics", "metrics.json");
  report.metrics.accuracy = num_from(core::member(metr, "accuracy", "metrics.json"), "accuracy");
  const auto opt = [&](const char* key) -> std::optional<double> {
    if (!metr.contains(key) || metr[key].is_null()) return std::nullopt;
    return num_from(metr[key], key);
  };
  report.metrics.precision = opt("precision");
  report.metrics.recall = opt("recall");
  report.metrics.f1 = opt("f1");

  const Json cv = core::load_json(cv_path(cfg));
  for (const Json& e : core::member(cv, "final_history", "cv.json")) {
    lstm::EpochStats stats;
    stats.train_loss = num_from(core::member(e, "train_loss", "cv.json"), "train_loss");
    stats.train_accuracy =
        num_from(core::member(e, "train_accuracy", "cv.json"), "train_accuracy");
    stats.validation_loss =
        num_from(core::member(e, "validation_loss", "cv.json"), "validation_loss");
    stats.validation_accuracy =
        num_from(core::member(e, "validation_accuracy", "cv.json"), "validation_accuracy");
    stats.has_validation = core::get_bool_or(e, "has_validation", false);
    report.history.push_back(stats);
  }

  const Json ij = core::load_json(importance_path(cfg));
  report.importance.baseline_accuracy =
      num_from(core::member(ij, "baseline_accuracy", "importance.json"), "baseline_accuracy");
  report.importance.features =
      core::member(ij, "features", "importance.json").get<std::vector<std::string>>();
  for (const Json& v : core::member(ij, "mean_drop", "importance.json")) {
    report.importance.mean_drop.push_back(num_from(v, "mean_drop"));
  }
  for (const Json& v : core::member(ij, "std_drop", "importance.json")) {
    report.importance.std_drop.push_back(num_from(v, "std_drop"));
  }
  report.importance.ranking =
      core::member(ij, "ranking", "importance.json").get<std::vector<int>>();

  // density curves: the top-ranked features, each class over the held-out
  // pixels, one value per pixel = mean over the middle half of the season
  const lstm::Dataset data =
      dataset_from_stacks(phenology::load_stacks(stacks_path(cfg)));
  const auto test_indices = core::member(cv, "test_indices", "cv.json").get<std::vector<int>>();
  const int lo = data.steps / 4;
  const int hi = 3 * data.steps / 4;
  const int top = std::min<int>(cfg.density_features,
                                static_cast<int>(report.importance.ranking.size()));
  for (int r = 0; r < top; ++r) {
    const int f = report.importance.ranking[r];
    for (const std::uint8_t cls : {std::uint8_t{1}, std::uint8_t{0}}) {
      std::vector<double> values;
      for (const int idx : test_indices) {
        if (data.labels[idx] != cls) continue;
        double sum = 0.0;
        for (int t = lo; t < hi; ++t) {
          sum += data.inputs[(static_cast<std::size_t>(idx) * data.steps + t) * data.features + f];
        }
        values.push_back(sum / (hi - lo));
      }
      if (values.size() < 2) continue;
      try {
        report.densities.push_back(analysis::kde(values, report.importance.features[f],
                                                 cls ? "infested" : "clean"));
      } catch (const core::Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;  // zero spread: no curve
      }
    }
  }

  const std::vector<fs::path> outputs = analysis::emit_report(report, cfg.out / "report");
  write_manifest(cfg, stage, "done", "", inputs, params, outputs);
  return {stage, StageStatus::done, outputs};
}

}  // namespace

// --- dispatch ----------------------------------------------------------------

const char* stage_status_name(StageStatus status) {
  switch (status) {
    case StageStatus::done:    return "done";
    case StageStatus::cached:  return "cached";
    case StageStatus::skipped: return "skipped";
  }
  return "unknown";
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "synth", "ingest", "indices", "traits",   "mask",
      "align", "train",  "evaluate", "importance", "report"};
  return names;
}

StageOutcome run_stage(const std::string& name, const RunConfig& cfg) {
  try {
    validate_run(cfg);
    if (name == "synth") return run_synth(cfg);
    if (name == "ingest") return run_ingest(cfg);
    if (name == "indices") return run_indices(cfg);
    if (name == "traits") return run_traits(cfg);
    if (name == "mask") return run_mask(cfg);
    if (name == "align") return run_align(cfg);
    if (name == "train") return run_train(cfg);
    if (name == "evaluate") return run_evaluate(cfg);
    if (name == "importance") return run_importance(cfg);
    if (name == "report") return run_report(cfg);
    core::fail(ErrorKind::config, "unknown stage '" + name + "'");
  } catch (const core::Error& e) {
    throw core::Error(e.kind(), "stage " + name + ": " + e.what());
  }
}

std::vector<StageOutcome> run_pipeline(const RunConfig& cfg) {
  std::vector<StageOutcome> outcomes;
  for (const std::string& name : stage_names()) outcomes.push_back(run_stage(name, cfg));
  return outcomes;
}

int exit_code_for(const core::Error& error) {
  switch (error.kind()) {
    case ErrorKind::config:  return 2;
    case ErrorKind::data:    return 3;
    case ErrorKind::io:      return 3;
    case ErrorKind::numeric: return 4;
  }
  return 1;
}

}  // namespace cropstress::cli
