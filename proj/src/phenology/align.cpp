#include "cropstress/phenology/align.hpp"

#include <algorithm>
#include <cstring>

#include "cropstress/core/error.hpp"
#include "cropstress/core/jsonio.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/indices/indices.hpp"

namespace cropstress::phenology {

using core::ErrorKind;
using core::require;

const std::vector<std::string>& canonical_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    n.reserve(kNumFeatures);
    for (int b = 0; b < scene::kNumBands; ++b) {
      n.push_back(scene::band_name(static_cast<scene::BandId>(b)));
    }
    for (int i = 0; i < indices::kNumIndices; ++i) {
      n.push_back(indices::index_name(static_cast<indices::IndexKind>(i)));
    }
    for (int t = 0; t < traits::kNumTraits; ++t) {
      n.push_back(traits::trait_name(static_cast<traits::TraitKind>(t)));
    }
    return n;
  }();
  return names;
}

SceneFeatures compute_scene_features(const scene::Scene& scene,
                                     const std::vector<traits::MlpSpec>& specs) {
  require(static_cast<int>(specs.size()) == traits::kNumTraits, ErrorKind::config,
          "feature computation needs one MLP spec per trait");
  for (int t = 0; t < traits::kNumTraits; ++t) {
    require(specs[t].trait == static_cast<traits::TraitKind>(t), ErrorKind::config,
            "MLP specs must arrive in trait declaration order");
  }

  SceneFeatures out;
  out.date = scene.meta.acquisition_date;
  out.planes.reserve(kNumFeatures);
  for (const auto& plane : scene.planes) out.planes.push_back(plane);
  for (auto& ip : indices::compute_all(scene)) out.planes.push_back(std::move(ip.plane));
  for (auto& tp : traits::infer_traits_plane(scene, specs)) {
    out.planes.push_back(std::move(tp.plane));
  }
  return out;
}

AlignedStack assemble_feature_stack(const scene::FieldRecord& field,
                                    const std::vector<SceneFeatures>& scenes,
                                    const core::Plane& vegetation_mask,
                                    const GddCurve& curve, const StageEstimate& stages,
                                    int n_steps) {
  require(!scenes.empty(), ErrorKind::data,
          "field '" + field.field_id + "': no scenes to align");
  const int w = vegetation_mask.width;
  const int h = vegetation_mask.height;
  for (const auto& sf : scenes) {
    require(static_cast<int>(sf.planes.size()) == kNumFeatures, ErrorKind::data,
            "scene features must hold exactly 37 planes");
    for (const auto& p : sf.planes) {
      require(p.width == w && p.height == h, ErrorKind::data,
              "feature plane dimensions disagree with the vegetation mask");
    }
  }
  for (std::size_t i = 1; i < scenes.size(); ++i) {
    require(scenes[i - 1].date < scenes[i].date, ErrorKind::data,
            "scene features must be chronological");
  }

  // Scenes outside the thermal-time range cannot be placed on the GDD axis.
  std::vector<const SceneFeatures*> in_season;
  for (const auto& sf : scenes) {
    if (curve.covers(sf.date)) in_season.push_back(&sf);
  }
  require(in_season.size() >= 2, ErrorKind::data,
          "field '" + field.field_id + "': fewer than 2 clear scenes in season");

  std::vector<double> scene_gdd;
  scene_gdd.reserve(in_season.size());
  for (const auto* sf : in_season) scene_gdd.push_back(curve.at(sf->date));

  AlignedStack stack;
  stack.field_id = field.field_id;
  stack.feature_names = canonical_feature_names();
  stack.gdd_grid = make_gdd_grid(stages.harvest_gdd, n_steps);
  const int label = field.label == scene::FieldLabel::infested ? 1 : 0;

  std::vector<GddSample> samples(in_season.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!vegetation_mask.is_valid(x, y) || vegetation_mask.at(x, y) == 0.0) continue;
      stack.pixels.push_back({x, y});
      stack.labels.push_back(label);
      for (int f = 0; f < kNumFeatures; ++f) {
        for (std::size_t s = 0; s < in_season.size(); ++s) {
          const core::Plane& plane = in_season[s]->planes[f];
          samples[s] = {scene_gdd[s], plane.valid[plane.index(x, y)] ? plane.at(x, y) : 0.0,
                        plane.is_valid(x, y)};
        }
        const std::vector<double> row = resample_to_gdd_grid(samples, stack.gdd_grid);
        stack.tensor.insert(stack.tensor.end(), row.begin(), row.end());
      }
    }
  }
  require(!stack.pixels.empty(), ErrorKind::data,
          "field '" + field.field_id + "': vegetation mask selected no pixels");
  return stack;
}

namespace {

constexpr char kStackMagic[8] = {'C', 'S', 'S', 'T', 'A', 'C', 'K', '1'};

}  // namespace

void save_stacks(const std::vector<AlignedStack>& stacks, const std::filesystem::path& path) {
  require(!stacks.empty(), ErrorKind::config, "no stacks to save");

  core::Json header;
  core::Json list = core::Json::array();
  for (const auto& stack : stacks) {
    require(stack.tensor.size() == static_cast<std::size_t>(stack.n_pixels()) *
                                       stack.n_features() * stack.n_steps(),
            ErrorKind::config, "stack tensor size disagrees with its shape");
    require(stack.labels.size() == stack.pixels.size(), ErrorKind::config,
            "stack labels must match pixel count");
    core::Json s;
    s["field_id"] = stack.field_id;
    s["feature_names"] = stack.feature_names;
    s["gdd_grid"] = stack.gdd_grid;
    core::Json px = core::Json::array();
    for (const auto& p : stack.pixels) px.push_back({p.x, p.y});
    s["pixels"] = std::move(px);
    s["labels"] = stack.labels;
    list.push_back(std::move(s));
  }
  header["stacks"] = std::move(list);

  std::string blob;
  blob.append(kStackMagic, sizeof(kStackMagic));
  const std::string header_text = header.dump();
  core::put_u32(blob, static_cast<std::uint32_t>(header_text.size()));
  blob += header_text;
  for (const auto& stack : stacks) {
    for (double v : stack.tensor) core::put_f64(blob, v);
  }
  core::put_u32(blob, core::crc32(blob.data(), blob.size()));
  core::spit(path, blob);
}

std::vector<AlignedStack> load_stacks(const std::filesystem::path& path) {
  const std::string blob = core::slurp(path);
  require(blob.size() >= sizeof(kStackMagic) + 8, ErrorKind::data,
          path.string() + ": truncated stack file");
  require(std::memcmp(blob.data(), kStackMagic, sizeof(kStackMagic)) == 0, ErrorKind::data,
          path.string() + ": not a stack file (bad magic)");

  std::size_t tail = blob.size() - 4;
  const std::uint32_t declared = core::crc32(blob.data(), tail);
  std::size_t pos = tail;
  require(core::get_u32(blob, pos) == declared, ErrorKind::data,
          path.string() + ": checksum mismatch (corrupted stack file)");

  pos = sizeof(kStackMagic);
  const std::uint32_t header_len = core::get_u32(blob, pos);
  require(pos + header_len <= tail, ErrorKind::data, path.string() + ": truncated header");
  const core::Json header =
      core::parse_json(blob.substr(pos, header_len), path.string() + " header");
  pos += header_len;

  std::vector<AlignedStack> stacks;
  for (const auto& s : core::member(header, "stacks", path.string())) {
    AlignedStack stack;
    stack.field_id = core::get_string(s, "field_id", path.string());
    stack.feature_names = core::member(s, "feature_names", path.string())
                              .get<std::vector<std::string>>();
    stack.gdd_grid = core::member(s, "gdd_grid", path.string()).get<std::vector<double>>();
    for (const auto& p : core::member(s, "pixels", path.string())) {
      require(p.is_array() && p.size() == 2, ErrorKind::data,
              path.string() + ": pixel entries must be [x, y]");
      stack.pixels.push_back({p[0].get<int>(), p[1].get<int>()});
    }
    stack.labels = core::member(s, "labels", path.string()).get<std::vector<int>>();
    require(stack.labels.size() == stack.pixels.size(), ErrorKind::data,
            path.string() + ": labels and pixels disagree in length");

    const std::size_t count = static_cast<std::size_t>(stack.n_pixels()) *
                              stack.n_features() * stack.n_steps();
    require(pos + count * sizeof(double) <= tail, ErrorKind::data,
            path.string() + ": tensor payload truncated");
    stack.tensor.reserve(count);
    for (std::size_t i = 0; i < count; ++i) stack.tensor.push_back(core::get_f64(blob, pos));
    stacks.push_back(std::move(stack));
  }
  require(pos == tail, ErrorKind::data, path.string() + ": trailing bytes after tensors");
  return stacks;
}

}  // namespace cropstress::phenology
