#include "cropstress/synth/synth.hpp"

#include <algorithm>
#include <cmath>

#include "cropstress/core/error.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/phenology/align.hpp"

namespace cropstress::synth {

using core::ErrorKind;
using core::require;

double profile_value(const TrapezoidProfile& profile, int step) {
  require(step >= 0 && step < profile.steps, ErrorKind::config, "profile step out of range");
  if (step < profile.rise) {
    return static_cast<double>(step + 1) / static_cast<double>(profile.rise + 1);
  }
  if (step < profile.steps - profile.fall) return 1.0;
  return static_cast<double>(profile.steps - step) / static_cast<double>(profile.fall + 1);
}

bool in_plateau(const TrapezoidProfile& profile, int step) {
  return step >= profile.rise && step < profile.steps - profile.fall;
}

void validate_synth_config(const SynthConfig& config) {
  require(config.pixels_per_class >= 1, ErrorKind::config, "pixels_per_class must be >= 1");
  require(config.noise_sd > 0.0 && std::isfinite(config.noise_sd), ErrorKind::config,
          "noise_sd must be positive");
  require(config.profile.steps >= 2, ErrorKind::config, "profile needs at least 2 steps");
  require(config.profile.rise >= 1 && config.profile.fall >= 1, ErrorKind::config,
          "profile rise and fall must be >= 1");
  require(config.profile.rise + config.profile.fall < config.profile.steps, ErrorKind::config,
          "profile leaves no plateau");
  require(config.informative.size() == config.offsets.size(), ErrorKind::config,
          "offsets must pair up with the informative features");
  for (const double o : config.offsets) {
    require(std::isfinite(o), ErrorKind::config, "offsets must be finite");
  }
  const auto indices = informative_feature_indices(config);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (std::size_t j = i + 1; j < indices.size(); ++j) {
      require(indices[i] != indices[j], ErrorKind::config,
              "informative features must be distinct");
    }
  }
}

std::vector<int> informative_feature_indices(const SynthConfig& config) {
  const std::vector<std::string>& names = phenology::canonical_feature_names();
  std::vector<int> out;
  out.reserve(config.informative.size());
  for (const std::string& want : config.informative) {
    const auto it = std::find(names.begin(), names.end(), want);
    require(it != names.end(), ErrorKind::config, "unknown feature name: '" + want + "'");
    out.push_back(static_cast<int>(it - names.begin()));
  }
  return out;
}

SynthDataset gen_dataset(const SynthConfig& config) {
  validate_synth_config(config);
  const std::vector<int> informative = informative_feature_indices(config);
  const int n_features = phenology::kNumFeatures;
  const int steps = config.profile.steps;
  const int n = 2 * config.pixels_per_class;

  // per-(feature, step) mean shift of the clean class, in value units
  std::vector<double> delta(static_cast<std::size_t>(n_features) * steps, 0.0);
  for (std::size_t k = 0; k < informative.size(); ++k) {
    for (int t = 0; t < steps; ++t) {
      if (config.plateau_only && !in_plateau(config.profile, t)) continue;
      delta[static_cast<std::size_t>(informative[k]) * steps + t] =
          config.offsets[k] * config.noise_sd;
    }
  }

  SynthDataset out;
  out.data.n = n;
  out.data.steps = steps;
  out.data.features = n_features;
  out.data.inputs.resize(static_cast<std::size_t>(n) * steps * n_features);
  out.data.labels.resize(n);

  const std::uint64_t stream = core::fnv1a64("synth-pixel");
  for (int i = 0; i < n; ++i) {
    const std::uint8_t label = i < config.pixels_per_class ? 1 : 0;
    out.data.labels[i] = label;
    core::Rng rng(core::Rng::derive(config.seed, stream, static_cast<std::uint64_t>(i)));
    double* pixel = out.data.inputs.data() + static_cast<std::size_t>(i) * steps * n_features;
    for (int t = 0; t < steps; ++t) {
      const double base = profile_value(config.profile, t);
      for (int f = 0; f < n_features; ++f) {
        double v = base + rng.normal(0.0, config.noise_sd);
        if (label == 0) v += delta[static_cast<std::size_t>(f) * steps + t];
        pixel[static_cast<std::size_t>(t) * n_features + f] = v;
      }
    }
  }

  out.truth.config = config;
  out.truth.informative_features = informative;
  out.truth.labels = out.data.labels;
  return out;
}

namespace {

// Standardized mean shifts (offset / noise ratio) of every offset-carrying
// cell; the likelihood ratio depends on nothing else.
std::vector<double> offset_cells(const SynthConfig& config) {
  std::vector<double> cells;
  const int plateau_steps = config.profile.steps - config.profile.rise - config.profile.fall;
  const int active = config.plateau_only ? plateau_steps : config.profile.steps;
  for (const double o : config.offsets) {
    for (int t = 0; t < active; ++t) cells.push_back(o);
  }
  return cells;
}

}  // namespace

double closed_form_accuracy(const SynthConfig& config) {
  validate_synth_config(config);
  double ss = 0.0;
  for (const double d : offset_cells(config)) ss += d * d;
  return core::normal_cdf(std::sqrt(ss) / 2.0);
}

BayesEstimate bayes_oracle(const SynthConfig& config, int n_samples) {
  validate_synth_config(config);
  require(n_samples >= 2, ErrorKind::config, "bayes oracle needs at least 2 samples");
  const std::vector<double> cells = offset_cells(config);

  const std::uint64_t stream = core::fnv1a64("bayes-mc");
  std::int64_t correct = 0;
  for (int s = 0; s < n_samples; ++s) {
    const int cls = s % 2;  // 0 = clean (shifted up), 1 = infested (base)
    core::Rng rng(core::Rng::derive(config.seed, stream, static_cast<std::uint64_t>(s)));
    // log-likelihood-ratio score, positive favors clean; ties predict clean
    double score = 0.0;
    for (const double d : cells) {
      const double centered = (cls == 0 ? 0.5 * d : -0.5 * d) + rng.normal(0.0, 1.0);
      score += d * centered;
    }
    const int predicted = score >= 0.0 ? 0 : 1;
    correct += predicted == cls;
  }

  BayesEstimate est;
  est.n_samples = n_samples;
  est.accuracy = static_cast<double>(correct) / static_cast<double>(n_samples);
  est.ci_half_width =
      1.96 * std::sqrt(est.accuracy * (1.0 - est.accuracy) / static_cast<double>(n_samples));
  return est;
}

}  // namespace cropstress::synth
