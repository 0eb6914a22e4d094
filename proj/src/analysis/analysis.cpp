#include "cropstress/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cropstress/core/error.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::analysis {

using core::Error;
using core::ErrorKind;
using core::require;

ConfusionMatrix confusion(const std::vector<std::uint8_t>& labels,
                          const std::vector<std::uint8_t>& predictions) {
  require(!labels.empty(), ErrorKind::data, "confusion needs at least one sample");
  require(labels.size() == predictions.size(), ErrorKind::data,
          "labels and predictions differ in length");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    require((y == 0 || y == 1) && (p == 0 || p == 1), ErrorKind::data,
            "confusion inputs must be 0/1");
    if (y == 1) {
      (p == 1 ? cm.tp : cm.fn) += 1;
    } else {
      (p == 1 ? cm.fp : cm.tn) += 1;
    }
  }
  const double pos = static_cast<double>(cm.tp + cm.fn);
  const double neg = static_cast<double>(cm.fp + cm.tn);
  if (pos > 0) {
    cm.normalized[0][0] = static_cast<double>(cm.tp) / pos;
    cm.normalized[0][1] = static_cast<double>(cm.fn) / pos;
  }
  if (neg > 0) {
    cm.normalized[1][0] = static_cast<double>(cm.fp) / neg;
    cm.normalized[1][1] = static_cast<double>(cm.tn) / neg;
  }
  return cm;
}

MetricSet metrics(const ConfusionMatrix& cm) {
  require(cm.tp >= 0 && cm.fp >= 0 && cm.fn >= 0 && cm.tn >= 0, ErrorKind::data,
          "confusion counts must be non-negative");
  const std::int64_t n = cm.total();
  require(n > 0, ErrorKind::data, "metrics need a nonempty confusion matrix");
  MetricSet m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n);
  if (cm.tp + cm.fp > 0) {
    m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  }
  if (cm.tp + cm.fn > 0) {
    m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  }
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

namespace {

double label_accuracy(const std::vector<std::uint8_t>& predicted,
                      const std::vector<std::uint8_t>& truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace

ImportanceReport permutation_importance(const Predictor& predict, const lstm::Dataset& data,
                                        const std::vector<std::string>& feature_names,
                                        int repeats, std::uint64_t seed) {
  lstm::validate_dataset(data);
  require(repeats >= 1, ErrorKind::config, "permutation importance needs repeats >= 1");
  require(static_cast<int>(feature_names.size()) == data.features, ErrorKind::config,
          "feature name list does not match the dataset width");

  ImportanceReport report;
  report.features = feature_names;
  report.mean_drop.assign(data.features, 0.0);
  report.std_drop.assign(data.features, 0.0);

  const std::vector<std::uint8_t> base_pred = predict(data);
  require(base_pred.size() == static_cast<std::size_t>(data.n), ErrorKind::config,
          "predictor returned the wrong number of labels");
  report.baseline_accuracy = label_accuracy(base_pred, data.labels);

  const std::uint64_t stream = core::fnv1a64("perm-importance");
  const std::size_t row = static_cast<std::size_t>(data.features);
  lstm::Dataset scratch = data;
  std::vector<int> perm(data.n);
  std::vector<double> drops(repeats);
  for (int f = 0; f < data.features; ++f) {
    for (int r = 0; r < repeats; ++r) {
      core::Rng rng(core::Rng::derive(
          seed, stream, static_cast<std::uint64_t>(f) * static_cast<std::uint64_t>(repeats) + r));
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      for (int i = 0; i < data.n; ++i) {
        const double* src =
            data.inputs.data() + (static_cast<std::size_t>(perm[i]) * data.steps) * row + f;
        double* dst = scratch.inputs.data() + (static_cast<std::size_t>(i) * data.steps) * row + f;
        for (int t = 0; t < data.steps; ++t) dst[static_cast<std::size_t>(t) * row] = src[static_cast<std::size_t>(t) * row];
      }
      const std::vector<std::uint8_t> pred = predict(scratch);
      require(pred.size() == static_cast<std::size_t>(data.n), ErrorKind::config,
              "predictor returned the wrong number of labels");
      drops[r] = report.baseline_accuracy - label_accuracy(pred, data.labels);
    }
    // put the original trajectories back before the next feature
    for (int i = 0; i < data.n; ++i) {
      const double* src = data.inputs.data() + (static_cast<std::size_t>(i) * data.steps) * row + f;
      double* dst = scratch.inputs.data() + (static_cast<std::size_t>(i) * data.steps) * row + f;
      for (int t = 0; t < data.steps; ++t) dst[static_cast<std::size_t>(t) * row] = src[static_cast<std::size_t>(t) * row];
    }
    report.mean_drop[f] = core::mean(drops);
    report.std_drop[f] = std::sqrt(core::variance_population(drops));
  }

  report.ranking.resize(data.features);
  std::iota(report.ranking.begin(), report.ranking.end(), 0);
  std::stable_sort(report.ranking.begin(), report.ranking.end(),
                   [&](int a, int b) { return report.mean_drop[a] > report.mean_drop[b]; });
  return report;
}

ImportanceReport permutation_importance(const lstm::FitResult& model, const lstm::Dataset& data,
                                        const std::vector<std::string>& feature_names,
                                        int repeats, std::uint64_t seed) {
  const Predictor predict = [&model](const lstm::Dataset& d) {
    return lstm::predict_labels(lstm::predict_probabilities(model, d));
  };
  return permutation_importance(predict, data, feature_names, repeats, seed);
}

DensityCurve kde(const std::vector<double>& values, const std::string& feature,
                 const std::string& class_tag, int grid_size) {
  require(values.size() >= 2, ErrorKind::data, "kde needs at least two values");
  require(grid_size >= 2, ErrorKind::config, "kde grid needs at least two points");
  const double sigma = std::sqrt(core::variance_population(values));
  require(sigma > 0.0, ErrorKind::numeric,
          "kde on identical values would be a degenerate spike");

  const double n = static_cast<double>(values.size());
  const double h = 1.06 * sigma * std::pow(n, -0.2);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it - 3.0 * h;
  const double hi = *hi_it + 3.0 * h;
  const double step = (hi - lo) / static_cast<double>(grid_size - 1);

  DensityCurve curve;
  curve.feature = feature;
  curve.class_tag = class_tag;
  curve.bandwidth = h;
  curve.value.resize(grid_size);
  curve.density.resize(grid_size);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * 3.141592653589793238462643383279502884));
  for (int g = 0; g < grid_size; ++g) {
    const double x = lo + step * g;
    double sum = 0.0;
    for (const double v : values) {
      const double u = (x - v) / h;
      sum += std::exp(-0.5 * u * u);
    }
    curve.value[g] = x;
    curve.density[g] = norm * sum;
  }
  return curve;
}

}  // namespace cropstress::analysis
