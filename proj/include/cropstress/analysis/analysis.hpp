#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cropstress/lstm/train.hpp"

namespace cropstress::analysis {

// Binary confusion counts with infested as the positive class. The normalized
// form is row-stochastic: rows are true classes (infested first, then clean),
// columns are predicted classes in the same order. A row with no samples
// normalizes to zeros.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
  std::array<std::array<double, 2>, 2> normalized{};

  std::int64_t total() const { return tp + fp + fn + tn; }
};

ConfusionMatrix confusion(const std::vector<std::uint8_t>& labels,
                          const std::vector<std::uint8_t>& predictions);

// Ratios whose denominator is zero stay unset instead of reading as 0.
struct MetricSet {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

MetricSet metrics(const ConfusionMatrix& cm);

struct ImportanceReport {
  double baseline_accuracy = 0.0;
  std::vector<std::string> features;
  std::vector<double> mean_drop;  // baseline minus permuted accuracy, averaged
  std::vector<double> std_drop;   // population std over repeats
  std::vector<int> ranking;       // feature indices, mean drop descending
};

using Predictor = std::function<std::vector<std::uint8_t>(const lstm::Dataset&)>;

// Scores each feature by shuffling its whole per-sample trajectory across
// samples (temporal shape preserved), re-predicting, and recording the
// accuracy drop against the unpermuted baseline. Each (feature, repeat) cell
// draws its permutation from an independently derived seed, so results do not
// depend on evaluation order.
ImportanceReport permutation_importance(const Predictor& predict, const lstm::Dataset& data,
                                        const std::vector<std::string>& feature_names,
                                        int repeats, std::uint64_t seed);

ImportanceReport permutation_importance(const lstm::FitResult& model, const lstm::Dataset& data,
                                        const std::vector<std::string>& feature_names,
                                        int repeats, std::uint64_t seed);

struct DensityCurve {
  std::string feature;
  std::string class_tag;
  double bandwidth = 0.0;
  std::vector<double> value;    // uniform grid over [min - 3h, max + 3h]
  std::vector<double> density;  // same length, all >= 0
};

// Gaussian kernel density estimate with Silverman's bandwidth
// 1.06 * sigma * n^(-1/5) (population sigma). Needs at least two values with
// nonzero spread; identical values would be a bandwidth-zero spike.
DensityCurve kde(const std::vector<double>& values, const std::string& feature,
                 const std::string& class_tag, int grid_size = 256);

struct Report {
  ConfusionMatrix confusion;
  MetricSet metrics;
  std::vector<lstm::EpochStats> history;
  ImportanceReport importance;
  std::vector<DensityCurve> densities;
};

// Writes metrics.csv, history.csv, importance.csv, density.csv and a
// self-contained SVG chart next to each (metrics.svg, history.svg,
// importance.svg, density.svg) into out_dir, creating it if needed. Returns
// the paths written. Output is byte-deterministic for equal inputs.
std::vector<std::filesystem::path> emit_report(const Report& report,
                                               const std::filesystem::path& out_dir);

// Reads a metrics.csv produced by emit_report back into a MetricSet; empty
// value cells map to unset metrics.
MetricSet parse_metrics_csv(const std::filesystem::path& path);

}  // namespace cropstress::analysis
