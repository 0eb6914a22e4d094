#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cropstress/lstm/lstm.hpp"

namespace cropstress::lstm {

// Sample-major pixel sequences: inputs[s*steps*features + t*features + f].
struct Dataset {
  int n = 0;
  int steps = 0;
  int features = 0;
  std::vector<double> inputs;
  std::vector<std::uint8_t> labels;
};

void validate_dataset(const Dataset& data);
Dataset subset(const Dataset& data, const std::vector<int>& indices);

// Per-feature standardization over all samples and steps; population sigma,
// flat features pass through with scale 1.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> scale;
};

FeatureStats fit_feature_stats(const Dataset& data);
Dataset apply_feature_stats(const Dataset& data, const FeatureStats& stats);

struct TrainConfig {
  int epochs = 100;
  int folds = 5;
  double test_fraction = 0.30;
  // Fraction of the data handed to fit() that is carved out for monitoring.
  // 0.1875 reproduces a 65:15 train:validation ratio on the non-test portion.
  double validation_fraction = 0.1875;
  double learning_rate = 1e-3;
  int batch_size = 64;
  std::uint64_t seed = 1;
};

void validate_train_config(const TrainConfig& config);

// Train figures are running averages over the epoch's optimization batches
// (dropout active, measured before each update); validation figures come from
// a full eval pass after the epoch.
struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
  bool has_validation = false;
};

struct FitResult {
  LstmConfig config;
  FeatureStats stats;  // fit on the training portion only
  std::vector<double> params;
  std::vector<EpochStats> history;
};

// Adam over shuffled mini-batches; deterministic per seed. Standardization
// statistics come from the training rows alone.
FitResult fit_explicit(const Dataset& train, const Dataset* validation,
                       const LstmConfig& config, const TrainConfig& train_config);

// Carves a stratified validation split per validation_fraction, then trains.
FitResult fit(const Dataset& data, const LstmConfig& config, const TrainConfig& train_config);

// Eval-mode probabilities on raw (unstandardized) data.
std::vector<double> predict_probabilities(const FitResult& model, const Dataset& raw);

// Threshold rule: probability >= 0.5 maps to the positive class.
std::vector<std::uint8_t> predict_labels(const std::vector<double>& probabilities);

double accuracy(const std::vector<double>& probabilities,
                const std::vector<std::uint8_t>& labels);

// Draws a stratified sample of round(fraction * count) indices per class;
// returned indices are sorted. The complement keeps the rest.
std::vector<int> stratified_sample(const std::vector<std::uint8_t>& labels, double fraction,
                                   core::Rng& rng);

// Deals each class round-robin into k folds after a shuffle; folds are
// disjoint, cover every index, and keep the class ratio.
std::vector<std::vector<int>> stratified_folds(const std::vector<std::uint8_t>& labels, int k,
                                               core::Rng& rng);

struct FoldResult {
  std::vector<int> validation_indices;  // into the non-test subset
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct CvResult {
  std::vector<int> test_indices;        // into the full dataset, sorted
  std::vector<std::vector<int>> folds;  // into the non-test subset
  std::vector<FoldResult> fold_results;
  FitResult final_model;  // retrained on all non-test data
  std::vector<double> test_probabilities;
  std::vector<std::uint8_t> test_labels;
};

// Stratified test holdout first, k-fold cross-validation on the remainder
// (each fold serves once as the monitoring set), then a final retrain on all
// non-test data evaluated once against the holdout.
CvResult cross_validate(const Dataset& data, const LstmConfig& config,
                        const TrainConfig& train_config);

// Versioned, checksummed binary checkpoint; round-trips config, feature
// statistics and parameters bit-exactly.
void save_checkpoint(const FitResult& model, const std::filesystem::path& path);
FitResult load_checkpoint(const std::filesystem::path& path);

}  // namespace cropstress::lstm
