#include "cropstress/lstm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "cropstress/core/error.hpp"
#include "cropstress/core/jsonio.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::lstm {

using core::ErrorKind;
using core::require;

void validate_dataset(const Dataset& data) {
  require(data.n >= 1 && data.steps >= 1 && data.features >= 1, ErrorKind::data,
          "dataset dimensions must be positive");
  const std::size_t want =
      static_cast<std::size_t>(data.n) * data.steps * data.features;
  require(data.inputs.size() == want, ErrorKind::data, "dataset tensor size mismatch");
  require(data.labels.size() == static_cast<std::size_t>(data.n), ErrorKind::data,
          "dataset label count mismatch");
  for (const double v : data.inputs) {
    require(std::isfinite(v), ErrorKind::data, "dataset contains a non-finite value");
  }
  for (const auto y : data.labels) {
    require(y == 0 || y == 1, ErrorKind::data, "labels must be 0 or 1");
  }
}

Dataset subset(const Dataset& data, const std::vector<int>& indices) {
  Dataset out;
  out.n = static_cast<int>(indices.size());
  out.steps = data.steps;
  out.features = data.features;
  const std::size_t stride = static_cast<std::size_t>(data.steps) * data.features;
  out.inputs.resize(indices.size() * stride);
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int s = indices[i];
    require(s >= 0 && s < data.n, ErrorKind::config, "subset index out of range");
    std::memcpy(out.inputs.data() + i * stride, data.inputs.data() + s * stride,
                sizeof(double) * stride);
    out.labels[i] = data.labels[s];
  }
  return out;
}

FeatureStats fit_feature_stats(const Dataset& data) {
  validate_dataset(data);
  const std::size_t rows = static_cast<std::size_t>(data.n) * data.steps;
  FeatureStats stats;
  stats.mean.assign(data.features, 0.0);
  stats.scale.assign(data.features, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = data.inputs.data() + r * data.features;
    for (int f = 0; f < data.features; ++f) stats.mean[f] += row[f];
  }
  for (int f = 0; f < data.features; ++f) stats.mean[f] /= static_cast<double>(rows);
  std::vector<double> ss(data.features, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = data.inputs.data() + r * data.features;
    for (int f = 0; f < data.features; ++f) {
      const double d = row[f] - stats.mean[f];
      ss[f] += d * d;
    }
  }
  for (int f = 0; f < data.features; ++f) {
    const double variance = ss[f] / static_cast<double>(rows);
    if (variance > 0.0) stats.scale[f] = std::sqrt(variance);
  }
  return stats;
}

Dataset apply_feature_stats(const Dataset& data, const FeatureStats& stats) {
  require(static_cast<int>(stats.mean.size()) == data.features &&
              stats.mean.size() == stats.scale.size(),
          ErrorKind::config, "feature statistics do not match the dataset");
  Dataset out = data;
  const std::size_t rows = static_cast<std::size_t>(data.n) * data.steps;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.inputs.data() + r * data.features;
    for (int f = 0; f < data.features; ++f) {
      row[f] = (row[f] - stats.mean[f]) / stats.scale[f];
    }
  }
  return out;
}

void validate_train_config(const TrainConfig& config) {
  require(config.epochs >= 1, ErrorKind::config, "epochs must be >= 1");
  require(config.folds >= 2, ErrorKind::config, "folds must be >= 2");
  require(config.test_fraction > 0.0 && config.test_fraction < 1.0, ErrorKind::config,
          "test_fraction must lie in (0, 1)");
  require(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0,
          ErrorKind::config, "validation_fraction must lie in [0, 1)");
  require(config.learning_rate > 0.0, ErrorKind::config, "learning_rate must be positive");
  require(config.batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
}

std::vector<int> stratified_sample(const std::vector<std::uint8_t>& labels, double fraction,
                                   core::Rng& rng) {
  require(fraction >= 0.0 && fraction < 1.0, ErrorKind::config,
          "sample fraction must lie in [0, 1)");
  std::vector<int> chosen;
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> pool;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
      if (labels[i] == cls) pool.push_back(i);
    }
    rng.shuffle(pool);
    const auto take = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(pool.size())));
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + std::min(take, pool.size()));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<std::vector<int>> stratified_folds(const std::vector<std::uint8_t>& labels, int k,
                                               core::Rng& rng) {
  require(k >= 2, ErrorKind::config, "fold count must be >= 2");
  require(static_cast<int>(labels.size()) >= k, ErrorKind::data, "fewer samples than folds");
  std::vector<std::vector<int>> folds(k);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> pool;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
      if (labels[i] == cls) pool.push_back(i);
    }
    rng.shuffle(pool);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      folds[i % k].push_back(pool[i]);
    }
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

namespace {

struct Adam {
  std::vector<double> m, v;
  std::int64_t t = 0;

  explicit Adam(std::size_t size) : m(size, 0.0), v(size, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[i];
      v[i] = 0.999 * v[i] + 0.001 * grads[i] * grads[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    }
  }
};

// Eval-mode loss/accuracy over a standardized dataset, in bounded chunks.
std::pair<double, double> evaluate(const LstmConfig& config, const std::vector<double>& params,
                                   const Dataset& data, int chunk) {
  const std::size_t stride = static_cast<std::size_t>(data.steps) * data.features;
  std::vector<double> probs;
  probs.reserve(data.n);
  std::vector<double> buffer;
  for (int start = 0; start < data.n; start += chunk) {
    const int count = std::min(chunk, data.n - start);
    buffer.assign(data.inputs.begin() + start * stride,
                  data.inputs.begin() + (start + count) * stride);
    const auto p = forward(config, params, buffer, Mode::eval);
    probs.insert(probs.end(), p.begin(), p.end());
  }
  return {bce_loss(probs, data.labels), accuracy(probs, data.labels)};
}

}  // namespace

FitResult fit_explicit(const Dataset& train, const Dataset* validation,
                       const LstmConfig& config, const TrainConfig& train_config) {
  validate_config(config);
  validate_train_config(train_config);
  validate_dataset(train);
  require(train.features == config.input_size && train.steps == config.sequence_length,
          ErrorKind::config, "dataset shape does not match the network config");
  if (validation != nullptr) {
    validate_dataset(*validation);
    require(validation->features == config.input_size &&
                validation->steps == config.sequence_length,
            ErrorKind::config, "validation shape does not match the network config");
  }
  const auto positives = std::count(train.labels.begin(), train.labels.end(), 1);
  require(positives > 0 && positives < train.n, ErrorKind::data,
          "training data must contain both classes");

  FitResult result;
  result.config = config;
  result.stats = fit_feature_stats(train);
  const Dataset strain = apply_feature_stats(train, result.stats);
  Dataset sval;
  if (validation != nullptr) sval = apply_feature_stats(*validation, result.stats);

  core::Rng init_rng(core::Rng::derive(train_config.seed, core::fnv1a64("lstm-init"), 0));
  result.params = init_params(config, init_rng);
  core::Rng train_rng(core::Rng::derive(train_config.seed, core::fnv1a64("lstm-train"), 0));

  Adam adam(result.params.size());
  const std::size_t stride = static_cast<std::size_t>(strain.steps) * strain.features;
  std::vector<int> order(strain.n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> batch_inputs;
  std::vector<std::uint8_t> batch_labels;
  ForwardCache cache;

  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    train_rng.shuffle(order);
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    for (int start = 0; start < strain.n; start += train_config.batch_size) {
      const int count = std::min(train_config.batch_size, strain.n - start);
      batch_inputs.resize(static_cast<std::size_t>(count) * stride);
      batch_labels.resize(count);
      for (int i = 0; i < count; ++i) {
        const int s = order[start + i];
        std::memcpy(batch_inputs.data() + i * stride, strain.inputs.data() + s * stride,
                    sizeof(double) * stride);
        batch_labels[i] = strain.labels[s];
      }
      const auto probs =
          forward(config, result.params, batch_inputs, Mode::train, &train_rng, &cache);
      loss_sum += bce_loss(probs, batch_labels) * count;
      acc_sum += accuracy(probs, batch_labels) * count;
      const auto grads = backward(config, result.params, cache, batch_labels);
      adam.step(result.params, grads, train_config.learning_rate);
    }

    // Train metrics are the running average of the optimization minibatches
    // (pre-update, dropout active); validation is a clean eval pass.
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(strain.n);
    stats.train_accuracy = acc_sum / static_cast<double>(strain.n);
    if (validation != nullptr && sval.n > 0) {
      stats.has_validation = true;
      std::tie(stats.validation_loss, stats.validation_accuracy) =
          evaluate(config, result.params, sval, train_config.batch_size);
    }
    result.history.push_back(stats);
  }
  return result;
}

FitResult fit(const Dataset& data, const LstmConfig& config, const TrainConfig& train_config) {
  validate_dataset(data);
  if (train_config.validation_fraction <= 0.0) {
    return fit_explicit(data, nullptr, config, train_config);
  }
  core::Rng rng(core::Rng::derive(train_config.seed, core::fnv1a64("val-split"), 0));
  const auto val_idx = stratified_sample(data.labels, train_config.validation_fraction, rng);
  if (val_idx.empty()) {
    return fit_explicit(data, nullptr, config, train_config);
  }
  std::vector<std::uint8_t> in_val(data.n, 0);
  for (int i : val_idx) in_val[i] = 1;
  std::vector<int> train_idx;
  for (int i = 0; i < data.n; ++i) {
    if (!in_val[i]) train_idx.push_back(i);
  }
  const Dataset train_set = subset(data, train_idx);
  const Dataset val_set = subset(data, val_idx);
  return fit_explicit(train_set, &val_set, config, train_config);
}

std::vector<double> predict_probabilities(const FitResult& model, const Dataset& raw) {
  validate_dataset(raw);
  require(raw.features == model.config.input_size &&
              raw.steps == model.config.sequence_length,
          ErrorKind::config, "dataset shape does not match the model");
  const Dataset standardized = apply_feature_stats(raw, model.stats);
  const std::size_t stride = static_cast<std::size_t>(raw.steps) * raw.features;
  std::vector<double> probs;
  probs.reserve(raw.n);
  std::vector<double> buffer;
  const int chunk = 256;
  for (int start = 0; start < raw.n; start += chunk) {
    const int count = std::min(chunk, raw.n - start);
    buffer.assign(standardized.inputs.begin() + start * stride,
                  standardized.inputs.begin() + (start + count) * stride);
    const auto p = forward(model.config, model.params, buffer, Mode::eval);
    probs.insert(probs.end(), p.begin(), p.end());
  }
  return probs;
}

std::vector<std::uint8_t> predict_labels(const std::vector<double>& probabilities) {
  std::vector<std::uint8_t> labels(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    labels[i] = probabilities[i] >= 0.5 ? 1 : 0;
  }
  return labels;
}

double accuracy(const std::vector<double>& probabilities,
                const std::vector<std::uint8_t>& labels) {
  require(!probabilities.empty() && probabilities.size() == labels.size(), ErrorKind::data,
          "accuracy needs matching non-empty probabilities and labels");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const std::uint8_t predicted = probabilities[i] >= 0.5 ? 1 : 0;
    if (predicted == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probabilities.size());
}

CvResult cross_validate(const Dataset& data, const LstmConfig& config,
                        const TrainConfig& train_config) {
  validate_config(config);
  validate_train_config(train_config);
  validate_dataset(data);
  require(data.n >= 10 * train_config.folds, ErrorKind::data,
          "cross-validation needs at least 10 samples per fold");

  CvResult result;
  core::Rng test_rng(core::Rng::derive(train_config.seed, core::fnv1a64("cv-test"), 0));
  result.test_indices = stratified_sample(data.labels, train_config.test_fraction, test_rng);
  require(!result.test_indices.empty(), ErrorKind::data, "test split selected no samples");

  std::vector<std::uint8_t> is_test(data.n, 0);
  for (int i : result.test_indices) is_test[i] = 1;
  std::vector<int> non_test;
  for (int i = 0; i < data.n; ++i) {
    if (!is_test[i]) non_test.push_back(i);
  }
  const Dataset pool = subset(data, non_test);

  core::Rng fold_rng(core::Rng::derive(train_config.seed, core::fnv1a64("cv-folds"), 0));
  result.folds = stratified_folds(pool.labels, train_config.folds, fold_rng);

  for (std::size_t f = 0; f < result.folds.size(); ++f) {
    std::vector<std::uint8_t> in_fold(pool.n, 0);
    for (int i : result.folds[f]) in_fold[i] = 1;
    std::vector<int> train_idx;
    for (int i = 0; i < pool.n; ++i) {
      if (!in_fold[i]) train_idx.push_back(i);
    }
    const Dataset fold_train = subset(pool, train_idx);
    const Dataset fold_val = subset(pool, result.folds[f]);
    TrainConfig fold_config = train_config;
    fold_config.seed = core::Rng::derive(train_config.seed, core::fnv1a64("cv-fold"), f);
    const FitResult model = fit_explicit(fold_train, &fold_val, config, fold_config);

    FoldResult fr;
    fr.validation_indices = result.folds[f];
    fr.validation_loss = model.history.back().validation_loss;
    fr.validation_accuracy = model.history.back().validation_accuracy;
    result.fold_results.push_back(std::move(fr));
  }

  TrainConfig final_config = train_config;
  final_config.seed = core::Rng::derive(train_config.seed, core::fnv1a64("cv-final"), 0);
  result.final_model = fit(pool, config, final_config);

  const Dataset test_set = subset(data, result.test_indices);
  result.test_probabilities = predict_probabilities(result.final_model, test_set);
  result.test_labels = test_set.labels;
  return result;
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'S', 'L', 'S', 'T', 'M', '0', '1'};

}  // namespace

void save_checkpoint(const FitResult& model, const std::filesystem::path& path) {
  validate_config(model.config);
  const std::int64_t count = param_count(model.config);
  require(static_cast<std::int64_t>(model.params.size()) == count, ErrorKind::config,
          "model parameters do not match its config");
  require(model.stats.mean.size() == model.stats.scale.size() &&
              static_cast<int>(model.stats.mean.size()) == model.config.input_size,
          ErrorKind::config, "model statistics do not match its config");

  core::Json header;
  header["input_size"] = model.config.input_size;
  header["lstm_units"] = model.config.lstm_units;
  header["dropout_rate"] = model.config.dropout_rate;
  header["dense_units"] = model.config.dense_units;
  header["sequence_length"] = model.config.sequence_length;
  header["feature_mean"] = model.stats.mean;
  header["feature_scale"] = model.stats.scale;
  header["param_count"] = count;

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string header_text = header.dump();
  core::put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (const double p : model.params) core::put_f64(out, p);
  core::put_u32(out, core::crc32(out.data(), out.size()));
  core::spit(path, out);
}

FitResult load_checkpoint(const std::filesystem::path& path) {
  const std::string raw = core::slurp(path);
  require(raw.size() >= sizeof(kCheckpointMagic) + 8, ErrorKind::data,
          path.string() + ": checkpoint truncated");
  require(std::memcmp(raw.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) == 0,
          ErrorKind::data, path.string() + ": not a recognized checkpoint version");
  const std::uint32_t stored_crc = [&] {
    std::size_t pos = raw.size() - 4;
    return core::get_u32(raw, pos);
  }();
  require(core::crc32(raw.data(), raw.size() - 4) == stored_crc, ErrorKind::data,
          path.string() + ": checkpoint checksum mismatch");

  std::size_t pos = sizeof(kCheckpointMagic);
  const std::uint32_t header_len = core::get_u32(raw, pos);
  require(pos + header_len + 4 <= raw.size(), ErrorKind::data,
          path.string() + ": checkpoint header overruns the file");
  const std::string what = path.string() + " header";
  const core::Json header = core::parse_json(raw.substr(pos, header_len), what);
  pos += header_len;

  FitResult model;
  model.config.input_size = static_cast<int>(core::get_int(header, "input_size", what));
  model.config.lstm_units.clear();
  for (const auto& u : core::member(header, "lstm_units", what)) {
    model.config.lstm_units.push_back(u.template get<int>());
  }
  model.config.dropout_rate = core::get_number(header, "dropout_rate", what);
  model.config.dense_units = static_cast<int>(core::get_int(header, "dense_units", what));
  model.config.sequence_length =
      static_cast<int>(core::get_int(header, "sequence_length", what));
  for (const auto& v : core::member(header, "feature_mean", what)) {
    model.stats.mean.push_back(v.template get<double>());
  }
  for (const auto& v : core::member(header, "feature_scale", what)) {
    model.stats.scale.push_back(v.template get<double>());
  }
  validate_config(model.config);
  require(model.stats.mean.size() == model.stats.scale.size() &&
              static_cast<int>(model.stats.mean.size()) == model.config.input_size,
          ErrorKind::data, path.string() + ": checkpoint statistics do not match its config");

  const std::int64_t stored = core::get_int(header, "param_count", what);
  require(stored == param_count(model.config), ErrorKind::data,
          path.string() + ": checkpoint parameter payload does not match its config shape");
  require(raw.size() == pos + static_cast<std::size_t>(stored) * 8 + 4, ErrorKind::data,
          path.string() + ": checkpoint payload size mismatch");
  model.params.resize(stored);
  for (std::int64_t i = 0; i < stored; ++i) model.params[i] = core::get_f64(raw, pos);
  return model;
}

}  // namespace cropstress::lstm
