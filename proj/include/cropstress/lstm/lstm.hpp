#pragma once

#include <cstdint>
#include <vector>

#include "cropstress/core/rng.hpp"

namespace cropstress::lstm {

// Stacked-LSTM binary classifier: input sequence -> LSTM layers (dropout on
// each layer's output sequence, train mode only) -> dense rectifier ->
// logistic scalar.
struct LstmConfig {
  int input_size = 37;
  std::vector<int> lstm_units{64, 32};
  double dropout_rate = 0.2;
  int dense_units = 32;  // 0 skips the dense layer: output reads the last LSTM
  int sequence_length = 48;
};

void validate_config(const LstmConfig& config);

// Total trainable scalars: per layer 4*(H*(I+H)+H), then dense in*out+out
// terms for the head.
std::int64_t param_count(const LstmConfig& config);

// Offsets into the flat parameter vector. Each LSTM layer stores one 4H x
// (I+H) row-major matrix [Wx | Wh] with gate row order i,f,g,o, then a 4H
// bias. The head stores dense weights (D x H) + bias, then output weights
// (1 x in) + bias.
struct ParamLayout {
  struct Layer {
    std::int64_t w = 0;  // 4H x (I+H) row-major
    std::int64_t b = 0;  // 4H
    int input = 0;
    int units = 0;
  };
  std::vector<Layer> layers;
  std::int64_t dense_w = -1;  // -1 when dense_units == 0
  std::int64_t dense_b = -1;
  std::int64_t out_w = 0;
  std::int64_t out_b = 0;
  int out_input = 0;  // width feeding the output neuron
  std::int64_t total = 0;
};

ParamLayout make_layout(const LstmConfig& config);

// Xavier-style uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases
// except forget-gate rows at +1. Draw order is fixed, so results are
// reproducible per seed.
std::vector<double> init_params(const LstmConfig& config, core::Rng& rng);

enum class Mode { train, eval };

// All sequence buffers are step-major: index [t][sample][unit]. The cache
// keeps everything backward needs, including inverted dropout masks.
struct LayerCache {
  std::vector<double> x;       // T*B*I input (post-dropout of the layer below)
  std::vector<double> gates;   // T*B*4H activated gates, i,f,g,o blocks
  std::vector<double> c;       // T*B*H cell states
  std::vector<double> tanh_c;  // T*B*H
  std::vector<double> h;       // T*B*H hidden states before dropout
  std::vector<double> mask;    // T*B*H inverted dropout mask; empty in eval
};

struct ForwardCache {
  int batch = 0;
  bool train = false;
  std::vector<LayerCache> layers;
  std::vector<double> head_input;     // B x H_last, after dropout
  std::vector<double> dense_pre;      // B x D pre-activation
  std::vector<double> dense_act;      // B x D rectified
  std::vector<double> probabilities;  // B
};

// Inputs are sample-major B x T x F. Train mode with a nonzero dropout rate
// needs an Rng; eval ignores it. Pass a cache to enable backward.
std::vector<double> forward(const LstmConfig& config, const std::vector<double>& params,
                            const std::vector<double>& inputs, Mode mode,
                            core::Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr);

inline constexpr double kLossClipEpsilon = 1e-7;

// Mean binary cross-entropy with probabilities clipped to
// [kLossClipEpsilon, 1 - kLossClipEpsilon].
double bce_loss(const std::vector<double>& probabilities,
                const std::vector<std::uint8_t>& labels);

// Exact gradient of bce_loss via backpropagation through time; requires a
// cache produced by forward in train mode. Returns a flat vector matching
// the parameter layout.
std::vector<double> backward(const LstmConfig& config, const std::vector<double>& params,
                             const ForwardCache& cache,
                             const std::vector<std::uint8_t>& labels);

}  // namespace cropstress::lstm
