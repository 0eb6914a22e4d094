#include "cropstress/lstm/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cropstress/core/error.hpp"

namespace cropstress::lstm {

using core::ErrorKind;
using core::require;

void validate_config(const LstmConfig& config) {
  require(config.input_size >= 1, ErrorKind::config, "input_size must be >= 1");
  require(config.sequence_length >= 1, ErrorKind::config, "sequence_length must be >= 1");
  require(!config.lstm_units.empty(), ErrorKind::config, "at least one LSTM layer required");
  for (int h : config.lstm_units) {
    require(h >= 1, ErrorKind::config, "lstm_units entries must be >= 1");
  }
  require(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0, ErrorKind::config,
          "dropout_rate must lie in [0, 1)");
  require(config.dense_units >= 0, ErrorKind::config, "dense_units must be >= 0");
}

ParamLayout make_layout(const LstmConfig& config) {
  validate_config(config);
  ParamLayout layout;
  std::int64_t off = 0;
  int in = config.input_size;
  for (int h : config.lstm_units) {
    ParamLayout::Layer lay;
    lay.input = in;
    lay.units = h;
    lay.w = off;
    off += static_cast<std::int64_t>(4) * h * (in + h);
    lay.b = off;
    off += static_cast<std::int64_t>(4) * h;
    layout.layers.push_back(lay);
    in = h;
  }
  if (config.dense_units > 0) {
    layout.dense_w = off;
    off += static_cast<std::int64_t>(config.dense_units) * in;
    layout.dense_b = off;
    off += config.dense_units;
    in = config.dense_units;
  }
  layout.out_input = in;
  layout.out_w = off;
  off += in;
  layout.out_b = off;
  off += 1;
  layout.total = off;
  return layout;
}

std::int64_t param_count(const LstmConfig& config) { return make_layout(config).total; }

std::vector<double> init_params(const LstmConfig& config, core::Rng& rng) {
  const ParamLayout layout = make_layout(config);
  std::vector<double> params(layout.total, 0.0);

  auto xavier = [&](std::int64_t offset, std::int64_t count, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::int64_t i = 0; i < count; ++i) {
      params[offset + i] = rng.uniform(-limit, limit);
    }
  };

  for (const auto& lay : layout.layers) {
    const int cols = lay.input + lay.units;
    xavier(lay.w, static_cast<std::int64_t>(4) * lay.units * cols, cols, 4 * lay.units);
    // Biases stay zero except the forget gate, which starts open.
    for (int u = 0; u < lay.units; ++u) params[lay.b + lay.units + u] = 1.0;
  }
  const int last = config.lstm_units.back();
  if (config.dense_units > 0) {
    xavier(layout.dense_w, static_cast<std::int64_t>(config.dense_units) * last, last,
           config.dense_units);
  }
  xavier(layout.out_w, layout.out_input, layout.out_input, 1);
  return params;
}

namespace {

double sigmoid(double z) {
  // Clamping keeps the output strictly inside (0, 1) in double precision.
  z = std::clamp(z, -36.0, 36.0);
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// All matrix products below use hand-rolled kernels with a fixed scalar
// accumulation order per output element (the reduction axis always advances
// sequentially into a register tile). That makes training bit-reproducible:
// the result never depends on buffer alignment or vectorization peeling,
// which rules out run-to-run 1-ulp drift that would otherwise amplify over
// thousands of optimizer steps. The 4x8 register tiles keep the compiler's
// vectorizer fed without changing any element's addition chain.

// C = A (m x k) times B (k x n), all row-major; accumulate adds into C
// instead of overwriting. The reduction axis is unrolled by 4 with the C row
// kept live across the quad, which quarters the C traffic without touching
// any element's addition order.
template <bool Accumulate>
void gemm_impl(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int r = 0; r < m; ++r) {
    const double* arow = a + static_cast<std::size_t>(r) * k;
    double* crow = c + static_cast<std::size_t>(r) * n;
    if constexpr (!Accumulate) std::fill(crow, crow + n, 0.0);
    int p = 0;
    for (; p + 4 <= k; p += 4) {
      const double av0 = arow[p];
      const double av1 = arow[p + 1];
      const double av2 = arow[p + 2];
      const double av3 = arow[p + 3];
      const double* b0 = b + static_cast<std::size_t>(p) * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (int j = 0; j < n; ++j) {
        double cv = crow[j];
        cv += av0 * b0[j];
        cv += av1 * b1[j];
        cv += av2 * b2[j];
        cv += av3 * b3[j];
        crow[j] = cv;
      }
    }
    for (; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  gemm_impl<false>(a, b, c, m, k, n);
}

void matmul_add(const double* a, const double* b, double* c, int m, int k, int n) {
  gemm_impl<true>(a, b, c, m, k, n);
}

// C (k x n) += A^T times B where A is m x k and B is m x n: the reduction
// runs over the shared m rows, in ascending row order per element.
void matmul_at_b_add(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    double* crow = c + static_cast<std::size_t>(p) * n;
    int r = 0;
    for (; r + 4 <= m; r += 4) {
      const double av0 = a[static_cast<std::size_t>(r) * k + p];
      const double av1 = a[static_cast<std::size_t>(r + 1) * k + p];
      const double av2 = a[static_cast<std::size_t>(r + 2) * k + p];
      const double av3 = a[static_cast<std::size_t>(r + 3) * k + p];
      const double* b0 = b + static_cast<std::size_t>(r) * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (int j = 0; j < n; ++j) {
        double cv = crow[j];
        cv += av0 * b0[j];
        cv += av1 * b1[j];
        cv += av2 * b2[j];
        cv += av3 * b3[j];
        crow[j] = cv;
      }
    }
    for (; r < m; ++r) {
      const double av = a[static_cast<std::size_t>(r) * k + p];
      const double* brow = b + static_cast<std::size_t>(r) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Contiguous copy of the Wx / Wh blocks of a layer's 4H x (I+H) matrix,
// optionally transposed.
std::vector<double> pack_block(const double* w, int rows, int row_stride, int col0, int cols,
                               bool transpose) {
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = w[static_cast<std::size_t>(r) * row_stride + col0 + c];
      if (transpose) {
        out[static_cast<std::size_t>(c) * rows + r] = v;
      } else {
        out[static_cast<std::size_t>(r) * cols + c] = v;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> forward(const LstmConfig& config, const std::vector<double>& params,
                            const std::vector<double>& inputs, Mode mode,
                            core::Rng* dropout_rng, ForwardCache* cache) {
  const ParamLayout layout = make_layout(config);
  require(static_cast<std::int64_t>(params.size()) == layout.total, ErrorKind::config,
          "parameter vector does not match the config shape");
  const int T = config.sequence_length;
  const int F = config.input_size;
  const std::size_t stride = static_cast<std::size_t>(T) * F;
  require(!inputs.empty() && inputs.size() % stride == 0, ErrorKind::data,
          "input tensor is not a whole number of B x T x F sequences");
  const int B = static_cast<int>(inputs.size() / stride);
  const bool train = mode == Mode::train;
  const bool dropping = train && config.dropout_rate > 0.0;
  require(!dropping || dropout_rng != nullptr, ErrorKind::config,
          "train-mode dropout needs an rng");

  ForwardCache local;
  ForwardCache& cc = cache ? *cache : local;
  cc.batch = B;
  cc.train = train;
  cc.layers.assign(config.lstm_units.size(), {});

  // Re-pack the sample-major input as step-major so every per-step view is
  // contiguous.
  {
    auto& x0 = cc.layers[0].x;
    x0.resize(inputs.size());
    for (int s = 0; s < B; ++s) {
      for (int t = 0; t < T; ++t) {
        std::memcpy(x0.data() + (static_cast<std::size_t>(t) * B + s) * F,
                    inputs.data() + (static_cast<std::size_t>(s) * T + t) * F,
                    sizeof(double) * F);
      }
    }
  }

  const double keep = 1.0 - config.dropout_rate;
  for (std::size_t l = 0; l < layout.layers.size(); ++l) {
    const auto& lay = layout.layers[l];
    const int I = lay.input;
    const int H = lay.units;
    const int G = 4 * H;
    auto& lc = cc.layers[l];
    const std::size_t rows = static_cast<std::size_t>(T) * B;

    lc.gates.resize(rows * G);
    lc.c.resize(rows * H);
    lc.tanh_c.resize(rows * H);
    lc.h.resize(rows * H);

    const double* w = params.data() + lay.w;
    const double* bias = params.data() + lay.b;
    const auto wx_t = pack_block(w, G, I + H, 0, I, true);   // I x G
    const auto wh_t = pack_block(w, G, I + H, I, H, true);   // H x G

    // One big input projection for every step at once, then the recurrence.
    std::vector<double> z(rows * G);
    matmul(lc.x.data(), wx_t.data(), z.data(), static_cast<int>(rows), I, G);

    std::vector<double> h_prev(static_cast<std::size_t>(B) * H, 0.0);
    std::vector<double> c_prev(static_cast<std::size_t>(B) * H, 0.0);
    for (int t = 0; t < T; ++t) {
      const std::size_t at = static_cast<std::size_t>(t) * B;
      double* zt = z.data() + at * G;
      matmul_add(h_prev.data(), wh_t.data(), zt, B, H, G);

      double* gates = lc.gates.data() + at * G;
      double* ct = lc.c.data() + at * H;
      double* tct = lc.tanh_c.data() + at * H;
      double* ht = lc.h.data() + at * H;
      for (int s = 0; s < B; ++s) {
        const double* zs = zt + static_cast<std::size_t>(s) * G;
        double* gs = gates + static_cast<std::size_t>(s) * G;
        for (int u = 0; u < H; ++u) {
          const double gi = sigmoid(zs[u] + bias[u]);
          const double gf = sigmoid(zs[H + u] + bias[H + u]);
          const double gg = std::tanh(zs[2 * H + u] + bias[2 * H + u]);
          const double go = sigmoid(zs[3 * H + u] + bias[3 * H + u]);
          gs[u] = gi;
          gs[H + u] = gf;
          gs[2 * H + u] = gg;
          gs[3 * H + u] = go;
          const std::size_t i = static_cast<std::size_t>(s) * H + u;
          const double cell = gf * c_prev[i] + gi * gg;
          ct[i] = cell;
          tct[i] = std::tanh(cell);
          ht[i] = go * tct[i];
        }
      }
      std::memcpy(h_prev.data(), ht, sizeof(double) * B * H);
      std::memcpy(c_prev.data(), ct, sizeof(double) * B * H);
    }

    // Dropout on the full output sequence (inverted scaling), then hand the
    // result to the next layer.
    std::vector<double>* out = nullptr;
    if (l + 1 < cc.layers.size()) {
      out = &cc.layers[l + 1].x;
    }
    std::vector<double> dropped;
    std::vector<double>& fed = out ? *out : dropped;
    fed = lc.h;
    if (dropping) {
      lc.mask.resize(rows * H);
      for (std::size_t i = 0; i < lc.mask.size(); ++i) {
        lc.mask[i] = dropout_rng->uniform() < config.dropout_rate ? 0.0 : 1.0 / keep;
        fed[i] *= lc.mask[i];
      }
    }
    if (!out) {
      // Head reads the final step of the (possibly dropped) sequence.
      cc.head_input.assign(fed.begin() + static_cast<std::size_t>(T - 1) * B * H, fed.end());
    }
  }

  const int HL = config.lstm_units.back();
  const double* head = cc.head_input.data();
  int head_width = HL;
  if (config.dense_units > 0) {
    const int D = config.dense_units;
    cc.dense_pre.resize(static_cast<std::size_t>(B) * D);
    cc.dense_act.resize(static_cast<std::size_t>(B) * D);
    const auto wd_t = pack_block(params.data() + layout.dense_w, D, HL, 0, HL, true);  // HL x D
    matmul(head, wd_t.data(), cc.dense_pre.data(), B, HL, D);
    const double* bd = params.data() + layout.dense_b;
    for (int s = 0; s < B; ++s) {
      for (int j = 0; j < D; ++j) {
        const std::size_t i = static_cast<std::size_t>(s) * D + j;
        cc.dense_pre[i] += bd[j];
        cc.dense_act[i] = std::max(0.0, cc.dense_pre[i]);
      }
    }
    head = cc.dense_act.data();
    head_width = D;
  }

  cc.probabilities.resize(B);
  const double* wo = params.data() + layout.out_w;
  const double bo = params[layout.out_b];
  for (int s = 0; s < B; ++s) {
    double logit = bo;
    for (int j = 0; j < head_width; ++j) {
      logit += wo[j] * head[static_cast<std::size_t>(s) * head_width + j];
    }
    cc.probabilities[s] = sigmoid(logit);
  }
  return cc.probabilities;
}

double bce_loss(const std::vector<double>& probabilities,
                const std::vector<std::uint8_t>& labels) {
  require(!probabilities.empty() && probabilities.size() == labels.size(), ErrorKind::data,
          "loss needs matching non-empty probabilities and labels");
  double sum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], kLossClipEpsilon, 1.0 - kLossClipEpsilon);
    sum += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(probabilities.size());
}

std::vector<double> backward(const LstmConfig& config, const std::vector<double>& params,
                             const ForwardCache& cache,
                             const std::vector<std::uint8_t>& labels) {
  const ParamLayout layout = make_layout(config);
  require(static_cast<std::int64_t>(params.size()) == layout.total, ErrorKind::config,
          "parameter vector does not match the config shape");
  require(cache.train, ErrorKind::config, "backward needs a train-mode cache");
  require(cache.layers.size() == config.lstm_units.size(), ErrorKind::config,
          "cache does not match the config");
  const int B = cache.batch;
  require(static_cast<int>(labels.size()) == B, ErrorKind::data,
          "labels do not match the cached batch");
  const int T = config.sequence_length;

  std::vector<double> grads(layout.total, 0.0);

  // d(loss)/d(logit), differentiating through the clip exactly as loss
  // computes it. Inside the clip band this is the familiar (p - y) / B.
  std::vector<double> dlogit(B);
  for (int s = 0; s < B; ++s) {
    const double p = cache.probabilities[s];
    if (p < kLossClipEpsilon || p > 1.0 - kLossClipEpsilon) {
      dlogit[s] = 0.0;
      continue;
    }
    const double y = labels[s] ? 1.0 : 0.0;
    dlogit[s] = (p - y) / B;
  }

  // Head.
  const int HL = config.lstm_units.back();
  std::vector<double> d_head(static_cast<std::size_t>(B) * HL, 0.0);
  {
    const double* wo = params.data() + layout.out_w;
    double* g_wo = grads.data() + layout.out_w;
    double& g_bo = grads[layout.out_b];
    if (config.dense_units > 0) {
      const int D = config.dense_units;
      std::vector<double> d_act(static_cast<std::size_t>(B) * D);
      for (int s = 0; s < B; ++s) {
        g_bo += dlogit[s];
        for (int j = 0; j < D; ++j) {
          const std::size_t i = static_cast<std::size_t>(s) * D + j;
          g_wo[j] += dlogit[s] * cache.dense_act[i];
          d_act[i] = dlogit[s] * wo[j] * (cache.dense_pre[i] > 0.0 ? 1.0 : 0.0);
        }
      }
      matmul_at_b_add(d_act.data(), cache.head_input.data(),
                      grads.data() + layout.dense_w, B, D, HL);
      double* g_bd = grads.data() + layout.dense_b;
      for (int s = 0; s < B; ++s) {
        for (int j = 0; j < D; ++j) g_bd[j] += d_act[static_cast<std::size_t>(s) * D + j];
      }
      matmul(d_act.data(), params.data() + layout.dense_w, d_head.data(), B, D, HL);
    } else {
      for (int s = 0; s < B; ++s) {
        g_bo += dlogit[s];
        for (int j = 0; j < HL; ++j) {
          const std::size_t i = static_cast<std::size_t>(s) * HL + j;
          g_wo[j] += dlogit[s] * cache.head_input[i];
          d_head[i] = dlogit[s] * wo[j];
        }
      }
    }
  }

  // Gradient w.r.t. the top layer's dropped output sequence: only the final
  // step feeds the head.
  const std::size_t top_rows = static_cast<std::size_t>(T) * B;
  std::vector<double> d_seq(top_rows * HL, 0.0);
  std::copy(d_head.begin(), d_head.end(),
            d_seq.begin() + static_cast<std::size_t>(T - 1) * B * HL);

  for (int l = static_cast<int>(layout.layers.size()) - 1; l >= 0; --l) {
    const auto& lay = layout.layers[l];
    const auto& lc = cache.layers[l];
    const int I = lay.input;
    const int H = lay.units;
    const int G = 4 * H;
    const std::size_t rows = static_cast<std::size_t>(T) * B;

    // Undo the inverted dropout applied to this layer's output.
    if (!lc.mask.empty()) {
      for (std::size_t i = 0; i < d_seq.size(); ++i) d_seq[i] *= lc.mask[i];
    }

    const double* w = params.data() + lay.w;
    const auto wx = pack_block(w, G, I + H, 0, I, false);  // G x I
    const auto wh = pack_block(w, G, I + H, I, H, false);  // G x H

    std::vector<double> dz(rows * G);
    std::vector<double> dh(static_cast<std::size_t>(B) * H, 0.0);
    std::vector<double> dc(static_cast<std::size_t>(B) * H, 0.0);
    for (int t = T - 1; t >= 0; --t) {
      const std::size_t at = static_cast<std::size_t>(t) * B;
      const double* gates = lc.gates.data() + at * G;
      const double* tct = lc.tanh_c.data() + at * H;
      const double* c_prev = t > 0 ? lc.c.data() + (at - B) * H : nullptr;
      double* dzt = dz.data() + at * G;
      const double* ds = d_seq.data() + at * H;

      for (int s = 0; s < B; ++s) {
        const double* gs = gates + static_cast<std::size_t>(s) * G;
        double* dzs = dzt + static_cast<std::size_t>(s) * G;
        for (int u = 0; u < H; ++u) {
          const std::size_t i = static_cast<std::size_t>(s) * H + u;
          const double gi = gs[u], gf = gs[H + u], gg = gs[2 * H + u], go = gs[3 * H + u];
          const double dht = ds[i] + dh[i];
          const double d_o = dht * tct[i];
          const double dct = dc[i] + dht * go * (1.0 - tct[i] * tct[i]);
          const double d_i = dct * gg;
          const double d_g = dct * gi;
          const double d_f = dct * (c_prev ? c_prev[i] : 0.0);
          dzs[u] = d_i * gi * (1.0 - gi);
          dzs[H + u] = d_f * gf * (1.0 - gf);
          dzs[2 * H + u] = d_g * (1.0 - gg * gg);
          dzs[3 * H + u] = d_o * go * (1.0 - go);
          dc[i] = dct * gf;  // flows to step t-1
        }
      }
      // Recurrent gradient into h_{t-1}.
      matmul(dzt, wh.data(), dh.data(), B, G, H);
    }

    // Batched weight gradients over the whole unrolled sequence, written into
    // contiguous staging and then scattered into the [Wx | Wh] layout.
    std::vector<double> g_wx(static_cast<std::size_t>(G) * I, 0.0);
    std::vector<double> g_wh(static_cast<std::size_t>(G) * H, 0.0);
    matmul_at_b_add(dz.data(), lc.x.data(), g_wx.data(), static_cast<int>(rows), G, I);

    std::vector<double> h_shift(rows * H, 0.0);
    std::memcpy(h_shift.data() + static_cast<std::size_t>(B) * H, lc.h.data(),
                sizeof(double) * (rows - B) * H);
    matmul_at_b_add(dz.data(), h_shift.data(), g_wh.data(), static_cast<int>(rows), G, H);

    double* gw = grads.data() + lay.w;
    for (int g = 0; g < G; ++g) {
      std::memcpy(gw + static_cast<std::size_t>(g) * (I + H),
                  g_wx.data() + static_cast<std::size_t>(g) * I, sizeof(double) * I);
      std::memcpy(gw + static_cast<std::size_t>(g) * (I + H) + I,
                  g_wh.data() + static_cast<std::size_t>(g) * H, sizeof(double) * H);
    }
    double* gb = grads.data() + lay.b;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dzr = dz.data() + r * G;
      for (int g = 0; g < G; ++g) gb[g] += dzr[g];
    }

    if (l > 0) {
      d_seq.resize(rows * static_cast<std::size_t>(I));
      matmul(dz.data(), wx.data(), d_seq.data(), static_cast<int>(rows), G, I);
    }
  }
  return grads;
}

}  // namespace cropstress::lstm
