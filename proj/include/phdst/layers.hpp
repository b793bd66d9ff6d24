#pragma once

// Forward and backward passes for every layer the network needs: 1xk valid
// convolution along the feature axis, cross-channel average pooling, dense
// layers, an LSTM cell and MSE loss. All gradients are analytic; the test
// suite checks each against central finite differences.

#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "phdst/error.hpp"
#include "phdst/rng.hpp"
#include "phdst/tensor.hpp"

namespace phdst::nn {

// Named view into one parameter block; optimizer and checkpointing walk
// these in a fixed order.
struct ParamView {
  std::string name;
  std::vector<double>* data = nullptr;
};

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }  // derivative at 0 is 0

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double sigmoid_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

inline double tanh_grad(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

// --- 1xk convolution ---------------------------------------------------------

// Kernel memory layout is [out_channel][dx][in_channel] so that the inner
// products run over contiguous memory on both sides.
struct ConvParams {
  int in_ch = 0;
  int out_ch = 0;
  int k = 0;
  std::vector<double> w;
  std::vector<double> b;

  static ConvParams init(int in_ch, int out_ch, int k, SplitMix64& rng) {
    if (k < 1 || in_ch < 1 || out_ch < 1) throw ShapeError("conv: bad kernel configuration");
    ConvParams p;
    p.in_ch = in_ch;
    p.out_ch = out_ch;
    p.k = k;
    const double a = 1.0 / std::sqrt(static_cast<double>(in_ch) * k);
    p.w.resize(static_cast<std::size_t>(out_ch) * k * in_ch);
    for (double& x : p.w) x = rng.uniform(-a, a);
    p.b.assign(out_ch, 0.0);
    return p;
  }

  double& at(int co, int dx, int ci) { return w[(static_cast<std::size_t>(co) * k + dx) * in_ch + ci]; }
  double at(int co, int dx, int ci) const {
    return w[(static_cast<std::size_t>(co) * k + dx) * in_ch + ci];
  }
};

struct ConvGrads {
  std::vector<double> w;
  std::vector<double> b;

  void reset(const ConvParams& p) {
    w.assign(p.w.size(), 0.0);
    b.assign(p.b.size(), 0.0);
  }
};

// Valid (no padding) cross-correlation along the width axis, stride 1:
// [L, W, Cin] -> [L, W-k+1, Cout].
inline Tensor conv_1xk_forward(const Tensor& in, const ConvParams& p) {
  require_shape(in, 3, "conv_1xk");
  const std::size_t L = in.dim(0), W = in.dim(1), Cin = in.dim(2);
  if (static_cast<int>(Cin) != p.in_ch) throw ShapeError("conv_1xk: channel mismatch");
  if (W < static_cast<std::size_t>(p.k)) throw ShapeError("conv_1xk: width smaller than kernel");
  const std::size_t Wo = W - p.k + 1, Co = p.out_ch;
  const std::size_t span = static_cast<std::size_t>(p.k) * Cin;

  Tensor out({L, Wo, Co});
  const double* iv = in.v.data();
  double* ov = out.v.data();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t wo = 0; wo < Wo; ++wo) {
      const double* block = iv + (l * W + wo) * Cin;
      double* orow = ov + (l * Wo + wo) * Co;
      for (std::size_t co = 0; co < Co; ++co) {
        const double* krow = p.w.data() + co * span;
        double acc = p.b[co];
        for (std::size_t j = 0; j < span; ++j) acc += block[j] * krow[j];
        orow[co] = acc;
      }
    }
  }
  return out;
}

// Accumulates parameter gradients into `grads`; writes input gradients into
// `grad_in` when non-null (same shape as `in`).
inline void conv_1xk_backward(const Tensor& in, const ConvParams& p, const Tensor& grad_out,
                              ConvGrads& grads, Tensor* grad_in) {
  const std::size_t L = in.dim(0), W = in.dim(1), Cin = in.dim(2);
  const std::size_t Wo = W - p.k + 1, Co = p.out_ch;
  const std::size_t span = static_cast<std::size_t>(p.k) * Cin;
  if (grad_out.shape != std::vector<std::size_t>{L, Wo, Co})
    throw ShapeError("conv_1xk backward: grad shape mismatch");
  if (grad_in) grad_in->reset({L, W, Cin});

  const double* iv = in.v.data();
  const double* gv = grad_out.v.data();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t wo = 0; wo < Wo; ++wo) {
      const double* block = iv + (l * W + wo) * Cin;
      const double* grow = gv + (l * Wo + wo) * Co;
      double* gin = grad_in ? grad_in->v.data() + (l * W + wo) * Cin : nullptr;
      for (std::size_t co = 0; co < Co; ++co) {
        const double g = grow[co];
        if (g == 0.0) continue;
        grads.b[co] += g;
        double* gw = grads.w.data() + co * span;
        const double* krow = p.w.data() + co * span;
        for (std::size_t j = 0; j < span; ++j) gw[j] += g * block[j];
        if (gin)
          for (std::size_t j = 0; j < span; ++j) gin[j] += g * krow[j];
      }
    }
  }
}

// --- elementwise ReLU over tensors --------------------------------------------

inline Tensor relu_forward(const Tensor& z) {
  Tensor a = z;
  for (double& x : a.v) x = relu(x);
  return a;
}

inline Tensor relu_backward(const Tensor& z, const Tensor& grad_out) {
  if (z.shape != grad_out.shape) throw ShapeError("relu backward: shape mismatch");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] *= relu_grad(z.v[i]);
  return g;
}

// --- cross-channel average pooling --------------------------------------------

// [L, 1, C] -> vector of L channel means.
inline std::vector<double> cross_channel_avg_pool_forward(const Tensor& in) {
  require_shape(in, 3, "cross_channel_avg_pool");
  if (in.dim(1) != 1) throw ShapeError("cross_channel_avg_pool: width extent must be 1");
  const std::size_t L = in.dim(0), C = in.dim(2);
  std::vector<double> out(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const double* row = in.v.data() + l * C;
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) acc += row[c];
    out[l] = acc / static_cast<double>(C);
  }
  return out;
}

inline Tensor cross_channel_avg_pool_backward(std::span<const double> grad_out, std::size_t L,
                                              std::size_t C) {
  if (grad_out.size() != L) throw ShapeError("cross_channel_avg_pool backward: length mismatch");
  Tensor g({L, 1, C});
  for (std::size_t l = 0; l < L; ++l) {
    const double share = grad_out[l] / static_cast<double>(C);
    double* row = g.v.data() + l * C;
    for (std::size_t c = 0; c < C; ++c) row[c] = share;
  }
  return g;
}

// --- dense layer ---------------------------------------------------------------

struct DenseParams {
  int out = 0;
  int in = 0;
  std::vector<double> w;  // [out][in]
  std::vector<double> b;  // [out]

  static DenseParams init(int in, int out, SplitMix64& rng) {
    DenseParams p;
    p.in = in;
    p.out = out;
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    p.w.resize(static_cast<std::size_t>(out) * in);
    for (double& x : p.w) x = rng.uniform(-a, a);
    p.b.assign(out, 0.0);
    return p;
  }

  double& at(int o, int i) { return w[static_cast<std::size_t>(o) * in + i]; }
  double at(int o, int i) const { return w[static_cast<std::size_t>(o) * in + i]; }
};

struct DenseGrads {
  std::vector<double> w;
  std::vector<double> b;

  void reset(const DenseParams& p) {
    w.assign(p.w.size(), 0.0);
    b.assign(p.b.size(), 0.0);
  }
};

struct DenseCache {
  std::vector<double> input;
  std::vector<double> pre;  // pre-activation, kept when relu is applied
  bool relu_applied = false;
};

inline std::vector<double> dense_forward(std::span<const double> x, const DenseParams& p,
                                         bool apply_relu, DenseCache* cache = nullptr) {
  if (x.size() != static_cast<std::size_t>(p.in)) throw ShapeError("dense: input length mismatch");
  std::vector<double> y(p.out);
  for (int o = 0; o < p.out; ++o) {
    const double* row = p.w.data() + static_cast<std::size_t>(o) * p.in;
    double acc = p.b[o];
    for (int i = 0; i < p.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
  if (cache) {
    cache->input.assign(x.begin(), x.end());
    cache->pre = y;
    cache->relu_applied = apply_relu;
  }
  if (apply_relu)
    for (double& v : y) v = relu(v);
  return y;
}

// Accumulates into `grads`; writes d(loss)/d(input) into grad_in when non-null.
inline void dense_backward(const DenseParams& p, const DenseCache& cache,
                           std::span<const double> grad_out, DenseGrads& grads,
                           std::vector<double>* grad_in) {
  if (grad_out.size() != static_cast<std::size_t>(p.out))
    throw ShapeError("dense backward: grad length mismatch");
  if (grad_in) grad_in->assign(p.in, 0.0);
  for (int o = 0; o < p.out; ++o) {
    double g = grad_out[o];
    if (cache.relu_applied) g *= relu_grad(cache.pre[o]);
    if (g == 0.0) continue;
    grads.b[o] += g;
    double* gw = grads.w.data() + static_cast<std::size_t>(o) * p.in;
    const double* row = p.w.data() + static_cast<std::size_t>(o) * p.in;
    for (int i = 0; i < p.in; ++i) gw[i] += g * cache.input[i];
    if (grad_in)
      for (int i = 0; i < p.in; ++i) (*grad_in)[i] += g * row[i];
  }
}

// --- LSTM cell -------------------------------------------------------------------

// Gate order: forget, input, candidate, output. Each weight matrix is
// [hidden x (hidden + input)] applied to the concatenation [h_prev, x].
struct LstmParams {
  int hidden = 0;
  int input = 0;
  std::vector<double> w[4];
  std::vector<double> b[4];

  static LstmParams init(int input, int hidden, SplitMix64& rng) {
    LstmParams p;
    p.hidden = hidden;
    p.input = input;
    const int cols = hidden + input;
    const double a = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int g = 0; g < 4; ++g) {
      p.w[g].resize(static_cast<std::size_t>(hidden) * cols);
      for (double& x : p.w[g]) x = rng.uniform(-a, a);
      p.b[g].assign(hidden, 0.0);
    }
    // Forget-gate bias starts at +1 so long windows keep their memory early on.
    std::fill(p.b[0].begin(), p.b[0].end(), 1.0);
    return p;
  }

  int cols() const { return hidden + input; }
};

struct LstmGrads {
  std::vector<double> w[4];
  std::vector<double> b[4];

  void reset(const LstmParams& p) {
    for (int g = 0; g < 4; ++g) {
      w[g].assign(p.w[g].size(), 0.0);
      b[g].assign(p.b[g].size(), 0.0);
    }
  }
};

struct LstmStepCache {
  std::vector<double> concat;  // [h_prev, x]
  std::vector<double> c_prev;
  std::vector<double> f, i, g, o;  // post-activation gate values
  std::vector<double> c, tanh_c;
};

// f = sig(Wf.[h,x]+bf); i = sig(Wi.[h,x]+bi); g = tanh(Wc.[h,x]+bc);
// c = f*c_prev + i*g; o = sig(Wo.[h,x]+bo); h = o*tanh(c).
inline void lstm_step_forward(std::span<const double> x, std::span<const double> h_prev,
                              std::span<const double> c_prev, const LstmParams& p,
                              std::vector<double>& h_out, std::vector<double>& c_out,
                              LstmStepCache* cache = nullptr) {
  if (x.size() != static_cast<std::size_t>(p.input) ||
      h_prev.size() != static_cast<std::size_t>(p.hidden) ||
      c_prev.size() != static_cast<std::size_t>(p.hidden))
    throw ShapeError("lstm step: dimension mismatch");

  const int H = p.hidden, cols = p.cols();
  std::vector<double> concat(cols);
  std::copy(h_prev.begin(), h_prev.end(), concat.begin());
  std::copy(x.begin(), x.end(), concat.begin() + H);

  std::vector<double> gates[4];
  for (int g = 0; g < 4; ++g) {
    gates[g].resize(H);
    for (int r = 0; r < H; ++r) {
      const double* row = p.w[g].data() + static_cast<std::size_t>(r) * cols;
      double acc = p.b[g][r];
      for (int c = 0; c < cols; ++c) acc += row[c] * concat[c];
      gates[g][r] = acc;
    }
  }
  h_out.resize(H);
  c_out.resize(H);
  std::vector<double> f(H), i(H), g(H), o(H), tc(H);
  for (int r = 0; r < H; ++r) {
    f[r] = sigmoid(gates[0][r]);
    i[r] = sigmoid(gates[1][r]);
    g[r] = std::tanh(gates[2][r]);
    o[r] = sigmoid(gates[3][r]);
    c_out[r] = f[r] * c_prev[r] + i[r] * g[r];
    tc[r] = std::tanh(c_out[r]);
    h_out[r] = o[r] * tc[r];
  }
  if (cache) {
    cache->concat = std::move(concat);
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->f = std::move(f);
    cache->i = std::move(i);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->c = c_out;
    cache->tanh_c = std::move(tc);
  }
}

// Backward through one step. dh/dc carry the incoming gradients and are
// replaced by the gradients w.r.t. h_prev / c_prev; dx receives the input
// gradient. Parameter gradients accumulate into `grads`.
inline void lstm_step_backward(const LstmParams& p, const LstmStepCache& cache,
                               std::vector<double>& dh, std::vector<double>& dc,
                               std::vector<double>& dx, LstmGrads& grads) {
  const int H = p.hidden, cols = p.cols();
  std::vector<double> da[4];
  for (int g = 0; g < 4; ++g) da[g].resize(H);

  std::vector<double> dc_prev(H);
  for (int r = 0; r < H; ++r) {
    const double do_post = dh[r] * cache.tanh_c[r];
    const double dtc = dh[r] * cache.o[r];
    const double dcr = dc[r] + dtc * (1.0 - cache.tanh_c[r] * cache.tanh_c[r]);
    const double df = dcr * cache.c_prev[r];
    const double di = dcr * cache.g[r];
    const double dg = dcr * cache.i[r];
    dc_prev[r] = dcr * cache.f[r];
    da[0][r] = df * cache.f[r] * (1.0 - cache.f[r]);
    da[1][r] = di * cache.i[r] * (1.0 - cache.i[r]);
    da[2][r] = dg * (1.0 - cache.g[r] * cache.g[r]);
    da[3][r] = do_post * cache.o[r] * (1.0 - cache.o[r]);
  }

  std::vector<double> dconcat(cols, 0.0);
  for (int g = 0; g < 4; ++g) {
    for (int r = 0; r < H; ++r) {
      const double a = da[g][r];
      if (a == 0.0) continue;
      grads.b[g][r] += a;
      double* gw = grads.w[g].data() + static_cast<std::size_t>(r) * cols;
      const double* row = p.w[g].data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) {
        gw[c] += a * cache.concat[c];
        dconcat[c] += a * row[c];
      }
    }
  }
  dh.assign(dconcat.begin(), dconcat.begin() + H);
  dx.assign(dconcat.begin() + H, dconcat.end());
  dc = std::move(dc_prev);
}

// --- loss -------------------------------------------------------------------------

inline double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeError("mse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

inline void mse_grad(std::span<const double> pred, std::span<const double> target,
                     std::vector<double>& grad) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeError("mse: length mismatch");
  grad.resize(pred.size());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) grad[i] = scale * (pred[i] - target[i]);
}

}  // namespace phdst::nn
