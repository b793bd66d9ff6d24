#pragma once

// The spatio-temporal network: per-day FCN modules (1x2/64 -> 1x2/128 ->
// 1x(N-2)/256 convolutions with ReLU, then cross-channel average pooling)
// feeding an LSTM over the H-day window, projected to one prediction per
// station. Includes the stage-1 training loop.

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "phdst/adam.hpp"
#include "phdst/error.hpp"
#include "phdst/features.hpp"
#include "phdst/gradcheck.hpp"
#include "phdst/layers.hpp"
#include "phdst/threads.hpp"

namespace phdst::model {

using feat::Dataset;
using feat::FeatureTensor;
using nn::ConvGrads;
using nn::ConvParams;
using nn::DenseGrads;
using nn::DenseParams;
using nn::LstmGrads;
using nn::LstmParams;
using nn::ParamView;
using nn::Tensor;

// One tensor per window day, ordered oldest to newest; column h is X[:, h, :]
// viewed as an [L, N, 1] single-channel image. Stacking the slices back
// reproduces the tensor.
inline std::vector<Tensor> split_features(const FeatureTensor& x) {
  std::vector<Tensor> days(x.H);
  for (int h = 0; h < x.H; ++h) {
    Tensor t({static_cast<std::size_t>(x.L), static_cast<std::size_t>(x.N), 1});
    for (int l = 0; l < x.L; ++l)
      for (int n = 0; n < x.N; ++n) t.at(l, n, 0) = x.at(l, h, n);
    days[h] = std::move(t);
  }
  return days;
}

inline FeatureTensor stack_features(const std::vector<Tensor>& days, Date anchor,
                                    std::vector<std::string> stations) {
  FeatureTensor x;
  x.H = static_cast<int>(days.size());
  x.L = static_cast<int>(days.at(0).dim(0));
  x.N = static_cast<int>(days.at(0).dim(1));
  x.anchor = anchor;
  x.stations = std::move(stations);
  x.x.resize(static_cast<std::size_t>(x.L) * x.H * x.N);
  for (int h = 0; h < x.H; ++h)
    for (int l = 0; l < x.L; ++l)
      for (int n = 0; n < x.N; ++n) x.at(l, h, n) = days[h].at(l, n, 0);
  return x;
}

struct FcnParams {
  ConvParams conv1;  // 1x2, 64 channels
  ConvParams conv2;  // 1x2, 128 channels
  ConvParams conv3;  // 1x(N-2), 256 channels

  static FcnParams init(int n, SplitMix64& rng) {
    if (n < 3) throw ShapeError("fcn module: N must be >= 3 so the third kernel width N-2 >= 1");
    FcnParams p;
    p.conv1 = ConvParams::init(1, 64, 2, rng);
    p.conv2 = ConvParams::init(64, 128, 2, rng);
    p.conv3 = ConvParams::init(128, 256, n - 2, rng);
    return p;
  }
};

struct FcnGrads {
  ConvGrads conv1, conv2, conv3;

  void reset(const FcnParams& p) {
    conv1.reset(p.conv1);
    conv2.reset(p.conv2);
    conv3.reset(p.conv3);
  }
};

struct FcnCache {
  Tensor in;
  Tensor z1, a1, z2, a2, z3, a3;
};

// [L, N, 1] -> L values: three ReLU convolutions shrinking the width
// N -> N-1 -> N-2 -> 1, then the channel mean at each station.
inline std::vector<double> fcn_module_forward(const Tensor& xh, const FcnParams& p,
                                              FcnCache* cache = nullptr) {
  nn::require_shape(xh, 3, "fcn module");
  FcnCache local;
  FcnCache& c = cache ? *cache : local;
  c.in = xh;
  c.z1 = nn::conv_1xk_forward(c.in, p.conv1);
  c.a1 = nn::relu_forward(c.z1);
  c.z2 = nn::conv_1xk_forward(c.a1, p.conv2);
  c.a2 = nn::relu_forward(c.z2);
  c.z3 = nn::conv_1xk_forward(c.a2, p.conv3);
  c.a3 = nn::relu_forward(c.z3);
  return nn::cross_channel_avg_pool_forward(c.a3);
}

inline void fcn_module_backward(const FcnParams& p, const FcnCache& c,
                                std::span<const double> grad_out, FcnGrads& grads,
                                Tensor* grad_in = nullptr) {
  Tensor g3 = nn::cross_channel_avg_pool_backward(grad_out, c.a3.dim(0), c.a3.dim(2));
  Tensor g3z = nn::relu_backward(c.z3, g3);
  Tensor g2;
  nn::conv_1xk_backward(c.a2, p.conv3, g3z, grads.conv3, &g2);
  Tensor g2z = nn::relu_backward(c.z2, g2);
  Tensor g1;
  nn::conv_1xk_backward(c.a1, p.conv2, g2z, grads.conv2, &g1);
  Tensor g1z = nn::relu_backward(c.z1, g1);
  nn::conv_1xk_backward(c.in, p.conv1, g1z, grads.conv1, grad_in);
}

// All learned stage-1 parameters. FCN weights are shared across the H
// day modules by default; untied mode keeps one module per day.
struct PhdstParams {
  int L = 0, H = 0, N = 0, hidden = 0;
  bool tied = true;
  std::vector<FcnParams> fcn;
  LstmParams lstm;
  DenseParams proj;

  static PhdstParams init(int L, int H, int N, int hidden, bool tied, std::uint64_t seed) {
    if (L < 1 || H < 1 || hidden < 1) throw ShapeError("phdst params: bad dimensions");
    PhdstParams p;
    p.L = L;
    p.H = H;
    p.N = N;
    p.hidden = hidden;
    p.tied = tied;
    SplitMix64 rng(seed);
    const int modules = tied ? 1 : H;
    for (int m = 0; m < modules; ++m) p.fcn.push_back(FcnParams::init(N, rng));
    p.lstm = LstmParams::init(L, hidden, rng);
    p.proj = DenseParams::init(hidden, L, rng);
    return p;
  }

  const FcnParams& fcn_for_day(int h) const { return fcn[tied ? 0 : h]; }
  FcnParams& fcn_for_day(int h) { return fcn[tied ? 0 : h]; }

  std::vector<ParamView> views() {
    std::vector<ParamView> v;
    for (std::size_t m = 0; m < fcn.size(); ++m) {
      const std::string prefix = fcn.size() == 1 ? "fcn" : "fcn" + std::to_string(m);
      v.push_back({prefix + ".conv1.w", &fcn[m].conv1.w});
      v.push_back({prefix + ".conv1.b", &fcn[m].conv1.b});
      v.push_back({prefix + ".conv2.w", &fcn[m].conv2.w});
      v.push_back({prefix + ".conv2.b", &fcn[m].conv2.b});
      v.push_back({prefix + ".conv3.w", &fcn[m].conv3.w});
      v.push_back({prefix + ".conv3.b", &fcn[m].conv3.b});
    }
    static const char* gate[4] = {"Wf", "Wi", "Wc", "Wo"};
    static const char* gate_b[4] = {"bf", "bi", "bc", "bo"};
    for (int g = 0; g < 4; ++g) {
      v.push_back({std::string("lstm.") + gate[g], &lstm.w[g]});
      v.push_back({std::string("lstm.") + gate_b[g], &lstm.b[g]});
    }
    v.push_back({"proj.w", &proj.w});
    v.push_back({"proj.b", &proj.b});
    return v;
  }
};

struct PhdstGrads {
  std::vector<FcnGrads> fcn;
  LstmGrads lstm;
  DenseGrads proj;

  void reset(const PhdstParams& p) {
    fcn.resize(p.fcn.size());
    for (std::size_t m = 0; m < fcn.size(); ++m) fcn[m].reset(p.fcn[m]);
    lstm.reset(p.lstm);
    proj.reset(p.proj);
  }

  std::vector<ParamView> views() {
    std::vector<ParamView> v;
    for (std::size_t m = 0; m < fcn.size(); ++m) {
      const std::string prefix = fcn.size() == 1 ? "fcn" : "fcn" + std::to_string(m);
      v.push_back({prefix + ".conv1.w", &fcn[m].conv1.w});
      v.push_back({prefix + ".conv1.b", &fcn[m].conv1.b});
      v.push_back({prefix + ".conv2.w", &fcn[m].conv2.w});
      v.push_back({prefix + ".conv2.b", &fcn[m].conv2.b});
      v.push_back({prefix + ".conv3.w", &fcn[m].conv3.w});
      v.push_back({prefix + ".conv3.b", &fcn[m].conv3.b});
    }
    static const char* gate[4] = {"Wf", "Wi", "Wc", "Wo"};
    static const char* gate_b[4] = {"bf", "bi", "bc", "bo"};
    for (int g = 0; g < 4; ++g) {
      v.push_back({std::string("lstm.") + gate[g], &lstm.w[g]});
      v.push_back({std::string("lstm.") + gate_b[g], &lstm.b[g]});
    }
    v.push_back({"proj.w", &proj.w});
    v.push_back({"proj.b", &proj.b});
    return v;
  }

  void add(PhdstGrads& other) {
    auto a = views();
    auto b = other.views();
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto& dst = *a[i].data;
      const auto& src = *b[i].data;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }

  void scale(double s) {
    for (auto& view : views())
      for (double& g : *view.data) g *= s;
  }
};

struct ModelCache {
  std::vector<FcnCache> fcn;
  std::vector<std::vector<double>> fcn_out;
  std::vector<nn::LstmStepCache> steps;
  std::vector<double> h_final;
  nn::DenseCache proj;
};

inline std::vector<double> model_forward(const FeatureTensor& x, const PhdstParams& p,
                                         ModelCache* cache = nullptr) {
  if (x.L != p.L || x.H != p.H || x.N != p.N)
    throw ShapeError("model_forward: feature tensor does not match architecture (L/H/N)");
  ModelCache local;
  ModelCache& c = cache ? *cache : local;
  c.fcn.resize(p.H);
  c.fcn_out.resize(p.H);
  c.steps.resize(p.H);

  const std::vector<Tensor> days = split_features(x);
  for (int h = 0; h < p.H; ++h)
    c.fcn_out[h] = fcn_module_forward(days[h], p.fcn_for_day(h), &c.fcn[h]);

  std::vector<double> hs(p.hidden, 0.0), cs(p.hidden, 0.0), hn, cn;
  for (int h = 0; h < p.H; ++h) {
    nn::lstm_step_forward(c.fcn_out[h], hs, cs, p.lstm, hn, cn, &c.steps[h]);
    hs = hn;
    cs = cn;
  }
  c.h_final = hs;
  return nn::dense_forward(c.h_final, p.proj, /*apply_relu=*/false, &c.proj);
}

inline void model_backward(const PhdstParams& p, const ModelCache& cache,
                           std::span<const double> grad_pred, PhdstGrads& grads) {
  std::vector<double> dh;
  nn::dense_backward(p.proj, cache.proj, grad_pred, grads.proj, &dh);
  std::vector<double> dc(p.hidden, 0.0), dx;
  for (int h = p.H - 1; h >= 0; --h) {
    nn::lstm_step_backward(p.lstm, cache.steps[h], dh, dc, dx, grads.lstm);
    fcn_module_backward(p.fcn_for_day(h), cache.fcn[h], dx,
                        grads.fcn[p.tied ? 0 : static_cast<std::size_t>(h)]);
  }
}

struct TrainConfig {
  int epochs = 45;
  int batch_size = 1;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
  double validation_fraction = 0.15;
  int early_stop_patience = 8;
  double grad_clip_norm = 5.0;
  int hidden = 128;
  bool tie_fcn = true;
  std::ostream* log = nullptr;

  void validate() const {
    if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train: batch size must be >= 1");
    if (validation_fraction < 0 || validation_fraction > 0.5)
      throw ValidationError("train: validation fraction must be in [0, 0.5]");
    if (learning_rate <= 0) throw ValidationError("train: learning rate must be positive");
  }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // NaN entries when no validation split
  std::vector<double> seconds;
  int best_epoch = 0;  // 1-based; 0 when unset
};

struct TrainResult {
  PhdstParams params;
  TrainHistory history;
};

inline double dataset_loss(const Dataset& ds, const PhdstParams& p, std::size_t begin,
                           std::size_t end) {
  double total = 0.0;
  ModelCache cache;
  for (std::size_t i = begin; i < end; ++i) {
    const FeatureTensor x = ds.tensor(i);
    const std::vector<double> pred = model_forward(x, p, &cache);
    total += nn::mse_loss(pred, ds.samples[i].target_norm);
  }
  return total / static_cast<double>(end - begin);
}

// Minimizes MSE against the normalized targets with minibatch adaptive-moment
// updates, a chronological validation split and early stopping; returns the
// parameters of the best validation epoch. Deterministic under the seed for
// any PHDST_THREADS value (per-sample gradients reduce in sample order).
inline TrainResult train_stage1(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = ds.samples.size();
  if (n == 0) throw ValidationError("train: empty dataset");
  const std::size_t n_val = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(n));
  const std::size_t n_train = n - n_val;
  if (n_train == 0) throw ValidationError("train: validation split leaves no training samples");

  PhdstParams params = PhdstParams::init(ds.L, ds.H, ds.N, cfg.hidden, cfg.tie_fcn, cfg.seed);
  // Start the projection bias at each station's mean normalized target;
  // Box-Cox values sit far from zero, and per-parameter steps of ~lr would
  // spend the whole budget walking the bias there.
  for (int l = 0; l < ds.L; ++l) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) mean += ds.samples[i].target_norm[l];
    params.proj.b[l] = mean / static_cast<double>(n_train);
  }

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.learning_rate;
  nn::AdamState adam;
  auto param_views = params.views();
  adam.reset(nn::total_size(param_views));

  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n_train);
  std::vector<PhdstGrads> slot_grads(batch);
  std::vector<double> slot_loss(batch, 0.0);
  std::vector<ModelCache> caches(static_cast<std::size_t>(worker_threads()));
  PhdstGrads batch_grads;
  batch_grads.reset(params);

  TrainHistory history;
  PhdstParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n_train);
  SplitMix64 shuffle_rng(SplitMix64(cfg.seed).fork(0x5ff1).next());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    for (std::size_t i = n_train; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.range(0, static_cast<std::int64_t>(i) - 1))]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t count = std::min(batch, n_train - start);
      const int threads = std::min<int>(worker_threads(), static_cast<int>(count));
      if (static_cast<std::size_t>(threads) > caches.size()) caches.resize(threads);
      parallel_for(count, [&](std::size_t slot) {
        ModelCache& cache = caches[slot % threads];
        const std::size_t si = order[start + slot];
        const FeatureTensor x = ds.tensor(si);
        const std::vector<double> pred = model_forward(x, params, &cache);
        slot_loss[slot] = nn::mse_loss(pred, ds.samples[si].target_norm);
        std::vector<double> dpred;
        nn::mse_grad(pred, ds.samples[si].target_norm, dpred);
        slot_grads[slot].reset(params);
        model_backward(params, cache, dpred, slot_grads[slot]);
      });

      batch_grads.reset(params);
      for (std::size_t slot = 0; slot < count; ++slot) {
        batch_grads.add(slot_grads[slot]);
        loss_sum += slot_loss[slot];
      }
      batch_grads.scale(1.0 / static_cast<double>(count));
      auto grad_views = batch_grads.views();
      nn::clip_grad_norm(grad_views, cfg.grad_clip_norm);
      nn::adam_step(param_views, grad_views, adam, adam_cfg);
    }

    const double train_loss = loss_sum / static_cast<double>(n_train);
    if (!std::isfinite(train_loss))
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
    const double val_loss = n_val > 0 ? dataset_loss(ds, params, n_train, n) :
                                        std::numeric_limits<double>::quiet_NaN();
    history.train_loss.push_back(train_loss);
    history.val_loss.push_back(val_loss);
    history.seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (cfg.log)
      (*cfg.log) << "epoch " << epoch << " train " << train_loss << " val " << val_loss << "\n";

    if (n_val > 0) {
      if (val_loss < best_val) {
        best_val = val_loss;
        history.best_epoch = epoch;
        best = params;
      } else if (cfg.early_stop_patience > 0 &&
                 epoch - history.best_epoch > cfg.early_stop_patience) {
        break;
      }
    } else {
      history.best_epoch = epoch;
    }
  }
  if (n_val == 0) best = params;
  return TrainResult{std::move(best), std::move(history)};
}

}  // namespace phdst::model
