#pragma once

// Decision phase: inverse Box-Cox on the network outputs, vital/ordinary
// group routing, per-group scalar calibration networks (two ReLU hidden
// layers) and the versioned model bundle that persists every trained phase.

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "phdst/boxcox.hpp"
#include "phdst/error.hpp"
#include "phdst/features.hpp"
#include "phdst/model.hpp"

namespace phdst::decision {

using feat::StationBoxCox;
using feat::VitalFlags;
using nn::DenseParams;
using nn::ParamView;

inline constexpr const char* kBundleFormat = "phdst-model-v1";

// Scalar in, scalar out: standardize, dense 1->w (ReLU), w->w (ReLU), w->1,
// de-standardize. The exact-identity configuration routes x through
// max(x,0) and max(-x,0) and recombines them, so an untrained or bypassed
// net is a true pass-through.
struct CalibNet {
  int width = 16;
  DenseParams l1, l2, l3;
  double in_mean = 0.0, in_std = 1.0;
  double out_mean = 0.0, out_std = 1.0;

  static CalibNet identity(int width) {
    if (width < 2) throw ValidationError("calibration net: width must be >= 2");
    CalibNet n;
    n.width = width;
    n.l1.in = 1;
    n.l1.out = width;
    n.l1.w.assign(width, 0.0);
    n.l1.b.assign(width, 0.0);
    n.l1.w[0] = 1.0;
    n.l1.w[1] = -1.0;
    n.l2.in = width;
    n.l2.out = width;
    n.l2.w.assign(static_cast<std::size_t>(width) * width, 0.0);
    n.l2.b.assign(width, 0.0);
    n.l2.at(0, 0) = 1.0;
    n.l2.at(1, 1) = 1.0;
    n.l3.in = width;
    n.l3.out = 1;
    n.l3.w.assign(width, 0.0);
    n.l3.b.assign(1, 0.0);
    n.l3.w[0] = 1.0;
    n.l3.w[1] = -1.0;
    return n;
  }

  bool is_identity() const {
    CalibNet id = identity(width);
    return l1.w == id.l1.w && l1.b == id.l1.b && l2.w == id.l2.w && l2.b == id.l2.b &&
           l3.w == id.l3.w && l3.b == id.l3.b && in_mean == 0.0 && in_std == 1.0 &&
           out_mean == 0.0 && out_std == 1.0;
  }

  double eval(double v) const {
    const double z = (v - in_mean) / in_std;
    const double x[1] = {z};
    const std::vector<double> h1 = nn::dense_forward(std::span<const double>(x, 1), l1, true);
    const std::vector<double> h2 = nn::dense_forward(h1, l2, true);
    const std::vector<double> out = nn::dense_forward(h2, l3, false);
    return out[0] * out_std + out_mean;
  }

  std::vector<ParamView> views() {
    return {{"l1.w", &l1.w}, {"l1.b", &l1.b}, {"l2.w", &l2.w},
            {"l2.b", &l2.b}, {"l3.w", &l3.w}, {"l3.b", &l3.b}};
  }
};

struct CalibrationNets {
  CalibNet vital;
  CalibNet ordinary;
};

struct CalibConfig {
  bool enabled = true;
  int width = 16;
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (width < 2) throw ValidationError("calibration: width must be >= 2");
    if (epochs < 1) throw ValidationError("calibration: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("calibration: batch size must be >= 1");
  }
};

namespace detail {

struct Pair {
  double input;
  double label;
};

inline double net_mse(const CalibNet& net, const std::vector<Pair>& pairs) {
  double acc = 0.0;
  for (const Pair& p : pairs) {
    const double d = net.eval(p.input) - p.label;
    acc += d * d;
  }
  return acc / static_cast<double>(pairs.size());
}

// Trains one group's net from a near-identity start and keeps the best
// parameters seen by training MSE, the start included, so a trained net is
// never worse than the moment-matching affine it began as.
inline CalibNet train_group(const std::vector<Pair>& pairs, const CalibConfig& cfg,
                            std::uint64_t stream) {
  CalibNet net = CalibNet::identity(cfg.width);
  double in_mean = 0.0, out_mean = 0.0;
  for (const Pair& p : pairs) {
    in_mean += p.input;
    out_mean += p.label;
  }
  in_mean /= static_cast<double>(pairs.size());
  out_mean /= static_cast<double>(pairs.size());
  double in_var = 0.0, out_var = 0.0;
  for (const Pair& p : pairs) {
    in_var += (p.input - in_mean) * (p.input - in_mean);
    out_var += (p.label - out_mean) * (p.label - out_mean);
  }
  net.in_mean = in_mean;
  net.in_std = std::max(std::sqrt(in_var / static_cast<double>(pairs.size())), 1e-9);
  net.out_mean = out_mean;
  net.out_std = std::max(std::sqrt(out_var / static_cast<double>(pairs.size())), 1e-9);

  // Wake the spare neurons with small weights; the identity backbone keeps
  // the initial function close to a pass-through in standardized space.
  SplitMix64 rng(SplitMix64(cfg.seed).fork(stream).next());
  for (std::size_t i = 2; i < net.l1.w.size(); ++i) net.l1.w[i] = rng.uniform(-0.05, 0.05);
  for (int o = 0; o < net.l2.out; ++o)
    for (int i = 0; i < net.l2.in; ++i)
      if (net.l2.at(o, i) == 0.0) net.l2.at(o, i) = rng.uniform(-0.05, 0.05);
  for (std::size_t i = 2; i < net.l3.w.size(); ++i) net.l3.w[i] = rng.uniform(-0.05, 0.05);

  CalibNet best = net;
  double best_mse = net_mse(net, pairs);

  auto views = net.views();
  nn::AdamState adam;
  adam.reset(nn::total_size(views));
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.learning_rate;

  nn::DenseGrads g1, g2, g3;
  nn::DenseCache c1, c2, c3;
  std::vector<std::size_t> order(pairs.size());
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, pairs.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(i) - 1))]);

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      g1.reset(net.l1);
      g2.reset(net.l2);
      g3.reset(net.l3);
      for (std::size_t b = 0; b < count; ++b) {
        const Pair& p = pairs[order[start + b]];
        const double z = (p.input - net.in_mean) / net.in_std;
        const double zy = (p.label - net.out_mean) / net.out_std;
        const double x[1] = {z};
        const std::vector<double> h1 = nn::dense_forward(std::span<const double>(x, 1), net.l1, true, &c1);
        const std::vector<double> h2 = nn::dense_forward(h1, net.l2, true, &c2);
        const std::vector<double> out = nn::dense_forward(h2, net.l3, false, &c3);
        const double scale = 2.0 / static_cast<double>(count);
        std::vector<double> dout{scale * (out[0] - zy)};
        std::vector<double> dh2, dh1, dx;
        nn::dense_backward(net.l3, c3, dout, g3, &dh2);
        nn::dense_backward(net.l2, c2, dh2, g2, &dh1);
        nn::dense_backward(net.l1, c1, dh1, g1, &dx);
      }
      std::vector<ParamView> grads = {{"l1.w", &g1.w}, {"l1.b", &g1.b}, {"l2.w", &g2.w},
                                      {"l2.b", &g2.b}, {"l3.w", &g3.w}, {"l3.b", &g3.b}};
      nn::clip_grad_norm(grads, 5.0);
      nn::adam_step(views, grads, adam, adam_cfg);
    }
    const double mse = net_mse(net, pairs);
    if (mse < best_mse) {
      best_mse = mse;
      best = net;
    }
  }
  return best;
}

}  // namespace detail

// Builds (inverse-transformed stage-1 prediction, raw next-day volume) pairs
// from the first `sample_count` dataset samples, routes them by vital flag
// and trains each group's net. A group with no pairs falls back to the
// identity mapping with a warning.
inline CalibrationNets train_calibration(const std::vector<std::vector<double>>& stage1_norm_preds,
                                         const feat::Dataset& ds, const StationBoxCox& boxcox,
                                         const VitalFlags& flags, const CalibConfig& cfg,
                                         std::size_t sample_count, std::ostream* warnings = nullptr) {
  cfg.validate();
  if (sample_count > stage1_norm_preds.size() || sample_count > ds.samples.size())
    throw ValidationError("train_calibration: sample count exceeds predictions or dataset");

  std::vector<detail::Pair> groups[2];
  for (std::size_t i = 0; i < sample_count; ++i) {
    for (int l = 0; l < ds.L; ++l) {
      const double v = feat::boxcox_invert_clamped(stage1_norm_preds[i][l], boxcox.exit_params[l]);
      groups[flags.vital(l) ? 1 : 0].push_back({v, ds.samples[i].target_raw[l]});
    }
  }

  CalibrationNets nets;
  if (groups[1].empty()) {
    nets.vital = CalibNet::identity(cfg.width);
    if (warnings) *warnings << "warning: no vital stations; vital calibration net set to identity\n";
  } else {
    nets.vital = detail::train_group(groups[1], cfg, 1);
  }
  if (groups[0].empty()) {
    nets.ordinary = CalibNet::identity(cfg.width);
    if (warnings) *warnings << "warning: no ordinary stations; ordinary calibration net set to identity\n";
  } else {
    nets.ordinary = detail::train_group(groups[0], cfg, 2);
  }
  return nets;
}

struct Fingerprint {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string data_hash;
};

struct PredictDiagnostics {
  int invert_clamped = 0;
};

// Everything the predictor needs: stage-1 parameters, per-station Box-Cox,
// vital flags, upstream map and the two calibration nets.
struct ModelBundle {
  std::vector<std::string> stations;
  model::PhdstParams params;
  StationBoxCox boxcox;
  VitalFlags flags;
  feat::UpstreamMap upstream;
  CalibrationNets nets;
  Fingerprint fingerprint;

  ModelBundle with_identity_calibration() const {
    ModelBundle b = *this;
    b.nets.vital = CalibNet::identity(b.nets.vital.width);
    b.nets.ordinary = CalibNet::identity(b.nets.ordinary.width);
    return b;
  }
};

// Stage-1 forward, per-station inverse Box-Cox, group routing through the
// calibration nets, clamped at zero. Inverse-domain violations fall back to
// the nearest attainable value and are only counted, never fatal.
inline std::vector<double> predict_calibrated(const feat::FeatureTensor& x, const ModelBundle& b,
                                              PredictDiagnostics* diag = nullptr) {
  if (x.stations != b.stations)
    throw ValidationError("predict: feature tensor station set does not match the model bundle");
  const std::vector<double> norm = model::model_forward(x, b.params);
  std::vector<double> out(norm.size());
  for (std::size_t l = 0; l < norm.size(); ++l) {
    bool clamped = false;
    const double v = feat::boxcox_invert_clamped(norm[l], b.boxcox.exit_params[l], &clamped);
    if (clamped && diag) ++diag->invert_clamped;
    const double calibrated = b.flags.vital(static_cast<int>(l)) ? b.nets.vital.eval(v)
                                                                 : b.nets.ordinary.eval(v);
    out[l] = std::max(0.0, calibrated);
  }
  return out;
}

// --- bundle serialization ----------------------------------------------------

namespace detail {

inline nlohmann::json dense_to_json(const DenseParams& p) {
  return {{"in", p.in}, {"out", p.out}, {"w", p.w}, {"b", p.b}};
}

inline DenseParams dense_from_json(const nlohmann::json& j) {
  DenseParams p;
  p.in = j.at("in").get<int>();
  p.out = j.at("out").get<int>();
  p.w = j.at("w").get<std::vector<double>>();
  p.b = j.at("b").get<std::vector<double>>();
  if (p.w.size() != static_cast<std::size_t>(p.in) * p.out ||
      p.b.size() != static_cast<std::size_t>(p.out))
    throw IoError("model file: dense layer size mismatch");
  return p;
}

inline nlohmann::json conv_to_json(const nn::ConvParams& p) {
  return {{"in_ch", p.in_ch}, {"out_ch", p.out_ch}, {"k", p.k}, {"w", p.w}, {"b", p.b}};
}

inline nn::ConvParams conv_from_json(const nlohmann::json& j) {
  nn::ConvParams p;
  p.in_ch = j.at("in_ch").get<int>();
  p.out_ch = j.at("out_ch").get<int>();
  p.k = j.at("k").get<int>();
  p.w = j.at("w").get<std::vector<double>>();
  p.b = j.at("b").get<std::vector<double>>();
  if (p.w.size() != static_cast<std::size_t>(p.out_ch) * p.k * p.in_ch ||
      p.b.size() != static_cast<std::size_t>(p.out_ch))
    throw IoError("model file: conv layer size mismatch");
  return p;
}

inline nlohmann::json calib_to_json(const CalibNet& n) {
  return {{"width", n.width},       {"in_mean", n.in_mean},   {"in_std", n.in_std},
          {"out_mean", n.out_mean}, {"out_std", n.out_std},   {"l1", dense_to_json(n.l1)},
          {"l2", dense_to_json(n.l2)}, {"l3", dense_to_json(n.l3)}};
}

inline CalibNet calib_from_json(const nlohmann::json& j) {
  CalibNet n;
  n.width = j.at("width").get<int>();
  n.in_mean = j.at("in_mean").get<double>();
  n.in_std = j.at("in_std").get<double>();
  n.out_mean = j.at("out_mean").get<double>();
  n.out_std = j.at("out_std").get<double>();
  n.l1 = dense_from_json(j.at("l1"));
  n.l2 = dense_from_json(j.at("l2"));
  n.l3 = dense_from_json(j.at("l3"));
  return n;
}

}  // namespace detail

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  nlohmann::json j;
  j["format"] = kBundleFormat;
  j["architecture"] = {{"stations", b.params.L},  {"window_days", b.params.H},
                       {"feature_dim", b.params.N}, {"hidden", b.params.hidden},
                       {"tied_fcn", b.params.tied}, {"calibration_width", b.nets.vital.width}};
  j["stations"] = b.stations;
  nlohmann::json fcn = nlohmann::json::array();
  for (const auto& m : b.params.fcn)
    fcn.push_back({{"conv1", detail::conv_to_json(m.conv1)},
                   {"conv2", detail::conv_to_json(m.conv2)},
                   {"conv3", detail::conv_to_json(m.conv3)}});
  j["stage1"]["fcn"] = fcn;
  j["stage1"]["lstm"] = {{"hidden", b.params.lstm.hidden}, {"input", b.params.lstm.input},
                         {"Wf", b.params.lstm.w[0]},       {"Wi", b.params.lstm.w[1]},
                         {"Wc", b.params.lstm.w[2]},       {"Wo", b.params.lstm.w[3]},
                         {"bf", b.params.lstm.b[0]},       {"bi", b.params.lstm.b[1]},
                         {"bc", b.params.lstm.b[2]},       {"bo", b.params.lstm.b[3]}};
  j["stage1"]["projection"] = detail::dense_to_json(b.params.proj);
  j["boxcox"] = feat::boxcox_to_json(b.boxcox, b.stations);
  j["vital"] = feat::vital_to_json(b.flags, b.stations);
  j["upstream"] = feat::upstream_to_json(b.upstream);
  j["calibration"] = {{"vital", detail::calib_to_json(b.nets.vital)},
                      {"ordinary", detail::calib_to_json(b.nets.ordinary)}};
  j["fingerprint"] = {{"seed", b.fingerprint.seed},
                      {"config_hash", b.fingerprint.config_hash},
                      {"data_hash", b.fingerprint.data_hash}};
  return j;
}

inline std::string serialize_bundle(const ModelBundle& b) { return bundle_to_json(b).dump(1) + "\n"; }

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || !j.at("format").is_string())
    throw IoError("model file: missing format field");
  if (j.at("format").get<std::string>() != kBundleFormat)
    throw IoError("model file: unsupported format '" + j.at("format").get<std::string>() +
                  "', expected " + kBundleFormat);
  ModelBundle b;
  const nlohmann::json& arch = j.at("architecture");
  b.stations = j.at("stations").get<std::vector<std::string>>();
  b.params.L = arch.at("stations").get<int>();
  b.params.H = arch.at("window_days").get<int>();
  b.params.N = arch.at("feature_dim").get<int>();
  b.params.hidden = arch.at("hidden").get<int>();
  b.params.tied = arch.at("tied_fcn").get<bool>();
  if (b.stations.size() != static_cast<std::size_t>(b.params.L))
    throw IoError("model file: station list does not match architecture");
  for (const auto& m : j.at("stage1").at("fcn")) {
    model::FcnParams fp;
    fp.conv1 = detail::conv_from_json(m.at("conv1"));
    fp.conv2 = detail::conv_from_json(m.at("conv2"));
    fp.conv3 = detail::conv_from_json(m.at("conv3"));
    b.params.fcn.push_back(std::move(fp));
  }
  if (b.params.fcn.size() != (b.params.tied ? 1u : static_cast<std::size_t>(b.params.H)))
    throw IoError("model file: unexpected FCN module count");
  const nlohmann::json& lstm = j.at("stage1").at("lstm");
  b.params.lstm.hidden = lstm.at("hidden").get<int>();
  b.params.lstm.input = lstm.at("input").get<int>();
  b.params.lstm.w[0] = lstm.at("Wf").get<std::vector<double>>();
  b.params.lstm.w[1] = lstm.at("Wi").get<std::vector<double>>();
  b.params.lstm.w[2] = lstm.at("Wc").get<std::vector<double>>();
  b.params.lstm.w[3] = lstm.at("Wo").get<std::vector<double>>();
  b.params.lstm.b[0] = lstm.at("bf").get<std::vector<double>>();
  b.params.lstm.b[1] = lstm.at("bi").get<std::vector<double>>();
  b.params.lstm.b[2] = lstm.at("bc").get<std::vector<double>>();
  b.params.lstm.b[3] = lstm.at("bo").get<std::vector<double>>();
  const std::size_t cols = static_cast<std::size_t>(b.params.lstm.hidden + b.params.lstm.input);
  for (int g = 0; g < 4; ++g)
    if (b.params.lstm.w[g].size() != cols * b.params.lstm.hidden ||
        b.params.lstm.b[g].size() != static_cast<std::size_t>(b.params.lstm.hidden))
      throw IoError("model file: lstm weight size mismatch");
  b.params.proj = detail::dense_from_json(j.at("stage1").at("projection"));
  b.boxcox = feat::boxcox_from_json(j.at("boxcox"), b.stations);
  b.flags = feat::vital_from_json(j.at("vital"), b.stations);
  b.upstream = feat::upstream_from_json(j.at("upstream"));
  b.nets.vital = detail::calib_from_json(j.at("calibration").at("vital"));
  b.nets.ordinary = detail::calib_from_json(j.at("calibration").at("ordinary"));
  b.fingerprint.seed = j.at("fingerprint").at("seed").get<std::uint64_t>();
  b.fingerprint.config_hash = j.at("fingerprint").at("config_hash").get<std::string>();
  b.fingerprint.data_hash = j.at("fingerprint").at("data_hash").get<std::string>();
  return b;
}

inline ModelBundle deserialize_bundle(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("model file: not valid JSON (truncated or corrupt)");
  return bundle_from_json(j);
}

inline void save_bundle(const std::string& path, const ModelBundle& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << serialize_bundle(b);
  if (!os) throw IoError("write failed: " + path);
}

inline ModelBundle load_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return deserialize_bundle(buf.str());
}

}  // namespace phdst::decision
