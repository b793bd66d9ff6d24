#pragma once

// Adaptive-moment optimizer with bias correction, operating over an
// ordered list of named parameter blocks.

#include <cmath>
#include <cstddef>
#include <vector>

#include "phdst/error.hpp"
#include "phdst/layers.hpp"

namespace phdst::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  void reset(std::size_t total) {
    m.assign(total, 0.0);
    v.assign(total, 0.0);
    step = 0;
  }
};

inline std::size_t total_size(const std::vector<ParamView>& blocks) {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.data->size();
  return n;
}

inline void adam_step(std::vector<ParamView>& params, const std::vector<ParamView>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam: block count mismatch");
  if (state.m.size() != total_size(params)) state.reset(total_size(params));

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  std::size_t off = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::vector<double>& p = *params[b].data;
    const std::vector<double>& g = *grads[b].data;
    if (p.size() != g.size()) throw ShapeError("adam: gradient shape mismatch in " + params[b].name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi))
        throw NumericError("adam: non-finite gradient in block " + params[b].name);
      double& m = state.m[off + i];
      double& v = state.v[off + i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gi;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    off += p.size();
  }
}

// Global L2 gradient-norm clipping; returns the pre-clip norm.
inline double clip_grad_norm(std::vector<ParamView>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& b : grads)
    for (double g : *b.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& b : grads)
      for (double& g : *b.data) g *= scale;
  }
  return norm;
}

}  // namespace phdst::nn
