#pragma once

// Central finite-difference verification of analytic gradients. Checks a
// random subsample of coordinates per parameter block against a scalar
// loss closure.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "phdst/layers.hpp"
#include "phdst/rng.hpp"

namespace phdst::nn {

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t tested = 0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double worst = 0.0;

  bool pass(double tolerance) const { return worst < tolerance; }
};

inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

// `loss` must be a deterministic pure function of the parameter blocks.
// `analytic` holds the already-computed gradients in matching block order.
inline GradCheckReport grad_check(std::vector<ParamView>& params,
                                  const std::vector<std::vector<double>>& analytic,
                                  const std::function<double()>& loss, double eps,
                                  std::uint64_t seed, std::size_t coords_per_block = 50) {
  GradCheckReport report;
  SplitMix64 rng(seed);
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::vector<double>& vec = *params[b].data;
    GradCheckBlock blk;
    blk.name = params[b].name;
    const std::size_t n = vec.size();
    std::vector<std::size_t> coords;
    if (n <= coords_per_block) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < coords_per_block; ++i)
        coords.push_back(static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(n) - 1)));
    }
    for (std::size_t idx : coords) {
      const double saved = vec[idx];
      vec[idx] = saved + eps;
      const double up = loss();
      vec[idx] = saved - eps;
      const double down = loss();
      vec[idx] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      blk.max_rel_err = std::max(blk.max_rel_err, rel_err(numeric, analytic[b][idx]));
      ++blk.tested;
    }
    report.worst = std::max(report.worst, blk.max_rel_err);
    report.blocks.push_back(std::move(blk));
  }
  return report;
}

}  // namespace phdst::nn
