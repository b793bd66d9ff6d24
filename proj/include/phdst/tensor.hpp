#pragma once

// Dense row-major double tensor. Shapes are dynamic; hot loops index the
// raw buffer directly.

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "phdst/error.hpp"

namespace phdst::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    v.assign(count(shape), 0.0);
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return v.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  // Reshape-in-place used by caches; keeps the allocation when sizes match.
  void reset(std::vector<std::size_t> s) {
    shape = std::move(s);
    v.assign(count(shape), 0.0);
  }

  double& at(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return v[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return v[(i * shape[1] + j) * shape[2] + k];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline void require_shape(const Tensor& t, std::size_t ndim, const char* what) {
  if (t.shape.size() != ndim)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(ndim) + "-d tensor");
}

}  // namespace phdst::nn
