#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "hif/rng.hpp"

namespace hif {

/// Dense row-major tensor of 64-bit floats. Shapes are explicit; no
/// broadcasting beyond what individual ops define.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) {
      throw std::invalid_argument("Tensor: shape/data size mismatch");
    }
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<std::size_t> s, double v) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  static Tensor vector1d(std::vector<double> d) {
    auto n = d.size();
    return Tensor({n}, std::move(d));
  }

  /// Gaussian init, entries scale * N(0,1).
  static Tensor randn(std::vector<std::size_t> s, Rng& rng, double scale = 1.0) {
    auto n = numel(s);
    std::vector<double> d(n);
    for (auto& x : d) x = scale * rng.normal();
    return Tensor(std::move(s), std::move(d));
  }

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return shape.empty(); }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace hif
