#pragma once

// Test-only central finite-difference oracle for gradient checks. Rebuilds the
// forward pass from plain parameter tensors; independent of the tape backward.

#include <cmath>
#include <functional>
#include <vector>

#include "hif/tensor.hpp"

namespace hif::testing {

// forward: maps a full parameter set to a scalar loss.
using ForwardFn = std::function<double(const std::vector<hif::Tensor>&)>;

inline std::vector<hif::Tensor> finite_difference_gradients(const ForwardFn& forward,
                                                            std::vector<hif::Tensor> params,
                                                            double step = 1e-5) {
  std::vector<hif::Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    hif::Tensor g = hif::Tensor::zeros(params[p].shape);
    for (std::size_t k = 0; k < params[p].data.size(); ++k) {
      const double orig = params[p].data[k];
      params[p].data[k] = orig + step;
      const double fp = forward(params);
      params[p].data[k] = orig - step;
      const double fm = forward(params);
      params[p].data[k] = orig;
      g.data[k] = (fp - fm) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Relative error with an absolute floor, as used by the gradient checks.
inline bool gradient_close(double analytic, double numeric, double rel = 1e-4,
                           double abs_floor = 1e-7) {
  const double diff = std::fabs(analytic - numeric);
  if (diff <= abs_floor) return true;
  const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
  return diff <= rel * scale;
}

}  // namespace hif::testing
