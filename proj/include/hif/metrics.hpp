#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace hif {

/// Sample Pearson correlation. Absent when either series is constant
/// (zero variance makes the coefficient undefined).
inline std::optional<double> pcc(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("pcc: series must have equal nonzero length");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("rmse: series must have equal nonzero length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

/// Absolute value of the mean signed error: bias magnitude of a forecast.
inline double mfe(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("mfe: series must have equal nonzero length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
  return std::fabs(s / static_cast<double>(a.size()));
}

struct MetricTriple {
  std::optional<double> pcc;
  double rmse = 0.0;
  double mfe = 0.0;
};

inline MetricTriple metric_triple(const std::vector<double>& a, const std::vector<double>& b) {
  return {pcc(a, b), rmse(a, b), mfe(a, b)};
}

}  // namespace hif
