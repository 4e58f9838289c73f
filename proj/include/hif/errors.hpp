#pragma once

#include <stdexcept>
#include <string>

namespace hif {

/// Malformed or inconsistent input data (corpus files, lexicons, checkpoints).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration (bad hyperparameter values, infeasible generators).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A training stage failed or was invoked out of order.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hif
