#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "hif/errors.hpp"
#include "hif/forecaster.hpp"

namespace hif {

/// Flat key=value config. Blank lines and lines starting with '#' are
/// ignored. Unknown keys are rejected so typos fail loudly.
inline PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    // Whole-token parses; trailing garbage is an error, not silently dropped.
    auto as_uint = [&](const std::string& v) {
      std::size_t pos = 0;
      unsigned long long r = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return static_cast<std::size_t>(r);
    };
    auto as_double = [&](const std::string& v) {
      std::size_t pos = 0;
      double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    };
    try {
      if (key == "delta") cfg.delta = as_uint(value);
      else if (key == "w") cfg.w = as_double(value);
      else if (key == "t_h") cfg.t_h = as_uint(value);
      else if (key == "t_f") cfg.t_f = as_uint(value);
      else if (key == "n") cfg.n = as_uint(value);
      else if (key == "j") cfg.j = as_uint(value);
      else if (key == "lr") cfg.lr = as_double(value);
      else if (key == "split") cfg.split = as_double(value);
      else if (key == "vocab") cfg.vocab = as_uint(value);
      else if (key == "node_epochs") cfg.node_epochs = as_uint(value);
      else if (key == "node_sample_cap") cfg.node_sample_cap = as_uint(value);
      else if (key == "ae_epochs") cfg.ae_epochs = as_uint(value);
      else if (key == "prior_epochs") cfg.prior_epochs = as_uint(value);
      else if (key == "predictor_epochs") cfg.predictor_epochs = as_uint(value);
      else if (key == "fine_tune_tree") cfg.fine_tune_tree = value == "1" || value == "true";
      else if (key == "seed") cfg.seed = as_uint(value);
      else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key: " + key);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key +
                        ": " + value);
    }
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config(in);
}

inline std::string config_to_string(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "delta=" << cfg.delta << "\nw=" << cfg.w << "\nt_h=" << cfg.t_h << "\nt_f=" << cfg.t_f
      << "\nn=" << cfg.n << "\nj=" << cfg.j << "\nlr=" << cfg.lr << "\nsplit=" << cfg.split
      << "\n";
  return out.str();
}

}  // namespace hif
