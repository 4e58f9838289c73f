#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hif/errors.hpp"
#include "hif/eval.hpp"
#include "hif/forecaster.hpp"
#include "hif/gmm.hpp"
#include "hif/intensity.hpp"
#include "hif/threadstore.hpp"

namespace hif {

/// Lexicon mean without the logistic calibration; the alternative scorer the
/// `scorer` sweep axis toggles to (value 0 = calibrated, 1 = raw mean).
class UncalibratedScorer : public HateScorer {
 public:
  explicit UncalibratedScorer(HateLexicon lexicon)
      : name_("uncalibrated"), lexicon_(std::move(lexicon)) {}
  const std::string& name() const override { return name_; }
  double score(const std::vector<std::string>& tokens) const override {
    return lexicon_score(tokens, lexicon_);
  }

 private:
  std::string name_;
  HateLexicon lexicon_;
};

struct SweepSpec {
  std::string param;  // one of: delta, t_h, j, w, scorer
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  PipelineConfig base;
};

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> pcc;
  double rmse = 0.0;
  double mfe = 0.0;
};

namespace swp {

inline PipelineConfig apply_value(const PipelineConfig& base, const std::string& param,
                                  double value) {
  PipelineConfig cfg = base;
  if (param == "delta") {
    cfg.delta = static_cast<std::size_t>(value);
  } else if (param == "t_h") {
    cfg.t_h = static_cast<std::size_t>(value);
    cfg.t_f = cfg.n - cfg.t_h;
  } else if (param == "j") {
    cfg.j = static_cast<std::size_t>(value);
  } else if (param == "w") {
    cfg.w = value;
  } else if (param == "scorer") {
    if (value != 0.0 && value != 1.0) {
      throw ConfigError("sweep: scorer value must be 0 (calibrated) or 1 (raw)");
    }
  } else {
    throw ConfigError("sweep: unknown parameter: " + param);
  }
  cfg.validate();
  return cfg;
}

/// The stages a fitted pipeline keeps when only j changes: everything up to
/// and including the latents. Clustering, prior, and predictor refit.
inline PipelineModel refit_clustering_onward(const PipelineModel& trained,
                                             const PipelineArtifacts& artifacts, std::size_t j,
                                             std::uint64_t seed) {
  PipelineModel p = trained;
  p.config.j = j;
  p.config.seed = seed;
  Tensor lat = Tensor::zeros({artifacts.latents.size(), 160});
  for (std::size_t i = 0; i < artifacts.latents.size(); ++i) {
    for (std::size_t k = 0; k < 32; ++k) lat.at(i, k) = artifacts.latents[i].x_h[k];
    for (std::size_t k = 0; k < 128; ++k) lat.at(i, 32 + k) = artifacts.latents[i].x_f[k];
  }
  p.clustering = fit_gmm(lat, j, Rng(seed).split("gmm_stage").next_u64());
  p.gmm_ready = true;
  p.prior_ready = false;
  p.predictor_ready = false;
  train_prior(p, artifacts.features, artifacts.latents, p.config.prior_epochs, p.config.lr * 5.0,
              Rng(seed).split("prior_stage").next_u64());
  train_future_predictor(p, artifacts.features, artifacts.latents, p.config.predictor_epochs,
                         p.config.lr * 5.0, Rng(seed).split("predictor_stage").next_u64());
  return p;
}

}  // namespace swp

/// Retrains per value with stage-aware reuse: a j change refits only the
/// clustering, prior, and predictor; every other axis invalidates the
/// profiles and forces a full retrain.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, const Corpus& corpus,
                                       const TextEmbedder& embedder, const HateLexicon& lexicon) {
  if (spec.values.empty()) throw ConfigError("sweep: no values given");
  if (spec.seeds.empty()) throw ConfigError("sweep: no seeds given");
  // Validate every cell before any training starts.
  for (double v : spec.values) swp::apply_value(spec.base, spec.param, v);

  std::vector<SweepRow> rows;
  for (std::uint64_t seed : spec.seeds) {
    auto [train, test] = split_train_test(corpus, spec.base.split, seed);

    if (spec.param == "j") {
      PipelineConfig cfg = swp::apply_value(spec.base, "j", spec.values[0]);
      cfg.seed = seed;
      ReferenceScorer scorer(lexicon);
      PipelineArtifacts artifacts;
      PipelineModel first =
          train_pipeline(train.threads, cfg, scorer, embedder, lexicon, &artifacts);
      for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
        PipelineModel p = vi == 0 ? first
                                  : swp::refit_clustering_onward(
                                        first, artifacts,
                                        static_cast<std::size_t>(spec.values[vi]), seed);
        ForecastReport rep = evaluate(p, test.threads, scorer, embedder, lexicon);
        rows.push_back({spec.param, spec.values[vi], seed, rep.mean_pcc, rep.mean_rmse,
                        rep.mean_mfe});
      }
      continue;
    }

    for (double v : spec.values) {
      PipelineConfig cfg = swp::apply_value(spec.base, spec.param, v);
      cfg.seed = seed;
      ReferenceScorer calibrated(lexicon);
      UncalibratedScorer raw(lexicon);
      const HateScorer& scorer =
          (spec.param == "scorer" && v == 1.0) ? static_cast<const HateScorer&>(raw)
                                               : static_cast<const HateScorer&>(calibrated);
      PipelineModel p = train_pipeline(train.threads, cfg, scorer, embedder, lexicon);
      ForecastReport rep = evaluate(p, test.threads, scorer, embedder, lexicon);
      rows.push_back({spec.param, v, seed, rep.mean_pcc, rep.mean_rmse, rep.mean_mfe});
    }
  }
  return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "param,value,seed,pcc,rmse,mfe\n";
  for (const auto& r : rows) {
    out << r.param << ',' << detail::format_double(r.value) << ',' << r.seed << ','
        << (r.pcc.has_value() ? detail::format_double(*r.pcc) : "") << ','
        << detail::format_double(r.rmse) << ',' << detail::format_double(r.mfe) << '\n';
  }
  return out.str();
}

inline std::vector<SweepRow> sweep_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "param,value,seed,pcc,rmse,mfe") {
    throw DataError("sweep csv: missing or wrong header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string param, value, seed, p, r, m;
    if (!std::getline(ls, param, ',') || !std::getline(ls, value, ',') ||
        !std::getline(ls, seed, ',') || !std::getline(ls, p, ',') ||
        !std::getline(ls, r, ',') || !std::getline(ls, m)) {
      throw DataError("sweep csv: malformed row: " + line);
    }
    SweepRow row;
    row.param = param;
    row.value = std::stod(value);
    row.seed = std::stoull(seed);
    row.pcc = p.empty() ? std::nullopt : std::optional<double>(std::stod(p));
    row.rmse = std::stod(r);
    row.mfe = std::stod(m);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hif
