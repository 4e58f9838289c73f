#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hif/forecaster.hpp"
#include "hif/synth.hpp"

using namespace hif;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.delta = 10;
  cfg.t_h = 25;
  cfg.n = 60;
  cfg.t_f = 35;
  cfg.j = 2;
  cfg.node_epochs = 4;
  cfg.node_sample_cap = 48;
  cfg.ae_epochs = 40;
  cfg.prior_epochs = 15;
  cfg.predictor_epochs = 30;
  cfg.vocab = 512;
  cfg.seed = 2024;
  return cfg;
}

Corpus small_corpus(std::uint64_t seed) {
  SyntheticConfig sc;
  auto all = SyntheticConfig::default_archetypes();
  sc.archetypes = {all[0], all[1]};  // rising and falling
  sc.threads_per_archetype = 8;
  sc.replies_per_thread = 60;
  sc.seed = seed;
  return generate_synthetic(sc);
}

struct Fixture {
  Corpus corpus;
  HateLexicon lexicon;
  ReferenceScorer scorer;
  ReferenceEmbedder embedder;
  PipelineArtifacts artifacts;
  PipelineModel pipeline;

  Fixture()
      : corpus(small_corpus(7)),
        lexicon(synthetic_lexicon()),
        scorer(synthetic_lexicon()),
        embedder(16, 99),
        pipeline(train_pipeline(corpus.threads, small_config(), scorer, embedder, lexicon,
                                &artifacts)) {}
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("pipeline config validation") {
  PipelineConfig cfg = small_config();
  cfg.validate();
  cfg.t_f = 99;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.t_h = cfg.delta;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.w = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("stage order violations name the missing stage") {
  PipelineModel p;
  p.config = small_config();
  std::vector<ThreadFeatures> f(1);
  std::vector<LatentPair> l(1);
  CHECK_THROWS_WITH_AS(train_prior(p, f, l, 1, 0.01, 1),
                       doctest::Contains("missing stage: node embedder"), TrainingError);
  p.node_ready = true;
  CHECK_THROWS_WITH_AS(train_prior(p, f, l, 1, 0.01, 1),
                       doctest::Contains("missing stage: autoencoder"), TrainingError);
  p.ae_ready = true;
  CHECK_THROWS_WITH_AS(train_prior(p, f, l, 1, 0.01, 1),
                       doctest::Contains("missing stage: clustering"), TrainingError);
  CHECK_THROWS_WITH_AS(train_future_predictor(p, f, l, 1, 0.01, 1),
                       doctest::Contains("missing stage: clustering"), TrainingError);
  p.gmm_ready = true;
  CHECK_THROWS_WITH_AS(train_future_predictor(p, f, l, 1, 0.01, 1),
                       doctest::Contains("missing stage: prior model"), TrainingError);
}

TEST_CASE("pipeline trains every stage and records losses") {
  const Fixture& fx = fixture();
  const PipelineModel& p = fx.pipeline;
  CHECK(p.node_ready);
  CHECK(p.ae_ready);
  CHECK(p.gmm_ready);
  CHECK(p.prior_ready);
  CHECK(p.predictor_ready);
  CHECK(p.autoencoder.loss_history.size() == 40);
  CHECK(p.prior.loss_history.size() == 15);
  CHECK(p.predictor.loss_history.size() == 30);
  CHECK(p.prior.loss_history.back() < p.prior.loss_history.front());
  CHECK(p.predictor.loss_history.back() < p.predictor.loss_history.front());
  // Prior beats a uniform guess on its training set.
  CHECK(p.prior.loss_history.back() < std::log(2.0));
}

TEST_CASE("future predictor beats the mean-latent baseline on train data") {
  const Fixture& fx = fixture();
  const auto& latents = fx.artifacts.latents;
  std::vector<double> mean(128, 0.0);
  for (const auto& lp : latents) {
    for (std::size_t k = 0; k < 128; ++k) mean[k] += lp.x_f[k];
  }
  for (auto& v : mean) v /= static_cast<double>(latents.size());
  double variance = 0.0;
  for (const auto& lp : latents) {
    for (std::size_t k = 0; k < 128; ++k) {
      const double d = lp.x_f[k] - mean[k];
      variance += d * d;
    }
  }
  variance /= static_cast<double>(latents.size() * 128);
  CHECK(fx.pipeline.predictor.loss_history.back() < variance);
}

TEST_CASE("membership prediction is a deterministic simplex") {
  const Fixture& fx = fixture();
  const auto& f = fx.artifacts.features[0];
  const auto& x_h = fx.artifacts.latents[0].x_h;
  auto ti = pipeline_tree_embedding(fx.pipeline, f);
  auto p1 = predict_membership(fx.pipeline, x_h, f.sentiment, ti);
  auto p2 = predict_membership(fx.pipeline, x_h, f.sentiment, ti);
  REQUIRE(p1.size() == 2);
  CHECK(p1 == p2);
  double sum = 0.0;
  for (double v : p1) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(predict_membership(fx.pipeline, std::vector<double>(7, 0.0), f.sentiment, ti),
                  std::invalid_argument);
  CHECK_THROWS_AS(predict_membership(fx.pipeline, x_h, std::vector<double>(3, 0.0), ti),
                  std::invalid_argument);
}

TEST_CASE("future latent matches an independent re-derivation") {
  const Fixture& fx = fixture();
  const PipelineModel& p = fx.pipeline;
  const auto& x_h = fx.artifacts.latents[1].x_h;
  const auto& f = fx.artifacts.features[1];
  auto ti = pipeline_tree_embedding(p, f);
  auto p_star = predict_membership(p, x_h, f.sentiment, ti);
  auto got = predict_future_latent(p, x_h, p_star);
  REQUIRE(got.size() == 128);

  // Definitional recomputation with bare loops.
  std::vector<double> x_c(160, 0.0);
  for (std::size_t c = 0; c < p.clustering.j; ++c) {
    for (std::size_t k = 0; k < 160; ++k) x_c[k] += p_star[c] * p.clustering.means[c].data[k];
  }
  std::vector<double> x_d(32, 0.0);
  for (std::size_t o = 0; o < 32; ++o) {
    double acc = p.predictor.d_b.data[o];
    for (std::size_t i = 0; i < 32; ++i) {
      acc += (x_h[i] - x_c[i]) * p.predictor.d_w.at(i, o);
    }
    x_d[o] = acc;
  }
  std::vector<double> x_hc(192);
  for (std::size_t i = 0; i < 32; ++i) x_hc[i] = x_h[i];
  for (std::size_t i = 0; i < 32; ++i) x_hc[32 + i] = x_d[i];
  for (std::size_t i = 0; i < 128; ++i) x_hc[64 + i] = x_c[32 + i];
  std::vector<double> hidden(192, 0.0);
  for (std::size_t o = 0; o < 192; ++o) {
    double acc = p.predictor.p_b1.data[o];
    for (std::size_t i = 0; i < 192; ++i) acc += x_hc[i] * p.predictor.p_w1.at(i, o);
    hidden[o] = std::max(acc, 0.0);
  }
  for (std::size_t o = 0; o < 128; ++o) {
    double acc = p.predictor.p_b2.data[o];
    for (std::size_t i = 0; i < 192; ++i) acc += hidden[i] * p.predictor.p_w2.at(i, o);
    CHECK(got[o] == doctest::Approx(acc).epsilon(1e-12));
  }

  CHECK_THROWS_AS(predict_future_latent(p, std::vector<double>(5, 0.0), p_star),
                  std::invalid_argument);
  std::vector<double> bad = p_star;
  bad[0] += 0.5;
  CHECK_THROWS_AS(predict_future_latent(p, x_h, bad), std::invalid_argument);
}

TEST_CASE("zero latent difference reduces the transform to its bias") {
  const Fixture& fx = fixture();
  PipelineModel p = fx.pipeline;
  // Collapse to one cluster whose centre's history half equals a chosen X_h:
  // then X_s = X_h - X_h^c = 0 and X_d is exactly the FP_d bias.
  std::vector<double> x_h(32, 0.5);
  p.clustering.j = 1;
  p.clustering.weights = {1.0};
  Tensor centre = Tensor::zeros({160});
  for (std::size_t i = 0; i < 32; ++i) centre.data[i] = x_h[i];
  p.clustering.means = {centre};
  for (std::size_t i = 0; i < p.predictor.d_b.data.size(); ++i) {
    p.predictor.d_b.data[i] = 0.25 * static_cast<double>(i);
  }
  // Identity-like probe: read X_d back out through FP_p's first layer.
  p.predictor.p_w1 = Tensor::zeros({192, 192});
  p.predictor.p_b1 = Tensor::zeros({192});
  for (std::size_t i = 0; i < 32; ++i) p.predictor.p_w1.at(32 + i, i) = 1.0;
  p.predictor.p_w2 = Tensor::zeros({192, 128});
  for (std::size_t i = 0; i < 32; ++i) p.predictor.p_w2.at(i, i) = 1.0;
  p.predictor.p_b2 = Tensor::zeros({128});
  auto out = predict_future_latent(p, x_h, {1.0});
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(out[i] == doctest::Approx(std::max(0.25 * static_cast<double>(i), 0.0)).epsilon(1e-12));
  }
  for (std::size_t i = 32; i < 128; ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("forecast has the contracted length and bounds") {
  const Fixture& fx = fixture();
  const auto& p = fx.pipeline;
  ForecastResult r =
      forecast_profile(p, fx.corpus.threads[0], fx.scorer, fx.embedder, fx.lexicon);
  CHECK(r.thread_id == fx.corpus.threads[0].root.id);
  CHECK(r.forecast.size() == p.config.forecast_len());
  CHECK(r.decoded.size() == p.config.canvas());
  for (double v : r.forecast) {
    CHECK(v >= 0.0);
    CHECK(v <= static_cast<double>(p.config.delta));
  }

  ConversationThread stub = fc::history_prefix(fx.corpus.threads[0], 12);
  CHECK_THROWS_WITH_AS(forecast_profile(p, stub, fx.scorer, fx.embedder, fx.lexicon),
                       doctest::Contains("at least 25"), DataError);
}

TEST_CASE("retraining with the same seed reproduces forecasts exactly") {
  const Fixture& fx = fixture();
  PipelineModel again = train_pipeline(fx.corpus.threads, small_config(), fx.scorer, fx.embedder,
                                       fx.lexicon);
  ForecastResult a =
      forecast_profile(fx.pipeline, fx.corpus.threads[3], fx.scorer, fx.embedder, fx.lexicon);
  ForecastResult b =
      forecast_profile(again, fx.corpus.threads[3], fx.scorer, fx.embedder, fx.lexicon);
  CHECK(a.forecast == b.forecast);
  CHECK(a.membership == b.membership);
}

TEST_CASE("pipeline rejects unusably short corpora") {
  const Fixture& fx = fixture();
  std::vector<ConversationThread> shorts;
  for (int i = 0; i < 3; ++i) {
    shorts.push_back(fc::history_prefix(fx.corpus.threads[static_cast<std::size_t>(i)], 20));
  }
  CHECK_THROWS_AS(train_pipeline(shorts, small_config(), fx.scorer, fx.embedder, fx.lexicon),
                  TrainingError);
}
