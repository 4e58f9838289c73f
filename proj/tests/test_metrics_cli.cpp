#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "hif/checkpoint.hpp"
#include "hif/cli.hpp"
#include "hif/config.hpp"
#include "hif/eval.hpp"
#include "hif/metrics.hpp"
#include "hif/svg.hpp"
#include "hif/sweep.hpp"
#include "hif/synth.hpp"

using namespace hif;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "hif_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string small_config_text() {
  return "delta=10\nw=0.6\nt_h=25\nt_f=35\nn=60\nj=2\nlr=0.001\nsplit=0.8\n"
         "ae_epochs=25\nnode_epochs=2\nprior_epochs=6\npredictor_epochs=12\n"
         "node_sample_cap=32\nvocab=256\n";
}

Corpus tiny_corpus(std::uint64_t seed) {
  SyntheticConfig sc;
  auto all = SyntheticConfig::default_archetypes();
  sc.archetypes = {all[0], all[3]};  // rising and flat
  sc.threads_per_archetype = 7;
  sc.replies_per_thread = 60;
  sc.seed = seed;
  return generate_synthetic(sc);
}

PipelineConfig tiny_pipeline_config() {
  std::istringstream in(small_config_text());
  PipelineConfig cfg = parse_config(in);
  cfg.seed = 5150;
  return cfg;
}

}  // namespace

TEST_CASE("metric identities and hand-computed examples") {
  std::vector<double> a = {1.0, 2.0, 3.0};
  CHECK(*pcc(a, a) == doctest::Approx(1.0));
  CHECK(rmse(a, a) == 0.0);
  CHECK(mfe(a, a) == 0.0);

  std::vector<double> rev = {3.0, 2.0, 1.0};
  CHECK(*pcc(a, rev) == doctest::Approx(-1.0));

  std::vector<double> flat = {1.0, 1.0, 1.0};
  CHECK_FALSE(pcc(a, flat).has_value());
  CHECK(rmse(a, flat) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(mfe(a, flat) == doctest::Approx(1.0));

  CHECK_THROWS_AS(pcc(a, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(rmse({}, {}), std::invalid_argument);
}

TEST_CASE("metrics match a definitional oracle on random pairs") {
  Rng rng(314);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 2 + rng.index(30);
    std::vector<double> a(len), b(len);
    for (auto& v : a) v = rng.normal() * 3.0;
    for (auto& v : b) v = rng.normal() * 3.0;

    const double n = static_cast<double>(len);
    double ma = 0.0, mb = 0.0, se = 0.0, me = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      ma += a[i] / n;
      mb += b[i] / n;
      se += (a[i] - b[i]) * (a[i] - b[i]) / n;
      me += (a[i] - b[i]) / n;
    }
    double num = 0.0, da2 = 0.0, db2 = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      num += (a[i] - ma) * (b[i] - mb);
      da2 += (a[i] - ma) * (a[i] - ma);
      db2 += (b[i] - mb) * (b[i] - mb);
    }
    CHECK(std::fabs(rmse(a, b) - std::sqrt(se)) < 1e-12);
    CHECK(std::fabs(mfe(a, b) - std::fabs(me)) < 1e-12);
    auto p = pcc(a, b);
    REQUIRE(p.has_value());
    CHECK(std::fabs(*p - num / std::sqrt(da2 * db2)) < 1e-12);

    CHECK(rmse(a, b) == rmse(b, a));
    CHECK(mfe(a, b) == mfe(b, a));
    CHECK(*pcc(a, b) == doctest::Approx(*pcc(b, a)).epsilon(1e-14));
  }
}

TEST_CASE("baseline forecasts") {
  auto p = persistence_forecast({1.0, 2.0, 5.0}, 4);
  CHECK(p == std::vector<double>{5.0, 5.0, 5.0, 5.0});
  CHECK_THROWS_AS(persistence_forecast({}, 3), std::invalid_argument);

  auto m = mean_profile_forecast({{2.0, 4.0}, {4.0}}, 3);
  CHECK(m[0] == doctest::Approx(3.0));
  CHECK(m[1] == doctest::Approx(4.0));
  CHECK(m[2] == 0.0);
}

TEST_CASE("report csv round trip is exact") {
  ForecastReport rep;
  ForecastRow r1{"alpha", 0.123456789012345678, 1.0 / 3.0, 0.1, 35};
  ForecastRow r2{"beta", std::nullopt, std::sqrt(2.0), 1e-17, 12};
  rep = aggregate_rows({r1, r2});
  const std::string csv = report_to_csv(rep);
  CHECK(csv.rfind("thread_id,pcc,rmse,mfe,true_len\n", 0) == 0);
  ForecastReport back = report_from_csv(csv);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].pcc == rep.rows[0].pcc);
  CHECK(back.rows[0].rmse == rep.rows[0].rmse);
  CHECK(back.rows[1].mfe == rep.rows[1].mfe);
  CHECK_FALSE(back.rows[1].pcc.has_value());
  CHECK(back.mean_rmse == rep.mean_rmse);
  CHECK(back.pcc_count == 1);
  CHECK_THROWS_AS(report_from_csv("bogus\n"), DataError);
}

TEST_CASE("config parsing") {
  std::istringstream in("# comment\ndelta=5\nw=0.45\nt_h=15\nt_f=285\nn=300\nj=4\nlr=0.01\n"
                        "split=0.75\n");
  PipelineConfig cfg = parse_config(in);
  CHECK(cfg.delta == 5);
  CHECK(cfg.w == 0.45);
  CHECK(cfg.t_h == 15);
  CHECK(cfg.j == 4);
  CHECK(cfg.split == 0.75);

  std::istringstream bad1("delta=ten\n");
  CHECK_THROWS_AS(parse_config(bad1), ConfigError);
  std::istringstream bad2("window=10\n");
  CHECK_THROWS_AS(parse_config(bad2), ConfigError);
  std::istringstream bad3("delta=10 w=0.6\n");
  CHECK_THROWS_AS(parse_config(bad3), ConfigError);

  PipelineConfig defaults;
  std::istringstream roundtrip(config_to_string(defaults));
  PipelineConfig again = parse_config(roundtrip);
  CHECK(again.delta == defaults.delta);
  CHECK(again.t_f == defaults.t_f);
}

TEST_CASE("svg chart emits polylines for each series") {
  std::string svg = line_chart_svg("demo", {{"one", {0.0, 1.0, 0.5}}, {"two", {1.0, 0.0}}});
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("demo") != std::string::npos);
  CHECK(svg.find("one") != std::string::npos);
  size_t count = 0;
  for (size_t pos = svg.find("<polyline"); pos != std::string::npos;
       pos = svg.find("<polyline", pos + 1)) {
    ++count;
  }
  CHECK(count == 2);
  CHECK_THROWS_AS(line_chart_svg("x", {}), DataError);
}

TEST_CASE("checkpoint round trip reproduces forecasts bit for bit") {
  Corpus corpus = tiny_corpus(11);
  HateLexicon lex = synthetic_lexicon();
  ReferenceScorer scorer(lex);
  ReferenceEmbedder embedder(16, 7);
  PipelineModel p = train_pipeline(corpus.threads, tiny_pipeline_config(), scorer, embedder, lex);

  const std::string path = (tmp_dir() / "round_trip.ckpt").string();
  save_checkpoint(path, p);
  PipelineModel q = load_checkpoint(path);
  CHECK(q.config.delta == p.config.delta);
  CHECK(q.config.j == p.config.j);
  CHECK(q.predictor_ready);
  CHECK(q.autoencoder.loss_history == p.autoencoder.loss_history);
  CHECK(q.clustering.weights == p.clustering.weights);

  ForecastResult a = forecast_profile(p, corpus.threads[2], scorer, embedder, lex);
  ForecastResult b = forecast_profile(q, corpus.threads[2], scorer, embedder, lex);
  CHECK(a.forecast == b.forecast);
  CHECK(a.membership == b.membership);

  CHECK_THROWS_AS(load_checkpoint((tmp_dir() / "missing.ckpt").string()), DataError);
  const std::string junk = (tmp_dir() / "junk.ckpt").string();
  write_text_file(junk, "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(junk), DataError);
}

TEST_CASE("evaluate produces one row per eligible thread") {
  Corpus corpus = tiny_corpus(13);
  HateLexicon lex = synthetic_lexicon();
  ReferenceScorer scorer(lex);
  ReferenceEmbedder embedder(16, 7);
  PipelineModel p = train_pipeline(corpus.threads, tiny_pipeline_config(), scorer, embedder, lex);

  ForecastReport rep = evaluate(p, corpus.threads, scorer, embedder, lex);
  CHECK(rep.rows.size() == corpus.threads.size());
  for (const auto& r : rep.rows) CHECK(r.true_len == 35);

  // Single-thread aggregation is the thread itself.
  ForecastReport one = evaluate(p, {corpus.threads[0]}, scorer, embedder, lex);
  REQUIRE(one.rows.size() == 1);
  CHECK(one.mean_rmse == one.rows[0].rmse);
  if (one.rows[0].pcc.has_value()) CHECK(*one.mean_pcc == *one.rows[0].pcc);

  // Overfit sanity: the trained model beats an untrained one on its own data.
  PipelineConfig cfg = tiny_pipeline_config();
  cfg.ae_epochs = 1;
  cfg.prior_epochs = 1;
  cfg.predictor_epochs = 1;
  PipelineModel untrained = train_pipeline(corpus.threads, cfg, scorer, embedder, lex);
  ForecastReport rep0 = evaluate(untrained, corpus.threads, scorer, embedder, lex);
  CHECK(rep.mean_rmse < rep0.mean_rmse);

  CHECK_THROWS_AS(evaluate(p, {}, scorer, embedder, lex), DataError);
}

TEST_CASE("sweep counting, validation, and csv round trip") {
  Corpus corpus = tiny_corpus(17);
  HateLexicon lex = synthetic_lexicon();
  ReferenceEmbedder embedder(16, 7);

  SweepSpec bad;
  bad.param = "delta";
  bad.values = {100.0};  // >= n
  bad.seeds = {1};
  bad.base = tiny_pipeline_config();
  CHECK_THROWS_AS(run_sweep(bad, corpus, embedder, lex), ConfigError);
  bad.param = "nope";
  bad.values = {1.0};
  CHECK_THROWS_AS(run_sweep(bad, corpus, embedder, lex), ConfigError);

  SweepSpec spec;
  spec.param = "j";
  spec.values = {2.0, 3.0};
  spec.seeds = {21};
  spec.base = tiny_pipeline_config();
  auto rows = run_sweep(spec, corpus, embedder, lex);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].param == "j");
  CHECK(rows[0].value == 2.0);
  CHECK(rows[1].value == 3.0);
  CHECK(rows[0].seed == 21);

  const std::string csv = sweep_to_csv(rows);
  auto back = sweep_from_csv(csv);
  REQUIRE(back.size() == rows.size());
  CHECK(back[0].rmse == rows[0].rmse);
  CHECK(back[1].pcc == rows[1].pcc);
}

TEST_CASE("cli end to end: synth, ingest, train, forecast, evaluate, report") {
  const fs::path dir = tmp_dir();
  const std::string corpus_path = (dir / "corpus.jsonl").string();
  const std::string config_path = (dir / "config.txt").string();
  const std::string ckpt_path = (dir / "model.ckpt").string();
  write_text_file(config_path, small_config_text());

  std::ostringstream out, err;
  int rc = run_cli({"--seed", "42", "synth", "--out", corpus_path, "--threads-per-archetype",
                    "3", "--replies-per-thread", "60"},
                   out, err);
  CHECK(rc == 0);
  CHECK(fs::exists(corpus_path));
  CHECK(fs::exists(corpus_path + ".truth.csv"));

  // Same seed, same bytes.
  const std::string corpus2 = (dir / "corpus2.jsonl").string();
  rc = run_cli({"--seed", "42", "synth", "--out", corpus2, "--threads-per-archetype", "3",
                "--replies-per-thread", "60"},
               out, err);
  CHECK(rc == 0);
  CHECK(read_text_file(corpus_path) == read_text_file(corpus2));

  const std::string cache_path = (dir / "profiles.csv").string();
  rc = run_cli({"--config", config_path, "ingest", "--input", corpus_path, "--out", cache_path},
               out, err);
  CHECK(rc == 0);
  CHECK(read_text_file(cache_path).rfind("thread_id,windows\n", 0) == 0);

  rc = run_cli({"--seed", "42", "--config", config_path, "--checkpoint", ckpt_path, "train",
                "--input", corpus_path},
               out, err);
  CHECK(rc == 0);
  CHECK(fs::exists(ckpt_path));

  Corpus corpus = parse_corpus(corpus_path);
  std::ostringstream fc_out;
  rc = run_cli({"--seed", "42", "--checkpoint", ckpt_path, "forecast", "--input", corpus_path,
                "--thread", corpus.threads[0].root.id},
               fc_out, err);
  CHECK(rc == 0);
  std::size_t commas = 0;
  for (char c : fc_out.str()) commas += c == ',' ? 1 : 0;
  CHECK(commas == 35 - 1);  // n - t_h values under the test config

  const std::string report_path = (dir / "report.csv").string();
  rc = run_cli({"--seed", "42", "--checkpoint", ckpt_path, "evaluate", "--input", corpus_path,
                "--out", report_path},
               out, err);
  CHECK(rc == 0);
  ForecastReport rep = report_from_csv(read_text_file(report_path));
  CHECK(rep.rows.size() == 12);  // 4 archetypes x 3 threads

  const std::string svg_path = (dir / "report.svg").string();
  rc = run_cli({"report", "--input", report_path, "--out", svg_path}, out, err);
  CHECK(rc == 0);
  CHECK(read_text_file(svg_path).find("<svg") != std::string::npos);
}

TEST_CASE("cli exit codes") {
  std::ostringstream out, err;
  CHECK(run_cli({"evaluate", "--input", "x.jsonl"}, out, err) == 1);  // missing --checkpoint
  CHECK(run_cli({"--bogus-flag"}, out, err) == 1);
  CHECK(run_cli({"trainx"}, out, err) == 1);
  CHECK(run_cli({"forecast", "--input", "nope.jsonl", "--thread", "t"}, out, err) == 1);
  CHECK(run_cli({"--checkpoint", "/nonexistent/x.ckpt", "forecast", "--input", "nope.jsonl",
                 "--thread", "t"},
                out, err) == 2);
  CHECK(run_cli({"--config", "/nonexistent/cfg", "synth", "--out", "/tmp/x.jsonl"}, out, err) ==
        1);
}
