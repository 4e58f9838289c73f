#pragma once

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hif/checkpoint.hpp"
#include "hif/config.hpp"
#include "hif/errors.hpp"
#include "hif/eval.hpp"
#include "hif/forecaster.hpp"
#include "hif/intensity.hpp"
#include "hif/svg.hpp"
#include "hif/sweep.hpp"
#include "hif/synth.hpp"
#include "hif/threadstore.hpp"

namespace hif {

namespace cli {

inline HateLexicon lexicon_from_option(const std::string& path, std::ostream& err) {
  if (path.empty()) return synthetic_lexicon();
  return HateLexicon::load(path, &err);
}

inline Corpus corpus_from_file(const std::string& path) {
  Corpus c = parse_corpus(path);
  const std::string truth_path = path + ".truth.csv";
  if (std::ifstream probe(truth_path); probe) c.truth = load_truth(truth_path);
  return c;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

}  // namespace cli

/// Whole command surface behind one callable so tests can drive it directly.
/// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
/// 3 training failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"hate-intensity forecasting over conversation threads"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  std::string config_path, checkpoint_path, lexicon_path;
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--checkpoint", checkpoint_path, "pipeline checkpoint path");
  app.add_option("--lexicon", lexicon_path, "hate lexicon TSV (default: built-in synthetic)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_out;
  std::size_t synth_tpa = 50, synth_replies = 300;
  synth->add_option("--out", synth_out, "output corpus path (JSONL)")->required();
  synth->add_option("--threads-per-archetype", synth_tpa, "threads per archetype");
  synth->add_option("--replies-per-thread", synth_replies, "replies per thread");

  auto* ingest = app.add_subcommand("ingest", "validate a corpus and cache its profiles");
  std::string ingest_in, ingest_out;
  ingest->add_option("--input", ingest_in, "corpus path")->required();
  ingest->add_option("--out", ingest_out, "profile cache CSV path")->required();

  auto* train = app.add_subcommand("train", "train the full pipeline");
  std::string train_in;
  train->add_option("--input", train_in, "training corpus path")->required();

  auto* forecast = app.add_subcommand("forecast", "forecast one thread");
  std::string fc_in, fc_thread;
  forecast->add_option("--input", fc_in, "corpus path")->required();
  forecast->add_option("--thread", fc_thread, "thread id (default: read one id from stdin)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score forecasts against observed futures");
  std::string eval_in, eval_out;
  evaluate_cmd->add_option("--input", eval_in, "test corpus path")->required();
  evaluate_cmd->add_option("--out", eval_out, "report CSV path (default: stdout)");

  auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep");
  std::string sweep_in, sweep_param, sweep_values, sweep_seeds, sweep_out;
  sweep_cmd->add_option("--input", sweep_in, "corpus path")->required();
  sweep_cmd->add_option("--param", sweep_param, "delta | t_h | j | w | scorer")->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated seeds (default: --seed)");
  sweep_cmd->add_option("--out", sweep_out, "sweep CSV path (default: stdout)");

  auto* report = app.add_subcommand("report", "render a CSV report as an SVG chart");
  std::string report_in, report_out;
  report->add_option("--input", report_in, "report or sweep CSV path")->required();
  report->add_option("--out", report_out, "SVG output path")->required();

  std::vector<const char*> argv;
  argv.push_back("hif");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << e.what() << '\n' << app.help();
    return 1;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    cfg.seed = seed;

    if (synth->parsed()) {
      SyntheticConfig sc;
      sc.archetypes = SyntheticConfig::default_archetypes();
      sc.threads_per_archetype = synth_tpa;
      sc.replies_per_thread = synth_replies;
      sc.w = cfg.w;
      sc.seed = seed;
      Corpus corpus = generate_synthetic(sc);
      std::ofstream cf(synth_out);
      if (!cf) throw DataError("cannot open for writing: " + synth_out);
      serialize_corpus(corpus, cf);
      save_truth(corpus, synth_out + ".truth.csv");
      out << "wrote " << corpus.size() << " threads to " << synth_out << '\n';
      return 0;
    }

    if (ingest->parsed()) {
      Corpus corpus = cli::corpus_from_file(ingest_in);
      HateLexicon lex = cli::lexicon_from_option(lexicon_path, err);
      ReferenceScorer scorer(lex);
      std::ostringstream cache;
      cache << "thread_id,windows\n";
      for (const auto& th : corpus.threads) {
        IntensityProfile p = thread_profile(th, cfg.delta, cfg.w, scorer, lex);
        cache << p.thread_id << ',';
        for (std::size_t k = 0; k < p.windows.size(); ++k) {
          if (k > 0) cache << ';';
          cache << detail::format_double(p.windows[k]);
        }
        cache << '\n';
      }
      write_text_file(ingest_out, cache.str());
      out << "cached " << corpus.size() << " profiles to " << ingest_out << '\n';
      return 0;
    }

    if (train->parsed()) {
      if (checkpoint_path.empty()) throw ConfigError("train requires --checkpoint");
      Corpus corpus = cli::corpus_from_file(train_in);
      HateLexicon lex = cli::lexicon_from_option(lexicon_path, err);
      ReferenceScorer scorer(lex);
      ReferenceEmbedder embedder(16, seed);
      PipelineModel p = train_pipeline(corpus.threads, cfg, scorer, embedder, lex);
      save_checkpoint(checkpoint_path, p);
      out << "autoencoder loss " << p.autoencoder.loss_history.back() << ", prior loss "
          << p.prior.loss_history.back() << ", predictor loss "
          << p.predictor.loss_history.back() << '\n';
      out << "checkpoint written to " << checkpoint_path << '\n';
      return 0;
    }

    if (forecast->parsed()) {
      if (checkpoint_path.empty()) throw ConfigError("forecast requires --checkpoint");
      PipelineModel p = load_checkpoint(checkpoint_path);
      Corpus corpus = cli::corpus_from_file(fc_in);
      std::string id = fc_thread;
      if (id.empty() && !(std::cin >> id)) throw DataError("forecast: no thread id on stdin");
      const ConversationThread* target = nullptr;
      for (const auto& th : corpus.threads) {
        if (th.root.id == id) target = &th;
      }
      if (target == nullptr) throw DataError("forecast: thread not found: " + id);
      HateLexicon lex = cli::lexicon_from_option(lexicon_path, err);
      ReferenceScorer scorer(lex);
      ReferenceEmbedder embedder(16, seed);
      ForecastResult r = forecast_profile(p, *target, scorer, embedder, lex);
      for (std::size_t k = 0; k < r.forecast.size(); ++k) {
        if (k > 0) out << ',';
        out << detail::format_double(r.forecast[k]);
      }
      out << '\n';
      return 0;
    }

    if (evaluate_cmd->parsed()) {
      if (checkpoint_path.empty()) throw ConfigError("evaluate requires --checkpoint");
      PipelineModel p = load_checkpoint(checkpoint_path);
      Corpus corpus = cli::corpus_from_file(eval_in);
      HateLexicon lex = cli::lexicon_from_option(lexicon_path, err);
      ReferenceScorer scorer(lex);
      ReferenceEmbedder embedder(16, seed);
      ForecastReport rep = evaluate(p, corpus.threads, scorer, embedder, lex);
      const std::string csv = report_to_csv(rep);
      if (eval_out.empty()) {
        out << csv;
      } else {
        write_text_file(eval_out, csv);
        out << "report written to " << eval_out << '\n';
      }
      return 0;
    }

    if (sweep_cmd->parsed()) {
      Corpus corpus = cli::corpus_from_file(sweep_in);
      HateLexicon lex = cli::lexicon_from_option(lexicon_path, err);
      ReferenceEmbedder embedder(16, seed);
      SweepSpec spec;
      spec.param = sweep_param;
      spec.values = cli::parse_double_list(sweep_values);
      spec.seeds = sweep_seeds.empty() ? std::vector<std::uint64_t>{seed}
                                       : cli::parse_seed_list(sweep_seeds);
      spec.base = cfg;
      std::vector<SweepRow> rows = run_sweep(spec, corpus, embedder, lex);
      const std::string csv = sweep_to_csv(rows);
      if (sweep_out.empty()) {
        out << csv;
      } else {
        write_text_file(sweep_out, csv);
        out << "sweep written to " << sweep_out << '\n';
      }
      return 0;
    }

    if (report->parsed()) {
      const std::string csv = read_text_file(report_in);
      std::vector<ChartSeries> series;
      std::string title;
      if (csv.rfind("param,value,seed,", 0) == 0) {
        std::vector<SweepRow> rows = sweep_from_csv(csv);
        title = rows.empty() ? "sweep" : "sweep over " + rows[0].param;
        ChartSeries rm{"rmse", {}}, pc{"pcc", {}};
        for (const auto& r : rows) {
          rm.ys.push_back(r.rmse);
          pc.ys.push_back(r.pcc.value_or(0.0));
        }
        series = {rm, pc};
      } else {
        ForecastReport rep = report_from_csv(csv);
        title = "per-thread forecast metrics";
        ChartSeries rm{"rmse", {}}, pc{"pcc", {}}, mf{"mfe", {}};
        for (const auto& r : rep.rows) {
          rm.ys.push_back(r.rmse);
          pc.ys.push_back(r.pcc.value_or(0.0));
          mf.ys.push_back(r.mfe);
        }
        series = {rm, pc, mf};
      }
      write_text_file(report_out, line_chart_svg(title, series));
      out << "chart written to " << report_out << '\n';
      return 0;
    }

    err << "no subcommand\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace hif
