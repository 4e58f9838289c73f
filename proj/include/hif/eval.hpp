#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hif/errors.hpp"
#include "hif/forecaster.hpp"
#include "hif/metrics.hpp"
#include "hif/threadstore.hpp"

namespace hif {

struct ForecastRow {
  std::string thread_id;
  std::optional<double> pcc;
  double rmse = 0.0;
  double mfe = 0.0;
  std::size_t true_len = 0;  // future windows actually compared
};

/// Per-thread metrics over future windows only, plus macro-averaged corpus
/// means. PCC is averaged over the threads where it exists; pcc_count says
/// how many that was.
struct ForecastReport {
  std::vector<ForecastRow> rows;
  std::optional<double> mean_pcc;
  std::size_t pcc_count = 0;
  double mean_rmse = 0.0;
  double mean_mfe = 0.0;
};

/// Observed future windows of a thread: everything past the history split,
/// truncated to the profile's true length.
inline std::vector<double> actual_future_windows(const ConversationThread& thread,
                                                 const PipelineConfig& cfg,
                                                 const HateScorer& scorer,
                                                 const HateLexicon& lexicon) {
  std::vector<double> scores = reply_scores(thread, cfg.w, scorer, lexicon);
  if (scores.size() > cfg.n) scores.resize(cfg.n);
  IntensityProfile prof = windowed_profile(scores, cfg.delta);
  if (prof.windows.size() <= cfg.hist_len()) return {};
  return {prof.windows.begin() + static_cast<std::ptrdiff_t>(cfg.hist_len()),
          prof.windows.end()};
}

inline ForecastReport aggregate_rows(std::vector<ForecastRow> rows) {
  ForecastReport report;
  report.rows = std::move(rows);
  double pcc_sum = 0.0;
  for (const auto& r : report.rows) {
    report.mean_rmse += r.rmse;
    report.mean_mfe += r.mfe;
    if (r.pcc.has_value()) {
      pcc_sum += *r.pcc;
      ++report.pcc_count;
    }
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean_rmse /= n;
  report.mean_mfe /= n;
  if (report.pcc_count > 0) report.mean_pcc = pcc_sum / static_cast<double>(report.pcc_count);
  return report;
}

/// Forecasts every eligible thread and scores it against its own observed
/// future windows.
inline ForecastReport evaluate(const PipelineModel& pipeline,
                               const std::vector<ConversationThread>& threads,
                               const HateScorer& scorer, const TextEmbedder& embedder,
                               const HateLexicon& lexicon) {
  std::vector<ForecastRow> rows;
  for (const auto& th : threads) {
    if (th.length() <= pipeline.config.t_h) continue;
    std::vector<double> actual = actual_future_windows(th, pipeline.config, scorer, lexicon);
    if (actual.empty()) continue;
    ForecastResult fr = forecast_profile(pipeline, th, scorer, embedder, lexicon);
    std::vector<double> pred(fr.forecast.begin(),
                             fr.forecast.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min(actual.size(), fr.forecast.size())));
    actual.resize(pred.size());
    ForecastRow row;
    row.thread_id = th.root.id;
    row.true_len = pred.size();
    MetricTriple m = metric_triple(pred, actual);
    row.pcc = m.pcc;
    row.rmse = m.rmse;
    row.mfe = m.mfe;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("evaluate: no eligible threads in the test set");
  return aggregate_rows(std::move(rows));
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// CSV with one row per thread plus a trailing `__mean__` aggregate row.
/// 17 significant digits, so reading the file back reproduces the values.
inline std::string report_to_csv(const ForecastReport& report) {
  std::ostringstream out;
  out << "thread_id,pcc,rmse,mfe,true_len\n";
  auto emit = [&](const std::string& id, const std::optional<double>& p, double r, double m,
                  std::size_t len) {
    out << id << ',' << (p.has_value() ? detail::format_double(*p) : "") << ','
        << detail::format_double(r) << ',' << detail::format_double(m) << ',' << len << '\n';
  };
  for (const auto& row : report.rows) emit(row.thread_id, row.pcc, row.rmse, row.mfe, row.true_len);
  emit("__mean__", report.mean_pcc, report.mean_rmse, report.mean_mfe, report.pcc_count);
  return out.str();
}

inline ForecastReport report_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "thread_id,pcc,rmse,mfe,true_len") {
    throw DataError("report csv: missing or wrong header");
  }
  std::vector<ForecastRow> rows;
  ForecastReport report;
  bool saw_mean = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, p, r, m, len;
    if (!std::getline(ls, id, ',') || !std::getline(ls, p, ',') || !std::getline(ls, r, ',') ||
        !std::getline(ls, m, ',') || !std::getline(ls, len)) {
      throw DataError("report csv: malformed row: " + line);
    }
    if (id == "__mean__") {
      report.mean_pcc = p.empty() ? std::nullopt : std::optional<double>(std::stod(p));
      report.mean_rmse = std::stod(r);
      report.mean_mfe = std::stod(m);
      report.pcc_count = static_cast<std::size_t>(std::stoull(len));
      saw_mean = true;
      continue;
    }
    ForecastRow row;
    row.thread_id = id;
    row.pcc = p.empty() ? std::nullopt : std::optional<double>(std::stod(p));
    row.rmse = std::stod(r);
    row.mfe = std::stod(m);
    row.true_len = static_cast<std::size_t>(std::stoull(len));
    rows.push_back(std::move(row));
  }
  if (!saw_mean) throw DataError("report csv: missing __mean__ row");
  report.rows = std::move(rows);
  return report;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Reference forecasts no trained model should lose to.

/// Repeats the last observed history window for the whole horizon.
inline std::vector<double> persistence_forecast(const std::vector<double>& history_windows,
                                                std::size_t horizon) {
  if (history_windows.empty()) throw std::invalid_argument("persistence: empty history");
  return std::vector<double>(horizon, history_windows.back());
}

/// Mean future profile of the training corpus, position by position.
inline std::vector<double> mean_profile_forecast(const std::vector<std::vector<double>>& futures,
                                                 std::size_t horizon) {
  if (futures.empty()) throw std::invalid_argument("mean profile: no training futures");
  std::vector<double> mean(horizon, 0.0);
  std::vector<double> count(horizon, 0.0);
  for (const auto& f : futures) {
    for (std::size_t k = 0; k < std::min(horizon, f.size()); ++k) {
      mean[k] += f[k];
      count[k] += 1.0;
    }
  }
  for (std::size_t k = 0; k < horizon; ++k) {
    if (count[k] > 0.0) mean[k] /= count[k];
  }
  return mean;
}

}  // namespace hif
