#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hif/errors.hpp"
#include "hif/intensity.hpp"
#include "hif/rng.hpp"
#include "hif/threadstore.hpp"

namespace hif {

/// Piecewise-linear per-reply intensity template over normalized position
/// [0,1]; values in [0,1].
struct ArchetypeTemplate {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (position, value), sorted

  double value_at(double pos) const {
    if (points.empty()) throw ConfigError("archetype template has no control points");
    if (pos <= points.front().first) return points.front().second;
    if (pos >= points.back().first) return points.back().second;
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (pos <= points[i].first) {
        const auto& [x0, y0] = points[i - 1];
        const auto& [x1, y1] = points[i];
        const double t = (pos - x0) / (x1 - x0);
        return y0 + t * (y1 - y0);
      }
    }
    return points.back().second;
  }
};

struct SyntheticConfig {
  std::vector<ArchetypeTemplate> archetypes;
  std::size_t threads_per_archetype = 50;
  std::size_t replies_per_thread = 300;
  double noise_sigma = 0.02;
  std::size_t tokens_per_reply = 10;
  // Reply-level volatility: a per-thread oscillation whose phase starts
  // random and drifts as a slow random walk (radians per reply). Window
  // summation over whole periods attenuates it, but the drift decorrelates
  // the phase over the thread so the future cannot be read off the history.
  double oscillation_amplitude = 0.16;
  double oscillation_period = 10.0;
  double oscillation_phase_drift = 0.12;
  // Probability that a reply answers the most recent tweet; otherwise the
  // parent is uniform over all earlier tweets.
  double recency_bias = 0.6;
  double w = 0.6;  // blend weight the reference scorer round-trip targets
  std::uint64_t seed = 0;

  static std::vector<ArchetypeTemplate> default_archetypes() {
    return {
        {"rising", {{0.0, 0.25}, {1.0, 0.80}}},
        {"falling", {{0.0, 0.80}, {1.0, 0.25}}},
        {"mid-spike", {{0.0, 0.45}, {0.35, 0.45}, {0.5, 0.85}, {0.65, 0.45}, {1.0, 0.45}}},
        {"flat", {{0.0, 0.35}, {1.0, 0.35}}},
    };
  }
};

namespace detail {

constexpr std::size_t kSyntheticLexiconSize = 1000;

inline std::string synthetic_word(std::size_t i) {
  std::string s = std::to_string(i);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return "hw" + s;
}

inline double synthetic_word_score(std::size_t i) {
  return static_cast<double>(i) / static_cast<double>(kSyntheticLexiconSize - 1);
}

inline std::size_t nearest_word_index(double score) {
  double idx = score * static_cast<double>(kSyntheticLexiconSize - 1);
  long long k = std::llround(idx);
  if (k < 0) k = 0;
  if (k >= static_cast<long long>(kSyntheticLexiconSize)) k = kSyntheticLexiconSize - 1;
  return static_cast<std::size_t>(k);
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.141592653589793);
}

/// E[clamp01(N(t, sigma))] in closed form.
inline double clamped_mean(double t, double sigma) {
  if (sigma <= 0.0) return std::min(1.0, std::max(0.0, t));
  const double a = (0.0 - t) / sigma;
  const double b = (1.0 - t) / sigma;
  return (1.0 - std_normal_cdf(b)) + t * (std_normal_cdf(b) - std_normal_cdf(a)) -
         sigma * (std_normal_pdf(b) - std_normal_pdf(a));
}

/// Solve w*g(m) + (1-w)*m = h for the lexicon mean m by bisection; the left
/// side is strictly increasing from 0 to 1.
inline double invert_blend(double h, double w) {
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double v = w * scorer_calibration(mid) + (1.0 - w) * mid;
    (v < h ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Tokens from the synthetic lexicon whose mean score approximates `mean`.
inline std::vector<std::string> tokens_for_mean(double mean, std::size_t count, Rng& rng) {
  std::vector<std::string> tokens;
  tokens.reserve(count);
  const double spread = std::min({0.15, mean, 1.0 - mean});
  // Symmetric +/- pairs keep the mean pinned up to quantization error.
  for (std::size_t i = 0; i + 1 < count; i += 2) {
    const double d = rng.uniform(0.0, spread);
    tokens.push_back(synthetic_word(nearest_word_index(mean + d)));
    tokens.push_back(synthetic_word(nearest_word_index(mean - d)));
  }
  if (tokens.size() < count) tokens.push_back(synthetic_word(nearest_word_index(mean)));
  rng.shuffle(tokens);
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += " ";
    s += tokens[i];
  }
  return s;
}

}  // namespace detail

/// The known-score lexicon the generator encodes targets through.
inline HateLexicon synthetic_lexicon() {
  HateLexicon lex;
  for (std::size_t i = 0; i < detail::kSyntheticLexiconSize; ++i) {
    lex.insert(detail::synthetic_word(i), detail::synthetic_word_score(i));
  }
  return lex;
}

/// Deterministic synthetic corpus with hidden archetype labels and per-reply
/// target scores reproducible by the reference scorer within 0.02.
inline Corpus generate_synthetic(const SyntheticConfig& config) {
  if (config.archetypes.empty()) throw ConfigError("synthetic config needs >= 1 archetype");
  if (config.noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  if (config.replies_per_thread < 1) throw ConfigError("replies per thread must be >= 1");
  if (config.tokens_per_reply < 1) throw ConfigError("tokens per reply must be >= 1");
  for (const auto& a : config.archetypes) {
    for (const auto& [p, v] : a.points) {
      if (v < 0.0 || v > 1.0) {
        throw ConfigError("archetype '" + a.name + "' template values must lie in [0,1]");
      }
      (void)p;
    }
  }

  const std::size_t n = config.replies_per_thread;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  // Feasibility: clamping must not distort the mean by more than 0.05 at any
  // template position, including the oscillation extremes.
  for (const auto& a : config.archetypes) {
    for (std::size_t i = 0; i < n; ++i) {
      const double base = a.value_at(static_cast<double>(i) / denom);
      for (double off : {-config.oscillation_amplitude, 0.0, config.oscillation_amplitude}) {
        const double t = base + off;
        if (std::fabs(detail::clamped_mean(t, config.noise_sigma) - t) > 0.05) {
          throw ConfigError("archetype '" + a.name +
                            "': clamping distorts the target mean by more than 0.05");
        }
      }
    }
  }

  Corpus corpus;
  corpus.provenance = "synthetic";
  Rng root_rng(config.seed);
  const std::size_t total = config.archetypes.size() * config.threads_per_archetype;
  for (std::size_t idx = 0; idx < total; ++idx) {
    const std::size_t arch = idx % config.archetypes.size();
    const auto& tmpl = config.archetypes[arch];
    Rng rng = root_rng.split(idx);
    double phase = rng.uniform() * 6.283185307179586;
    Rng drift_rng = rng.split("phase_drift");

    ConversationThread th;
    const std::string tid = "t" + std::to_string(idx);
    SyntheticTruth truth;
    truth.thread_id = tid;
    truth.archetype = arch;

    th.root.id = tid;
    th.root.timestamp_ms = 0;
    th.root.author_id = "u" + std::to_string(rng.index(64));
    {
      Rng token_rng = rng.split("root_tokens");
      const double m = detail::invert_blend(tmpl.value_at(0.0), config.w);
      auto toks = detail::tokens_for_mean(m, config.tokens_per_reply, token_rng);
      th.root.raw_text = detail::join_tokens(toks);
      th.root.tokens = std::move(toks);
    }

    for (std::size_t i = 0; i < n; ++i) {
      const double base = tmpl.value_at(static_cast<double>(i) / denom);
      phase += config.oscillation_phase_drift * drift_rng.normal();
      const double osc = config.oscillation_amplitude *
                         std::sin(6.283185307179586 * static_cast<double>(i) /
                                      config.oscillation_period +
                                  phase);
      double h = base + osc + config.noise_sigma * rng.normal();
      h = std::min(1.0, std::max(0.0, h));
      truth.reply_scores.push_back(h);

      Tweet r;
      r.id = tid + "_r" + std::to_string(i);
      r.timestamp_ms = static_cast<long long>(1000 * (i + 1));
      r.author_id = "u" + std::to_string(rng.index(64));
      if (i == 0) {
        r.parent_id = th.root.id;
      } else if (rng.uniform() < config.recency_bias) {
        r.parent_id = th.replies.back().id;
      } else {
        const std::size_t p = rng.index(i + 1);  // 0 = root, else reply p-1
        r.parent_id = p == 0 ? th.root.id : th.replies[p - 1].id;
      }
      Rng token_rng = rng.split("tokens");
      const double m = detail::invert_blend(h, config.w);
      auto toks = detail::tokens_for_mean(m, config.tokens_per_reply, token_rng);
      r.raw_text = detail::join_tokens(toks);
      r.tokens = std::move(toks);
      th.replies.push_back(std::move(r));
    }
    th.validate();
    corpus.threads.push_back(std::move(th));
    corpus.truth.push_back(std::move(truth));
  }
  return corpus;
}

}  // namespace hif
