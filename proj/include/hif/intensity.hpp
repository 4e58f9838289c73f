#pragma once

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hif/errors.hpp"
#include "hif/rng.hpp"
#include "hif/threadstore.hpp"

namespace hif {

/// word -> score in [0,1]; absent words score 0.
class HateLexicon {
 public:
  void insert(const std::string& word, double score) {
    if (score < 0.0 || score > 1.0) {
      throw DataError("lexicon score out of [0,1] for word '" + word + "'");
    }
    map_[word] = score;
  }

  double lookup(const std::string& word) const {
    auto it = map_.find(word);
    return it == map_.end() ? 0.0 : it->second;
  }

  std::size_t size() const { return map_.size(); }

  /// Tab-separated "word<TAB>score" lines; duplicate words: last wins.
  static HateLexicon load(std::istream& in, std::ostream* warnings = nullptr) {
    HateLexicon lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DataError("lexicon line " + std::to_string(line_no) + ": missing tab separator");
      }
      const std::string word = line.substr(0, tab);
      double score = 0.0;
      try {
        score = std::stod(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw DataError("lexicon line " + std::to_string(line_no) + ": bad score");
      }
      if (warnings && lex.map_.count(word)) {
        *warnings << "warning: duplicate lexicon word '" << word << "' at line " << line_no
                  << ", last wins\n";
      }
      lex.insert(word, score);
    }
    return lex;
  }

  static HateLexicon load(const std::string& path, std::ostream* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon file: " + path);
    return load(in, warnings);
  }

  void save(std::ostream& out) const {
    out.precision(17);
    for (const auto& [w, s] : map_) out << w << "\t" << s << "\n";
  }

 private:
  std::map<std::string, double> map_;
};

/// Mean of per-token lexicon scores over all tokens; empty text scores 0.
inline double lexicon_score(const std::vector<std::string>& tokens, const HateLexicon& lexicon) {
  if (tokens.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : tokens) sum += lexicon.lookup(t);
  return sum / static_cast<double>(tokens.size());
}

/// Pure classifier stand-in: probability that a text is hateful, in [0,1].
class HateScorer {
 public:
  virtual ~HateScorer() = default;
  virtual const std::string& name() const = 0;
  virtual double score(const std::vector<std::string>& tokens) const = 0;
};

/// Pure fixed-dimension text embedder.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual const std::string& name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(const std::vector<std::string>& tokens) const = 0;
};

/// Normalized logistic calibration mapping [0,1] onto [0,1] with g(0)=0,
/// g(1)=1, strictly increasing; gain fixed at 4.
inline double scorer_calibration(double x) {
  constexpr double a = 4.0;
  const double lo = 1.0 / (1.0 + std::exp(a / 2.0));
  const double hi = 1.0 / (1.0 + std::exp(-a / 2.0));
  const double y = 1.0 / (1.0 + std::exp(-a * (x - 0.5)));
  return (y - lo) / (hi - lo);
}

inline double scorer_calibration_inverse(double y) {
  constexpr double a = 4.0;
  const double lo = 1.0 / (1.0 + std::exp(a / 2.0));
  const double hi = 1.0 / (1.0 + std::exp(-a / 2.0));
  const double s = lo + y * (hi - lo);
  return 0.5 + std::log(s / (1.0 - s)) / a;
}

/// Deterministic reference scorer: calibrated lexicon mean, clamped to [0,1].
class ReferenceScorer : public HateScorer {
 public:
  explicit ReferenceScorer(HateLexicon lexicon)
      : name_("reference"), lexicon_(std::move(lexicon)) {}

  const std::string& name() const override { return name_; }

  double score(const std::vector<std::string>& tokens) const override {
    if (tokens.empty()) return 0.0;
    const double m = lexicon_score(tokens, lexicon_);
    return std::min(1.0, std::max(0.0, scorer_calibration(m)));
  }

 private:
  std::string name_;
  HateLexicon lexicon_;
};

inline std::shared_ptr<HateScorer> reference_scorer(const HateLexicon& lexicon) {
  return std::make_shared<ReferenceScorer>(lexicon);
}

/// Deterministic embedder: mean of per-token unit vectors, each drawn from a
/// stream seeded by hashing the token together with the embedder seed.
class ReferenceEmbedder : public TextEmbedder {
 public:
  ReferenceEmbedder(std::size_t dim, std::uint64_t seed) : name_("reference"), dim_(dim), seed_(seed) {
    if (dim < 2) throw ConfigError("embedder dimension must be >= 2");
  }

  const std::string& name() const override { return name_; }
  std::size_t dim() const override { return dim_; }

  std::vector<double> embed(const std::vector<std::string>& tokens) const override {
    std::vector<double> acc(dim_, 0.0);
    if (tokens.empty()) return acc;
    for (const auto& tok : tokens) {
      Rng rng(Rng::fnv1a(tok) ^ seed_);
      std::vector<double> v(dim_);
      double norm = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) norm = 1.0;
      for (std::size_t i = 0; i < dim_; ++i) acc[i] += v[i] / norm;
    }
    for (auto& x : acc) x /= static_cast<double>(tokens.size());
    return acc;
  }

 private:
  std::string name_;
  std::size_t dim_;
  std::uint64_t seed_;
};

inline std::shared_ptr<TextEmbedder> reference_embedder(std::size_t dim, std::uint64_t seed) {
  return std::make_shared<ReferenceEmbedder>(dim, seed);
}

/// Per-reply blended hate intensity: w*Hc + (1-w)*Hl, in [0,1].
inline double hate_intensity(const Tweet& reply, double w, const HateScorer& scorer,
                             const HateLexicon& lexicon) {
  if (w < 0.0 || w > 1.0) throw ConfigError("hate intensity weight w must lie in [0,1]");
  return w * scorer.score(reply.tokens) + (1.0 - w) * lexicon_score(reply.tokens, lexicon);
}

/// Window-summed intensity sequence of one thread.
struct IntensityProfile {
  std::string thread_id;
  std::size_t delta = 0;
  std::vector<double> windows;  // window k sums replies k..k+delta-1, k=1..q-delta
  bool empty_flag = false;      // set when q <= delta

  std::size_t length() const { return windows.size(); }
};

struct SentimentSeries {
  std::string thread_id;
  std::vector<double> windows;  // rolled cosine similarities, in [-1,1]
  bool empty_flag = false;
};

/// Window k (k = 1..q-delta) is the SUM of delta consecutive per-reply scores.
/// An averaging mode exists behind `average` but is non-default.
inline IntensityProfile windowed_profile(const std::vector<double>& per_reply_scores,
                                         std::size_t delta, bool average = false) {
  if (delta < 1) throw ConfigError("window size delta must be >= 1");
  IntensityProfile p;
  p.delta = delta;
  const std::size_t q = per_reply_scores.size();
  if (q <= delta) {
    p.empty_flag = true;
    return p;
  }
  // Direct per-window summation: bit-identical to the definitional loop.
  for (std::size_t k = 0; k + delta <= q - 1; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < delta; ++i) sum += per_reply_scores[k + i];
    p.windows.push_back(sum);
  }
  if (average) {
    for (auto& v : p.windows) v /= static_cast<double>(delta);
  }
  return p;
}

/// Per-reply intensity scores for a full thread.
inline std::vector<double> reply_scores(const ConversationThread& thread, double w,
                                        const HateScorer& scorer, const HateLexicon& lexicon) {
  std::vector<double> scores;
  scores.reserve(thread.length());
  for (const auto& r : thread.replies) scores.push_back(hate_intensity(r, w, scorer, lexicon));
  return scores;
}

inline IntensityProfile thread_profile(const ConversationThread& thread, std::size_t delta,
                                       double w, const HateScorer& scorer,
                                       const HateLexicon& lexicon, bool average = false) {
  IntensityProfile p = windowed_profile(reply_scores(thread, w, scorer, lexicon), delta, average);
  p.thread_id = thread.root.id;
  return p;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;  // zero-vector embeddings: similarity 0
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Per-reply cosine similarity to the root embedding, rolled by MEAN over the
/// same window indices as windowed_profile.
inline SentimentSeries sentiment_series(const ConversationThread& thread,
                                        const TextEmbedder& embedder, std::size_t delta) {
  if (delta < 1) throw ConfigError("window size delta must be >= 1");
  SentimentSeries s;
  s.thread_id = thread.root.id;
  const std::size_t q = thread.length();
  if (q <= delta) {
    s.empty_flag = true;
    return s;
  }
  const std::vector<double> root_emb = embedder.embed(thread.root.tokens);
  std::vector<double> sims;
  sims.reserve(q);
  for (const auto& r : thread.replies) {
    sims.push_back(cosine_similarity(embedder.embed(r.tokens), root_emb));
  }
  for (std::size_t k = 0; k + delta <= q - 1; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < delta; ++i) sum += sims[k + i];
    s.windows.push_back(sum / static_cast<double>(delta));
  }
  return s;
}

}  // namespace hif
