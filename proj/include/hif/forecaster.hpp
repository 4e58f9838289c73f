#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hif/adam.hpp"
#include "hif/autodiff.hpp"
#include "hif/errors.hpp"
#include "hif/gmm.hpp"
#include "hif/intensity.hpp"
#include "hif/rng.hpp"
#include "hif/seqae.hpp"
#include "hif/tensor.hpp"
#include "hif/threadstore.hpp"
#include "hif/treenc.hpp"

namespace hif {

/// Hyperparameters shared by every pipeline stage. Defaults mirror the
/// standard configuration (delta=10, w=0.6, t_h=25, t_f=275, n=300, j=15,
/// lr=0.001, 80-20 split).
struct PipelineConfig {
  std::size_t delta = 10;
  double w = 0.6;
  std::size_t t_h = 25;
  std::size_t t_f = 275;
  std::size_t n = 300;
  std::size_t j = 15;
  double lr = 0.001;
  double split = 0.8;

  std::size_t vocab = 4096;
  std::size_t node_epochs = 12;
  std::size_t node_sample_cap = 256;
  std::size_t ae_epochs = 200;
  std::size_t prior_epochs = 40;
  std::size_t predictor_epochs = 60;
  double node_l2 = 1e-6;
  bool fine_tune_tree = true;
  std::uint64_t seed = 42;

  std::size_t hist_len() const { return t_h - delta; }
  std::size_t canvas() const { return n - delta; }
  std::size_t forecast_len() const { return n - t_h; }

  void validate() const {
    if (delta < 1) throw ConfigError("pipeline config: delta must be >= 1");
    if (t_h <= delta) throw ConfigError("pipeline config: t_h must exceed delta");
    if (n <= t_h) throw ConfigError("pipeline config: n must exceed t_h");
    if (t_f != n - t_h) throw ConfigError("pipeline config: t_f must equal n - t_h");
    if (w < 0.0 || w > 1.0) throw ConfigError("pipeline config: w must lie in [0,1]");
    if (j < 1) throw ConfigError("pipeline config: j must be >= 1");
    if (lr <= 0.0) throw ConfigError("pipeline config: lr must be positive");
    if (split <= 0.0 || split >= 1.0) throw ConfigError("pipeline config: split must be in (0,1)");
  }
};

/// Maps observed history (latent + sentiment + tree embedding) to soft
/// cluster memberships via one hidden layer and a softmax.
struct PriorModel {
  std::size_t input_dim = 0;
  std::size_t j = 0;
  Tensor w1, b1;  // input_dim -> 64
  Tensor w2, b2;  // 64 -> j
  std::vector<double> loss_history;

  static PriorModel init(std::size_t input_dim, std::size_t j, std::uint64_t seed) {
    if (j < 1) throw ConfigError("prior model: j must be >= 1");
    PriorModel m;
    m.input_dim = input_dim;
    m.j = j;
    Rng rng = Rng(seed).split("prior_init");
    m.w1 = Tensor::randn({input_dim, 64}, rng, std::sqrt(1.0 / static_cast<double>(input_dim)));
    m.b1 = Tensor::zeros({64});
    m.w2 = Tensor::randn({64, j}, rng, std::sqrt(1.0 / 64.0));
    m.b2 = Tensor::zeros({j});
    return m;
  }

  std::vector<Tensor*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

/// Two-stage future-latent head: a linear difference transform FP_d on
/// X_s = X_h - X_h^c, then a two-layer perceptron FP_p over the 192-dim
/// concatenation [X_h, X_d, X_f^c].
struct FuturePredictor {
  Tensor d_w, d_b;    // 32 -> 32 (linear)
  Tensor p_w1, p_b1;  // 192 -> 192
  Tensor p_w2, p_b2;  // 192 -> 128
  std::vector<double> loss_history;

  static FuturePredictor init(std::uint64_t seed) {
    FuturePredictor m;
    Rng rng = Rng(seed).split("predictor_init");
    m.d_w = Tensor::randn({32, 32}, rng, std::sqrt(1.0 / 32.0));
    m.d_b = Tensor::zeros({32});
    m.p_w1 = Tensor::randn({192, 192}, rng, std::sqrt(1.0 / 192.0));
    m.p_b1 = Tensor::zeros({192});
    m.p_w2 = Tensor::randn({192, 128}, rng, std::sqrt(1.0 / 192.0));
    m.p_b2 = Tensor::zeros({128});
    return m;
  }

  std::vector<Tensor*> parameters() { return {&d_w, &d_b, &p_w1, &p_b1, &p_w2, &p_b2}; }
};

struct PipelineModel {
  static constexpr std::uint32_t kFormatVersion = 1;

  PipelineConfig config;
  NodeEmbedderModel node_embedder;
  TreeEncoderModel tree_encoder;
  AutoencoderModel autoencoder;
  FuzzyClustering clustering;
  PriorModel prior;
  FuturePredictor predictor;

  bool node_ready = false;
  bool ae_ready = false;
  bool gmm_ready = false;
  bool prior_ready = false;
  bool predictor_ready = false;
};

/// Everything the later stages need from one training thread, computed once.
struct ThreadFeatures {
  std::string thread_id;
  std::vector<double> full_windows;     // length min(q, n) - delta
  std::vector<double> history_windows;  // first hist_len entries, zero padded
  std::size_t hist_true_len = 0;
  std::size_t full_true_len = 0;
  std::vector<double> sentiment;  // hist_len entries, zero padded
  SparseMatrix adj;               // history prefix tree, normalized
  Tensor node_features;           // [t_h + 1, 64] over the history prefix
};

namespace fc {

/// Root plus the first t_h replies: the observed part of a thread.
inline ConversationThread history_prefix(const ConversationThread& thread, std::size_t t_h) {
  ConversationThread prefix;
  prefix.root = thread.root;
  const std::size_t keep = std::min(thread.replies.size(), t_h);
  prefix.replies.assign(thread.replies.begin(),
                        thread.replies.begin() + static_cast<std::ptrdiff_t>(keep));
  return prefix;
}

inline void require_stage(bool ready, const std::string& op, const std::string& stage) {
  if (!ready) throw TrainingError(op + ": missing stage: " + stage);
}

inline std::vector<double> softmax_plain(std::vector<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double norm = 0.0;
  for (auto& v : z) {
    v = std::max(std::exp(v - mx), std::numeric_limits<double>::min());
    norm += v;
  }
  for (auto& v : z) v /= norm;
  return z;
}

}  // namespace fc

/// Per-thread feature extraction over the observed prefix plus the full
/// profile used as the training target. Threads shorter than t_h + delta + 1
/// replies yield hist_true_len < hist_len and are padded with zeros.
inline ThreadFeatures extract_thread_features(const ConversationThread& thread,
                                              const PipelineConfig& cfg,
                                              const NodeEmbedderModel& node_model,
                                              const HateScorer& scorer,
                                              const TextEmbedder& embedder,
                                              const HateLexicon& lexicon) {
  ThreadFeatures f;
  f.thread_id = thread.root.id;

  std::vector<double> scores = reply_scores(thread, cfg.w, scorer, lexicon);
  if (scores.size() > cfg.n) scores.resize(cfg.n);
  IntensityProfile prof = windowed_profile(scores, cfg.delta);
  f.full_windows = prof.windows;
  f.full_true_len = std::min(f.full_windows.size(), cfg.canvas());

  f.history_windows.assign(cfg.hist_len(), 0.0);
  f.hist_true_len = std::min(f.full_true_len, cfg.hist_len());
  for (std::size_t k = 0; k < f.hist_true_len; ++k) f.history_windows[k] = f.full_windows[k];

  ConversationThread prefix = fc::history_prefix(thread, cfg.t_h);
  SentimentSeries sent = sentiment_series(prefix, embedder, cfg.delta);
  f.sentiment.assign(cfg.hist_len(), 0.0);
  for (std::size_t k = 0; k < std::min(sent.windows.size(), cfg.hist_len()); ++k) {
    f.sentiment[k] = sent.windows[k];
  }

  f.adj = normalized_adjacency(thread_adjacency(prefix));
  f.node_features = thread_node_features(node_model, prefix);
  return f;
}

inline std::vector<double> pipeline_tree_embedding(const PipelineModel& p,
                                                   const ThreadFeatures& f) {
  return tree_embedding(p.tree_encoder, f.adj, f.node_features);
}

/// P* on the simplex over j from the three history inputs.
inline std::vector<double> predict_membership(const PipelineModel& p,
                                              const std::vector<double>& x_h,
                                              const std::vector<double>& sentiment,
                                              const std::vector<double>& t_i) {
  if (x_h.size() != AutoencoderModel::kHistoryDim || sentiment.size() != p.config.hist_len() ||
      t_i.size() != TreeEncoderModel::kOutputDim) {
    throw std::invalid_argument("predict_membership: component dimension mismatch");
  }
  std::vector<double> in = x_h;
  in.insert(in.end(), sentiment.begin(), sentiment.end());
  in.insert(in.end(), t_i.begin(), t_i.end());
  std::vector<double> hidden = tre::dense_plain(in, p.prior.w1, p.prior.b1);
  for (auto& v : hidden) v = std::max(v, 0.0);
  return fc::softmax_plain(tre::dense_plain(hidden, p.prior.w2, p.prior.b2));
}

/// X_f* from the history latent and the membership-weighted prior knowledge.
inline std::vector<double> predict_future_latent(const PipelineModel& p,
                                                 const std::vector<double>& x_h,
                                                 const std::vector<double>& p_star) {
  if (x_h.size() != AutoencoderModel::kHistoryDim) {
    throw std::invalid_argument("predict_future_latent: X_h must have dimension 32");
  }
  std::vector<double> x_c = prior_knowledge(p.clustering, p_star);  // validates the simplex
  if (x_c.size() != 160) {
    throw std::invalid_argument("predict_future_latent: cluster centres must be 160-dim");
  }
  std::vector<double> x_s(32);
  for (std::size_t i = 0; i < 32; ++i) x_s[i] = x_h[i] - x_c[i];
  std::vector<double> x_d = tre::dense_plain(x_s, p.predictor.d_w, p.predictor.d_b);
  std::vector<double> x_hc = x_h;
  x_hc.insert(x_hc.end(), x_d.begin(), x_d.end());
  x_hc.insert(x_hc.end(), x_c.begin() + 32, x_c.end());
  std::vector<double> hidden = tre::dense_plain(x_hc, p.predictor.p_w1, p.predictor.p_b1);
  for (auto& v : hidden) v = std::max(v, 0.0);
  return tre::dense_plain(hidden, p.predictor.p_w2, p.predictor.p_b2);
}

/// Joint training of the prior head and (optionally) the tree encoder
/// against the soft cluster memberships of the full latents.
inline void train_prior(PipelineModel& p, const std::vector<ThreadFeatures>& features,
                        const std::vector<LatentPair>& latents, std::size_t epochs, double lr,
                        std::uint64_t seed) {
  fc::require_stage(p.node_ready, "train_prior", "node embedder");
  fc::require_stage(p.ae_ready, "train_prior", "autoencoder");
  fc::require_stage(p.gmm_ready, "train_prior", "clustering");
  if (features.size() != latents.size() || features.empty()) {
    throw TrainingError("train_prior: features and latents must align and be nonempty");
  }

  const std::size_t input_dim =
      AutoencoderModel::kHistoryDim + p.config.hist_len() + TreeEncoderModel::kOutputDim;
  p.prior = PriorModel::init(input_dim, p.config.j, seed);

  std::vector<Tensor> targets;
  targets.reserve(latents.size());
  for (const auto& lp : latents) {
    std::vector<double> full = lp.x_h;
    full.insert(full.end(), lp.x_f.begin(), lp.x_f.end());
    targets.push_back(Tensor::vector1d(membership(p.clustering, full).p));
  }

  std::vector<Tensor*> params = p.prior.parameters();
  if (p.config.fine_tune_tree) {
    for (auto* q : p.tree_encoder.parameters()) params.push_back(q);
  }
  AdamState adam = AdamState::init(params);
  Rng order_rng = Rng(seed).split("prior_order");
  std::vector<std::size_t> order(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch_size = 16;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, order.size());
      Tape t;
      Value w1 = t.param(p.prior.w1), b1 = t.param(p.prior.b1);
      Value w2 = t.param(p.prior.w2), b2 = t.param(p.prior.b2);
      Value tw0 = p.config.fine_tune_tree ? t.param(p.tree_encoder.w0)
                                          : t.constant(p.tree_encoder.w0);
      Value tw1 = p.config.fine_tune_tree ? t.param(p.tree_encoder.w1)
                                          : t.constant(p.tree_encoder.w1);
      Value loss = t.constant(Tensor::scalar(0.0));
      for (std::size_t i = start; i < end; ++i) {
        const auto& f = features[order[i]];
        Value ti = tre::tree_embedding_value(t, tw0, tw1, f.adj, t.constant(f.node_features));
        std::vector<double> xs = latents[order[i]].x_h;
        xs.insert(xs.end(), f.sentiment.begin(), f.sentiment.end());
        Value in = t.concat({t.constant(Tensor::vector1d(xs)), ti});
        Value logits = t.dense(t.relu(t.dense(in, w1, b1)), w2, b2);
        loss = t.add(loss, t.cross_entropy(logits, targets[order[i]]));
      }
      loss = t.scale(loss, 1.0 / static_cast<double>(end - start));
      std::vector<Value> pv = {w1, b1, w2, b2};
      if (p.config.fine_tune_tree) {
        pv.push_back(tw0);
        pv.push_back(tw1);
      }
      auto grads = t.gradients(loss, pv);
      adam_step(params, grads, adam, lr);
      epoch_loss += t.val(loss).data[0];
      ++batches;
    }
    p.prior.loss_history.push_back(epoch_loss / static_cast<double>(batches));
  }
  p.prior_ready = true;
}

/// Trains FP_d / FP_p by latent-space MSE against the future encoder's X_f,
/// with memberships produced exactly as at inference time.
inline void train_future_predictor(PipelineModel& p, const std::vector<ThreadFeatures>& features,
                                   const std::vector<LatentPair>& latents, std::size_t epochs,
                                   double lr, std::uint64_t seed) {
  fc::require_stage(p.node_ready, "train_future_predictor", "node embedder");
  fc::require_stage(p.ae_ready, "train_future_predictor", "autoencoder");
  fc::require_stage(p.gmm_ready, "train_future_predictor", "clustering");
  fc::require_stage(p.prior_ready, "train_future_predictor", "prior model");
  if (features.size() != latents.size() || features.empty()) {
    throw TrainingError("train_future_predictor: features and latents must align and be nonempty");
  }

  p.predictor = FuturePredictor::init(seed);

  // Inference-path inputs are fixed during this stage; precompute them.
  struct Sample {
    Tensor x_h, x_fc, x_s, target;
  };
  std::vector<Sample> samples;
  samples.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    std::vector<double> ti = pipeline_tree_embedding(p, f);
    std::vector<double> p_star = predict_membership(p, latents[i].x_h, f.sentiment, ti);
    std::vector<double> x_c = prior_knowledge(p.clustering, p_star);
    Sample s;
    s.x_h = Tensor::vector1d(latents[i].x_h);
    s.x_fc = Tensor::vector1d({x_c.begin() + 32, x_c.end()});
    std::vector<double> xs(32);
    for (std::size_t k = 0; k < 32; ++k) xs[k] = latents[i].x_h[k] - x_c[k];
    s.x_s = Tensor::vector1d(xs);
    s.target = Tensor::vector1d(latents[i].x_f);
    samples.push_back(std::move(s));
  }

  auto params = p.predictor.parameters();
  AdamState adam = AdamState::init(params);
  Rng order_rng = Rng(seed).split("predictor_order");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch_size = 16;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, order.size());
      Tape t;
      Value dw = t.param(p.predictor.d_w), db = t.param(p.predictor.d_b);
      Value pw1 = t.param(p.predictor.p_w1), pb1 = t.param(p.predictor.p_b1);
      Value pw2 = t.param(p.predictor.p_w2), pb2 = t.param(p.predictor.p_b2);
      Value loss = t.constant(Tensor::scalar(0.0));
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = samples[order[i]];
        Value xd = t.dense(t.constant(s.x_s), dw, db);
        Value xhc = t.concat({t.constant(s.x_h), xd, t.constant(s.x_fc)});
        Value pred = t.dense(t.relu(t.dense(xhc, pw1, pb1)), pw2, pb2);
        loss = t.add(loss, t.mse(pred, t.constant(s.target)));
      }
      loss = t.scale(loss, 1.0 / static_cast<double>(end - start));
      auto grads = t.gradients(loss, {dw, db, pw1, pb1, pw2, pb2});
      adam_step(params, grads, adam, lr);
      epoch_loss += t.val(loss).data[0];
      ++batches;
    }
    p.predictor.loss_history.push_back(epoch_loss / static_cast<double>(batches));
  }
  p.predictor_ready = true;
}

struct ForecastResult {
  std::string thread_id;
  std::vector<double> forecast;       // n - t_h future windows, each in [0, delta]
  std::vector<double> decoded;        // full n - delta reconstruction (diagnostic)
  std::vector<double> membership;     // P*
};

/// Full inference path for one thread: history features, membership, future
/// latent, decode, and the future segment as the forecast.
inline ForecastResult forecast_profile(const PipelineModel& p, const ConversationThread& thread,
                                       const HateScorer& scorer, const TextEmbedder& embedder,
                                       const HateLexicon& lexicon) {
  fc::require_stage(p.predictor_ready, "forecast_profile", "future predictor");
  if (thread.length() < p.config.t_h) {
    throw DataError("forecast_profile: thread has " + std::to_string(thread.length()) +
                    " replies; at least " + std::to_string(p.config.t_h) + " are required");
  }
  ThreadFeatures f =
      extract_thread_features(thread, p.config, p.node_embedder, scorer, embedder, lexicon);
  std::vector<double> x_h = encode_history(p.autoencoder, f.history_windows, f.hist_true_len);
  std::vector<double> ti = pipeline_tree_embedding(p, f);
  ForecastResult r;
  r.thread_id = thread.root.id;
  r.membership = predict_membership(p, x_h, f.sentiment, ti);
  std::vector<double> x_f = predict_future_latent(p, x_h, r.membership);
  std::vector<double> joint = x_h;
  joint.insert(joint.end(), x_f.begin(), x_f.end());
  r.decoded = decode(p.autoencoder, joint);
  r.forecast.assign(r.decoded.begin() + static_cast<std::ptrdiff_t>(p.config.hist_len()),
                    r.decoded.end());
  return r;
}

struct PipelineArtifacts {
  std::vector<ThreadFeatures> features;
  std::vector<LatentPair> latents;
};

/// Runs every stage in order on the given training threads. Threads shorter
/// than t_h + 1 replies are filtered out up front.
inline PipelineModel train_pipeline(const std::vector<ConversationThread>& threads,
                                    const PipelineConfig& cfg, const HateScorer& scorer,
                                    const TextEmbedder& embedder, const HateLexicon& lexicon,
                                    PipelineArtifacts* artifacts = nullptr) {
  cfg.validate();
  std::vector<const ConversationThread*> usable;
  for (const auto& th : threads) {
    if (th.length() > cfg.t_h) usable.push_back(&th);
  }
  if (usable.size() < 2) {
    throw TrainingError("train_pipeline: need >= 2 threads longer than t_h replies, have " +
                        std::to_string(usable.size()));
  }

  PipelineModel p;
  p.config = cfg;

  // Stage 1: node embedder on a capped per-reply sample.
  {
    Rng rng = Rng(cfg.seed).split("node_sample");
    std::vector<const Tweet*> pool;
    for (const auto* th : usable) {
      for (const auto& r : th->replies) pool.push_back(&r);
    }
    rng.shuffle(pool);
    if (pool.size() > cfg.node_sample_cap) pool.resize(cfg.node_sample_cap);
    std::vector<NodeSample> samples;
    samples.reserve(pool.size());
    for (const auto* tw : pool) {
      NodeSample s;
      s.tokens = tw->tokens;
      s.target = hate_intensity(*tw, cfg.w, scorer, lexicon);
      samples.push_back(std::move(s));
    }
    p.node_embedder = train_node_embedder(samples, cfg.node_epochs, cfg.lr * 5.0, cfg.node_l2,
                                          Rng(cfg.seed).split("node_stage").next_u64(), cfg.vocab);
    p.node_ready = true;
  }
  p.tree_encoder = TreeEncoderModel::init(Rng(cfg.seed).split("tree_stage").next_u64());

  // Stage 2: per-thread features (profiles, sentiment, prefix tree).
  std::vector<ThreadFeatures> features;
  std::vector<IntensityProfile> profiles;
  features.reserve(usable.size());
  for (const auto* th : usable) {
    ThreadFeatures f =
        extract_thread_features(*th, cfg, p.node_embedder, scorer, embedder, lexicon);
    IntensityProfile prof;
    prof.thread_id = f.thread_id;
    prof.delta = cfg.delta;
    prof.windows = f.full_windows;
    profiles.push_back(std::move(prof));
    features.push_back(std::move(f));
  }

  // Stage 3: autoencoder on the padded profile canvas.
  ProfileBatch batch = make_profile_batch(profiles, cfg.delta, cfg.t_h, cfg.n);
  p.autoencoder = train_autoencoder(batch, cfg.ae_epochs, cfg.lr,
                                    Rng(cfg.seed).split("ae_stage").next_u64());
  p.ae_ready = true;

  // Stage 4: mixture over the concatenated latents.
  std::vector<LatentPair> latents;
  latents.reserve(features.size());
  Tensor lat = Tensor::zeros({features.size(), 160});
  for (std::size_t i = 0; i < features.size(); ++i) {
    LatentPair lp = encode_pair(p.autoencoder, batch, i);
    for (std::size_t k = 0; k < 32; ++k) lat.at(i, k) = lp.x_h[k];
    for (std::size_t k = 0; k < 128; ++k) lat.at(i, 32 + k) = lp.x_f[k];
    latents.push_back(std::move(lp));
  }
  p.clustering = fit_gmm(lat, cfg.j, Rng(cfg.seed).split("gmm_stage").next_u64());
  p.gmm_ready = true;

  // Stages 5 and 6.
  train_prior(p, features, latents, cfg.prior_epochs, cfg.lr * 5.0,
              Rng(cfg.seed).split("prior_stage").next_u64());
  train_future_predictor(p, features, latents, cfg.predictor_epochs, cfg.lr * 5.0,
                         Rng(cfg.seed).split("predictor_stage").next_u64());

  if (artifacts != nullptr) {
    artifacts->features = std::move(features);
    artifacts->latents = std::move(latents);
  }
  return p;
}

}  // namespace hif
