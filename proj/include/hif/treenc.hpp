#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hif/adam.hpp"
#include "hif/autodiff.hpp"
#include "hif/errors.hpp"
#include "hif/rng.hpp"
#include "hif/tensor.hpp"
#include "hif/threadstore.hpp"

namespace hif {

namespace tre {

/// Single GRU direction. Gates read the concatenation [x_t, h_{t-1}].
struct GruCell {
  Tensor wz, bz, wr, br, wh, bh;  // each W is [(in+hid), hid]

  static GruCell init(std::size_t in, std::size_t hid, Rng& rng) {
    GruCell c;
    const double s = std::sqrt(1.0 / static_cast<double>(in + hid));
    c.wz = Tensor::randn({in + hid, hid}, rng, s);
    c.wr = Tensor::randn({in + hid, hid}, rng, s);
    c.wh = Tensor::randn({in + hid, hid}, rng, s);
    c.bz = Tensor::zeros({hid});
    c.br = Tensor::zeros({hid});
    c.bh = Tensor::zeros({hid});
    return c;
  }

  std::vector<Tensor*> parameters() { return {&wz, &bz, &wr, &br, &wh, &bh}; }
};

struct GruValues {
  Value wz, bz, wr, br, wh, bh;
};

inline GruValues lift(Tape& t, const GruCell& c) {
  return {t.param(c.wz), t.param(c.bz), t.param(c.wr), t.param(c.br),
          t.param(c.wh), t.param(c.bh)};
}

inline void append_values(std::vector<Value>& out, const GruValues& g) {
  for (Value v : {g.wz, g.bz, g.wr, g.br, g.wh, g.bh}) out.push_back(v);
}

inline Value gru_step(Tape& t, const GruValues& g, Value x, Value h) {
  Value xh = t.concat({x, h});
  Value z = t.sigmoid(t.dense(xh, g.wz, g.bz));
  Value r = t.sigmoid(t.dense(xh, g.wr, g.br));
  Value cand = t.tanh_(t.dense(t.concat({x, t.mul(r, h)}), g.wh, g.bh));
  // h' = (1 - z) * h + z * cand
  return t.add(t.mul(t.affine(z, -1.0, 1.0), h), t.mul(z, cand));
}

/// Runs one bidirectional layer over a token sequence; returns per-step
/// outputs as forward/backward concatenations.
inline std::vector<Value> bigru_layer(Tape& t, const GruValues& fwd, const GruValues& bwd,
                                      const std::vector<Value>& inputs, std::size_t hid) {
  const std::size_t steps = inputs.size();
  std::vector<Value> fs(steps), bs(steps);
  Value h = t.constant(Tensor::zeros({hid}));
  for (std::size_t i = 0; i < steps; ++i) {
    h = gru_step(t, fwd, inputs[i], h);
    fs[i] = h;
  }
  h = t.constant(Tensor::zeros({hid}));
  for (std::size_t i = steps; i-- > 0;) {
    h = gru_step(t, bwd, inputs[i], h);
    bs[i] = h;
  }
  std::vector<Value> out(steps);
  for (std::size_t i = 0; i < steps; ++i) out[i] = t.concat({fs[i], bs[i]});
  return out;
}

}  // namespace tre

/// Tweet-level text encoder: hashed token embeddings, a two-layer
/// bidirectional GRU, additive attention pooling, and a small regression head
/// trained to predict the tweet's blended hate intensity. The pooled 64-dim
/// attention vector is what downstream consumers use as the node feature.
struct NodeEmbedderModel {
  static constexpr std::size_t kEmbedDim = 32;
  static constexpr std::size_t kHidden = 32;
  static constexpr std::size_t kOutputDim = 2 * kHidden;

  std::size_t vocab = 4096;
  std::uint64_t seed = 0;

  Tensor embedding;                    // [vocab, 32]
  tre::GruCell fwd1, bwd1, fwd2, bwd2; // layer 1 in=32, layer 2 in=64
  Tensor attn_w, attn_b, attn_v;       // additive attention over 64-dim states
  Tensor head_w1, head_b1, head_w2, head_b2;
  std::vector<double> loss_history;

  static NodeEmbedderModel init(std::size_t vocab, std::uint64_t seed) {
    if (vocab == 0) throw ConfigError("node embedder: vocab must be positive");
    NodeEmbedderModel m;
    m.vocab = vocab;
    m.seed = seed;
    Rng rng = Rng(seed).split("node_embedder_init");
    m.embedding = Tensor::randn({vocab, kEmbedDim}, rng, 0.1);
    m.fwd1 = tre::GruCell::init(kEmbedDim, kHidden, rng);
    m.bwd1 = tre::GruCell::init(kEmbedDim, kHidden, rng);
    m.fwd2 = tre::GruCell::init(kOutputDim, kHidden, rng);
    m.bwd2 = tre::GruCell::init(kOutputDim, kHidden, rng);
    m.attn_w = Tensor::randn({kOutputDim, kOutputDim}, rng, std::sqrt(1.0 / kOutputDim));
    m.attn_b = Tensor::zeros({kOutputDim});
    m.attn_v = Tensor::randn({kOutputDim, 1}, rng, std::sqrt(1.0 / kOutputDim));
    m.head_w1 = Tensor::randn({kOutputDim, kHidden}, rng, std::sqrt(1.0 / kOutputDim));
    m.head_b1 = Tensor::zeros({kHidden});
    m.head_w2 = Tensor::randn({kHidden, 1}, rng, std::sqrt(1.0 / kHidden));
    m.head_b2 = Tensor::zeros({1});
    return m;
  }

  std::size_t token_index(const std::string& token) const {
    return static_cast<std::size_t>(Rng::fnv1a(token) % vocab);
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> p = {&embedding};
    for (auto* cell : {&fwd1, &bwd1, &fwd2, &bwd2}) {
      for (auto* q : cell->parameters()) p.push_back(q);
    }
    for (auto* q : {&attn_w, &attn_b, &attn_v, &head_w1, &head_b1, &head_w2, &head_b2}) {
      p.push_back(q);
    }
    return p;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names = {"treenc.embedding"};
    for (const char* cell : {"fwd1", "bwd1", "fwd2", "bwd2"}) {
      for (const char* p : {"wz", "bz", "wr", "br", "wh", "bh"}) {
        names.push_back(std::string("treenc.") + cell + "." + p);
      }
    }
    for (const char* p : {"attn_w", "attn_b", "attn_v", "head_w1", "head_b1", "head_w2",
                          "head_b2"}) {
      names.push_back(std::string("treenc.") + p);
    }
    return names;
  }
};

namespace tre {

struct EmbedderValues {
  Value embedding;
  GruValues fwd1, bwd1, fwd2, bwd2;
  Value attn_w, attn_b, attn_v;
  Value head_w1, head_b1, head_w2, head_b2;
};

inline EmbedderValues lift(Tape& t, const NodeEmbedderModel& m) {
  EmbedderValues v;
  v.embedding = t.param(m.embedding);
  v.fwd1 = lift(t, m.fwd1);
  v.bwd1 = lift(t, m.bwd1);
  v.fwd2 = lift(t, m.fwd2);
  v.bwd2 = lift(t, m.bwd2);
  v.attn_w = t.param(m.attn_w);
  v.attn_b = t.param(m.attn_b);
  v.attn_v = t.param(m.attn_v);
  v.head_w1 = t.param(m.head_w1);
  v.head_b1 = t.param(m.head_b1);
  v.head_w2 = t.param(m.head_w2);
  v.head_b2 = t.param(m.head_b2);
  return v;
}

inline std::vector<Value> values_of(const EmbedderValues& v) {
  std::vector<Value> out = {v.embedding};
  append_values(out, v.fwd1);
  append_values(out, v.bwd1);
  append_values(out, v.fwd2);
  append_values(out, v.bwd2);
  for (Value x : {v.attn_w, v.attn_b, v.attn_v, v.head_w1, v.head_b1, v.head_w2, v.head_b2}) {
    out.push_back(x);
  }
  return out;
}

/// Attention-pooled 64-dim representation of one token sequence.
/// Empty sequences get the zero vector (no text, no contribution).
inline Value pooled_value(Tape& t, const NodeEmbedderModel& m, const EmbedderValues& v,
                          const std::vector<std::string>& tokens) {
  if (tokens.empty()) {
    return t.constant(Tensor::zeros({NodeEmbedderModel::kOutputDim}));
  }
  std::vector<Value> inputs;
  inputs.reserve(tokens.size());
  for (const auto& tok : tokens) inputs.push_back(t.row(v.embedding, m.token_index(tok)));
  auto h1 = bigru_layer(t, v.fwd1, v.bwd1, inputs, NodeEmbedderModel::kHidden);
  auto h2 = bigru_layer(t, v.fwd2, v.bwd2, h1, NodeEmbedderModel::kHidden);
  std::vector<Value> scores;
  scores.reserve(h2.size());
  for (Value h : h2) {
    Value e = t.dense(t.tanh_(t.dense(h, v.attn_w, v.attn_b)), v.attn_v,
                      t.constant(Tensor::zeros({1})));
    scores.push_back(e);
  }
  Value alpha = t.softmax(t.concat(scores));
  return t.weighted_rows(alpha, t.stack_rows(h2));
}

inline Value head_value(Tape& t, const EmbedderValues& v, Value pooled) {
  Value hidden = t.relu(t.dense(pooled, v.head_w1, v.head_b1));
  return t.sigmoid(t.dense(hidden, v.head_w2, v.head_b2));
}

// Tape-free forward pass for corpus-scale feature extraction. Must stay in
// lockstep with the tape version above; a test asserts their equality.

inline std::vector<double> dense_plain(const std::vector<double>& x, const Tensor& w,
                                       const Tensor& b) {
  const std::size_t m = w.rows(), n = w.cols();
  std::vector<double> out(b.data.begin(), b.data.end());
  for (std::size_t i = 0; i < m; ++i) {
    const double xv = x[i];
    if (xv == 0.0) continue;
    const double* wrow = &w.data[i * n];
    for (std::size_t j = 0; j < n; ++j) out[j] += xv * wrow[j];
  }
  return out;
}

inline std::vector<double> gru_step_plain(const GruCell& c, const std::vector<double>& x,
                                          const std::vector<double>& h) {
  std::vector<double> xh = x;
  xh.insert(xh.end(), h.begin(), h.end());
  std::vector<double> z = dense_plain(xh, c.wz, c.bz);
  std::vector<double> r = dense_plain(xh, c.wr, c.br);
  for (auto& v : z) v = Tape::stable_sigmoid(v);
  for (auto& v : r) v = Tape::stable_sigmoid(v);
  std::vector<double> xrh = x;
  for (std::size_t i = 0; i < h.size(); ++i) xrh.push_back(r[i] * h[i]);
  std::vector<double> cand = dense_plain(xrh, c.wh, c.bh);
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    out[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(cand[i]);
  }
  return out;
}

inline std::vector<std::vector<double>> bigru_layer_plain(
    const GruCell& fwd, const GruCell& bwd, const std::vector<std::vector<double>>& inputs,
    std::size_t hid) {
  const std::size_t steps = inputs.size();
  std::vector<std::vector<double>> fs(steps), bs(steps);
  std::vector<double> h(hid, 0.0);
  for (std::size_t i = 0; i < steps; ++i) {
    h = gru_step_plain(fwd, inputs[i], h);
    fs[i] = h;
  }
  h.assign(hid, 0.0);
  for (std::size_t i = steps; i-- > 0;) {
    h = gru_step_plain(bwd, inputs[i], h);
    bs[i] = h;
  }
  std::vector<std::vector<double>> out(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    out[i] = fs[i];
    out[i].insert(out[i].end(), bs[i].begin(), bs[i].end());
  }
  return out;
}

inline std::vector<double> pooled_plain(const NodeEmbedderModel& m,
                                        const std::vector<std::string>& tokens) {
  if (tokens.empty()) return std::vector<double>(NodeEmbedderModel::kOutputDim, 0.0);
  std::vector<std::vector<double>> inputs;
  inputs.reserve(tokens.size());
  for (const auto& tok : tokens) {
    const std::size_t idx = m.token_index(tok);
    inputs.emplace_back(m.embedding.data.begin() +
                            static_cast<std::ptrdiff_t>(idx * NodeEmbedderModel::kEmbedDim),
                        m.embedding.data.begin() +
                            static_cast<std::ptrdiff_t>((idx + 1) * NodeEmbedderModel::kEmbedDim));
  }
  auto h1 = bigru_layer_plain(m.fwd1, m.bwd1, inputs, NodeEmbedderModel::kHidden);
  auto h2 = bigru_layer_plain(m.fwd2, m.bwd2, h1, NodeEmbedderModel::kHidden);
  std::vector<double> scores(h2.size());
  for (std::size_t i = 0; i < h2.size(); ++i) {
    std::vector<double> a = dense_plain(h2[i], m.attn_w, m.attn_b);
    for (auto& v : a) v = std::tanh(v);
    scores[i] = dense_plain(a, m.attn_v, Tensor::zeros({1}))[0];
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double norm = 0.0;
  for (auto& s : scores) {
    s = std::max(std::exp(s - mx), std::numeric_limits<double>::min());
    norm += s;
  }
  std::vector<double> pooled(NodeEmbedderModel::kOutputDim, 0.0);
  for (std::size_t i = 0; i < h2.size(); ++i) {
    const double a = scores[i] / norm;
    for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += a * h2[i][c];
  }
  return pooled;
}

}  // namespace tre

inline std::vector<double> node_embedding(const NodeEmbedderModel& model,
                                          const std::vector<std::string>& tokens) {
  return tre::pooled_plain(model, tokens);
}

/// Head output in (0, 1): the model's estimate of the tweet's hate intensity.
inline double predict_node_intensity(const NodeEmbedderModel& model,
                                     const std::vector<std::string>& tokens) {
  std::vector<double> hidden =
      tre::dense_plain(tre::pooled_plain(model, tokens), model.head_w1, model.head_b1);
  for (auto& v : hidden) v = std::max(v, 0.0);
  return Tape::stable_sigmoid(tre::dense_plain(hidden, model.head_w2, model.head_b2)[0]);
}

/// One labelled tweet for node-embedder training.
struct NodeSample {
  std::vector<std::string> tokens;
  double target = 0.0;  // blended intensity in [0, 1]
};

/// Minibatch Adam on squared error plus L2 weight decay on all parameters.
inline NodeEmbedderModel train_node_embedder(const std::vector<NodeSample>& samples,
                                             std::size_t epochs, double lr, double l2,
                                             std::uint64_t seed, std::size_t vocab = 4096,
                                             std::size_t batch_size = 16) {
  if (samples.empty()) throw TrainingError("train_node_embedder: no samples");
  for (const auto& s : samples) {
    if (s.target < 0.0 || s.target > 1.0) {
      throw DataError("train_node_embedder: target outside [0,1]");
    }
  }
  NodeEmbedderModel model = NodeEmbedderModel::init(vocab, seed);
  auto params = model.parameters();
  AdamState adam = AdamState::init(params);
  Rng order_rng = Rng(seed).split("node_embedder_order");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, order.size());
      Tape t;
      tre::EmbedderValues v = tre::lift(t, model);
      Value loss = t.constant(Tensor::scalar(0.0));
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[order[i]];
        Value y = tre::head_value(t, v, tre::pooled_value(t, model, v, s.tokens));
        Value err = t.sub(y, t.constant(Tensor::vector1d({s.target})));
        loss = t.add(loss, t.sum_squares(err));
      }
      loss = t.scale(loss, 1.0 / static_cast<double>(end - start));
      if (l2 > 0.0) {
        Value reg = t.constant(Tensor::scalar(0.0));
        for (Value p : tre::values_of(v)) reg = t.add(reg, t.sum_squares(p));
        loss = t.add(loss, t.scale(reg, l2));
      }
      auto grads = t.gradients(loss, tre::values_of(v));
      adam_step(params, grads, adam, lr);
      epoch_loss += t.val(loss).data[0];
      ++batches;
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(batches));
  }
  return model;
}

/// Two-layer graph convolution over the reply tree, mean-pooled to a 32-dim
/// thread embedding. Input node features are the 64-dim text embeddings.
struct TreeEncoderModel {
  static constexpr std::size_t kInputDim = NodeEmbedderModel::kOutputDim;
  static constexpr std::size_t kHiddenDim = 64;
  static constexpr std::size_t kOutputDim = 32;

  Tensor w0;  // [64, 64]
  Tensor w1;  // [64, 32]

  static TreeEncoderModel init(std::uint64_t seed) {
    TreeEncoderModel m;
    Rng rng = Rng(seed).split("tree_encoder_init");
    m.w0 = Tensor::randn({kInputDim, kHiddenDim}, rng, std::sqrt(1.0 / kInputDim));
    m.w1 = Tensor::randn({kHiddenDim, kOutputDim}, rng, std::sqrt(1.0 / kHiddenDim));
    return m;
  }

  std::vector<Tensor*> parameters() { return {&w0, &w1}; }
};

/// Symmetrically normalized adjacency with self-loops:
/// D^{-1/2} (A + I) D^{-1/2}, stored sparse.
inline SparseMatrix normalized_adjacency(const Tensor& adjacency) {
  if (adjacency.shape.size() != 2 || adjacency.rows() != adjacency.cols()) {
    throw std::invalid_argument("normalized_adjacency: expects square matrix");
  }
  const std::size_t q = adjacency.rows();
  std::vector<double> degree(q, 0.0);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t k = 0; k < q; ++k) degree[i] += adjacency.at(i, k);
    degree[i] += 1.0;  // self-loop
  }
  SparseMatrix s;
  s.rows = q;
  s.cols = q;
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      const double a = adjacency.at(i, k) + (i == k ? 1.0 : 0.0);
      if (a != 0.0) s.entries.push_back({i, k, a / std::sqrt(degree[i] * degree[k])});
    }
  }
  return s;
}

namespace tre {

inline Value tree_embedding_value(Tape& t, Value w0, Value w1, const SparseMatrix& adj,
                                  Value node_features) {
  Value h1 = t.relu(t.matmul(t.spmm(adj, node_features), w0));
  Value h2 = t.matmul(t.spmm(adj, h1), w1);
  return t.mean_rows(h2);
}

}  // namespace tre

inline std::vector<double> tree_embedding(const TreeEncoderModel& model, const SparseMatrix& adj,
                                          const Tensor& node_features) {
  if (node_features.shape.size() != 2 ||
      node_features.cols() != TreeEncoderModel::kInputDim ||
      node_features.rows() != adj.rows) {
    throw std::invalid_argument("tree_embedding: node feature shape mismatch");
  }
  Tape t;
  Value out = tre::tree_embedding_value(t, t.param(model.w0), t.param(model.w1), adj,
                                        t.constant(node_features));
  return t.val(out).data;
}

/// Node features for one thread in adjacency order (root, then replies in
/// chronological order).
inline Tensor thread_node_features(const NodeEmbedderModel& model,
                                   const ConversationThread& thread) {
  const std::size_t q = 1 + thread.replies.size();
  Tensor out = Tensor::zeros({q, NodeEmbedderModel::kOutputDim});
  auto fill = [&](std::size_t row, const std::vector<std::string>& tokens) {
    auto e = tre::pooled_plain(model, tokens);
    std::copy(e.begin(), e.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(row * e.size()));
  };
  fill(0, thread.root.tokens);
  for (std::size_t i = 0; i < thread.replies.size(); ++i) fill(i + 1, thread.replies[i].tokens);
  return out;
}

}  // namespace hif
