#pragma once

#include <string>
#include <vector>

#include "hif/adam.hpp"
#include "hif/autodiff.hpp"
#include "hif/errors.hpp"
#include "hif/intensity.hpp"
#include "hif/rng.hpp"
#include "hif/tensor.hpp"

namespace hif {

/// Fixed-canvas batch of intensity profiles. Rows are zero-padded beyond each
/// profile's true length; the history/future split is at h_len windows.
struct ProfileBatch {
  Tensor windows;                    // [s x canvas]
  std::vector<std::size_t> true_len; // real windows per row, <= canvas
  std::size_t h_len = 0;             // t_h - delta
  std::size_t delta = 0;
  std::vector<std::string> thread_ids;

  std::size_t size() const { return windows.rows(); }
  std::size_t canvas() const { return windows.cols(); }
};

/// Pads/truncates per-thread profiles onto the n-delta canvas.
inline ProfileBatch make_profile_batch(const std::vector<IntensityProfile>& profiles,
                                       std::size_t delta, std::size_t t_h, std::size_t n) {
  if (t_h <= delta) throw ConfigError("profile batch: t_h must exceed delta");
  if (n <= t_h) throw ConfigError("profile batch: n must exceed t_h");
  ProfileBatch b;
  b.delta = delta;
  b.h_len = t_h - delta;
  const std::size_t canvas = n - delta;
  b.windows = Tensor::zeros({profiles.size(), canvas});
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    const auto& prof = profiles[p];
    const std::size_t len = std::min(prof.windows.size(), canvas);
    for (std::size_t k = 0; k < len; ++k) b.windows.at(p, k) = prof.windows[k];
    b.true_len.push_back(len);
    b.thread_ids.push_back(prof.thread_id);
  }
  return b;
}

namespace seq {

/// One inception branch set: parallel same-convolutions (k=5,7,9, 8 filters
/// each), a 1x1 bottleneck to 4 channels, then a two-layer perceptron.
struct InceptionEncoder {
  Tensor k5, k7, k9;   // [k, 1, 8]
  Tensor bottleneck;   // [1, 24, 4]
  Tensor w1, b1;       // flatten(len*4) -> hidden
  Tensor w2, b2;       // hidden -> out_dim

  static InceptionEncoder init(std::size_t input_len, std::size_t hidden, std::size_t out_dim,
                               Rng& rng) {
    InceptionEncoder e;
    e.k5 = Tensor::randn({5, 1, 8}, rng, std::sqrt(1.0 / 5.0));
    e.k7 = Tensor::randn({7, 1, 8}, rng, std::sqrt(1.0 / 7.0));
    e.k9 = Tensor::randn({9, 1, 8}, rng, std::sqrt(1.0 / 9.0));
    e.bottleneck = Tensor::randn({1, 24, 4}, rng, std::sqrt(1.0 / 24.0));
    const std::size_t flat = input_len * 4;
    e.w1 = Tensor::randn({flat, hidden}, rng, std::sqrt(1.0 / static_cast<double>(flat)));
    e.b1 = Tensor::zeros({hidden});
    e.w2 = Tensor::randn({hidden, out_dim}, rng, std::sqrt(1.0 / static_cast<double>(hidden)));
    e.b2 = Tensor::zeros({out_dim});
    return e;
  }

  std::vector<Tensor*> parameters() {
    return {&k5, &k7, &k9, &bottleneck, &w1, &b1, &w2, &b2};
  }
};

struct EncoderValues {
  Value k5, k7, k9, bottleneck, w1, b1, w2, b2;
};

inline EncoderValues lift(Tape& t, const InceptionEncoder& e) {
  return {t.param(e.k5), t.param(e.k7), t.param(e.k9), t.param(e.bottleneck),
          t.param(e.w1), t.param(e.b1), t.param(e.w2), t.param(e.b2)};
}

inline std::vector<Value> values_of(const EncoderValues& v) {
  return {v.k5, v.k7, v.k9, v.bottleneck, v.w1, v.b1, v.w2, v.b2};
}

/// Encoder forward over one window sequence (already scaled to ~[0,1]).
inline Value encode(Tape& t, const EncoderValues& e, Value input_col) {
  Value c5 = t.conv1d_same(input_col, e.k5);
  Value c7 = t.conv1d_same(input_col, e.k7);
  Value c9 = t.conv1d_same(input_col, e.k9);
  Value merged = t.concat_cols({c5, c7, c9});             // [len, 24]
  Value squeezed = t.relu(t.conv1d_same(merged, e.bottleneck));  // [len, 4]
  Value hidden = t.relu(t.dense(t.flatten(squeezed), e.w1, e.b1));
  return t.dense(hidden, e.w2, e.b2);
}

}  // namespace seq

/// Dual-encoder / single-decoder autoencoder over intensity profiles.
/// Latent dimensions are fixed at 32 (history) and 128 (future).
struct AutoencoderModel {
  static constexpr std::size_t kHistoryDim = 32;
  static constexpr std::size_t kFutureDim = 128;

  std::size_t delta = 0;
  std::size_t t_h = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  seq::InceptionEncoder enc_h;  // history windows -> 32
  seq::InceptionEncoder enc_f;  // future windows -> 128
  Tensor dec_w1, dec_b1;        // 160 -> 256
  Tensor dec_w2, dec_b2;        // 256 -> canvas
  std::vector<double> loss_history;

  std::size_t hist_len() const { return t_h - delta; }
  std::size_t canvas() const { return n - delta; }
  std::size_t future_len() const { return canvas() - hist_len(); }

  static AutoencoderModel init(std::size_t delta, std::size_t t_h, std::size_t n,
                               std::uint64_t seed) {
    if (t_h <= delta || n <= t_h) throw ConfigError("autoencoder: need delta < t_h < n");
    AutoencoderModel m;
    m.delta = delta;
    m.t_h = t_h;
    m.n = n;
    m.seed = seed;
    Rng rng = Rng(seed).split("seqae_init");
    m.enc_h = seq::InceptionEncoder::init(m.hist_len(), 64, kHistoryDim, rng);
    m.enc_f = seq::InceptionEncoder::init(m.future_len(), 64, kFutureDim, rng);
    const std::size_t joint = kHistoryDim + kFutureDim;
    m.dec_w1 = Tensor::randn({joint, 256}, rng, std::sqrt(1.0 / static_cast<double>(joint)));
    m.dec_b1 = Tensor::zeros({256});
    m.dec_w2 = Tensor::randn({256, m.canvas()}, rng, std::sqrt(1.0 / 256.0));
    m.dec_b2 = Tensor::zeros({m.canvas()});
    return m;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> p = enc_h.parameters();
    for (auto* q : enc_f.parameters()) p.push_back(q);
    p.push_back(&dec_w1);
    p.push_back(&dec_b1);
    p.push_back(&dec_w2);
    p.push_back(&dec_b2);
    return p;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (const char* enc : {"enc_h", "enc_f"}) {
      for (const char* p : {"k5", "k7", "k9", "bottleneck", "w1", "b1", "w2", "b2"}) {
        names.push_back(std::string("seqae.") + enc + "." + p);
      }
    }
    for (const char* p : {"dec_w1", "dec_b1", "dec_w2", "dec_b2"}) {
      names.push_back(std::string("seqae.") + p);
    }
    return names;
  }
};

struct LatentPair {
  std::string thread_id;
  std::vector<double> x_h;  // [32]
  std::vector<double> x_f;  // [128]
};

namespace seq {

/// Column tensor [len,1] from raw windows scaled by 1/delta; entries beyond
/// true_len are forced to zero so padding cannot leak into the encoders.
inline Tensor window_column(const std::vector<double>& windows, std::size_t len,
                            std::size_t true_len, double delta) {
  Tensor col = Tensor::zeros({len, 1});
  for (std::size_t i = 0; i < len && i < windows.size(); ++i) {
    col.data[i] = i < true_len ? windows[i] / delta : 0.0;
  }
  return col;
}

inline Value decode_value(Tape& t, Value joint, Value w1, Value b1, Value w2, Value b2,
                          double delta) {
  Value hidden = t.relu(t.dense(joint, w1, b1));
  return t.scale(t.sigmoid(t.dense(hidden, w2, b2)), delta);  // clamps to [0, delta]
}

}  // namespace seq

/// X_h from the first t_h - delta windows (zero-padded when shorter).
inline std::vector<double> encode_history(const AutoencoderModel& model,
                                          const std::vector<double>& history_windows,
                                          std::size_t true_len) {
  if (true_len == 0) throw DataError("encode_history: thread too short (no real windows)");
  Tape t;
  seq::EncoderValues ev = seq::lift(t, model.enc_h);
  Tensor col = seq::window_column(history_windows, model.hist_len(), true_len,
                                  static_cast<double>(model.delta));
  Value out = seq::encode(t, ev, t.constant(col));
  return t.val(out).data;
}

inline std::vector<double> encode_future(const AutoencoderModel& model,
                                         const std::vector<double>& future_windows,
                                         std::size_t true_len) {
  if (true_len == 0) throw DataError("encode_future: thread too short (no real windows)");
  Tape t;
  seq::EncoderValues ev = seq::lift(t, model.enc_f);
  Tensor col = seq::window_column(future_windows, model.future_len(), true_len,
                                  static_cast<double>(model.delta));
  Value out = seq::encode(t, ev, t.constant(col));
  return t.val(out).data;
}

/// Reconstructed profile of length n - delta from the 160-dim joint latent.
inline std::vector<double> decode(const AutoencoderModel& model,
                                  const std::vector<double>& joint_latent) {
  if (joint_latent.size() != AutoencoderModel::kHistoryDim + AutoencoderModel::kFutureDim) {
    throw std::invalid_argument("decode: joint latent must have dimension 160");
  }
  Tape t;
  Value joint = t.constant(Tensor::vector1d(joint_latent));
  Value out = seq::decode_value(t, joint, t.param(model.dec_w1), t.param(model.dec_b1),
                                t.param(model.dec_w2), t.param(model.dec_b2),
                                static_cast<double>(model.delta));
  return t.val(out).data;
}

inline LatentPair encode_pair(const AutoencoderModel& model, const ProfileBatch& batch,
                              std::size_t row) {
  const std::size_t canvas = model.canvas();
  std::vector<double> full(canvas);
  for (std::size_t k = 0; k < canvas; ++k) full[k] = batch.windows.at(row, k);
  const std::size_t len = batch.true_len[row];
  std::vector<double> hist(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(model.hist_len()));
  std::vector<double> fut(full.begin() + static_cast<std::ptrdiff_t>(model.hist_len()), full.end());
  LatentPair lp;
  lp.thread_id = batch.thread_ids[row];
  lp.x_h = encode_history(model, hist, std::min(len, model.hist_len()));
  const std::size_t fut_len = len > model.hist_len() ? len - model.hist_len() : 0;
  if (fut_len == 0) throw DataError("encode_pair: thread has no future windows");
  lp.x_f = encode_future(model, fut, fut_len);
  return lp;
}

/// Joint training of both encoders and the decoder by masked reconstruction
/// MSE. Minibatch Adam; one loss-history entry per epoch (mean batch loss).
inline AutoencoderModel train_autoencoder(const ProfileBatch& batch, std::size_t epochs,
                                          double lr, std::uint64_t seed,
                                          std::size_t batch_size = 32) {
  std::size_t usable = 0;
  for (auto len : batch.true_len) {
    if (len > 0) ++usable;
  }
  if (usable < 2) throw TrainingError("train_autoencoder: need >= 2 nonempty profiles");

  const std::size_t delta = batch.delta;
  AutoencoderModel model =
      AutoencoderModel::init(delta, batch.h_len + delta, batch.canvas() + delta, seed);
  auto params = model.parameters();
  AdamState adam = AdamState::init(params);
  Rng order_rng = Rng(seed).split("seqae_order");

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    if (batch.true_len[r] > 0) rows.push_back(r);
  }

  const std::size_t canvas = model.canvas();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    order_rng.shuffle(rows);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, rows.size());
      Tape t;
      seq::EncoderValues eh = seq::lift(t, model.enc_h);
      seq::EncoderValues ef = seq::lift(t, model.enc_f);
      Value dw1 = t.param(model.dec_w1), db1 = t.param(model.dec_b1);
      Value dw2 = t.param(model.dec_w2), db2 = t.param(model.dec_b2);
      std::vector<Value> losses;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t r = rows[i];
        const std::size_t len = batch.true_len[r];
        std::vector<double> full(canvas);
        Tensor target = Tensor::zeros({canvas});
        Tensor mask = Tensor::zeros({canvas});
        for (std::size_t k = 0; k < canvas; ++k) {
          full[k] = batch.windows.at(r, k);
          target.data[k] = k < len ? full[k] : 0.0;
          mask.data[k] = k < len ? 1.0 : 0.0;
        }
        std::vector<double> hist(full.begin(),
                                 full.begin() + static_cast<std::ptrdiff_t>(model.hist_len()));
        std::vector<double> fut(full.begin() + static_cast<std::ptrdiff_t>(model.hist_len()),
                                full.end());
        Tensor hcol = seq::window_column(hist, model.hist_len(), std::min(len, model.hist_len()),
                                         static_cast<double>(delta));
        const std::size_t fut_len = len > model.hist_len() ? len - model.hist_len() : 0;
        Tensor fcol = seq::window_column(fut, model.future_len(), fut_len,
                                         static_cast<double>(delta));
        Value xh = seq::encode(t, eh, t.constant(hcol));
        Value xf = seq::encode(t, ef, t.constant(fcol));
        Value recon = seq::decode_value(t, t.concat({xh, xf}), dw1, db1, dw2, db2,
                                        static_cast<double>(delta));
        losses.push_back(t.masked_mse(recon, target, mask));
      }
      Value loss = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i) loss = t.add(loss, losses[i]);
      loss = t.scale(loss, 1.0 / static_cast<double>(losses.size()));
      std::vector<Value> pv = seq::values_of(eh);
      for (Value v : seq::values_of(ef)) pv.push_back(v);
      pv.push_back(dw1);
      pv.push_back(db1);
      pv.push_back(dw2);
      pv.push_back(db2);
      auto grads = t.gradients(loss, pv);
      adam_step(params, grads, adam, lr);
      epoch_loss += t.val(loss).data[0];
      ++batches;
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(batches));
  }
  return model;
}

/// Masked reconstruction RMSE over real positions of a batch.
inline double reconstruction_rmse(const AutoencoderModel& model, const ProfileBatch& batch) {
  double se = 0.0;
  double count = 0.0;
  const std::size_t canvas = model.canvas();
  for (std::size_t r = 0; r < batch.size(); ++r) {
    if (batch.true_len[r] == 0) continue;
    LatentPair lp = encode_pair(model, batch, r);
    std::vector<double> joint = lp.x_h;
    joint.insert(joint.end(), lp.x_f.begin(), lp.x_f.end());
    std::vector<double> recon = decode(model, joint);
    for (std::size_t k = 0; k < std::min(batch.true_len[r], canvas); ++k) {
      const double d = recon[k] - batch.windows.at(r, k);
      se += d * d;
      count += 1.0;
    }
  }
  if (count == 0.0) throw DataError("reconstruction_rmse: empty batch");
  return std::sqrt(se / count);
}

}  // namespace hif
