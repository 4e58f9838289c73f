#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "hif/errors.hpp"
#include "hif/forecaster.hpp"
#include "hif/tensor.hpp"

namespace hif {

// Checkpoint container: a fixed magic, a format version, then named sections.
// All integers little-endian; doubles stored as their IEEE-754 bit patterns,
// so a save/load round trip is bit-exact. Readers look sections up by name
// and ignore unknown ones, which leaves room to add sections later.

namespace ckpt {

constexpr char kMagic[8] = {'H', 'I', 'F', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) u64(d);
    for (double v : t.data) f64(v);
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::vector<char> take() { return std::move(bytes_); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
    pos_ += len;
    return s;
  }
  std::vector<char> raw(std::size_t n) {
    need(n);
    std::vector<char> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                          bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  Tensor tensor() {
    const std::uint32_t nd = u32();
    std::vector<std::size_t> shape(nd);
    for (auto& d : shape) d = static_cast<std::size_t>(u64());
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = f64();
    return t;
  }
  std::vector<double> doubles() {
    std::vector<double> v(static_cast<std::size_t>(u64()));
    for (auto& x : v) x = f64();
    return v;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint: truncated section payload");
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

using SectionMap = std::map<std::string, std::vector<char>>;

inline void write_container(const std::string& path, std::uint32_t version,
                            const SectionMap& sections) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
  Writer head;
  head.u32(version);
  head.u32(static_cast<std::uint32_t>(sections.size()));
  out.write(kMagic, sizeof(kMagic));
  out.write(head.bytes().data(), static_cast<std::streamsize>(head.bytes().size()));
  for (const auto& [name, payload] : sections) {
    Writer sh;
    sh.str(name);
    sh.u64(payload.size());
    out.write(sh.bytes().data(), static_cast<std::streamsize>(sh.bytes().size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw DataError("checkpoint: write failed: " + path);
}

inline SectionMap read_container(const std::string& path, std::uint32_t expect_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path);
  std::vector<char> all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (all.size() < sizeof(kMagic) || std::memcmp(all.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  Reader r(std::vector<char>(all.begin() + sizeof(kMagic), all.end()));
  const std::uint32_t version = r.u32();
  if (version != expect_version) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  SectionMap sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::size_t len = static_cast<std::size_t>(r.u64());
    sections[name] = r.raw(len);
  }
  return sections;
}

inline void put_tensors(Writer& w, const std::vector<const Tensor*>& tensors) {
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) w.tensor(*t);
}

inline void get_tensors(Reader& r, const std::vector<Tensor*>& tensors) {
  const std::uint32_t count = r.u32();
  if (count != tensors.size()) throw DataError("checkpoint: tensor count mismatch in section");
  for (auto* t : tensors) *t = r.tensor();
}

}  // namespace ckpt

inline void save_checkpoint(const std::string& path, const PipelineModel& model) {
  ckpt::SectionMap sections;

  {
    ckpt::Writer w;
    const auto& c = model.config;
    w.u64(c.delta);
    w.f64(c.w);
    w.u64(c.t_h);
    w.u64(c.t_f);
    w.u64(c.n);
    w.u64(c.j);
    w.f64(c.lr);
    w.f64(c.split);
    w.u64(c.vocab);
    w.u64(c.node_epochs);
    w.u64(c.node_sample_cap);
    w.u64(c.ae_epochs);
    w.u64(c.prior_epochs);
    w.u64(c.predictor_epochs);
    w.f64(c.node_l2);
    w.u32(c.fine_tune_tree ? 1 : 0);
    w.u64(c.seed);
    w.u32((model.node_ready ? 1u : 0u) | (model.ae_ready ? 2u : 0u) |
          (model.gmm_ready ? 4u : 0u) | (model.prior_ready ? 8u : 0u) |
          (model.predictor_ready ? 16u : 0u));
    sections["config"] = w.take();
  }
  {
    ckpt::Writer w;
    w.u64(model.node_embedder.vocab);
    w.u64(model.node_embedder.seed);
    auto& m = const_cast<NodeEmbedderModel&>(model.node_embedder);
    std::vector<const Tensor*> ts;
    for (auto* t : m.parameters()) ts.push_back(t);
    ckpt::put_tensors(w, ts);
    w.doubles(model.node_embedder.loss_history);
    sections["node_embedder"] = w.take();
  }
  {
    ckpt::Writer w;
    w.tensor(model.tree_encoder.w0);
    w.tensor(model.tree_encoder.w1);
    sections["tree_encoder"] = w.take();
  }
  {
    ckpt::Writer w;
    const auto& a = model.autoencoder;
    w.u64(a.delta);
    w.u64(a.t_h);
    w.u64(a.n);
    w.u64(a.seed);
    auto& m = const_cast<AutoencoderModel&>(a);
    std::vector<const Tensor*> ts;
    for (auto* t : m.parameters()) ts.push_back(t);
    ckpt::put_tensors(w, ts);
    w.doubles(a.loss_history);
    sections["autoencoder"] = w.take();
  }
  {
    ckpt::Writer w;
    const auto& g = model.clustering;
    w.u64(g.j);
    w.u64(g.dim);
    w.u64(g.seed);
    w.u32(static_cast<std::uint32_t>(g.means.size()));
    for (const auto& t : g.means) w.tensor(t);
    w.u32(static_cast<std::uint32_t>(g.cholesky.size()));
    for (const auto& t : g.cholesky) w.tensor(t);
    w.doubles(g.weights);
    w.doubles(g.loglik_trace);
    sections["clustering"] = w.take();
  }
  {
    ckpt::Writer w;
    w.u64(model.prior.input_dim);
    w.u64(model.prior.j);
    w.tensor(model.prior.w1);
    w.tensor(model.prior.b1);
    w.tensor(model.prior.w2);
    w.tensor(model.prior.b2);
    w.doubles(model.prior.loss_history);
    sections["prior"] = w.take();
  }
  {
    ckpt::Writer w;
    auto& m = const_cast<FuturePredictor&>(model.predictor);
    std::vector<const Tensor*> ts;
    for (auto* t : m.parameters()) ts.push_back(t);
    ckpt::put_tensors(w, ts);
    w.doubles(model.predictor.loss_history);
    sections["predictor"] = w.take();
  }

  ckpt::write_container(path, PipelineModel::kFormatVersion, sections);
}

inline PipelineModel load_checkpoint(const std::string& path) {
  ckpt::SectionMap sections = ckpt::read_container(path, PipelineModel::kFormatVersion);
  auto section = [&](const std::string& name) -> ckpt::Reader {
    auto it = sections.find(name);
    if (it == sections.end()) throw DataError("checkpoint: missing section: " + name);
    return ckpt::Reader(it->second);
  };

  PipelineModel model;
  {
    ckpt::Reader r = section("config");
    auto& c = model.config;
    c.delta = static_cast<std::size_t>(r.u64());
    c.w = r.f64();
    c.t_h = static_cast<std::size_t>(r.u64());
    c.t_f = static_cast<std::size_t>(r.u64());
    c.n = static_cast<std::size_t>(r.u64());
    c.j = static_cast<std::size_t>(r.u64());
    c.lr = r.f64();
    c.split = r.f64();
    c.vocab = static_cast<std::size_t>(r.u64());
    c.node_epochs = static_cast<std::size_t>(r.u64());
    c.node_sample_cap = static_cast<std::size_t>(r.u64());
    c.ae_epochs = static_cast<std::size_t>(r.u64());
    c.prior_epochs = static_cast<std::size_t>(r.u64());
    c.predictor_epochs = static_cast<std::size_t>(r.u64());
    c.node_l2 = r.f64();
    c.fine_tune_tree = r.u32() != 0;
    c.seed = r.u64();
    const std::uint32_t flags = r.u32();
    model.node_ready = (flags & 1u) != 0;
    model.ae_ready = (flags & 2u) != 0;
    model.gmm_ready = (flags & 4u) != 0;
    model.prior_ready = (flags & 8u) != 0;
    model.predictor_ready = (flags & 16u) != 0;
  }
  {
    ckpt::Reader r = section("node_embedder");
    const std::size_t vocab = static_cast<std::size_t>(r.u64());
    const std::uint64_t seed = r.u64();
    model.node_embedder = NodeEmbedderModel::init(vocab, seed);
    ckpt::get_tensors(r, model.node_embedder.parameters());
    model.node_embedder.loss_history = r.doubles();
  }
  {
    ckpt::Reader r = section("tree_encoder");
    model.tree_encoder.w0 = r.tensor();
    model.tree_encoder.w1 = r.tensor();
  }
  {
    ckpt::Reader r = section("autoencoder");
    const std::size_t delta = static_cast<std::size_t>(r.u64());
    const std::size_t t_h = static_cast<std::size_t>(r.u64());
    const std::size_t n = static_cast<std::size_t>(r.u64());
    const std::uint64_t seed = r.u64();
    model.autoencoder = AutoencoderModel::init(delta, t_h, n, seed);
    ckpt::get_tensors(r, model.autoencoder.parameters());
    model.autoencoder.loss_history = r.doubles();
  }
  {
    ckpt::Reader r = section("clustering");
    auto& g = model.clustering;
    g.j = static_cast<std::size_t>(r.u64());
    g.dim = static_cast<std::size_t>(r.u64());
    g.seed = r.u64();
    g.means.resize(r.u32());
    for (auto& t : g.means) t = r.tensor();
    g.cholesky.resize(r.u32());
    for (auto& t : g.cholesky) t = r.tensor();
    g.weights = r.doubles();
    g.loglik_trace = r.doubles();
  }
  {
    ckpt::Reader r = section("prior");
    auto& p = model.prior;
    p.input_dim = static_cast<std::size_t>(r.u64());
    p.j = static_cast<std::size_t>(r.u64());
    p.w1 = r.tensor();
    p.b1 = r.tensor();
    p.w2 = r.tensor();
    p.b2 = r.tensor();
    p.loss_history = r.doubles();
  }
  {
    ckpt::Reader r = section("predictor");
    ckpt::get_tensors(r, model.predictor.parameters());
    model.predictor.loss_history = r.doubles();
  }
  return model;
}

}  // namespace hif
