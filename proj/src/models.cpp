#include "seqadv/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "seqadv/errors.hpp"

namespace seqadv::models {

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::ff:
      return "ff";
    case ModelKind::rnn:
      return "rnn";
    case ModelKind::rnn_gan:
      return "rnn-gan";
    case ModelKind::ctx_rnn_gan:
      return "ctx-rnn-gan";
  }
  return "rnn";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "ff") return ModelKind::ff;
  if (name == "rnn") return ModelKind::rnn;
  if (name == "rnn-gan" || name == "rnn_gan") return ModelKind::rnn_gan;
  if (name == "ctx-rnn-gan" || name == "ctx_rnn_gan") return ModelKind::ctx_rnn_gan;
  throw UsageError("unknown model kind: " + name);
}

Model init_model(const TrainConfig& cfg, features::FeaturePipeline pipeline) {
  Model m;
  m.kind = cfg.kind;
  m.cfg = cfg;
  m.pipeline = std::move(pipeline);
  const std::size_t width = m.pipeline.spec.width;
  const nn::Act head_act =
      m.pipeline.spec.kind == features::FeatureKind::raw ? nn::Act::sigmoid : nn::Act::linear;

  Rng root(cfg.seed);
  Rng g_init = root.stream("g_init");
  if (cfg.kind == ModelKind::ff) {
    m.ff.l1 = nn::init_dense(cfg.ff_hidden, 4 * width, g_init);
    m.ff.l2 = nn::init_dense(cfg.ff_hidden, cfg.ff_hidden, g_init);
    m.ff.head = nn::init_dense(width, cfg.ff_hidden, g_init);
    m.ff.head_act = head_act;
  } else {
    m.gen.gru = nn::init_gru(cfg.gen_layers, cfg.gen_hidden, width, g_init);
    m.gen.head = nn::init_dense(width, cfg.gen_hidden, g_init);
    m.gen.head_act = head_act;
  }

  Rng d_init = root.stream("d_init");
  if (cfg.kind == ModelKind::ctx_rnn_gan) {
    m.d_ctx.gru = nn::init_gru(1, cfg.dis_hidden, width, d_init);
    m.d_ctx.readout = nn::init_dense(1, cfg.dis_hidden, d_init);
  } else if (cfg.kind == ModelKind::rnn_gan) {
    m.d_mlp.l1 = nn::init_dense(cfg.mlp_hidden, width, d_init);
    m.d_mlp.l2 = nn::init_dense(1, cfg.mlp_hidden, d_init);
  }
  return m;
}

std::vector<Tensor> rnn_forward(const std::vector<Tensor>& xs, const GeneratorModel& g) {
  std::vector<Tensor> hidden = nn::gru_sequence(xs, g.gru);
  std::vector<Tensor> ys;
  ys.reserve(hidden.size());
  for (const Tensor& h : hidden) ys.push_back(nn::dense_forward(h, g.head, g.head_act));
  return ys;
}

Tensor ff_predict_cat(const Tensor& concatenated, const FfModel& f) {
  Tensor h1 = nn::dense_forward(concatenated, f.l1, nn::Act::relu);
  Tensor h2 = nn::dense_forward(h1, f.l2, nn::Act::relu);
  return nn::dense_forward(h2, f.head, f.head_act);
}

Tensor ff_predict(const std::vector<Tensor>& four_frames, const FfModel& f) {
  if (four_frames.size() != 4)
    throw ShapeError("ff_predict: expected exactly 4 input frames, got " +
                     std::to_string(four_frames.size()));
  std::size_t total = 0;
  for (const Tensor& t : four_frames) total += t.size();
  Tensor cat(Shape{total});
  std::size_t off = 0;
  for (const Tensor& t : four_frames) {
    std::copy(t.values().begin(), t.values().end(), cat.data() + off);
    off += t.size();
  }
  return ff_predict_cat(cat, f);
}

Tensor d_score_prefix(const ContextDiscriminator& d, const std::vector<Tensor>& context,
                      const Tensor& candidate) {
  std::vector<Tensor> xs = context;
  xs.push_back(candidate);
  std::vector<Tensor> hs = nn::gru_sequence(xs, d.gru);
  return nn::dense_forward(hs.back(), d.readout, nn::Act::sigmoid);
}

BranchScores d_branch_eval(const ContextDiscriminator& d, const std::vector<Tensor>& xs,
                           const std::vector<Tensor>& ys) {
  if (xs.size() < 2) throw ShapeError("d_branch_eval: need at least 2 timesteps");
  if (ys.size() + 1 < xs.size())
    throw ShapeError("d_branch_eval: expected " + std::to_string(xs.size() - 1) +
                     " generated frames, got " + std::to_string(ys.size()));
  const nn::GruLayerParams& layer = d.gru.layers[0];
  const std::size_t hidden = layer.uz.extent(0);

  // Shared prefix pass over the real sequence, keeping every hidden state.
  Shape hs = xs[0].rank() == 2 ? Shape{xs[0].extent(0), hidden} : Shape{hidden};
  std::vector<Tensor> h;
  h.reserve(xs.size() + 1);
  h.emplace_back(hs, 0.0);
  for (const Tensor& x : xs) h.push_back(nn::gru_step(x, h.back(), layer));

  BranchScores out;
  for (std::size_t t = 1; t < xs.size(); ++t) {
    // Real candidate x_{t+1}: its score is the readout at step t+1.
    out.real.push_back(nn::dense_forward(h[t + 1], d.readout, nn::Act::sigmoid));
    // Fake candidate y_t: branch one step off the shared prefix state h_t.
    Tensor branched = nn::gru_step(ys[t - 1], h[t], layer);
    out.fake.push_back(nn::dense_forward(branched, d.readout, nn::Act::sigmoid));
  }
  return out;
}

namespace {

std::vector<Tensor> generator_params(Model& m) {
  std::vector<Tensor> out;
  if (m.kind == ModelKind::ff) {
    for (const nn::DenseParams* p : {&m.ff.l1, &m.ff.l2, &m.ff.head}) {
      out.push_back(p->w);
      out.push_back(p->b);
    }
    return out;
  }
  for (auto& l : m.gen.gru.layers)
    for (Tensor* t : {&l.wz, &l.wr, &l.wh, &l.uz, &l.ur, &l.uh, &l.bz, &l.br, &l.bh})
      out.push_back(*t);
  out.push_back(m.gen.head.w);
  out.push_back(m.gen.head.b);
  return out;
}

std::vector<Tensor> discriminator_params(Model& m) {
  std::vector<Tensor> out;
  if (m.kind == ModelKind::ctx_rnn_gan) {
    for (auto& l : m.d_ctx.gru.layers)
      for (Tensor* t : {&l.wz, &l.wr, &l.wh, &l.uz, &l.ur, &l.uh, &l.bz, &l.br, &l.bh})
        out.push_back(*t);
    out.push_back(m.d_ctx.readout.w);
    out.push_back(m.d_ctx.readout.b);
  } else if (m.kind == ModelKind::rnn_gan) {
    for (const nn::DenseParams* p : {&m.d_mlp.l1, &m.d_mlp.l2}) {
      out.push_back(p->w);
      out.push_back(p->b);
    }
  }
  return out;
}

void inject_snapshot(objectives::Adam& opt, const AdamSnapshot& snap, std::uint64_t step) {
  if (snap.empty()) return;
  if (snap.m.size() != opt.params().size())
    throw DataError("optimizer snapshot does not match parameter count");
  for (std::size_t i = 0; i < snap.m.size(); ++i) {
    opt.moment1(i) = snap.m[i];
    opt.moment2(i) = snap.v[i];
  }
  opt.beta1_pow() = snap.beta1_pow;
  opt.beta2_pow() = snap.beta2_pow;
  opt.set_steps(step);
}

AdamSnapshot extract_snapshot(objectives::Adam& opt) {
  AdamSnapshot snap;
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    snap.m.push_back(opt.moment1(i));
    snap.v.push_back(opt.moment2(i));
  }
  snap.beta1_pow = opt.beta1_pow();
  snap.beta2_pow = opt.beta2_pow();
  return snap;
}

// Temporarily drops D parameters out of the gradient flow; restored on exit.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<Tensor> params) : params_(std::move(params)) {
    for (Tensor& t : params_) t.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (Tensor& t : params_) t.set_requires_grad(true);
  }

 private:
  std::vector<Tensor> params_;
};

Tensor batch_tensor(const std::vector<FeatureSequence>& data, const std::vector<std::size_t>& idx,
                    std::size_t t, std::size_t width) {
  Tensor out(Shape{idx.size(), width});
  for (std::size_t b = 0; b < idx.size(); ++b)
    std::copy(data[idx[b]][t].begin(), data[idx[b]][t].end(), out.data() + b * width);
  return out;
}

Tensor mlp_score(const Tensor& x, const MlpDiscriminator& d) {
  return nn::dense_forward(nn::dense_forward(x, d.l1, nn::Act::relu), d.l2, nn::Act::sigmoid);
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw NumericError(std::string(what) + " is not finite; aborting at the last finite step");
}

}  // namespace

std::vector<LossTraceRow> train_model(Model& m, const std::vector<FeatureSequence>& data,
                                      const TrainConfig& cfg) {
  if (data.empty()) throw UsageError("train_model: empty dataset");
  const std::size_t seq_len = data[0].size();
  const std::size_t width = m.pipeline.spec.width;
  const std::size_t min_len = m.kind == ModelKind::ff ? 5 : 2;
  if (seq_len < min_len) throw UsageError("train_model: sequences too short for this model");
  for (const FeatureSequence& s : data) {
    if (s.size() != seq_len) throw ShapeError("train_model: ragged sequence lengths");
    for (const auto& v : s)
      if (v.size() != width)
        throw ShapeError("train_model: feature width " + std::to_string(v.size()) +
                         " does not match model width " + std::to_string(width));
  }
  const std::size_t batch = std::min<std::size_t>(cfg.batch, data.size());
  const std::size_t batches_per_epoch = data.size() / batch;
  objectives::validate(cfg.weights);
  if ((m.kind == ModelKind::ff || m.kind == ModelKind::rnn) && cfg.weights.lambda_adv != 0.0)
    throw UsageError("adversarial weight requires a GAN model");
  if (cfg.kind != m.kind) throw UsageError("config model kind does not match the checkpoint");
  m.cfg = cfg;

  objectives::Adam opt_g(generator_params(m), objectives::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  inject_snapshot(opt_g, m.opt_g, m.step);
  std::vector<Tensor> d_params = discriminator_params(m);
  objectives::Adam opt_d(d_params, objectives::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  inject_snapshot(opt_d, m.opt_d, m.step);

  const Rng root(cfg.seed);
  const Rng order_root = root.stream("order");
  std::vector<std::size_t> order(data.size());
  std::uint64_t order_epoch = ~0ull;
  auto order_for_epoch = [&](std::uint64_t epoch) {
    if (order_epoch == epoch) return;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = order_root.stream(epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.uniform_int(i)]);
    order_epoch = epoch;
  };

  const bool adversarial =
      (m.kind == ModelKind::rnn_gan || m.kind == ModelKind::ctx_rnn_gan);
  std::vector<LossTraceRow> trace;
  trace.reserve(cfg.steps > m.step ? cfg.steps - m.step : 0);

  for (std::uint64_t step = m.step; step < cfg.steps; ++step) {
    order_for_epoch(step / batches_per_epoch);
    const std::size_t bi = step % batches_per_epoch;
    std::vector<std::size_t> idx(order.begin() + static_cast<long>(bi * batch),
                                 order.begin() + static_cast<long>((bi + 1) * batch));

    std::vector<Tensor> xs;
    xs.reserve(seq_len);
    for (std::size_t t = 0; t < seq_len; ++t) xs.push_back(batch_tensor(data, idx, t, width));

    LossTraceRow row{step + 1, 0.0, 0.0, 0.0, 0.0};

    if (m.kind == ModelKind::ff) {
      const std::size_t windows = seq_len - 4;
      const std::size_t w0 = step % windows;
      Tensor cat(Shape{batch, 4 * width});
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < 4; ++t)
          std::copy(data[idx[b]][w0 + t].begin(), data[idx[b]][w0 + t].end(),
                    cat.data() + b * 4 * width + t * width);
      RecordScope scope;
      Tensor pred = ff_predict_cat(cat, m.ff);
      Tensor loss = objectives::lp_loss({pred}, {xs[w0 + 4]}, cfg.weights.p);
      row.g_lp = loss.item();
      row.g_total = row.g_lp;
      check_finite(row.g_total, "ff loss");
      opt_g.zero_grad();
      backward(loss);
      opt_g.step();
      trace.push_back(row);
      m.step = step + 1;
      continue;
    }

    // Discriminator update on detached generator outputs.
    if (adversarial) {
      std::vector<Tensor> ys_detached;
      {
        std::vector<Tensor> ys = rnn_forward(xs, m.gen);  // no active record: pure forward
        for (std::size_t t = 0; t + 1 < seq_len; ++t) ys_detached.push_back(ys[t]);
      }
      RecordScope scope;
      Tensor d_loss;
      if (m.kind == ModelKind::ctx_rnn_gan) {
        BranchScores s = d_branch_eval(m.d_ctx, xs, ys_detached);
        d_loss = objectives::d_loss_context(s.real, s.fake);
      } else {
        std::vector<Tensor> real_scores, fake_scores;
        for (std::size_t t = 0; t + 1 < seq_len; ++t) {
          real_scores.push_back(mlp_score(xs[t + 1], m.d_mlp));
          fake_scores.push_back(mlp_score(ys_detached[t], m.d_mlp));
        }
        d_loss = objectives::d_loss_context(real_scores, fake_scores);
      }
      row.d_loss = d_loss.item();
      check_finite(row.d_loss, "discriminator loss");
      opt_d.zero_grad();
      backward(d_loss);
      opt_d.step();
    }

    // Generator update; the discriminator is frozen while gradients flow.
    {
      RecordScope scope;
      FreezeGuard freeze(d_params);
      std::vector<Tensor> ys_all = rnn_forward(xs, m.gen);
      std::vector<Tensor> ys(ys_all.begin(), ys_all.end() - 1);
      std::vector<Tensor> targets(xs.begin() + 1, xs.end());

      Tensor total;
      if (adversarial && cfg.weights.lambda_adv > 0.0) {
        std::vector<Tensor> fake_scores;
        if (m.kind == ModelKind::ctx_rnn_gan) {
          fake_scores = d_branch_eval(m.d_ctx, xs, ys).fake;
        } else {
          for (const Tensor& y : ys) fake_scores.push_back(mlp_score(y, m.d_mlp));
        }
        Tensor adv = Tensor::scalar(0.0);
        for (const Tensor& s : fake_scores) adv = add(adv, objectives::bce(s, 1));
        Tensor lp = objectives::lp_loss(ys, targets, cfg.weights.p);
        row.g_adv = adv.item();
        row.g_lp = lp.item();
        total = add(scale(adv, cfg.weights.lambda_adv), scale(lp, cfg.weights.lambda_p));
      } else {
        Tensor lp = objectives::lp_loss(ys, targets, cfg.weights.p);
        row.g_lp = lp.item();
        total = scale(lp, cfg.weights.lambda_p);
      }
      row.g_total = total.item();
      check_finite(row.g_total, "generator loss");
      opt_g.zero_grad();
      backward(total);
      opt_g.step();
    }

    trace.push_back(row);
    m.step = step + 1;
  }

  m.opt_g = extract_snapshot(opt_g);
  if (adversarial) m.opt_d = extract_snapshot(opt_d);
  return trace;
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[7] = {'C', 'T', 'X', 'G', 'A', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw DataError("corrupt checkpoint: truncated payload");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw DataError("corrupt checkpoint: truncated payload");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void collect_dense(std::vector<NamedTensor>& out, const std::string& prefix,
                   const nn::DenseParams& p) {
  out.push_back({prefix + ".w", p.w.shape(), p.w.values()});
  out.push_back({prefix + ".b", p.b.shape(), p.b.values()});
}

void collect_gru(std::vector<NamedTensor>& out, const std::string& prefix,
                 const nn::GruParams& g) {
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const auto& lay = g.layers[l];
    const std::string base = prefix + ".l" + std::to_string(l) + ".";
    const char* names[9] = {"wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh"};
    const Tensor* ts[9] = {&lay.wz, &lay.wr, &lay.wh, &lay.uz, &lay.ur,
                           &lay.uh, &lay.bz, &lay.br, &lay.bh};
    for (int i = 0; i < 9; ++i) out.push_back({base + names[i], ts[i]->shape(), ts[i]->values()});
  }
}

void collect_cnn(std::vector<NamedTensor>& out, const std::string& prefix,
                 const nn::ShallowCnnParams& p) {
  out.push_back({prefix + ".k1", p.k1.shape(), p.k1.values()});
  out.push_back({prefix + ".b1", p.b1.shape(), p.b1.values()});
  out.push_back({prefix + ".k2", p.k2.shape(), p.k2.values()});
  out.push_back({prefix + ".b2", p.b2.shape(), p.b2.values()});
  out.push_back({prefix + ".k3", p.k3.shape(), p.k3.values()});
  out.push_back({prefix + ".b3", p.b3.shape(), p.b3.values()});
  collect_dense(out, prefix + ".feat", p.feat);
  collect_dense(out, prefix + ".label", p.label);
}

void collect_snapshot(std::vector<NamedTensor>& out, const std::string& prefix,
                      const AdamSnapshot& s) {
  if (s.empty()) return;
  out.push_back({prefix + ".meta", Shape{2}, {s.beta1_pow, s.beta2_pow}});
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.push_back({prefix + ".m" + std::to_string(i), Shape{s.m[i].size()}, s.m[i]});
    out.push_back({prefix + ".v" + std::to_string(i), Shape{s.v[i].size()}, s.v[i]});
  }
}

std::vector<NamedTensor> collect_tensors(const Model& m) {
  std::vector<NamedTensor> out;
  if (m.kind == ModelKind::ff) {
    collect_dense(out, "ff.l1", m.ff.l1);
    collect_dense(out, "ff.l2", m.ff.l2);
    collect_dense(out, "ff.head", m.ff.head);
  } else {
    collect_gru(out, "gen.gru", m.gen.gru);
    collect_dense(out, "gen.head", m.gen.head);
  }
  if (m.kind == ModelKind::ctx_rnn_gan) {
    collect_gru(out, "dctx.gru", m.d_ctx.gru);
    collect_dense(out, "dctx.readout", m.d_ctx.readout);
  } else if (m.kind == ModelKind::rnn_gan) {
    collect_dense(out, "dmlp.l1", m.d_mlp.l1);
    collect_dense(out, "dmlp.l2", m.d_mlp.l2);
  }
  switch (m.pipeline.spec.kind) {
    case features::FeatureKind::autoencoder:
      collect_dense(out, "feat.ae.enc1", m.pipeline.ae.enc1);
      collect_dense(out, "feat.ae.enc2", m.pipeline.ae.enc2);
      collect_dense(out, "feat.ae.dec1", m.pipeline.ae.dec1);
      collect_dense(out, "feat.ae.dec2", m.pipeline.ae.dec2);
      break;
    case features::FeatureKind::shallow_cnn:
      collect_cnn(out, "feat.cnn", m.pipeline.cnn);
      break;
    case features::FeatureKind::siamese:
      collect_cnn(out, "feat.cnn", m.pipeline.cnn);
      collect_dense(out, "feat.siam", m.pipeline.siamese_head);
      break;
    default:
      break;
  }
  // Training config rides in the table so checkpoints are self-describing.
  out.push_back({"cfg", Shape{12},
                 {static_cast<double>(m.cfg.gen_layers), static_cast<double>(m.cfg.gen_hidden),
                  static_cast<double>(m.cfg.dis_hidden), static_cast<double>(m.cfg.mlp_hidden),
                  static_cast<double>(m.cfg.ff_hidden), m.cfg.weights.lambda_adv,
                  m.cfg.weights.lambda_p, static_cast<double>(m.cfg.weights.p), m.cfg.lr,
                  static_cast<double>(m.cfg.batch), static_cast<double>(m.cfg.steps),
                  static_cast<double>(m.cfg.seed)}});
  collect_snapshot(out, "opt.g", m.opt_g);
  collect_snapshot(out, "opt.d", m.opt_d);
  return out;
}

class TensorTable {
 public:
  explicit TensorTable(std::vector<NamedTensor> list) : list_(std::move(list)) {}

  const NamedTensor* find(const std::string& name) const {
    for (const NamedTensor& t : list_)
      if (t.name == name) return &t;
    return nullptr;
  }

  Tensor tensor(const std::string& name, bool requires_grad = true) const {
    const NamedTensor* t = find(name);
    if (!t) throw DataError("corrupt checkpoint: missing tensor '" + name + "'");
    Tensor out(t->shape, t->data);
    out.set_requires_grad(requires_grad);
    return out;
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  const std::vector<NamedTensor>& list() const { return list_; }

 private:
  std::vector<NamedTensor> list_;
};

nn::DenseParams load_dense(const TensorTable& t, const std::string& prefix) {
  return {t.tensor(prefix + ".w"), t.tensor(prefix + ".b")};
}

nn::GruParams load_gru(const TensorTable& t, const std::string& prefix) {
  nn::GruParams g;
  for (std::size_t l = 0; t.has(prefix + ".l" + std::to_string(l) + ".wz"); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l) + ".";
    nn::GruLayerParams lay;
    lay.wz = t.tensor(base + "wz");
    lay.wr = t.tensor(base + "wr");
    lay.wh = t.tensor(base + "wh");
    lay.uz = t.tensor(base + "uz");
    lay.ur = t.tensor(base + "ur");
    lay.uh = t.tensor(base + "uh");
    lay.bz = t.tensor(base + "bz");
    lay.br = t.tensor(base + "br");
    lay.bh = t.tensor(base + "bh");
    g.layers.push_back(std::move(lay));
  }
  if (g.layers.empty()) throw DataError("corrupt checkpoint: no GRU layers under " + prefix);
  return g;
}

nn::ShallowCnnParams load_cnn(const TensorTable& t, const std::string& prefix) {
  nn::ShallowCnnParams p;
  p.k1 = t.tensor(prefix + ".k1");
  p.b1 = t.tensor(prefix + ".b1");
  p.k2 = t.tensor(prefix + ".k2");
  p.b2 = t.tensor(prefix + ".b2");
  p.k3 = t.tensor(prefix + ".k3");
  p.b3 = t.tensor(prefix + ".b3");
  p.feat = load_dense(t, prefix + ".feat");
  p.label = load_dense(t, prefix + ".label");
  p.cfg.stages[0] = p.k1.extent(0);
  p.cfg.stages[1] = p.k2.extent(0);
  p.cfg.stages[2] = p.k3.extent(0);
  p.cfg.kernel = p.k1.extent(2);
  p.cfg.penultimate = p.feat.w.extent(0);
  p.cfg.labels = p.label.w.extent(0);
  return p;
}

AdamSnapshot load_snapshot(const TensorTable& t, const std::string& prefix) {
  AdamSnapshot s;
  if (!t.has(prefix + ".meta")) return s;
  const NamedTensor* meta = t.find(prefix + ".meta");
  s.beta1_pow = meta->data[0];
  s.beta2_pow = meta->data[1];
  for (std::size_t i = 0; t.has(prefix + ".m" + std::to_string(i)); ++i) {
    s.m.push_back(t.find(prefix + ".m" + std::to_string(i))->data);
    s.v.push_back(t.find(prefix + ".v" + std::to_string(i))->data);
  }
  return s;
}

}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  out.put(static_cast<char>(m.kind));
  out.put(static_cast<char>(m.pipeline.spec.kind));
  put_u32(out, static_cast<std::uint32_t>(m.pipeline.spec.width));
  out.put(m.pipeline.spec.unit_l2 ? 1 : 0);

  const std::vector<NamedTensor> tensors = collect_tensors(m);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t e : t.shape) put_u64(out, e);
    for (double v : t.data) put_f64(out, v);
  }

  // rng state blob: the root stream state for the configured seed.
  const auto state = Rng(m.cfg.seed).state();
  put_u32(out, 32);
  for (std::uint64_t word : state) put_u64(out, word);

  put_u64(out, m.step);
  if (!out) throw DataError("short checkpoint write: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path.string());
  char magic[7];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint: " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  Model m;
  int kind_byte = in.get();
  int feat_byte = in.get();
  if (kind_byte < 0 || kind_byte > 3 || feat_byte < 0 || feat_byte > 4)
    throw DataError("corrupt checkpoint: bad kind tags");
  m.kind = static_cast<ModelKind>(kind_byte);
  features::FeatureSpec spec;
  spec.kind = static_cast<features::FeatureKind>(feat_byte);
  spec.width = get_u32(in);
  spec.unit_l2 = in.get() != 0;

  const std::uint32_t count = get_u32(in);
  std::vector<NamedTensor> list;
  list.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_len = get_u32(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len))
      throw DataError("corrupt checkpoint: truncated payload");
    const std::uint32_t rank = get_u32(in);
    if (rank > 8) throw DataError("corrupt checkpoint: absurd tensor rank");
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(get_u64(in));
      numel *= t.shape.back();
    }
    t.data.resize(numel);
    for (std::size_t j = 0; j < numel; ++j) t.data[j] = get_f64(in);
    list.push_back(std::move(t));
  }
  TensorTable table(std::move(list));

  const std::uint32_t blob_len = get_u32(in);
  for (std::uint32_t i = 0; i < blob_len; ++i)
    if (in.get() == EOF) throw DataError("corrupt checkpoint: truncated payload");
  m.step = get_u64(in);

  const NamedTensor* cfg = table.find("cfg");
  if (!cfg || cfg->data.size() != 12) throw DataError("corrupt checkpoint: missing config");
  m.cfg.kind = m.kind;
  m.cfg.gen_layers = static_cast<std::size_t>(cfg->data[0]);
  m.cfg.gen_hidden = static_cast<std::size_t>(cfg->data[1]);
  m.cfg.dis_hidden = static_cast<std::size_t>(cfg->data[2]);
  m.cfg.mlp_hidden = static_cast<std::size_t>(cfg->data[3]);
  m.cfg.ff_hidden = static_cast<std::size_t>(cfg->data[4]);
  m.cfg.weights.lambda_adv = cfg->data[5];
  m.cfg.weights.lambda_p = cfg->data[6];
  m.cfg.weights.p = static_cast<int>(cfg->data[7]);
  m.cfg.lr = cfg->data[8];
  m.cfg.batch = static_cast<std::size_t>(cfg->data[9]);
  m.cfg.steps = static_cast<std::uint64_t>(cfg->data[10]);
  m.cfg.seed = static_cast<std::uint64_t>(cfg->data[11]);

  const nn::Act head_act =
      spec.kind == features::FeatureKind::raw ? nn::Act::sigmoid : nn::Act::linear;
  if (m.kind == ModelKind::ff) {
    m.ff.l1 = load_dense(table, "ff.l1");
    m.ff.l2 = load_dense(table, "ff.l2");
    m.ff.head = load_dense(table, "ff.head");
    m.ff.head_act = head_act;
  } else {
    m.gen.gru = load_gru(table, "gen.gru");
    m.gen.head = load_dense(table, "gen.head");
    m.gen.head_act = head_act;
  }
  if (m.kind == ModelKind::ctx_rnn_gan) {
    m.d_ctx.gru = load_gru(table, "dctx.gru");
    m.d_ctx.readout = load_dense(table, "dctx.readout");
  } else if (m.kind == ModelKind::rnn_gan) {
    m.d_mlp.l1 = load_dense(table, "dmlp.l1");
    m.d_mlp.l2 = load_dense(table, "dmlp.l2");
  }

  switch (spec.kind) {
    case features::FeatureKind::raw:
      m.pipeline = features::FeaturePipeline::make_raw(
          static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(spec.width)))));
      break;
    case features::FeatureKind::hog:
      m.pipeline = features::FeaturePipeline::make_hog();
      break;
    case features::FeatureKind::autoencoder: {
      features::AutoencoderParams ae;
      ae.enc1 = load_dense(table, "feat.ae.enc1");
      ae.enc2 = load_dense(table, "feat.ae.enc2");
      ae.dec1 = load_dense(table, "feat.ae.dec1");
      ae.dec2 = load_dense(table, "feat.ae.dec2");
      ae.cfg.hidden = ae.enc1.w.extent(0);
      ae.cfg.bottleneck = ae.enc2.w.extent(0);
      ae.cfg.input = static_cast<std::size_t>(
          std::lround(std::sqrt(static_cast<double>(ae.enc1.w.extent(1)))));
      m.pipeline = features::FeaturePipeline::make_autoencoder(std::move(ae));
      break;
    }
    case features::FeatureKind::shallow_cnn:
      m.pipeline = features::FeaturePipeline::make_shallow_cnn(load_cnn(table, "feat.cnn"));
      break;
    case features::FeatureKind::siamese: {
      features::SiameseParams sp;
      sp.trunk = load_cnn(table, "feat.cnn");
      sp.embed = load_dense(table, "feat.siam");
      m.pipeline = features::FeaturePipeline::make_siamese(std::move(sp));
      break;
    }
  }
  m.pipeline.spec = spec;

  m.opt_g = load_snapshot(table, "opt.g");
  m.opt_d = load_snapshot(table, "opt.d");
  return m;
}

std::string generator_fingerprint(const Model& m) {
  std::string out;
  Model& mm = const_cast<Model&>(m);
  for (const Tensor& t : generator_params(mm)) {
    const char* bytes = reinterpret_cast<const char*>(t.data());
    out.append(bytes, t.size() * sizeof(double));
  }
  return out;
}

}  // namespace seqadv::models
