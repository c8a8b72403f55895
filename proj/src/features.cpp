#include "seqadv/features.hpp"

#include <algorithm>
#include <cmath>

#include "seqadv/errors.hpp"
#include "seqadv/objectives.hpp"

namespace seqadv::features {

std::string feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::raw:
      return "raw";
    case FeatureKind::hog:
      return "hog";
    case FeatureKind::autoencoder:
      return "ae";
    case FeatureKind::shallow_cnn:
      return "cnn";
    case FeatureKind::siamese:
      return "siamese";
  }
  return "raw";
}

FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "raw") return FeatureKind::raw;
  if (name == "hog") return FeatureKind::hog;
  if (name == "ae" || name == "autoencoder") return FeatureKind::autoencoder;
  if (name == "cnn" || name == "shallow_cnn") return FeatureKind::shallow_cnn;
  if (name == "siamese") return FeatureKind::siamese;
  throw UsageError("unknown feature kind: " + name);
}

FeatureSpec default_spec(FeatureKind k, std::size_t frame_extent) {
  switch (k) {
    case FeatureKind::raw:
      return {k, frame_extent * frame_extent, false};
    case FeatureKind::hog:
      return {k, hog_width(frame_extent, frame_extent), false};
    case FeatureKind::autoencoder:
      return {k, 64, false};
    case FeatureKind::shallow_cnn:
      return {k, 256, true};
    case FeatureKind::siamese:
      return {k, 128, true};
  }
  return {};
}

std::vector<double> raw_features(const Frame& f) { return f.px; }

std::size_t hog_width(std::size_t h, std::size_t w, const HogConfig& cfg) {
  const std::size_t cy = h / cfg.cell, cx = w / cfg.cell;
  if (cy < cfg.block || cx < cfg.block)
    throw ShapeError("hog: image smaller than one block");
  const std::size_t by = (cy - cfg.block) / cfg.stride + 1;
  const std::size_t bx = (cx - cfg.block) / cfg.stride + 1;
  return by * bx * cfg.block * cfg.block * cfg.bins;
}

std::vector<double> hog_features(const Frame& f, const HogConfig& cfg) {
  const std::size_t h = f.h, w = f.w;
  const std::size_t cy = h / cfg.cell, cx = w / cfg.cell;
  if (cy < cfg.block || cx < cfg.block)
    throw ShapeError("hog: image smaller than one block");

  // Per-cell orientation histograms.
  std::vector<double> hist(cy * cx * cfg.bins, 0.0);
  const double bin_width = 180.0 / static_cast<double>(cfg.bins);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xr = x + 1 < w ? x + 1 : x, xl = x > 0 ? x - 1 : x;
      const std::size_t yd = y + 1 < h ? y + 1 : y, yu = y > 0 ? y - 1 : y;
      const double gx = f.at(y, xr) - f.at(y, xl);
      const double gy = f.at(yd, x) - f.at(yu, x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      constexpr double kPi = 3.14159265358979323846;
      double theta = std::atan2(gy, gx) * 180.0 / kPi;
      if (theta < 0.0) theta += 180.0;
      if (theta >= 180.0) theta -= 180.0;
      const double pos = theta / bin_width;
      const std::size_t b0 = static_cast<std::size_t>(pos) % cfg.bins;
      const double frac = pos - std::floor(pos);
      const std::size_t cell = (y / cfg.cell) * cx + (x / cfg.cell);
      hist[cell * cfg.bins + b0] += mag * (1.0 - frac);
      hist[cell * cfg.bins + (b0 + 1) % cfg.bins] += mag * frac;
    }

  // Block concatenation with L2 normalization.
  const std::size_t by = (cy - cfg.block) / cfg.stride + 1;
  const std::size_t bx = (cx - cfg.block) / cfg.stride + 1;
  std::vector<double> out;
  out.reserve(by * bx * cfg.block * cfg.block * cfg.bins);
  for (std::size_t yb = 0; yb < by; ++yb)
    for (std::size_t xb = 0; xb < bx; ++xb) {
      const std::size_t start = out.size();
      for (std::size_t dy = 0; dy < cfg.block; ++dy)
        for (std::size_t dx = 0; dx < cfg.block; ++dx) {
          const std::size_t cell = (yb * cfg.stride + dy) * cx + xb * cfg.stride + dx;
          for (std::size_t b = 0; b < cfg.bins; ++b) out.push_back(hist[cell * cfg.bins + b]);
        }
      double n2 = 0.0;
      for (std::size_t i = start; i < out.size(); ++i) n2 += out[i] * out[i];
      const double inv = 1.0 / std::sqrt(n2 + cfg.eps * cfg.eps);
      for (std::size_t i = start; i < out.size(); ++i) out[i] *= inv;
    }
  return out;
}

// ---- autoencoder ------------------------------------------------------------------

AutoencoderParams init_autoencoder(const AeConfig& cfg, Rng& rng) {
  AutoencoderParams p;
  p.cfg = cfg;
  const std::size_t n = cfg.input * cfg.input;
  p.enc1 = nn::init_dense(cfg.hidden, n, rng);
  p.enc2 = nn::init_dense(cfg.bottleneck, cfg.hidden, rng);
  p.dec1 = nn::init_dense(cfg.hidden, cfg.bottleneck, rng);
  p.dec2 = nn::init_dense(n, cfg.hidden, rng);
  return p;
}

namespace {

Tensor ae_encode_t(const Tensor& x, const AutoencoderParams& p) {
  return nn::dense_forward(nn::dense_forward(x, p.enc1, nn::Act::tanh), p.enc2, nn::Act::tanh);
}

Tensor ae_decode_t(const Tensor& code, const AutoencoderParams& p) {
  return nn::dense_forward(nn::dense_forward(code, p.dec1, nn::Act::tanh), p.dec2,
                           nn::Act::sigmoid);
}

std::vector<Tensor> collect_ae_params(const AutoencoderParams& p) {
  return {p.enc1.w, p.enc1.b, p.enc2.w, p.enc2.b, p.dec1.w, p.dec1.b, p.dec2.w, p.dec2.b};
}

}  // namespace

AutoencoderParams train_autoencoder(const std::vector<Frame>& images, const AeConfig& cfg,
                                    Rng& rng) {
  if (images.empty()) throw UsageError("train_autoencoder: no images");
  AutoencoderParams p = init_autoencoder(cfg, rng);
  objectives::Adam opt(collect_ae_params(p), objectives::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng order = rng.stream("ae_batches");

  const std::size_t n = cfg.input * cfg.input;
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor batch(Shape{cfg.batch, n});
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const Frame& img = images[order.uniform_int(images.size())];
      if (img.px.size() != n) throw ShapeError("train_autoencoder: frame extent mismatch");
      std::copy(img.px.begin(), img.px.end(), batch.data() + b * n);
    }
    RecordScope scope;
    Tensor recon = ae_decode_t(ae_encode_t(batch, p), p);
    Tensor diff = sub(batch, recon);
    Tensor loss = scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(cfg.batch));
    opt.zero_grad();
    backward(loss);
    opt.step();
  }
  return p;
}

std::vector<double> ae_encode(const Frame& f, const AutoencoderParams& p) {
  Tensor x = Tensor::vec(f.px);
  return ae_encode_t(x, p).values();
}

Frame ae_decode(const std::vector<double>& code, const AutoencoderParams& p) {
  Tensor c = Tensor::vec(code);
  Tensor out = ae_decode_t(c, p);
  return tensor_to_frame(out, p.cfg.input, p.cfg.input);
}

double ae_reconstruction_mse(const std::vector<Frame>& images, const AutoencoderParams& p) {
  double total = 0.0;
  std::size_t pixels = 0;
  for (const Frame& img : images) {
    Frame recon = ae_decode(ae_encode(img, p), p);
    for (std::size_t i = 0; i < img.px.size(); ++i) {
      const double d = recon.px[i] - img.px[i];
      total += d * d;
    }
    pixels += img.px.size();
  }
  return total / static_cast<double>(pixels);
}

// ---- shallow CNN --------------------------------------------------------------------

namespace {

std::vector<Tensor> collect_cnn_params(const nn::ShallowCnnParams& p) {
  return {p.k1, p.b1, p.k2,      p.b2,      p.k3,       p.b3,
          p.feat.w, p.feat.b, p.label.w, p.label.b};
}

}  // namespace

CnnTrainResult train_shallow_cnn(const std::vector<Frame>& images,
                                 const std::vector<datagen::Labels>& labels,
                                 const CnnTrainConfig& cfg, Rng& rng) {
  if (images.empty()) throw UsageError("train_shallow_cnn: no images");
  if (images.size() != labels.size())
    throw UsageError("train_shallow_cnn: every image needs a label vector");

  nn::ShallowCnnConfig arch;
  CnnTrainResult result;
  result.params = nn::init_shallow_cnn(arch, rng);
  objectives::Adam opt(collect_cnn_params(result.params),
                       objectives::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng order = rng.stream("cnn_batches");
  Rng dropout_rng = rng.stream("cnn_dropout");

  for (int step = 0; step < cfg.steps; ++step) {
    RecordScope scope;
    Tensor loss = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t idx = order.uniform_int(images.size());
      Tensor img = frame_to_tensor(images[idx]);
      nn::ShallowCnnOut out =
          nn::shallow_cnn_forward(img, result.params, cfg.dropout, &dropout_rng);
      Tensor target = Tensor::vec({labels[idx].begin(), labels[idx].end()});
      Tensor diff = sub(target, out.label_logits);
      loss = add(loss, sum(mul(diff, diff)));
    }
    loss = scale(loss, 1.0 / static_cast<double>(cfg.batch));
    if (step == 0) result.initial_loss = loss.item();
    result.final_loss = loss.item();
    opt.zero_grad();
    backward(loss);
    opt.step();
  }
  return result;
}

std::vector<double> cnn_features(const Frame& f, const nn::ShallowCnnParams& p) {
  Tensor img = frame_to_tensor(f);
  nn::ShallowCnnOut out = nn::shallow_cnn_forward(img, p);
  return nn::l2_normalize(out.penultimate).values();
}

// ---- siamese -----------------------------------------------------------------------

namespace {

nn::ShallowCnnParams clone_cnn(const nn::ShallowCnnParams& p) {
  nn::ShallowCnnParams out;
  out.cfg = p.cfg;
  out.k1 = p.k1.clone();
  out.b1 = p.b1.clone();
  out.k2 = p.k2.clone();
  out.b2 = p.b2.clone();
  out.k3 = p.k3.clone();
  out.b3 = p.b3.clone();
  out.feat = {p.feat.w.clone(), p.feat.b.clone()};
  out.label = {p.label.w.clone(), p.label.b.clone()};
  return out;
}

Tensor siamese_embed_t(const Tensor& img, const SiameseParams& p) {
  nn::ShallowCnnOut out = nn::shallow_cnn_forward(img, p.trunk);
  return nn::l2_normalize(nn::dense_forward(out.penultimate, p.embed, nn::Act::linear));
}

}  // namespace

SiameseParams train_siamese(const std::vector<datagen::SequenceProblem>& problems,
                            const nn::ShallowCnnParams& init, const SiameseTrainConfig& cfg,
                            Rng& rng) {
  if (problems.size() < 2)
    throw UsageError("train_siamese: need at least 2 problems for dissimilar pairs");

  SiameseParams p;
  p.trunk = clone_cnn(init);
  Rng init_rng = rng.stream("siamese_init");
  p.embed = nn::init_dense(cfg.embed_width, p.trunk.cfg.penultimate, init_rng);

  std::vector<Tensor> params = collect_cnn_params(p.trunk);
  params.push_back(p.embed.w);
  params.push_back(p.embed.b);
  objectives::Adam opt(params, objectives::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng order = rng.stream("siamese_batches");

  for (int step = 0; step < cfg.steps; ++step) {
    RecordScope scope;
    Tensor loss = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const bool similar = b % 2 == 0;  // balanced positives and negatives
      Frame f1, f2;
      if (similar) {
        const auto& q = problems[order.uniform_int(problems.size())].question;
        const std::size_t t = order.uniform_int(q.size() - 1);
        f1 = q[t];
        f2 = q[t + 1];
      } else {
        std::size_t i = order.uniform_int(problems.size());
        std::size_t j = order.uniform_int(problems.size());
        while (j == i) j = order.uniform_int(problems.size());
        f1 = problems[i].question[order.uniform_int(problems[i].question.size())];
        f2 = problems[j].question[order.uniform_int(problems[j].question.size())];
      }
      Tensor e1 = siamese_embed_t(frame_to_tensor(f1), p);
      Tensor e2 = siamese_embed_t(frame_to_tensor(f2), p);
      loss = add(loss, objectives::contrastive(e1, e2, similar, cfg.margin));
    }
    loss = scale(loss, 1.0 / static_cast<double>(cfg.batch));
    opt.zero_grad();
    backward(loss);
    opt.step();
  }
  return p;
}

std::vector<double> siamese_embed(const Frame& f, const SiameseParams& p) {
  return siamese_embed_t(frame_to_tensor(f), p).values();
}

// ---- pipeline -------------------------------------------------------------------------

std::vector<double> FeaturePipeline::extract(const Frame& f) const {
  switch (spec.kind) {
    case FeatureKind::raw:
      return raw_features(f);
    case FeatureKind::hog:
      return hog_features(f, hog);
    case FeatureKind::autoencoder:
      return ae_encode(f, ae);
    case FeatureKind::shallow_cnn:
      return cnn_features(f, cnn);
    case FeatureKind::siamese:
      return siamese_embed(f, SiameseParams{cnn, siamese_head});
  }
  return {};
}

bool FeaturePipeline::renderable() const {
  return spec.kind == FeatureKind::raw || spec.kind == FeatureKind::autoencoder;
}

Frame FeaturePipeline::render_back(const std::vector<double>& features) const {
  if (spec.kind == FeatureKind::raw) {
    const std::size_t extent = static_cast<std::size_t>(std::lround(std::sqrt(
        static_cast<double>(features.size()))));
    Frame f(extent, extent);
    f.px = features;
    for (double& v : f.px) v = std::min(1.0, std::max(0.0, v));
    return f;
  }
  if (spec.kind == FeatureKind::autoencoder) return ae_decode(features, ae);
  throw UsageError("features '" + feature_kind_name(spec.kind) + "' are not renderable");
}

FeaturePipeline FeaturePipeline::make_raw(std::size_t extent) {
  FeaturePipeline p;
  p.spec = default_spec(FeatureKind::raw, extent);
  return p;
}

FeaturePipeline FeaturePipeline::make_hog(std::size_t extent) {
  FeaturePipeline p;
  p.spec = default_spec(FeatureKind::hog, extent);
  return p;
}

FeaturePipeline FeaturePipeline::make_autoencoder(AutoencoderParams params) {
  FeaturePipeline p;
  p.spec = {FeatureKind::autoencoder, params.cfg.bottleneck, false};
  p.ae = std::move(params);
  return p;
}

FeaturePipeline FeaturePipeline::make_shallow_cnn(nn::ShallowCnnParams params) {
  FeaturePipeline p;
  p.spec = {FeatureKind::shallow_cnn, params.cfg.penultimate, true};
  p.cnn = std::move(params);
  return p;
}

FeaturePipeline FeaturePipeline::make_siamese(SiameseParams params) {
  FeaturePipeline p;
  p.spec = {FeatureKind::siamese, params.embed.w.extent(0), true};
  p.cnn = std::move(params.trunk);
  p.siamese_head = std::move(params.embed);
  return p;
}

}  // namespace seqadv::features
