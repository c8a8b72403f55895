#include "seqadv/nn.hpp"

#include <cmath>

#include "seqadv/errors.hpp"

namespace seqadv::nn {

Tensor dense_forward(const Tensor& x, const DenseParams& p, Act act) {
  Tensor y = linear(x, p.w, p.b);
  switch (act) {
    case Act::linear:
      return y;
    case Act::sigmoid:
      return sigmoid(y);
    case Act::tanh:
      return tanh_op(y);
    case Act::relu:
      return relu(y);
  }
  return y;
}

Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruLayerParams& p) {
  Tensor none;
  Tensor z = sigmoid(add(linear(x, p.wz, p.bz), linear(h_prev, p.uz, none)));
  Tensor r = sigmoid(add(linear(x, p.wr, p.br), linear(h_prev, p.ur, none)));
  Tensor hc = tanh_op(add(linear(x, p.wh, p.bh), linear(mul(r, h_prev), p.uh, none)));
  Tensor one = Tensor::scalar(1.0);
  return add(mul(sub(one, z), h_prev), mul(z, hc));
}

std::vector<Tensor> gru_sequence(const std::vector<Tensor>& xs, const GruParams& p) {
  if (xs.empty()) throw ShapeError("gru_sequence: empty input sequence");
  if (p.layers.empty()) throw ShapeError("gru_sequence: no layers");

  std::vector<Tensor> h;
  h.reserve(p.layers.size());
  for (const auto& layer : p.layers) {
    const std::size_t hidden = layer.uz.extent(0);
    Shape hs = xs[0].rank() == 2 ? Shape{xs[0].extent(0), hidden} : Shape{hidden};
    h.emplace_back(hs, 0.0);
  }

  std::vector<Tensor> top;
  top.reserve(xs.size());
  for (const Tensor& x : xs) {
    Tensor in = x;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      h[l] = gru_step(in, h[l], p.layers[l]);
      in = h[l];
    }
    top.push_back(in);
  }
  return top;
}

ShallowCnnOut shallow_cnn_forward(const Tensor& img, const ShallowCnnParams& p,
                                  double dropout_rate, Rng* rng) {
  const auto& cfg = p.cfg;
  if (img.rank() != 3 || img.extent(0) != 1 || img.extent(1) != cfg.input ||
      img.extent(2) != cfg.input)
    throw ShapeError("shallow_cnn_forward: expected [1x" + std::to_string(cfg.input) + "x" +
                     std::to_string(cfg.input) + "], got " + shape_str(img.shape()));

  // Interior crop; frames keep a blank border so nothing is lost. Images are
  // constants here (gradients target the kernels), so a plain copy suffices.
  const std::size_t off = (cfg.input - cfg.crop) / 2;
  Tensor c(Shape{1, cfg.crop, cfg.crop});
  for (std::size_t y = 0; y < cfg.crop; ++y)
    for (std::size_t x = 0; x < cfg.crop; ++x)
      c.data()[y * cfg.crop + x] = img.data()[(y + off) * cfg.input + x + off];

  Tensor s1 = maxpool2d(relu(conv2d(c, p.k1, p.b1)));
  Tensor s2 = maxpool2d(relu(conv2d(s1, p.k2, p.b2)));
  Tensor s3 = maxpool2d(relu(conv2d(s2, p.k3, p.b3)));
  Tensor flat = reshape(s3, Shape{s3.size()});
  Tensor pen = relu(linear(flat, p.feat.w, p.feat.b));

  Tensor head_in = pen;
  if (dropout_rate > 0.0 && rng) head_in = dropout(pen, dropout_rate, Mode::train, *rng);
  Tensor logits = linear(head_in, p.label.w, p.label.b);
  return ShallowCnnOut{logits, pen};
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (rate >= 1.0) throw UsageError("dropout: rate must be < 1");
  if (mode == Mode::eval || rate == 0.0) return x;
  Tensor mask(x.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.data()[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return mul(x, mask);
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-s, s);
  t.set_requires_grad(true);
  return t;
}

DenseParams init_dense(std::size_t out_w, std::size_t in_w, Rng& rng) {
  DenseParams p;
  p.w = glorot_uniform({out_w, in_w}, in_w, out_w, rng);
  p.b = Tensor({out_w}, 0.0);
  p.b.set_requires_grad(true);
  return p;
}

GruLayerParams init_gru_layer(std::size_t hidden, std::size_t in_w, Rng& rng) {
  GruLayerParams p;
  p.wz = glorot_uniform({hidden, in_w}, in_w, hidden, rng);
  p.wr = glorot_uniform({hidden, in_w}, in_w, hidden, rng);
  p.wh = glorot_uniform({hidden, in_w}, in_w, hidden, rng);
  p.uz = glorot_uniform({hidden, hidden}, hidden, hidden, rng);
  p.ur = glorot_uniform({hidden, hidden}, hidden, hidden, rng);
  p.uh = glorot_uniform({hidden, hidden}, hidden, hidden, rng);
  for (Tensor* b : {&p.bz, &p.br, &p.bh}) {
    *b = Tensor({hidden}, 0.0);
    b->set_requires_grad(true);
  }
  return p;
}

GruParams init_gru(std::size_t layers, std::size_t hidden, std::size_t in_w, Rng& rng) {
  GruParams p;
  for (std::size_t l = 0; l < layers; ++l)
    p.layers.push_back(init_gru_layer(hidden, l == 0 ? in_w : hidden, rng));
  return p;
}

ShallowCnnParams init_shallow_cnn(const ShallowCnnConfig& cfg, Rng& rng) {
  ShallowCnnParams p;
  p.cfg = cfg;
  const std::size_t k = cfg.kernel;
  const std::size_t f1 = cfg.stages[0], f2 = cfg.stages[1], f3 = cfg.stages[2];
  p.k1 = glorot_uniform({f1, 1, k, k}, k * k, f1 * k * k, rng);
  p.k2 = glorot_uniform({f2, f1, k, k}, f1 * k * k, f2 * k * k, rng);
  p.k3 = glorot_uniform({f3, f2, k, k}, f2 * k * k, f3 * k * k, rng);
  for (auto [b, f] : {std::pair{&p.b1, f1}, {&p.b2, f2}, {&p.b3, f3}}) {
    *b = Tensor({f}, 0.0);
    b->set_requires_grad(true);
  }

  // Extent after three (conv k, pool 2) stages on the cropped input.
  std::size_t e = cfg.crop;
  for (int s = 0; s < 3; ++s) {
    e -= (k - 1);
    if (e % 2 != 0)
      throw ShapeError("shallow cnn: stage " + std::to_string(s + 1) +
                       " extent " + std::to_string(e) + " not poolable");
    e /= 2;
  }
  p.feat = init_dense(cfg.penultimate, f3 * e * e, rng);
  p.label = init_dense(cfg.labels, cfg.penultimate, rng);
  return p;
}

Tensor l2_normalize(const Tensor& x) {
  Tensor n2 = sum(mul(x, x));
  Tensor inv = reciprocal(sqrt_op(add_const(n2, 1e-24)));
  return mul(x, inv);
}

}  // namespace seqadv::nn
