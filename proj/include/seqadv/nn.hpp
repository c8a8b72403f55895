#pragma once

#include <cstddef>
#include <vector>

#include "seqadv/rng.hpp"
#include "seqadv/tensor.hpp"

namespace seqadv::nn {

enum class Act { linear, sigmoid, tanh, relu };

struct DenseParams {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
};

// activation(W.x + b); x is a vector or an [batch x in] matrix.
Tensor dense_forward(const Tensor& x, const DenseParams& p, Act act);

struct GruLayerParams {
  Tensor wz, wr, wh;  // [hidden x in]
  Tensor uz, ur, uh;  // [hidden x hidden]
  Tensor bz, br, bh;  // [hidden]
};

struct GruParams {
  std::vector<GruLayerParams> layers;
};

// z = s(Wz.x + Uz.h + bz); r = s(Wr.x + Ur.h + br);
// hc = tanh(Wh.x + Uh.(r*h) + bh); h' = (1-z)*h + z*hc
Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruLayerParams& p);

// Top-layer hidden states for t = 1..len(xs), from all-zero initial states.
std::vector<Tensor> gru_sequence(const std::vector<Tensor>& xs, const GruParams& p);

struct ShallowCnnConfig {
  std::size_t input = 32;   // frames arrive at this extent; the conv stack sees the
  std::size_t crop = 30;    // interior crop (frame borders are blank by construction)
  std::size_t stages[3] = {8, 16, 32};
  std::size_t kernel = 3;
  std::size_t penultimate = 256;
  std::size_t labels = 16;
};

struct ShallowCnnParams {
  ShallowCnnConfig cfg;
  Tensor k1, b1, k2, b2, k3, b3;
  DenseParams feat;   // flattened conv output -> penultimate
  DenseParams label;  // penultimate -> label vector
};

struct ShallowCnnOut {
  Tensor label_logits;
  Tensor penultimate;
};

// img is [1 x input x input]. dropout_rate > 0 applies inverted dropout between
// the penultimate activation and the label head (training only).
ShallowCnnOut shallow_cnn_forward(const Tensor& img, const ShallowCnnParams& p,
                                  double dropout_rate = 0.0, Rng* rng = nullptr);

enum class Mode { train, eval };

// Inverted dropout: kept activations scale by 1/(1-rate) so the expectation is
// unchanged; eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng);

// All weights uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)); biases zero.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
DenseParams init_dense(std::size_t out_w, std::size_t in_w, Rng& rng);
GruLayerParams init_gru_layer(std::size_t hidden, std::size_t in_w, Rng& rng);
GruParams init_gru(std::size_t layers, std::size_t hidden, std::size_t in_w, Rng& rng);
ShallowCnnParams init_shallow_cnn(const ShallowCnnConfig& cfg, Rng& rng);

// Differentiable x / ||x||_2 (guarded near zero).
Tensor l2_normalize(const Tensor& x);

}  // namespace seqadv::nn
