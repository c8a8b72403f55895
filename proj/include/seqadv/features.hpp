#pragma once

#include <string>
#include <vector>

#include "seqadv/datagen.hpp"
#include "seqadv/image.hpp"
#include "seqadv/nn.hpp"
#include "seqadv/rng.hpp"

namespace seqadv::features {

enum class FeatureKind { raw = 0, hog = 1, autoencoder = 2, shallow_cnn = 3, siamese = 4 };

std::string feature_kind_name(FeatureKind k);
FeatureKind parse_feature_kind(const std::string& name);

struct FeatureSpec {
  FeatureKind kind = FeatureKind::raw;
  std::size_t width = 1024;
  bool unit_l2 = false;
};

FeatureSpec default_spec(FeatureKind k, std::size_t frame_extent = 32);

// ---- raw pixels ---------------------------------------------------------------

std::vector<double> raw_features(const Frame& f);

// ---- histogram of oriented gradients -------------------------------------------
// 8x8 cells, 9 unsigned bins over [0,180), 2x2-cell blocks at 1-cell stride,
// per-block L2 normalization. Central-difference gradients with replicated
// borders; magnitude votes split bilinearly between adjacent bin centers k*20.

struct HogConfig {
  std::size_t cell = 8;
  std::size_t bins = 9;
  std::size_t block = 2;
  std::size_t stride = 1;
  double eps = 1e-6;
};

std::size_t hog_width(std::size_t h, std::size_t w, const HogConfig& cfg = {});
std::vector<double> hog_features(const Frame& f, const HogConfig& cfg = {});

// ---- autoencoder ----------------------------------------------------------------

struct AeConfig {
  std::size_t input = 32;      // frame extent
  std::size_t hidden = 256;
  std::size_t bottleneck = 64;
  int steps = 1200;
  std::size_t batch = 32;
  double lr = 1e-3;
};

struct AutoencoderParams {
  AeConfig cfg;
  nn::DenseParams enc1, enc2;  // input^2 -> hidden -> bottleneck (tanh)
  nn::DenseParams dec1, dec2;  // bottleneck -> hidden (tanh) -> input^2 (sigmoid)
};

AutoencoderParams init_autoencoder(const AeConfig& cfg, Rng& rng);
AutoencoderParams train_autoencoder(const std::vector<Frame>& images, const AeConfig& cfg,
                                    Rng& rng);
std::vector<double> ae_encode(const Frame& f, const AutoencoderParams& p);
Frame ae_decode(const std::vector<double>& code, const AutoencoderParams& p);

// Mean per-pixel squared reconstruction error over a set of frames.
double ae_reconstruction_mse(const std::vector<Frame>& images, const AutoencoderParams& p);

// ---- shallow CNN ------------------------------------------------------------------

struct CnnTrainConfig {
  int steps = 400;
  std::size_t batch = 16;
  double lr = 1e-3;
  double dropout = 0.5;
};

struct CnnTrainResult {
  nn::ShallowCnnParams params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Supervised on the 16-wide quadrant count labels with summed squared error.
CnnTrainResult train_shallow_cnn(const std::vector<Frame>& images,
                                 const std::vector<datagen::Labels>& labels,
                                 const CnnTrainConfig& cfg, Rng& rng);

// Unit-L2-normalized penultimate activation.
std::vector<double> cnn_features(const Frame& f, const nn::ShallowCnnParams& p);

// ---- siamese -----------------------------------------------------------------------

struct SiameseTrainConfig {
  int steps = 300;
  std::size_t batch = 16;  // pairs per step, half similar / half dissimilar
  double lr = 1e-3;
  double margin = 1.0;
  std::size_t embed_width = 128;
};

struct SiameseParams {
  nn::ShallowCnnParams trunk;  // the shared twin
  nn::DenseParams embed;
};

// Positives are temporally adjacent frames of one problem; negatives pair
// frames from different problems. The trunk starts from the shallow CNN
// parameters and fine-tunes.
SiameseParams train_siamese(const std::vector<datagen::SequenceProblem>& problems,
                            const nn::ShallowCnnParams& init, const SiameseTrainConfig& cfg,
                            Rng& rng);

std::vector<double> siamese_embed(const Frame& f, const SiameseParams& p);

// ---- frozen pipeline -----------------------------------------------------------------

struct FeaturePipeline {
  FeatureSpec spec;
  HogConfig hog;
  AutoencoderParams ae;
  nn::ShallowCnnParams cnn;
  nn::DenseParams siamese_head;

  std::vector<double> extract(const Frame& f) const;
  bool renderable() const;  // raw reshapes, autoencoder decodes
  Frame render_back(const std::vector<double>& features) const;

  static FeaturePipeline make_raw(std::size_t extent = 32);
  static FeaturePipeline make_hog(std::size_t extent = 32);
  static FeaturePipeline make_autoencoder(AutoencoderParams p);
  static FeaturePipeline make_shallow_cnn(nn::ShallowCnnParams p);
  static FeaturePipeline make_siamese(SiameseParams p);
};

}  // namespace seqadv::features
