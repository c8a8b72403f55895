#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqadv/features.hpp"
#include "seqadv/nn.hpp"
#include "seqadv/objectives.hpp"
#include "seqadv/rng.hpp"

namespace seqadv::models {

enum class ModelKind { ff = 0, rnn = 1, rnn_gan = 2, ctx_rnn_gan = 3 };

std::string model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& name);

struct GeneratorModel {
  nn::GruParams gru;     // default two layers of 400
  nn::DenseParams head;  // top hidden -> feature width
  nn::Act head_act = nn::Act::linear;  // sigmoid for raw features (pixel range)
};

struct ContextDiscriminator {
  nn::GruParams gru;        // single layer of 500
  nn::DenseParams readout;  // hidden -> 1, sigmoid
};

struct MlpDiscriminator {
  nn::DenseParams l1;  // feature -> hidden, relu
  nn::DenseParams l2;  // hidden -> 1, sigmoid
};

struct FfModel {
  nn::DenseParams l1, l2, head;  // 4*feature -> hidden -> hidden -> feature
  nn::Act head_act = nn::Act::linear;
};

struct TrainConfig {
  ModelKind kind = ModelKind::ctx_rnn_gan;
  std::size_t gen_layers = 2;
  std::size_t gen_hidden = 400;
  std::size_t dis_hidden = 500;   // context discriminator GRU
  std::size_t mlp_hidden = 512;   // single-image discriminator
  std::size_t ff_hidden = 1000;
  objectives::GanLossWeights weights{0.05, 1.0, 1};
  double lr = 2e-4;
  std::size_t batch = 16;
  std::uint64_t steps = 1000;  // total optimizer steps (training resumes up to this)
  std::uint64_t seed = 0;
};

// One problem's frames through the frozen feature pipeline, question order.
using FeatureSequence = std::vector<std::vector<double>>;

// Optimizer state carried across save/load so a resumed run replays the exact
// arithmetic of an uninterrupted one.
struct AdamSnapshot {
  std::vector<std::vector<double>> m, v;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  bool empty() const { return m.empty(); }
};

struct Model {
  ModelKind kind = ModelKind::rnn;
  features::FeaturePipeline pipeline;  // frozen extractor travels with the model
  GeneratorModel gen;
  ContextDiscriminator d_ctx;
  MlpDiscriminator d_mlp;
  FfModel ff;
  TrainConfig cfg;
  AdamSnapshot opt_g, opt_d;
  std::uint64_t step = 0;
};

Model init_model(const TrainConfig& cfg, features::FeaturePipeline pipeline);

// Generator predictions y_t = G(x_1..x_t) for every t; y_t estimates x_{t+1}.
// Entries may be vectors or [batch x width] matrices.
std::vector<Tensor> rnn_forward(const std::vector<Tensor>& xs, const GeneratorModel& g);

// Feed-forward baseline on exactly four concatenated input frames.
Tensor ff_predict(const std::vector<Tensor>& four_frames, const FfModel& f);
Tensor ff_predict_cat(const Tensor& concatenated, const FfModel& f);

// Naive per-prefix evaluation: run the discriminator GRU over the context from
// scratch, one further step on the candidate, then the sigmoid readout.
Tensor d_score_prefix(const ContextDiscriminator& d, const std::vector<Tensor>& context,
                      const Tensor& candidate);

// Branching evaluation: one pass over the real sequence produces the shared
// prefix states; real scores read out at step t+1, fake scores branch one
// gru_step on y_t from h_t. Gradients flow through the shared prefix.
struct BranchScores {
  std::vector<Tensor> real;  // t = 1..T-1
  std::vector<Tensor> fake;
};
BranchScores d_branch_eval(const ContextDiscriminator& d, const std::vector<Tensor>& xs,
                           const std::vector<Tensor>& ys);

struct LossTraceRow {
  std::uint64_t step;
  double d_loss;
  double g_adv;
  double g_lp;
  double g_total;
};

// Trains m in place from m.step up to cfg.steps. The answer frame never enters
// training; sequences carry question frames only. Throws NumericError on a
// non-finite loss, leaving m at the last finite step.
std::vector<LossTraceRow> train_model(Model& m, const std::vector<FeatureSequence>& data,
                                      const TrainConfig& cfg);

// ---- checkpoints ----------------------------------------------------------------
// magic "CTXGAN\0", u32 version, u8 kind, FeatureSpec record, named tensor
// table (u32 name len, name, u32 rank, u64 extents, f64 LE payload), rng state
// blob, u64 step. Round-trips bit-exactly, optimizer state included.

void save_checkpoint(const Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Generator parameters as one canonical byte string (trajectory comparisons).
std::string generator_fingerprint(const Model& m);

}  // namespace seqadv::models
