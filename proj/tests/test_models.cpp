#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seqadv/datagen.hpp"
#include "seqadv/errors.hpp"
#include "seqadv/models.hpp"
#include "seqadv/objectives.hpp"

using namespace seqadv;
using namespace seqadv::models;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Small synthetic feature sequences for fast training-loop tests.
std::vector<FeatureSequence> toy_sequences(std::size_t n, std::size_t len, std::size_t width,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureSequence s;
    // A drifting ramp: deterministic structure for the model to latch onto.
    const double phase = rng.uniform();
    for (std::size_t t = 0; t < len; ++t) {
      std::vector<double> v(width);
      for (std::size_t k = 0; k < width; ++k)
        v[k] = 0.5 + 0.45 * std::sin(phase * 6.28 + 0.37 * static_cast<double>(k) +
                                     0.8 * static_cast<double>(t));
      s.push_back(std::move(v));
    }
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig small_cfg(ModelKind kind, std::uint64_t seed, std::uint64_t steps) {
  TrainConfig cfg;
  cfg.kind = kind;
  cfg.gen_layers = 2;
  cfg.gen_hidden = 12;
  cfg.dis_hidden = 10;
  cfg.mlp_hidden = 16;
  cfg.ff_hidden = 32;
  cfg.lr = 1e-3;
  cfg.batch = 4;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.weights = {0.05, 1.0, 1};
  return cfg;
}

features::FeaturePipeline tiny_raw_pipeline(std::size_t width) {
  features::FeaturePipeline p;
  p.spec = {features::FeatureKind::raw, width, false};
  return p;
}

}  // namespace

TEST_CASE("ff_predict shapes and zero-parameter output") {
  TrainConfig cfg = small_cfg(ModelKind::ff, 1, 0);
  Model m = init_model(cfg, tiny_raw_pipeline(8));
  CHECK(m.ff.l1.w.shape() == Shape{32, 32});  // hidden x 4*width
  CHECK(m.ff.head.w.shape() == Shape{8, 32});

  Rng rng(3);
  std::vector<Tensor> frames;
  for (int t = 0; t < 4; ++t) frames.push_back(random_tensor({8}, rng));
  Tensor y = ff_predict(frames, m.ff);
  CHECK(y.shape() == Shape{8});

  // Zero parameters with a sigmoid head give an all-0.5 output.
  for (Tensor* t : {&m.ff.l1.w, &m.ff.l1.b, &m.ff.l2.w, &m.ff.l2.b, &m.ff.head.w, &m.ff.head.b})
    *t = Tensor(t->shape(), 0.0);
  Tensor z = ff_predict(frames, m.ff);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.at(i) == 0.5);

  CHECK_THROWS_AS(ff_predict({frames[0]}, m.ff), ShapeError);
}

TEST_CASE("ff single-sample overfit") {
  std::vector<FeatureSequence> data = toy_sequences(1, 5, 8, 11);
  TrainConfig cfg = small_cfg(ModelKind::ff, 5, 2000);
  cfg.batch = 1;
  cfg.weights = {0.0, 1.0, 2};
  Model m = init_model(cfg, tiny_raw_pipeline(8));
  std::vector<LossTraceRow> trace = train_model(m, data, cfg);
  REQUIRE(trace.size() == 2000);
  CHECK(trace.back().g_total <= 0.10 * trace.front().g_total);
}

TEST_CASE("rnn single-problem overfit") {
  std::vector<FeatureSequence> data = toy_sequences(1, 5, 8, 19);
  TrainConfig cfg = small_cfg(ModelKind::rnn, 21, 2000);
  cfg.batch = 1;
  cfg.weights = {0.0, 1.0, 1};
  Model m = init_model(cfg, tiny_raw_pipeline(8));
  std::vector<LossTraceRow> trace = train_model(m, data, cfg);
  double best = trace.front().g_lp;
  for (const auto& row : trace) best = std::min(best, row.g_lp);
  CHECK(best <= 0.10 * trace.front().g_lp);
}

TEST_CASE("rnn_forward causality and zero-parameter degeneracy") {
  TrainConfig cfg = small_cfg(ModelKind::rnn, 7, 0);
  cfg.weights = {0.0, 1.0, 1};
  Model m = init_model(cfg, tiny_raw_pipeline(6));

  Rng rng(13);
  std::vector<Tensor> xs;
  for (int t = 0; t < 5; ++t) xs.push_back(random_tensor({6}, rng));

  std::vector<Tensor> full = rnn_forward(xs, m.gen);
  REQUIRE(full.size() == 5);  // y_1..y_4 supervised, y_5 is the answer prediction

  std::vector<Tensor> prefix(xs.begin(), xs.begin() + 3);
  std::vector<Tensor> part = rnn_forward(prefix, m.gen);
  for (std::size_t t = 0; t < part.size(); ++t)
    for (std::size_t i = 0; i < part[t].size(); ++i)
      CHECK(part[t].at(i) == full[t].at(i));

  // Zero GRU parameters: hidden stays zero, every y_t equals the head bias map.
  for (auto& l : m.gen.gru.layers)
    for (Tensor* t : {&l.wz, &l.wr, &l.wh, &l.uz, &l.ur, &l.uh, &l.bz, &l.br, &l.bh})
      *t = Tensor(t->shape(), 0.0);
  std::vector<Tensor> degenerate = rnn_forward(xs, m.gen);
  for (std::size_t t = 1; t < degenerate.size(); ++t)
    CHECK(degenerate[t].values() == degenerate[0].values());

  CHECK_THROWS_AS(rnn_forward({}, m.gen), ShapeError);
}

TEST_CASE("branching discriminator matches the naive per-prefix oracle") {
  TrainConfig cfg = small_cfg(ModelKind::ctx_rnn_gan, 17, 0);
  Model m = init_model(cfg, tiny_raw_pipeline(6));

  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> xs, ys;
    for (int t = 0; t < 5; ++t) xs.push_back(random_tensor({6}, rng));
    for (int t = 0; t < 4; ++t) ys.push_back(random_tensor({6}, rng));

    BranchScores s = d_branch_eval(m.d_ctx, xs, ys);
    REQUIRE(s.real.size() == 4);
    REQUIRE(s.fake.size() == 4);

    for (std::size_t t = 1; t <= 4; ++t) {
      std::vector<Tensor> context(xs.begin(), xs.begin() + static_cast<long>(t));
      const double naive_real = d_score_prefix(m.d_ctx, context, xs[t]).item();
      const double naive_fake = d_score_prefix(m.d_ctx, context, ys[t - 1]).item();
      CHECK(std::fabs(s.real[t - 1].item() - naive_real) <= 1e-10);
      CHECK(std::fabs(s.fake[t - 1].item() - naive_fake) <= 1e-10);
    }
  }

  // Zero discriminator parameters score 0.5 on anything.
  for (auto& l : m.d_ctx.gru.layers)
    for (Tensor* t : {&l.wz, &l.wr, &l.wh, &l.uz, &l.ur, &l.uh, &l.bz, &l.br, &l.bh})
      *t = Tensor(t->shape(), 0.0);
  m.d_ctx.readout.w = Tensor(m.d_ctx.readout.w.shape(), 0.0);
  m.d_ctx.readout.b = Tensor(m.d_ctx.readout.b.shape(), 0.0);
  std::vector<Tensor> xs, ys;
  for (int t = 0; t < 5; ++t) xs.push_back(random_tensor({6}, rng));
  for (int t = 0; t < 4; ++t) ys.push_back(random_tensor({6}, rng));
  BranchScores s = d_branch_eval(m.d_ctx, xs, ys);
  for (const Tensor& sc : s.real) CHECK(sc.item() == 0.5);
  for (const Tensor& sc : s.fake) CHECK(sc.item() == 0.5);
}

TEST_CASE("training traces stay finite and deterministic") {
  std::vector<FeatureSequence> data = toy_sequences(12, 5, 6, 23);
  TrainConfig cfg = small_cfg(ModelKind::ctx_rnn_gan, 29, 60);

  Model m1 = init_model(cfg, tiny_raw_pipeline(6));
  std::vector<LossTraceRow> t1 = train_model(m1, data, cfg);
  REQUIRE(t1.size() == 60);
  for (const auto& row : t1) {
    CHECK(std::isfinite(row.d_loss));
    CHECK(std::isfinite(row.g_total));
  }

  Model m2 = init_model(cfg, tiny_raw_pipeline(6));
  train_model(m2, data, cfg);
  CHECK(generator_fingerprint(m1) == generator_fingerprint(m2));
}

TEST_CASE("lambda_adv = 0 reduces both GAN trainers to the plain RNN trainer") {
  std::vector<FeatureSequence> data = toy_sequences(10, 5, 6, 31);

  TrainConfig rnn_cfg = small_cfg(ModelKind::rnn, 37, 40);
  rnn_cfg.weights = {0.0, 1.0, 1};
  Model rnn_model = init_model(rnn_cfg, tiny_raw_pipeline(6));
  train_model(rnn_model, data, rnn_cfg);

  for (ModelKind kind : {ModelKind::ctx_rnn_gan, ModelKind::rnn_gan}) {
    TrainConfig gan_cfg = small_cfg(kind, 37, 40);
    gan_cfg.weights = {0.0, 1.0, 1};
    Model gan_model = init_model(gan_cfg, tiny_raw_pipeline(6));
    train_model(gan_model, data, gan_cfg);
    CHECK(generator_fingerprint(gan_model) == generator_fingerprint(rnn_model));
  }
}

TEST_CASE("rnn-gan trains with finite losses and in-range scores") {
  std::vector<FeatureSequence> data = toy_sequences(12, 5, 6, 41);
  TrainConfig cfg = small_cfg(ModelKind::rnn_gan, 43, 80);
  Model m = init_model(cfg, tiny_raw_pipeline(6));
  std::vector<LossTraceRow> trace = train_model(m, data, cfg);
  for (const auto& row : trace) {
    CHECK(std::isfinite(row.d_loss));
    CHECK(std::isfinite(row.g_adv));
    CHECK(std::isfinite(row.g_lp));
  }

  // Scores live strictly inside (0,1) (sigmoid range).
  Rng rng(47);
  Tensor x = random_tensor({6}, rng);
  Tensor s = nn::dense_forward(nn::dense_forward(x, m.d_mlp.l1, nn::Act::relu), m.d_mlp.l2,
                               nn::Act::sigmoid);
  CHECK(s.item() > 0.0);
  CHECK(s.item() < 1.0);
}

TEST_CASE("context gan d step counts 8 bce terms per T=5 minibatch") {
  std::vector<FeatureSequence> data = toy_sequences(8, 5, 6, 53);
  TrainConfig cfg = small_cfg(ModelKind::ctx_rnn_gan, 59, 1);
  Model m = init_model(cfg, tiny_raw_pipeline(6));

  const std::uint64_t before = objectives::bce_terms_built();
  train_model(m, data, cfg);
  // One D step: 2(T-1) = 8 terms; one G step with lambda_adv > 0: 4 more.
  CHECK(objectives::bce_terms_built() - before == 12);
}

TEST_CASE("one full-batch D step at lr 1e-4 does not increase the same batch's D loss") {
  std::vector<FeatureSequence> data = toy_sequences(8, 5, 6, 61);
  TrainConfig cfg = small_cfg(ModelKind::ctx_rnn_gan, 67, 0);
  Model m = init_model(cfg, tiny_raw_pipeline(6));

  std::vector<Tensor> xs;
  for (std::size_t t = 0; t < 5; ++t) {
    Tensor batch(Shape{data.size(), 6});
    for (std::size_t b = 0; b < data.size(); ++b)
      std::copy(data[b][t].begin(), data[b][t].end(), batch.data() + b * 6);
    xs.push_back(batch);
  }
  std::vector<Tensor> ys;
  {
    std::vector<Tensor> all = rnn_forward(xs, m.gen);
    ys.assign(all.begin(), all.end() - 1);
  }

  std::vector<Tensor> d_params;
  for (auto& l : m.d_ctx.gru.layers)
    for (Tensor* t : {&l.wz, &l.wr, &l.wh, &l.uz, &l.ur, &l.uh, &l.bz, &l.br, &l.bh})
      d_params.push_back(*t);
  d_params.push_back(m.d_ctx.readout.w);
  d_params.push_back(m.d_ctx.readout.b);
  objectives::Adam opt(d_params, objectives::AdamConfig{1e-4, 0.9, 0.999, 1e-8});

  double before;
  {
    RecordScope scope;
    BranchScores s = d_branch_eval(m.d_ctx, xs, ys);
    Tensor loss = objectives::d_loss_context(s.real, s.fake);
    before = loss.item();
    opt.zero_grad();
    backward(loss);
  }
  opt.step();
  double after;
  {
    RecordScope scope;
    BranchScores s = d_branch_eval(m.d_ctx, xs, ys);
    after = objectives::d_loss_context(s.real, s.fake).item();
  }
  CHECK(after <= before);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  namespace fs = std::filesystem;
  std::vector<FeatureSequence> data = toy_sequences(10, 5, 6, 71);
  TrainConfig cfg = small_cfg(ModelKind::ctx_rnn_gan, 73, 25);
  Model m = init_model(cfg, tiny_raw_pipeline(6));
  train_model(m, data, cfg);

  const fs::path path = fs::temp_directory_path() / "seqadv_ckpt_test.bin";
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);
  CHECK(back.kind == m.kind);
  CHECK(back.step == m.step);
  CHECK(back.cfg.seed == cfg.seed);
  CHECK(generator_fingerprint(back) == generator_fingerprint(m));

  // Re-saving reproduces the file byte for byte.
  const fs::path path2 = fs::temp_directory_path() / "seqadv_ckpt_test2.bin";
  save_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("checkpoint error paths") {
  namespace fs = std::filesystem;
  const fs::path empty = fs::temp_directory_path() / "seqadv_empty.bin";
  {
    std::ofstream out(empty, std::ios::binary);
  }
  try {
    load_checkpoint(empty);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
  }

  const fs::path bad_version = fs::temp_directory_path() / "seqadv_badver.bin";
  {
    std::ofstream out(bad_version, std::ios::binary);
    out.write("CTXGAN\0", 7);
    const std::uint32_t v = 99;
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  try {
    load_checkpoint(bad_version);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("unsupported") != std::string::npos);
  }

  // Truncation mid-table.
  std::vector<FeatureSequence> data = toy_sequences(6, 5, 6, 79);
  TrainConfig cfg = small_cfg(ModelKind::rnn, 83, 5);
  cfg.weights = {0.0, 1.0, 1};
  Model m = init_model(cfg, tiny_raw_pipeline(6));
  train_model(m, data, cfg);
  const fs::path whole = fs::temp_directory_path() / "seqadv_whole.bin";
  save_checkpoint(m, whole);
  std::ifstream in(whole, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const fs::path cut = fs::temp_directory_path() / "seqadv_cut.bin";
  {
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  try {
    load_checkpoint(cut);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("corrupt") != std::string::npos);
  }
  fs::remove(empty);
  fs::remove(bad_version);
  fs::remove(whole);
  fs::remove(cut);
}

TEST_CASE("resume matches uninterrupted training step for step") {
  namespace fs = std::filesystem;
  std::vector<FeatureSequence> data = toy_sequences(10, 5, 6, 89);

  TrainConfig cfg = small_cfg(ModelKind::ctx_rnn_gan, 97, 70);
  Model full = init_model(cfg, tiny_raw_pipeline(6));
  train_model(full, data, cfg);

  TrainConfig cfg_half = cfg;
  cfg_half.steps = 20;
  Model half = init_model(cfg_half, tiny_raw_pipeline(6));
  train_model(half, data, cfg_half);
  const fs::path path = fs::temp_directory_path() / "seqadv_resume.bin";
  save_checkpoint(half, path);

  Model resumed = load_checkpoint(path);
  CHECK(resumed.step == 20);
  train_model(resumed, data, cfg);  // continue to 70

  CHECK(resumed.step == full.step);
  CHECK(generator_fingerprint(resumed) == generator_fingerprint(full));

  // Save both and compare the files byte for byte.
  const fs::path pa = fs::temp_directory_path() / "seqadv_resume_a.bin";
  const fs::path pb = fs::temp_directory_path() / "seqadv_resume_b.bin";
  save_checkpoint(full, pa);
  save_checkpoint(resumed, pb);
  std::ifstream f1(pa, std::ios::binary), f2(pb, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove(path);
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("flag validation and width mismatch") {
  std::vector<FeatureSequence> data = toy_sequences(6, 5, 6, 101);
  TrainConfig cfg = small_cfg(ModelKind::rnn, 103, 5);
  cfg.weights = {0.05, 1.0, 1};  // adversarial weight on a plain RNN
  Model m = init_model(cfg, tiny_raw_pipeline(6));
  CHECK_THROWS_AS(train_model(m, data, cfg), UsageError);

  TrainConfig ok = small_cfg(ModelKind::rnn, 103, 5);
  ok.weights = {0.0, 1.0, 1};
  Model m2 = init_model(ok, tiny_raw_pipeline(8));  // width 8 vs data width 6
  CHECK_THROWS_AS(train_model(m2, data, ok), ShapeError);
}
