#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "seqadv/config.hpp"
#include "seqadv/datagen.hpp"
#include "seqadv/errors.hpp"
#include "seqadv/eval.hpp"
#include "seqadv/features.hpp"
#include "seqadv/models.hpp"
#include "seqadv/parallel.hpp"

namespace fs = std::filesystem;
using namespace seqadv;

namespace {

struct CommandArgs {
  cli::RunConfig run;
  std::string data;
  std::string ckpt;
  std::string out;
  std::string resume;
  std::string trace;
  std::string split = "test";
  std::size_t count = 2000;
  int difficulty = 2;
  bool augment = true;
  std::size_t rows = 8;
};

// Line-based `key = value` config file; flags given on the command line win.
void apply_config_file(const std::string& path, CommandArgs& a) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const std::size_t b = s.find_first_not_of(" \t");
      const std::size_t e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  for (const auto& [key, value] : kv) {
    try {
      if (key == "task") a.run.task = value;
      else if (key == "model") a.run.model = value;
      else if (key == "features") a.run.feature = value;
      else if (key == "loss") a.run.loss = value;
      else if (key == "lambda_adv") a.run.lambda_adv = std::stod(value);
      else if (key == "lambda_p") a.run.lambda_p = std::stod(value);
      else if (key == "p") a.run.p = std::stoi(value);
      else if (key == "lr") a.run.lr = std::stod(value);
      else if (key == "batch") a.run.batch = std::stoul(value);
      else if (key == "epochs") a.run.epochs = std::stoul(value);
      else if (key == "steps") a.run.steps = std::stoull(value);
      else if (key == "seed") a.run.seed = std::stoull(value);
      else if (key == "gen_layers") a.run.gen_layers = std::stoul(value);
      else if (key == "gen_hidden") a.run.gen_hidden = std::stoul(value);
      else if (key == "dis_hidden") a.run.dis_hidden = std::stoul(value);
      else if (key == "mlp_hidden") a.run.mlp_hidden = std::stoul(value);
      else if (key == "ff_hidden") a.run.ff_hidden = std::stoul(value);
      else if (key == "data") a.data = value;
      else if (key == "ckpt") a.ckpt = value;
      else if (key == "out") a.out = value;
      else if (key == "resume") a.resume = value;
      else if (key == "trace") a.trace = value;
      else if (key == "split") a.split = value;
      else if (key == "count") a.count = std::stoul(value);
      else if (key == "difficulty") a.difficulty = std::stoi(value);
      else if (key == "augment") a.augment = std::stoi(value) != 0;
      else if (key == "rows") a.rows = std::stoul(value);
      else throw UsageError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw UsageError("bad value for config key " + key + ": " + value);
    }
  }
}

features::FeaturePipeline build_pipeline(const cli::RunConfig& run,
                                         const std::vector<datagen::SequenceProblem>& problems) {
  const Rng root(run.seed);
  Rng feat_rng = root.stream("features");
  switch (run.feature_kind()) {
    case features::FeatureKind::raw:
      return features::FeaturePipeline::make_raw();
    case features::FeatureKind::hog:
      return features::FeaturePipeline::make_hog();
    case features::FeatureKind::autoencoder: {
      std::vector<Frame> images;
      for (const auto& p : problems)
        for (const Frame& f : p.question) images.push_back(f);
      return features::FeaturePipeline::make_autoencoder(
          features::train_autoencoder(images, features::AeConfig{}, feat_rng));
    }
    case features::FeatureKind::shallow_cnn: {
      std::vector<Frame> images;
      std::vector<datagen::Labels> labels;
      for (const auto& p : problems)
        for (std::size_t t = 0; t < p.question.size(); ++t) {
          images.push_back(p.question[t]);
          labels.push_back(p.labels[t]);
        }
      Rng cnn_rng = feat_rng.stream("cnn");
      return features::FeaturePipeline::make_shallow_cnn(
          features::train_shallow_cnn(images, labels, features::CnnTrainConfig{}, cnn_rng).params);
    }
    case features::FeatureKind::siamese: {
      std::vector<Frame> images;
      std::vector<datagen::Labels> labels;
      for (const auto& p : problems)
        for (std::size_t t = 0; t < p.question.size(); ++t) {
          images.push_back(p.question[t]);
          labels.push_back(p.labels[t]);
        }
      Rng cnn_rng = feat_rng.stream("cnn");
      features::CnnTrainResult cnn =
          features::train_shallow_cnn(images, labels, features::CnnTrainConfig{}, cnn_rng);
      Rng siam_rng = feat_rng.stream("siamese");
      return features::FeaturePipeline::make_siamese(
          features::train_siamese(problems, cnn.params, features::SiameseTrainConfig{}, siam_rng));
    }
  }
  throw UsageError("unknown feature kind");
}

std::vector<models::FeatureSequence> precompute_question_features(
    const features::FeaturePipeline& pipeline,
    const std::vector<datagen::SequenceProblem>& problems) {
  std::vector<models::FeatureSequence> out(problems.size());
  parallel_for(problems.size(), [&](std::size_t i) {
    models::FeatureSequence s;
    for (const Frame& f : problems[i].question) s.push_back(pipeline.extract(f));
    out[i] = std::move(s);
  });
  return out;
}

std::vector<models::FeatureSequence> precompute_video_features(
    const features::FeaturePipeline& pipeline,
    const std::vector<datagen::MovingSpriteVideo>& videos) {
  std::vector<models::FeatureSequence> out(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) {
    models::FeatureSequence s;
    for (const Frame& f : videos[i].frames) s.push_back(pipeline.extract(f));
    out[i] = std::move(s);
  });
  return out;
}

int cmd_gen_data(const CommandArgs& a) {
  if (a.count == 0) throw UsageError("--count must be positive");
  if (a.out.empty()) throw UsageError("--out directory required");
  if (a.run.task == "dar") {
    auto problems = datagen::generate_problems(a.run.seed, a.count, a.difficulty, a.augment);
    datagen::write_problems(a.out, problems);
    std::cout << "wrote " << problems.size() << " problems (" << a.count << " base x "
              << (a.augment ? 8 : 1) << ") to " << a.out << "\n";
  } else if (a.run.task == "frames") {
    auto videos = datagen::generate_videos(a.run.seed, a.count);
    datagen::write_videos(a.out, videos);
    std::cout << "wrote " << videos.size() << " videos to " << a.out << "\n";
  } else {
    throw UsageError("task must be dar or frames");
  }
  return 0;
}

void write_trace_csv(const std::vector<models::LossTraceRow>& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace: " + path.string());
  out << "step,d_loss,g_adv,g_lp,g_total\n";
  char buf[64];
  for (const auto& row : trace) {
    out << row.step;
    for (double v : {row.d_loss, row.g_adv, row.g_lp, row.g_total}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << "," << buf;
    }
    out << "\n";
  }
}

int cmd_train(const CommandArgs& a) {
  if (a.data.empty()) throw UsageError("--data directory required");
  if (a.ckpt.empty()) throw UsageError("--ckpt output path required");

  std::vector<models::FeatureSequence> sequences;
  features::FeaturePipeline pipeline;
  if (a.run.task == "dar") {
    auto problems = datagen::read_problems(a.data);
    pipeline = build_pipeline(a.run, problems);
    sequences = precompute_question_features(pipeline, problems);
  } else {
    auto videos = datagen::read_videos(a.data);
    if (a.run.feature_kind() != features::FeatureKind::raw &&
        a.run.feature_kind() != features::FeatureKind::hog)
      throw UsageError("frames task supports raw or hog features");
    pipeline = a.run.feature_kind() == features::FeatureKind::raw
                   ? features::FeaturePipeline::make_raw()
                   : features::FeaturePipeline::make_hog();
    sequences = precompute_video_features(pipeline, videos);
  }

  const models::TrainConfig cfg = a.run.resolve(sequences.size());
  models::Model model;
  if (a.resume.empty()) {
    model = models::init_model(cfg, std::move(pipeline));
  } else {
    model = models::load_checkpoint(a.resume);
    if (model.kind != cfg.kind)
      throw UsageError("resume checkpoint holds a different model kind");
  }

  std::vector<models::LossTraceRow> trace;
  const std::string trace_path = a.trace.empty() ? a.ckpt + ".trace.csv" : a.trace;
  try {
    trace = models::train_model(model, sequences, cfg);
  } catch (const NumericError&) {
    models::save_checkpoint(model, a.ckpt);
    write_trace_csv(trace, trace_path);
    throw;
  }
  models::save_checkpoint(model, a.ckpt);
  write_trace_csv(trace, trace_path);
  std::cout << "trained " << models::model_kind_name(model.kind) << " to step " << model.step
            << "; checkpoint " << a.ckpt << "\n";
  return 0;
}

int cmd_eval(const CommandArgs& a) {
  if (a.data.empty()) throw UsageError("--data directory required");
  if (a.ckpt.empty()) throw UsageError("--ckpt path required");
  models::Model model = models::load_checkpoint(a.ckpt);

  const std::string out_path = a.out.empty() ? "eval.csv" : a.out;
  if (a.run.task == "dar") {
    auto problems = eval::split_problems(datagen::read_problems(a.data), a.split);
    eval::EvalReport report =
        eval::accuracy_report(model, problems, a.run.seed, a.run.hash());
    eval::write_report_csv(report, out_path);
    std::printf("accuracy=%.6f n=%zu split=%s\n", report.accuracy, report.rows.size(),
                a.split.c_str());
  } else {
    auto videos = datagen::read_videos(a.data);
    eval::FramesReport report = eval::frames_report(model, videos);
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write report: " + out_path);
    char buf[64];
    out << "# next-frame report over " << report.count << " videos\n";
    for (auto [name, v] : {std::pair<const char*, double>{"model_ce", report.model_ce},
                           {"model_se", report.model_se},
                           {"baseline_ce", report.baseline_ce},
                           {"baseline_se", report.baseline_se}}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << name << "," << buf << "\n";
    }
    out << "# reference (moving-mnist corpus, not comparable): ce=241.8,se=167.9\n";
    std::printf("model_ce=%.3f model_se=%.3f baseline_ce=%.3f baseline_se=%.3f n=%zu\n",
                report.model_ce, report.model_se, report.baseline_ce, report.baseline_se,
                report.count);
  }
  return 0;
}

int cmd_predict(const CommandArgs& a) {
  if (a.data.empty()) throw UsageError("--data directory required");
  if (a.ckpt.empty()) throw UsageError("--ckpt path required");
  if (a.out.empty()) throw UsageError("--out directory required");
  models::Model model = models::load_checkpoint(a.ckpt);
  fs::create_directories(a.out);

  std::ofstream csv;
  if (!model.pipeline.renderable()) {
    csv.open(fs::path(a.out) / "pred.csv");
    if (!csv) throw DataError("cannot write predictions in " + a.out);
  }
  auto emit = [&](std::uint64_t id, const std::vector<double>& feats) {
    if (model.pipeline.renderable()) {
      write_pgm(fs::path(a.out) / (std::to_string(id) + "_pred.pgm"),
                model.pipeline.render_back(feats));
    } else {
      csv << id;
      char buf[64];
      for (double v : feats) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        csv << "," << buf;
      }
      csv << "\n";
    }
  };

  std::size_t n = 0;
  if (a.run.task == "dar") {
    for (const auto& p : datagen::read_problems(a.data)) {
      emit(p.id, eval::predict_next_features(model, p.question));
      ++n;
    }
  } else {
    for (const auto& v : datagen::read_videos(a.data)) {
      std::vector<Frame> prefix(v.frames.begin(), v.frames.end() - 1);
      emit(v.id, eval::predict_next_features(model, prefix));
      ++n;
    }
  }
  std::cout << "wrote " << n << " predictions to " << a.out << "\n";
  return 0;
}

int cmd_grid(const CommandArgs& a) {
  if (a.data.empty()) throw UsageError("--data directory required");
  if (a.ckpt.empty()) throw UsageError("--ckpt path required");
  if (a.out.empty()) throw UsageError("--out montage path required");
  models::Model model = models::load_checkpoint(a.ckpt);
  if (!model.pipeline.renderable())
    throw UsageError("grid needs renderable features (raw or ae), not " +
                     features::feature_kind_name(model.pipeline.spec.kind));

  auto problems = datagen::read_problems(a.data);
  if (problems.empty()) throw DataError("no problems in " + a.data);
  Rng pick = Rng(a.run.seed).stream("grid");
  for (std::size_t i = problems.size(); i > 1; --i)
    std::swap(problems[i - 1], problems[pick.uniform_int(i)]);
  const std::size_t rows = std::min(a.rows, problems.size());

  constexpr std::size_t cell = datagen::kCanvas + 2;  // 2-px white gutter
  Frame montage(rows * cell, 7 * cell, 1.0);
  auto blit = [&](const Frame& f, std::size_t r, std::size_t c) {
    for (std::size_t y = 0; y < f.h; ++y)
      for (std::size_t x = 0; x < f.w; ++x)
        montage.set(r * cell + y, c * cell + x, f.at(y, x));
  };
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& p = problems[r];
    for (std::size_t t = 0; t < 5; ++t) blit(p.question[t], r, t);
    blit(p.candidates[static_cast<std::size_t>(p.answer_index)], r, 5);
    blit(model.pipeline.render_back(eval::predict_next_features(model, p.question)), r, 6);
  }
  write_pgm(a.out, montage);
  std::cout << "wrote montage (" << rows << " rows) to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential adversarial generation on procedural reasoning data"};
  app.require_subcommand(1);

  CommandArgs a;
  std::string config_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "line-based key = value config file");
    cmd->add_option("--seed", a.run.seed, "rng seed");
    cmd->add_option("--data", a.data, "dataset directory");
    cmd->add_option("--ckpt", a.ckpt, "checkpoint path");
    cmd->add_option("--out", a.out, "output path");
    cmd->add_option("--task", a.run.task, "dar|frames");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a procedural dataset");
  add_common(gen);
  gen->add_option("--count", a.count, "base problem or video count");
  gen->add_option("--difficulty", a.difficulty, "1..3 varying components");
  gen->add_option("--augment", a.augment, "x8 dihedral augmentation (dar)");

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train);
  train->add_option("--model", a.run.model, "ff|rnn|rnn-gan|ctx-rnn-gan");
  train->add_option("--features", a.run.feature, "raw|hog|ae|cnn|siamese");
  train->add_option("--loss", a.run.loss, "l1|l2|adv");
  train->add_option("--lambda-adv", a.run.lambda_adv, "adversarial weight");
  train->add_option("--lambda-p", a.run.lambda_p, "Lp weight");
  train->add_option("--p", a.run.p, "1|2");
  train->add_option("--lr", a.run.lr, "learning rate");
  train->add_option("--batch", a.run.batch, "minibatch sequences");
  train->add_option("--epochs", a.run.epochs, "passes over the data");
  train->add_option("--steps", a.run.steps, "optimizer steps (overrides epochs)");
  train->add_option("--gen-layers", a.run.gen_layers, "generator GRU layers");
  train->add_option("--gen-hidden", a.run.gen_hidden, "generator hidden width");
  train->add_option("--dis-hidden", a.run.dis_hidden, "context discriminator width");
  train->add_option("--mlp-hidden", a.run.mlp_hidden, "mlp discriminator width");
  train->add_option("--ff-hidden", a.run.ff_hidden, "feed-forward hidden width");
  train->add_option("--resume", a.resume, "checkpoint to continue from");
  train->add_option("--trace", a.trace, "loss trace csv path");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--split", a.split, "tune|test|all");

  CLI::App* predict = app.add_subcommand("predict", "emit generated next frames/features");
  add_common(predict);

  CLI::App* grid = app.add_subcommand("grid", "write a question/truth/generation montage");
  add_common(grid);
  grid->add_option("--rows", a.rows, "problems per montage");

  // Config file values act as defaults; command-line flags override them.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  try {
    if (!config_path.empty()) apply_config_file(config_path, a);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(a);
    if (train->parsed()) return cmd_train(a);
    if (eval_cmd->parsed()) return cmd_eval(a);
    if (predict->parsed()) return cmd_predict(a);
    if (grid->parsed()) return cmd_grid(a);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
