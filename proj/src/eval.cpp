#include "seqadv/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "seqadv/errors.hpp"
#include "seqadv/parallel.hpp"

namespace seqadv::eval {

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ShapeError("cosine_sim: widths differ, " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

int mc_answer(const std::vector<double>& generated,
              const std::vector<std::vector<double>>& candidates) {
  if (candidates.empty()) throw UsageError("mc_answer: no candidates");
  int best = 0;
  double best_score = cosine_sim(generated, candidates[0]);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double s = cosine_sim(generated, candidates[k]);
    if (s > best_score) {  // strict: ties keep the lowest index
      best_score = s;
      best = static_cast<int>(k);
    }
  }
  return best;
}

std::vector<double> predict_next_features(const models::Model& m,
                                          const std::vector<Frame>& prefix) {
  std::vector<std::vector<double>> feats;
  feats.reserve(prefix.size());
  for (const Frame& f : prefix) feats.push_back(m.pipeline.extract(f));

  if (m.kind == models::ModelKind::ff) {
    if (feats.size() < 4) throw UsageError("feed-forward model needs at least 4 frames");
    std::vector<Tensor> last4;
    for (std::size_t t = feats.size() - 4; t < feats.size(); ++t)
      last4.push_back(Tensor::vec(feats[t]));
    return models::ff_predict(last4, m.ff).values();
  }
  std::vector<Tensor> xs;
  xs.reserve(feats.size());
  for (auto& f : feats) xs.push_back(Tensor::vec(std::move(f)));
  return models::rnn_forward(xs, m.gen).back().values();
}

EvalReport accuracy_report(const std::vector<datagen::SequenceProblem>& problems,
                           const features::FeaturePipeline& pipeline, const GenerateFn& generate,
                           std::uint64_t seed, std::uint64_t config_hash) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.seed = seed;
  report.config_hash = config_hash;
  report.rows.resize(problems.size());

  std::vector<std::size_t> zero_notes(problems.size(), 0);
  parallel_for(problems.size(), [&](std::size_t i) {
    const datagen::SequenceProblem& p = problems[i];
    std::vector<std::vector<double>> qfeats;
    qfeats.reserve(p.question.size());
    for (const Frame& f : p.question) qfeats.push_back(pipeline.extract(f));
    const std::vector<double> generated = generate(qfeats);

    ProblemScore row;
    row.id = p.id;
    row.scores.reserve(p.candidates.size());
    std::vector<std::vector<double>> cfeats;
    for (const Frame& f : p.candidates) cfeats.push_back(pipeline.extract(f));
    for (const auto& cf : cfeats) {
      row.scores.push_back(cosine_sim(generated, cf));
      double n = 0.0;
      for (double v : cf) n += v * v;
      double g = 0.0;
      for (double v : generated) g += v * v;
      if (n == 0.0 || g == 0.0) ++zero_notes[i];
    }
    row.chosen = mc_answer(generated, cfeats);
    row.correct = row.chosen == p.answer_index;
    report.rows[i] = std::move(row);
  });

  std::size_t correct = 0;
  for (const ProblemScore& r : report.rows) correct += r.correct ? 1 : 0;
  for (std::size_t n : zero_notes) report.zero_vector_notes += n;
  report.accuracy =
      problems.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(problems.size());
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

EvalReport accuracy_report(const models::Model& m,
                           const std::vector<datagen::SequenceProblem>& problems,
                           std::uint64_t seed, std::uint64_t config_hash) {
  GenerateFn generate = [&m](const std::vector<std::vector<double>>& qfeats) {
    if (m.kind == models::ModelKind::ff) {
      std::vector<Tensor> last4;
      for (std::size_t t = qfeats.size() - 4; t < qfeats.size(); ++t)
        last4.push_back(Tensor::vec(qfeats[t]));
      return models::ff_predict(last4, m.ff).values();
    }
    std::vector<Tensor> xs;
    xs.reserve(qfeats.size());
    for (const auto& f : qfeats) xs.push_back(Tensor::vec(f));
    return models::rnn_forward(xs, m.gen).back().values();
  };
  return accuracy_report(problems, m.pipeline, generate, seed, config_hash);
}

double frame_ce(const Frame& pred, const Frame& target) {
  if (pred.h != target.h || pred.w != target.w)
    throw ShapeError("frame_ce: extents differ");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.px.size(); ++i) {
    const double y = std::min(1.0 - 1e-5, std::max(1e-5, pred.px[i]));
    const double x = target.px[i];
    total += -(x * std::log(y) + (1.0 - x) * std::log(1.0 - y));
  }
  return total;
}

double frame_se(const Frame& pred, const Frame& target) {
  if (pred.h != target.h || pred.w != target.w)
    throw ShapeError("frame_se: extents differ");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.px.size(); ++i) {
    const double d = pred.px[i] - target.px[i];
    total += d * d;
  }
  return total;
}

Frame copy_last_baseline(const std::vector<Frame>& observed) {
  if (observed.empty()) throw UsageError("copy_last_baseline: empty video");
  return observed.back();
}

FramesReport frames_report(const models::Model& m,
                           const std::vector<datagen::MovingSpriteVideo>& videos) {
  FramesReport report;
  report.count = videos.size();
  std::vector<std::array<double, 4>> rows(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) {
    const auto& frames = videos[i].frames;
    if (frames.size() < 2) throw UsageError("frames_report: video too short");
    std::vector<Frame> prefix(frames.begin(), frames.end() - 1);
    const Frame& target = frames.back();

    const std::vector<double> feats = predict_next_features(m, prefix);
    Frame predicted = m.pipeline.render_back(feats);
    Frame baseline = copy_last_baseline(prefix);
    rows[i] = {frame_ce(predicted, target), frame_se(predicted, target),
               frame_ce(baseline, target), frame_se(baseline, target)};
  });
  for (const auto& r : rows) {
    report.model_ce += r[0];
    report.model_se += r[1];
    report.baseline_ce += r[2];
    report.baseline_se += r[3];
  }
  if (!videos.empty()) {
    const double n = static_cast<double>(videos.size());
    report.model_ce /= n;
    report.model_se /= n;
    report.baseline_ce /= n;
    report.baseline_se /= n;
  }
  return report;
}

std::vector<datagen::SequenceProblem> split_problems(
    std::vector<datagen::SequenceProblem> problems, const std::string& which) {
  std::sort(problems.begin(), problems.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  const std::size_t half = problems.size() / 2;
  if (which == "tune")
    return {problems.begin(), problems.begin() + static_cast<long>(half)};
  if (which == "test")
    return {problems.begin() + static_cast<long>(half), problems.end()};
  if (which == "all") return problems;
  throw UsageError("unknown split: " + which + " (want tune|test|all)");
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  char buf[64];
  for (const ProblemScore& r : report.rows) {
    out << r.id << "," << r.chosen << "," << (r.correct ? 1 : 0);
    for (double s : r.scores) {
      std::snprintf(buf, sizeof(buf), "%.17g", s);
      out << "," << buf;
    }
    out << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.17g", report.accuracy);
  out << "# aggregate: accuracy=" << buf;
  std::snprintf(buf, sizeof(buf), "%.17g", report.mean_ce);
  out << ",ce=" << buf;
  std::snprintf(buf, sizeof(buf), "%.17g", report.mean_se);
  out << ",se=" << buf;
  out << ",seed=" << report.seed;
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(report.config_hash));
  out << ",config=" << buf << "\n";
  if (!out) throw DataError("short report write: " + path.string());
}

}  // namespace seqadv::eval
