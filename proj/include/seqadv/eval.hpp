#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "seqadv/datagen.hpp"
#include "seqadv/features.hpp"
#include "seqadv/image.hpp"
#include "seqadv/models.hpp"

namespace seqadv::eval {

// a.b / (|a||b|); zero vectors score 0 by definition (noted in the report).
double cosine_sim(const std::vector<double>& a, const std::vector<double>& b);

// Argmax cosine similarity; ties break toward the lowest index.
int mc_answer(const std::vector<double>& generated,
              const std::vector<std::vector<double>>& candidates);

struct ProblemScore {
  std::uint64_t id = 0;
  int chosen = 0;
  bool correct = false;
  std::vector<double> scores;  // cosine to each candidate
};

struct EvalReport {
  std::vector<ProblemScore> rows;
  double accuracy = 0.0;
  double mean_ce = 0.0;
  double mean_se = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::size_t zero_vector_notes = 0;  // cosine fell back to 0 this many times
};

// Generated next-step features from the five question frames' features.
using GenerateFn = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

EvalReport accuracy_report(const std::vector<datagen::SequenceProblem>& problems,
                           const features::FeaturePipeline& pipeline, const GenerateFn& generate,
                           std::uint64_t seed, std::uint64_t config_hash);

// The model consumes all question frames; its final output picks a candidate.
EvalReport accuracy_report(const models::Model& m,
                           const std::vector<datagen::SequenceProblem>& problems,
                           std::uint64_t seed, std::uint64_t config_hash);

// Model's next-frame prediction in feature space from a frame prefix.
std::vector<double> predict_next_features(const models::Model& m,
                                          const std::vector<Frame>& prefix);

// Per-frame summed binary cross entropy; pred clamps to [1e-5, 1-1e-5].
double frame_ce(const Frame& pred, const Frame& target);

// Per-frame summed squared error.
double frame_se(const Frame& pred, const Frame& target);

// Floor baseline: repeats the final observed frame.
Frame copy_last_baseline(const std::vector<Frame>& observed);

struct FramesReport {
  double model_ce = 0.0;
  double model_se = 0.0;
  double baseline_ce = 0.0;
  double baseline_se = 0.0;
  std::size_t count = 0;
};

// Feeds frames 1..N-1 of each video and scores the prediction of frame N
// against it, side by side with the copy-last baseline.
FramesReport frames_report(const models::Model& m,
                           const std::vector<datagen::MovingSpriteVideo>& videos);

// First half of the id-ordered problems tunes, second half tests.
std::vector<datagen::SequenceProblem> split_problems(
    std::vector<datagen::SequenceProblem> problems, const std::string& which);

// CSV: `id,chosen,correct,score_0..` rows plus a `# aggregate:` trailer.
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace seqadv::eval
