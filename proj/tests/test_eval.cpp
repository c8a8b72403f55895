#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seqadv/errors.hpp"
#include "seqadv/eval.hpp"

using namespace seqadv;
using namespace seqadv::eval;

TEST_CASE("cosine_sim basics") {
  std::vector<double> a{1.0, 2.0, 3.0};
  CHECK(cosine_sim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> x{1.0, 0.0}, y{0.0, 1.0};
  CHECK(cosine_sim(x, y) == 0.0);

  std::vector<double> a2{2.0, 4.0, 6.0};
  CHECK(cosine_sim(a, a2) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK(cosine_sim(a, zero) == 0.0);

  CHECK_THROWS_AS(cosine_sim(a, x), ShapeError);
}

TEST_CASE("mc_answer exact match, tie rule, and brute-force agreement") {
  Rng rng(3);
  std::vector<std::vector<double>> candidates;
  for (int k = 0; k < 5; ++k) {
    std::vector<double> c(16);
    for (double& v : c) v = rng.uniform(-1.0, 1.0);
    candidates.push_back(c);
  }
  CHECK(mc_answer(candidates[3], candidates) == 3);

  std::vector<std::vector<double>> same(5, candidates[0]);
  CHECK(mc_answer(candidates[1], same) == 0);

  CHECK_THROWS_AS(mc_answer(candidates[0], {}), UsageError);

  // 1000 random instances against an independent brute-force scorer.
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> g(16);
    for (double& v : g) v = rng.uniform(-1.0, 1.0);
    std::vector<std::vector<double>> cs;
    for (int k = 0; k < 5; ++k) {
      std::vector<double> c(16);
      for (double& v : c) v = rng.uniform(-1.0, 1.0);
      cs.push_back(c);
    }
    int best = 0;
    double best_score = -2.0;
    for (int k = 0; k < 5; ++k) {
      double dot = 0.0, ng = 0.0, nc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        dot += g[i] * cs[static_cast<std::size_t>(k)][i];
        ng += g[i] * g[i];
        nc += cs[static_cast<std::size_t>(k)][i] * cs[static_cast<std::size_t>(k)][i];
      }
      const double s = dot / std::sqrt(ng * nc);
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    REQUIRE(mc_answer(g, cs) == best);
  }
}

TEST_CASE("mc_answer is invariant under positive rescaling") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> g(8);
    for (double& v : g) v = rng.uniform(-1.0, 1.0);
    std::vector<std::vector<double>> cs;
    for (int k = 0; k < 5; ++k) {
      std::vector<double> c(8);
      for (double& v : c) v = rng.uniform(-1.0, 1.0);
      cs.push_back(c);
    }
    const int before = mc_answer(g, cs);
    std::vector<double> g2 = g;
    for (double& v : g2) v *= 7.3;
    std::vector<std::vector<double>> cs2 = cs;
    for (std::size_t k = 0; k < cs2.size(); ++k) {
      const double f = 0.1 + static_cast<double>(k);
      for (double& v : cs2[k]) v *= f;
    }
    REQUIRE(mc_answer(g2, cs2) == before);
  }
}

TEST_CASE("oracle generator scores accuracy 1.0") {
  std::vector<datagen::SequenceProblem> problems;
  Rng rng(7);
  for (int i = 0; i < 40; ++i) {
    auto p = datagen::render_problem(datagen::sample_program(rng, 2), rng);
    p.id = static_cast<std::uint64_t>(i);
    problems.push_back(std::move(p));
  }
  features::FeaturePipeline pipeline = features::FeaturePipeline::make_raw();

  // The oracle peeks at the correct candidate through a side table.
  std::size_t cursor = 0;
  GenerateFn oracle = [&](const std::vector<std::vector<double>>&) {
    const auto& p = problems[cursor++];
    return pipeline.extract(p.candidates[static_cast<std::size_t>(p.answer_index)]);
  };
  setenv("SEQADV_THREADS", "1", 1);  // the cursor needs sequential order
  EvalReport report = accuracy_report(problems, pipeline, oracle, 7, 0);
  CHECK(report.accuracy == 1.0);

  // Aggregate equals a recount of the per-problem flags.
  std::size_t recount = 0;
  for (const auto& r : report.rows) recount += r.correct ? 1 : 0;
  CHECK(report.accuracy ==
        static_cast<double>(recount) / static_cast<double>(report.rows.size()));
}

TEST_CASE("constant-index chooser sits at chance") {
  std::vector<datagen::SequenceProblem> problems;
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    auto p = datagen::render_problem(datagen::sample_program(rng, 1 + i % 3), rng);
    p.id = static_cast<std::uint64_t>(i);
    problems.push_back(std::move(p));
  }
  std::size_t hits = 0;
  for (const auto& p : problems) hits += p.answer_index == 2 ? 1 : 0;
  const double acc = static_cast<double>(hits) / 10000.0;
  const double sigma = std::sqrt(0.2 * 0.8 / 10000.0);
  CHECK(std::fabs(acc - 0.2) <= 3.0 * sigma);
}

TEST_CASE("frame_ce examples") {
  Frame target(32, 32, 0.0);
  for (std::size_t i = 0; i < target.px.size(); ++i) target.px[i] = (i % 3 == 0) ? 1.0 : 0.0;

  Frame half(32, 32, 0.5);
  CHECK(frame_ce(half, target) == doctest::Approx(1024.0 * std::log(2.0)).epsilon(1e-12));

  // Post-clamp perfect prediction: about 1024 * 1e-5.
  CHECK(frame_ce(target, target) == doctest::Approx(1024.0 * 1e-5).epsilon(1e-3));

  // Clamped perfect prediction minimizes CE.
  Frame off(32, 32, 0.3);
  CHECK(frame_ce(target, target) < frame_ce(off, target));
  CHECK(frame_ce(target, target) < frame_ce(half, target));

  CHECK_THROWS_AS(frame_ce(Frame(16, 16), target), ShapeError);
}

TEST_CASE("frame_se examples and symmetry") {
  Frame a(32, 32, 0.0), b(32, 32, 0.1);
  CHECK(frame_se(a, a) == 0.0);
  CHECK(frame_se(b, a) == doctest::Approx(10.24).epsilon(1e-9));
  CHECK(frame_se(a, b) == doctest::Approx(frame_se(b, a)).epsilon(1e-15));
}

TEST_CASE("copy_last_baseline") {
  std::vector<Frame> still(3, Frame(32, 32, 1.0));
  Frame last = copy_last_baseline(still);
  CHECK(last == still.back());
  CHECK(frame_se(last, still.back()) == 0.0);
  CHECK(frame_ce(last, still.back()) == doctest::Approx(1024.0 * 1e-5).epsilon(1e-3));

  // Disjoint consecutive supports of s pixels each: SE = 2s.
  Frame f1(32, 32, 0.0), f2(32, 32, 0.0);
  for (int i = 0; i < 20; ++i) {
    f1.set(2, static_cast<std::size_t>(i), 1.0);
    f2.set(20, static_cast<std::size_t>(i), 1.0);
  }
  CHECK(frame_se(copy_last_baseline({f1}), f2) == 40.0);

  CHECK_THROWS_AS(copy_last_baseline({}), UsageError);
}

TEST_CASE("split halves are disjoint and ordered by id") {
  std::vector<datagen::SequenceProblem> problems;
  Rng rng(13);
  for (int i = 0; i < 10; ++i) {
    auto p = datagen::render_problem(datagen::sample_program(rng, 1), rng);
    p.id = static_cast<std::uint64_t>(9 - i);  // scrambled insertion order
    problems.push_back(std::move(p));
  }
  auto tune = split_problems(problems, "tune");
  auto test = split_problems(problems, "test");
  REQUIRE(tune.size() == 5);
  REQUIRE(test.size() == 5);
  for (const auto& p : tune) CHECK(p.id < 5);
  for (const auto& p : test) CHECK(p.id >= 5);
  CHECK_THROWS_AS(split_problems(problems, "half"), UsageError);
}

TEST_CASE("report csv round-trips deterministically") {
  namespace fs = std::filesystem;
  EvalReport r;
  r.accuracy = 0.625;
  r.seed = 9;
  r.config_hash = 0xabcdef;
  for (int i = 0; i < 3; ++i) {
    ProblemScore s;
    s.id = static_cast<std::uint64_t>(i);
    s.chosen = i % 5;
    s.correct = i % 2 == 0;
    s.scores = {0.1, 0.2, 0.3, 0.4, 0.5};
    r.rows.push_back(s);
  }
  const fs::path p1 = fs::temp_directory_path() / "seqadv_report1.csv";
  const fs::path p2 = fs::temp_directory_path() / "seqadv_report2.csv";
  write_report_csv(r, p1);
  write_report_csv(r, p2);
  std::ifstream f1(p1), f2(p2);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(b1.find("# aggregate: accuracy=0.625") != std::string::npos);
  CHECK(b1.find("seed=9") != std::string::npos);
  fs::remove(p1);
  fs::remove(p2);
}
