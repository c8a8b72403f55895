#pragma once

#include <cstdint>
#include <vector>

#include "seqadv/tensor.hpp"

namespace seqadv::objectives {

// Probabilities are clamped into [eps, 1-eps] before any log.
constexpr double kBceEps = 1e-7;

// -[t.log(y) + (1-t).log(1-y)], closed form on plain doubles.
double bce_value(double y, int target);

// Graph form. score is a scalar or a [batch] vector; the result is the mean
// over the batch so a summed loss stays batch-size-insensitive.
Tensor bce(const Tensor& score, int target);

// Count of bce graph terms built on this thread (term-count property hook).
std::uint64_t bce_terms_built();

// Sum over timesteps of ||target_t - pred_t||_p^p. Vector entries sum plainly;
// [batch x n] entries are averaged over the batch dimension.
Tensor lp_loss(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets, int p);

struct GanLossWeights {
  double lambda_adv = 0.05;
  double lambda_p = 1.0;
  int p = 1;
};

void validate(const GanLossWeights& w);

// Discriminator objective: sum_t bce(real_t, 1) + bce(fake_t, 0).
Tensor d_loss_context(const std::vector<Tensor>& real_scores,
                      const std::vector<Tensor>& fake_scores);

// Generator objective: lambda_adv * sum_t bce(fake_t, 1) + lambda_p * Lp.
// A zero lambda skips its term entirely, so lambda_adv = 0 reproduces plain
// Lp training bit for bit.
Tensor g_loss(const std::vector<Tensor>& fake_scores, const std::vector<Tensor>& preds,
              const std::vector<Tensor>& targets, const GanLossWeights& w);

// d = ||e1-e2||; similar: d^2/2; dissimilar: max(0, margin-d)^2 / 2.
Tensor contrastive(const Tensor& e1, const Tensor& e2, bool similar, double margin);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Bias-correction powers are
// carried in the state (not recomputed via pow) so a resumed run replays the
// exact same arithmetic.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void zero_grad();
  void step();

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Checkpoint plumbing.
  std::vector<double>& moment1(std::size_t i) { return m_[i]; }
  std::vector<double>& moment2(std::size_t i) { return v_[i]; }
  double& beta1_pow() { return beta1_pow_; }
  double& beta2_pow() { return beta2_pow_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  double beta1_pow_ = 1.0;
  double beta2_pow_ = 1.0;
};

}  // namespace seqadv::objectives
