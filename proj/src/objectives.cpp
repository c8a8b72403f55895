#include "seqadv/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "seqadv/errors.hpp"

namespace seqadv::objectives {

namespace {
thread_local std::uint64_t g_bce_terms = 0;
}

double bce_value(double y, int target) {
  const double c = std::min(1.0 - kBceEps, std::max(kBceEps, y));
  return target == 1 ? -std::log(c) : -std::log(1.0 - c);
}

Tensor bce(const Tensor& score, int target) {
  if (target != 0 && target != 1) throw UsageError("bce: target must be 0 or 1");
  ++g_bce_terms;
  Tensor y = clamp(score, kBceEps, 1.0 - kBceEps);
  Tensor per;
  if (target == 1) {
    per = scale(log_op(y), -1.0);
  } else {
    per = scale(log_op(sub(Tensor::scalar(1.0), y)), -1.0);
  }
  return scale(sum(per), 1.0 / static_cast<double>(score.size()));
}

std::uint64_t bce_terms_built() { return g_bce_terms; }

Tensor lp_loss(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets, int p) {
  if (p != 1 && p != 2) throw UsageError("lp_loss: p must be 1 or 2");
  if (preds.size() != targets.size())
    throw ShapeError("lp_loss: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(targets.size()) + " targets");
  if (preds.empty()) throw ShapeError("lp_loss: empty prediction list");

  Tensor total = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < preds.size(); ++t) {
    if (preds[t].shape() != targets[t].shape())
      throw ShapeError("lp_loss: step " + std::to_string(t) + " shapes differ, " +
                       shape_str(preds[t].shape()) + " vs " + shape_str(targets[t].shape()));
    Tensor diff = sub(targets[t], preds[t]);
    Tensor term = (p == 1) ? sum(abs_op(diff)) : sum(mul(diff, diff));
    total = add(total, term);
  }
  if (preds[0].rank() == 2) total = scale(total, 1.0 / static_cast<double>(preds[0].extent(0)));
  return total;
}

void validate(const GanLossWeights& w) {
  if (w.lambda_adv < 0.0 || w.lambda_p < 0.0)
    throw UsageError("loss weights must be non-negative");
  if (w.lambda_adv == 0.0 && w.lambda_p == 0.0)
    throw UsageError("loss weights cannot both be zero");
  if (w.p != 1 && w.p != 2) throw UsageError("p must be 1 or 2");
}

Tensor d_loss_context(const std::vector<Tensor>& real_scores,
                      const std::vector<Tensor>& fake_scores) {
  if (real_scores.size() != fake_scores.size())
    throw ShapeError("d_loss_context: " + std::to_string(real_scores.size()) + " real vs " +
                     std::to_string(fake_scores.size()) + " fake score steps");
  if (real_scores.empty()) throw ShapeError("d_loss_context: no score steps");

  Tensor total = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < real_scores.size(); ++t) {
    total = add(total, bce(real_scores[t], 1));
    total = add(total, bce(fake_scores[t], 0));
  }
  return total;
}

Tensor g_loss(const std::vector<Tensor>& fake_scores, const std::vector<Tensor>& preds,
              const std::vector<Tensor>& targets, const GanLossWeights& w) {
  validate(w);
  Tensor total = Tensor::scalar(0.0);
  if (w.lambda_adv > 0.0) {
    Tensor adv = Tensor::scalar(0.0);
    for (const Tensor& s : fake_scores) adv = add(adv, bce(s, 1));
    total = add(total, scale(adv, w.lambda_adv));
  }
  if (w.lambda_p > 0.0) total = add(total, scale(lp_loss(preds, targets, w.p), w.lambda_p));
  return total;
}

Tensor contrastive(const Tensor& e1, const Tensor& e2, bool similar, double margin) {
  if (e1.shape() != e2.shape())
    throw ShapeError("contrastive: embedding shapes differ, " + shape_str(e1.shape()) + " vs " +
                     shape_str(e2.shape()));
  if (margin <= 0.0) throw UsageError("contrastive: margin must be positive");

  Tensor diff = sub(e1, e2);
  Tensor d2 = sum(mul(diff, diff));
  if (similar) return scale(d2, 0.5);
  Tensor d = sqrt_op(add_const(d2, 1e-24));
  Tensor gap = relu(add_const(scale(d, -1.0), margin));
  return scale(mul(gap, gap), 0.5);
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  beta1_pow_ *= cfg_.beta1;
  beta2_pow_ *= cfg_.beta2;
  const double bc1 = 1.0 - beta1_pow_;
  const double bc2 = 1.0 - beta2_pow_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) {  // untouched this pass: moments still decay
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < m.size(); ++j) {
        m[j] *= cfg_.beta1;
        v[j] *= cfg_.beta2;
        const double mh = m[j] / bc1;
        const double vh = v[j] / bc2;
        p.data()[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
      continue;
    }
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      p.data()[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

}  // namespace seqadv::objectives
