#include "seqadv/config.hpp"

#include <sstream>

#include "seqadv/errors.hpp"
#include "seqadv/rng.hpp"

namespace seqadv::cli {

models::ModelKind RunConfig::kind() const { return models::parse_model_kind(model); }

features::FeatureKind RunConfig::feature_kind() const {
  return features::parse_feature_kind(feature);
}

int RunConfig::effective_p() const {
  if (p != 0) {
    if (p != 1 && p != 2) throw UsageError("p must be 1 or 2");
    return p;
  }
  const std::string l = effective_loss();
  if (l == "l1") return 1;
  if (l == "l2") return 2;
  return task == "frames" ? 2 : 1;
}

std::string RunConfig::effective_loss() const {
  if (!loss.empty()) {
    if (loss != "l1" && loss != "l2" && loss != "adv")
      throw UsageError("loss must be l1, l2 or adv");
    return loss;
  }
  const models::ModelKind k = kind();
  if (k == models::ModelKind::rnn_gan || k == models::ModelKind::ctx_rnn_gan) return "adv";
  return task == "frames" || p == 2 ? "l2" : "l1";
}

models::TrainConfig RunConfig::resolve(std::size_t dataset_size) const {
  if (task != "dar" && task != "frames") throw UsageError("task must be dar or frames");
  models::TrainConfig cfg;
  cfg.kind = kind();
  cfg.gen_layers = gen_layers;
  cfg.gen_hidden = gen_hidden;
  cfg.dis_hidden = dis_hidden;
  cfg.mlp_hidden = mlp_hidden;
  cfg.ff_hidden = ff_hidden;
  cfg.lr = lr;
  cfg.batch = batch;
  cfg.seed = seed;

  const std::string l = effective_loss();
  const bool gan =
      cfg.kind == models::ModelKind::rnn_gan || cfg.kind == models::ModelKind::ctx_rnn_gan;
  if (l == "adv" && !gan) throw UsageError("loss=adv requires a GAN model");
  cfg.weights.p = effective_p();
  cfg.weights.lambda_p = lambda_p;
  if (l == "adv") {
    cfg.weights.lambda_adv = lambda_adv < 0.0 ? 0.05 : lambda_adv;
  } else {
    if (lambda_adv > 0.0) throw UsageError("lambda_adv needs loss=adv on a GAN model");
    cfg.weights.lambda_adv = 0.0;
  }

  if (steps > 0) {
    cfg.steps = steps;
  } else if (epochs > 0) {
    if (dataset_size == 0) throw UsageError("cannot derive steps from epochs without data");
    const std::size_t bpe = dataset_size / std::min(batch, dataset_size);
    cfg.steps = epochs * bpe;
  } else {
    cfg.steps = 1000;
  }
  return cfg;
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "task=" << task << ";model=" << model << ";features=" << feature
     << ";loss=" << effective_loss() << ";lambda_adv=" << lambda_adv
     << ";lambda_p=" << lambda_p << ";p=" << effective_p() << ";lr=" << lr
     << ";batch=" << batch << ";epochs=" << epochs << ";steps=" << steps << ";seed=" << seed
     << ";gen=" << gen_layers << "x" << gen_hidden << ";dis=" << dis_hidden
     << ";mlp=" << mlp_hidden << ";ff=" << ff_hidden;
  return os.str();
}

std::uint64_t RunConfig::hash() const { return Rng::fnv1a(canonical()); }

}  // namespace seqadv::cli
