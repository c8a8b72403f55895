#pragma once

#include <cstdint>
#include <string>

#include "seqadv/features.hpp"
#include "seqadv/models.hpp"

namespace seqadv::cli {

// Resolved run parameters. Precedence is flags > config file > these defaults;
// the config file is line-based `key = value` handled by the flag parser.
struct RunConfig {
  std::string task = "dar";            // dar | frames
  std::string model = "ctx-rnn-gan";   // ff | rnn | rnn-gan | ctx-rnn-gan
  std::string feature = "raw";         // raw | hog | ae | cnn | siamese
  std::string loss;                    // l1 | l2 | adv; empty picks the model default
  double lambda_adv = -1.0;            // < 0 picks the default 0.05 for adv loss
  double lambda_p = 1.0;
  int p = 0;                           // 0 picks 1 for dar, 2 for frames
  double lr = 2e-4;
  std::size_t batch = 16;
  std::size_t epochs = 0;              // used when steps == 0
  std::uint64_t steps = 0;             // 0 derives from epochs (or 1000)
  std::uint64_t seed = 0;
  std::size_t gen_layers = 2;
  std::size_t gen_hidden = 400;
  std::size_t dis_hidden = 500;
  std::size_t mlp_hidden = 512;
  std::size_t ff_hidden = 1000;

  models::ModelKind kind() const;
  features::FeatureKind feature_kind() const;
  int effective_p() const;
  std::string effective_loss() const;

  // Validates cross-field invariants (loss=adv needs a GAN, p in {1,2}).
  models::TrainConfig resolve(std::size_t dataset_size) const;

  std::string canonical() const;  // stable key=value serialization
  std::uint64_t hash() const;
};

}  // namespace seqadv::cli
