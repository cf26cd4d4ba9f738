#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "igar/mini_vla.hpp"
#include "igar/scene_world.hpp"
#include "igar/tokenizer.hpp"

namespace igar {

struct TrainingExample {
  Scene scene;
  std::optional<std::size_t> held;
  std::optional<Instruction> instruction;  ///< nullopt when dropped
  std::size_t action = 0;                  ///< expert action index
};

struct ToyDataset {
  std::vector<TrainingExample> examples;
  double dropout = 0.0;

  /// Throws InvalidInput unless every expert action is valid in its world
  /// state and dropout lies in [0, 1].
  void validate() const;
};

TokenSequence tokenize(const TrainingExample& example, std::size_t action_queries = 1);

/// One pick and one place example per generated scene. The expert always
/// follows saliency, which always agrees with the instruction; each
/// instruction is dropped independently with probability `dropout`.
ToyDataset make_shortcut_dataset(std::size_t scenes, double dropout, Rng& rng);

/// Cross-entropy of the expert action. When `grad` is non-null the analytic
/// gradient is added into it (same shape as `spec`; start from a buffer
/// whose entries are all zero, gains included).
double loss_and_gradient(const PolicySpec& spec, const TokenSequence& tokens, std::size_t target,
                         PolicySpec* grad);

struct TrainOptions {
  double lr = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
};

struct TrainResult {
  PolicySpec spec;
  std::vector<double> epoch_loss;  ///< mean training loss seen during each epoch
};

/// Minibatch SGD over shuffled examples. Throws DivergenceError on a
/// non-finite loss. An epoch whose loss rises more than 5% is logged.
TrainResult train(const PolicySpec& spec, const ToyDataset& data, const TrainOptions& options, Rng& rng);

/// Everything needed to reproduce the shortcut-trained policy.
struct ShortcutRecipe {
  std::uint64_t seed = 2024;
  std::size_t scenes = 1500;
  double dropout = 0.3;
  double init_scale = 0.1;
  PolicyShape shape{};
  TrainOptions options{0.05, 12, 16};
};

TrainResult train_shortcut_policy(const ShortcutRecipe& recipe);

}  // namespace igar
