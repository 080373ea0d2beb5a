#ifndef PROTONET_TRAIN_HPP
#define PROTONET_TRAIN_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "protonet/data.hpp"
#include "protonet/embed.hpp"
#include "protonet/episodes.hpp"

namespace protonet {

enum class OptimizerKind { kSgd, kAdam };

const char* optimizer_name(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  std::size_t episodes_total = 2000;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t val_every = 100;
  std::size_t val_episodes = 100;
  std::size_t threads = 1;  // validation workers only
  std::uint64_t seed = 0;

  void validate() const;
};

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

/// In-place update of `params`. Throws ShapeMismatch.
void optimizer_step(std::span<double> params, std::span<const double> gradients,
                    OptimizerState& state, const TrainConfig& config);
void optimizer_step(EmbeddingNetwork& net, const Gradients& gradients, OptimizerState& state,
                    const TrainConfig& config);

struct TrainRecord {
  std::size_t episode = 0;      // 1-based count of completed training episodes
  double loss = 0.0;            // mean training loss since the previous record
  double val_accuracy = 0.0;
  double elapsed_s = 0.0;
};

struct TrainHistory {
  std::vector<TrainRecord> records;
};

struct TrainResult {
  EmbeddingNetwork network;
  TrainHistory history;
};

/// Seeds used by meta_train: training episodes come from one sequential
/// stream, validation from a fixed evaluation seed so every checkpoint is
/// scored on the same episodes.
std::uint64_t training_stream_seed(std::uint64_t seed) noexcept;
std::uint64_t validation_seed(std::uint64_t seed) noexcept;

/*
 * Episodic meta-training: sample an episode from `train`, compute the loss
 * gradient, take one optimizer step. Every val_every episodes (and after the
 * last one) the frozen network is evaluated on val_episodes episodes of `val`.
 */
TrainResult meta_train(const LabeledDataset& train, const LabeledDataset& val,
                       const EpisodeConfig& episode_config, const TrainConfig& config,
                       EmbeddingNetwork initial);

void write_history_csv(const TrainHistory& history, std::ostream& out);

}  // namespace protonet

#endif  // PROTONET_TRAIN_HPP
