#include "protonet/episodes.hpp"

#include <algorithm>
#include <string>

#include "protonet/error.hpp"

namespace protonet {

void EpisodeConfig::validate() const {
  if (n_way < 2) throw Error(ErrorCode::kInvalidArgument, "n_way must be at least 2");
  if (k_shot < 1) throw Error(ErrorCode::kInvalidArgument, "k_shot must be at least 1");
  if (q_query < 1) throw Error(ErrorCode::kInvalidArgument, "q_query must be at least 1");
}

std::vector<std::uint32_t> eligible_classes(const LabeledDataset& dataset,
                                            const EpisodeConfig& config) {
  std::vector<std::uint32_t> out;
  const auto counts = dataset.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] >= config.per_class()) out.push_back(static_cast<std::uint32_t>(c));
  }
  return out;
}

EpisodeSampler::EpisodeSampler(const LabeledDataset& dataset, EpisodeConfig config)
    : config_(config), members_(dataset.members_by_class()),
      eligible_(eligible_classes(dataset, config)) {
  config_.validate();
  if (eligible_.size() < config_.n_way) {
    throw Error(ErrorCode::kInsufficientClasses,
                std::to_string(eligible_.size()) + " classes hold at least " +
                    std::to_string(config_.per_class()) + " examples; " +
                    std::to_string(config_.n_way) + "-way episodes need " +
                    std::to_string(config_.n_way));
  }
}

Episode EpisodeSampler::sample(Rng& rng) const {
  // Partial Fisher-Yates over the eligible classes.
  std::vector<std::uint32_t> classes = eligible_;
  for (std::size_t i = 0; i < config_.n_way; ++i) {
    std::swap(classes[i], classes[i + rng.below(classes.size() - i)]);
  }
  classes.resize(config_.n_way);
  std::sort(classes.begin(), classes.end());

  Episode ep;
  ep.class_ids = classes;
  ep.support.resize(config_.n_way);
  ep.query.resize(config_.n_way);
  for (std::size_t k = 0; k < config_.n_way; ++k) {
    std::vector<std::size_t> pool = members_[classes[k]];
    if (pool.size() < config_.per_class()) {
      throw Error(ErrorCode::kInsufficientSamples,
                  "class " + std::to_string(classes[k]) + " has too few examples");
    }
    for (std::size_t i = 0; i < config_.per_class(); ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    ep.support[k].assign(pool.begin(), pool.begin() + config_.k_shot);
    ep.query[k].assign(pool.begin() + config_.k_shot, pool.begin() + config_.per_class());
  }
  return ep;
}

Episode sample_episode(const LabeledDataset& dataset, const EpisodeConfig& config, Rng& rng) {
  return EpisodeSampler(dataset, config).sample(rng);
}

EpisodeBatch gather_batch(const LabeledDataset& dataset, const Episode& episode) {
  EpisodeBatch batch;
  batch.n_classes = episode.class_ids.size();
  for (std::size_t k = 0; k < episode.class_ids.size(); ++k) {
    for (std::size_t i : episode.support[k]) {
      batch.support.push_back(dataset.row_as_vector(i));
      batch.support_labels.push_back(k);
    }
    for (std::size_t i : episode.query[k]) {
      batch.query.push_back(dataset.row_as_vector(i));
      batch.query_labels.push_back(k);
    }
  }
  return batch;
}

}  // namespace protonet
