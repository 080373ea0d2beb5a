#ifndef PROTONET_EPISODES_HPP
#define PROTONET_EPISODES_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "protonet/core.hpp"
#include "protonet/data.hpp"
#include "protonet/rng.hpp"

namespace protonet {

/// N-way K-shot with q_query queries per class.
struct EpisodeConfig {
  std::size_t n_way = 3;
  std::size_t k_shot = 5;
  std::size_t q_query = 10;

  std::size_t per_class() const noexcept { return k_shot + q_query; }
  void validate() const;

  friend bool operator==(const EpisodeConfig&, const EpisodeConfig&) = default;
};

/*
 * One sampled task. class_ids are ascending global class ids; episode class
 * k is class_ids[k]. support[k] and query[k] hold dataset indices.
 */
struct Episode {
  std::vector<std::uint32_t> class_ids;
  std::vector<std::vector<std::size_t>> support;
  std::vector<std::vector<std::size_t>> query;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Classes holding at least k_shot + q_query examples, ascending.
std::vector<std::uint32_t> eligible_classes(const LabeledDataset& dataset,
                                            const EpisodeConfig& config);

/// Samples repeatedly from one dataset without rebuilding the class index.
class EpisodeSampler {
 public:
  EpisodeSampler(const LabeledDataset& dataset, EpisodeConfig config);

  Episode sample(Rng& rng) const;

  const EpisodeConfig& config() const noexcept { return config_; }
  const std::vector<std::uint32_t>& eligible() const noexcept { return eligible_; }

 private:
  EpisodeConfig config_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::uint32_t> eligible_;
};

/// Throws InsufficientClasses when fewer than n_way classes are eligible.
Episode sample_episode(const LabeledDataset& dataset, const EpisodeConfig& config, Rng& rng);

/// Widen the episode's rows to double, labelled by episode class index.
EpisodeBatch gather_batch(const LabeledDataset& dataset, const Episode& episode);

}  // namespace protonet

#endif  // PROTONET_EPISODES_HPP
