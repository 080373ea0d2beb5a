#ifndef PROTONET_EXPERIMENT_HPP
#define PROTONET_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "protonet/data.hpp"
#include "protonet/embed.hpp"
#include "protonet/episodes.hpp"
#include "protonet/eval.hpp"
#include "protonet/train.hpp"

namespace protonet {

enum class SourceKind { kSynthetic, kPfeb, kPgm };

struct SyntheticSpec {
  std::size_t classes = 3;
  std::vector<std::size_t> per_class{200};  // one value for all, or one per class
  std::size_t dim = 16;
  double separation = 2.0;
  double sigma = 1.0;
  std::size_t nuisance_dims = 0;
  double nuisance_sigma = 3.0;
  std::vector<std::string> class_names;

  std::vector<std::size_t> counts() const;
};

struct DatasetSpec {
  SourceKind source = SourceKind::kSynthetic;
  std::filesystem::path path;
  SyntheticSpec synthetic;
  std::size_t image_size = 224;
  std::size_t augment_copies = 0;
  double split_ratio = 0.8;
};

struct HeadSpec {
  Architecture architecture = Architecture::kLinear;
  std::vector<std::size_t> hidden{128};  // mlp only
  std::size_t output_dim = 64;
  bool untrained_identity = true;  // false: freshly initialised head
};

/// Everything one run needs. Parsed from an INI file with sections
/// [experiment] [dataset] [embedding] [episodes] [train] [eval].
struct ExperimentConfig {
  std::string label;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::filesystem::path output_dir = "out";
  DatasetSpec dataset;
  bool has_source = false;
  HeadSpec head;
  std::size_t n_way = 3;
  std::vector<std::size_t> shots{1, 5, 10, 20};
  std::size_t q_query = 10;
  std::vector<Mode> modes{Mode::kWithoutTraining, Mode::kWithTraining};
  TrainConfig train;
  std::size_t eval_episodes = 1000;
  std::size_t threads = 1;

  std::vector<EpisodeConfig> episode_configs() const;
  /// Throws ConfigParseError naming the offending field.
  void validate() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text of the effective configuration; hashed into reports.
std::string render_config(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

/// The synthetic dataset a config describes.
LabeledDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Loads or generates the dataset, splits it train/held-out, and applies
/// image augmentation to the training half when configured.
std::pair<LabeledDataset, LabeledDataset> prepare_splits(const ExperimentConfig& config);

/// Head used for the untrained mode and the starting point of meta-training.
EmbeddingNetwork initial_head(const ExperimentConfig& config, std::size_t input_dim, Mode mode);

std::uint64_t eval_seed(const ExperimentConfig& config) noexcept;
std::uint64_t train_seed(const ExperimentConfig& config, const EpisodeConfig& ep) noexcept;

std::string checkpoint_name(const ExperimentConfig& config, const EpisodeConfig& ep, Mode mode);

/*
 * Runs the full grid (episode configs x modes). with_training meta-trains on
 * the training split and evaluates on the held-out split; without_training
 * evaluates the untrained head on the same held-out episodes. Writes
 * report.csv, confusion.csv, one checkpoint per row, training histories and
 * manifest.txt into config.output_dir.
 */
EvalReport run_experiment(const ExperimentConfig& config);

}  // namespace protonet

#endif  // PROTONET_EXPERIMENT_HPP
