#ifndef PROTONET_EVAL_HPP
#define PROTONET_EVAL_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "protonet/data.hpp"
#include "protonet/embed.hpp"
#include "protonet/episodes.hpp"

namespace protonet {

enum class Mode { kWithoutTraining, kWithTraining };

const char* mode_name(Mode mode) noexcept;
Mode parse_mode(const std::string& name);

/// counts[actual][predicted] over global class ids.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t n_classes);

  void add(std::size_t actual, std::size_t predicted, std::uint64_t count = 1);
  void merge(const ConfusionMatrix& other);

  std::uint64_t at(std::size_t actual, std::size_t predicted) const;
  std::size_t n_classes() const noexcept { return n_; }
  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  /// Row sum: number of queries whose true class is `actual`.
  std::uint64_t support(std::size_t actual) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Per-class recall weighted by class support. Throws EmptyMatrix.
double weighted_accuracy(const ConfusionMatrix& cm);

/// Predictions for every query of one episode, in global class ids, in the
/// episode's query order (class by class).
struct EpisodeOutcome {
  std::vector<std::uint32_t> actual;
  std::vector<std::uint32_t> predicted;
  std::size_t correct = 0;

  double accuracy() const noexcept {
    return actual.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(actual.size());
  }
};

EpisodeOutcome run_episode(const LabeledDataset& dataset, const EmbeddingNetwork& net,
                           const Episode& episode);

struct EvalRow {
  std::string backbone;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  Mode mode = Mode::kWithoutTraining;
  std::size_t episodes = 0;
  double accuracy_mean = 0.0;
  double accuracy_ci95 = 0.0;
  double wall_time_s = 0.0;
};

struct EvalOptions {
  std::size_t n_episodes = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string backbone = "features";
  Mode mode = Mode::kWithoutTraining;
};

struct EvalResult {
  EvalRow row;
  ConfusionMatrix confusion;
  std::vector<double> episode_accuracies;
};

/*
 * Evaluates `n_episodes` episodes with frozen parameters. Episode i draws from
 * its own generator seeded by derive_seed(seed, i), so every number except
 * the wall time is independent of the thread count.
 */
EvalResult evaluate(const LabeledDataset& dataset, const EmbeddingNetwork& net,
                    const EpisodeConfig& config, const EvalOptions& options);

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<ConfusionMatrix> confusions;  // parallel to rows
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Orders rows by (backbone, shot, mode), then n_way.
EvalReport summarize(std::vector<EvalResult> results, std::vector<std::string> class_names,
                     std::uint64_t seed, std::string config_hash);

inline constexpr const char* kReportCsvHeader =
    "backbone,n_way,k_shot,mode,episodes,accuracy_mean,accuracy_ci95,wall_time_s";

void write_report_csv(const EvalReport& report, std::ostream& out);
void write_confusion_csv(const EvalReport& report, std::ostream& out);
std::vector<EvalRow> read_report_csv(std::istream& in);

/// Aligned text table: one line per
/// (backbone, way, shot) with both modes side by side.
std::string format_table(const std::vector<EvalRow>& rows);

}  // namespace protonet

#endif  // PROTONET_EVAL_HPP
