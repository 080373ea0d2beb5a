#include "protonet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "protonet/error.hpp"

namespace protonet {

const char* mode_name(Mode mode) noexcept {
  return mode == Mode::kWithTraining ? "with_training" : "without_training";
}

Mode parse_mode(const std::string& name) {
  if (name == "without_training") return Mode::kWithoutTraining;
  if (name == "with_training") return Mode::kWithTraining;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + name + "'");
}

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes)
    : n_(n_classes), counts_(n_classes * n_classes, 0) {}

void ConfusionMatrix::add(std::size_t actual, std::size_t predicted, std::uint64_t count) {
  if (actual >= n_ || predicted >= n_) {
    throw Error(ErrorCode::kClassIndexOutOfRange, "confusion matrix index out of range");
  }
  counts_[actual * n_ + predicted] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw Error(ErrorCode::kShapeMismatch, "confusion matrix sizes differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::at(std::size_t actual, std::size_t predicted) const {
  return counts_.at(actual * n_ + predicted);
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < n_; ++i) t += counts_[i * n_ + i];
  return t;
}

std::uint64_t ConfusionMatrix::support(std::size_t actual) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += at(actual, p);
  return s;
}

double weighted_accuracy(const ConfusionMatrix& cm) {
  const auto total = static_cast<double>(cm.total());
  if (total == 0.0) throw Error(ErrorCode::kEmptyMatrix, "confusion matrix has no entries");
  double acc = 0.0;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    const auto support = static_cast<double>(cm.support(c));
    if (support == 0.0) continue;
    const double recall = static_cast<double>(cm.at(c, c)) / support;
    acc += (support / total) * recall;
  }
  return acc;
}

EpisodeOutcome run_episode(const LabeledDataset& dataset, const EmbeddingNetwork& net,
                           const Episode& episode) {
  const std::size_t n = episode.class_ids.size();
  std::vector<Vector> support;
  std::vector<std::size_t> support_labels;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i : episode.support[k]) {
      support.push_back(embed_forward(net, dataset.row_as_vector(i)));
      support_labels.push_back(k);
    }
  }
  PrototypeSet protos = compute_prototypes(support, support_labels, n);
  protos.class_ids = episode.class_ids;

  EpisodeOutcome out;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i : episode.query[k]) {
      const Vector z = embed_forward(net, dataset.row_as_vector(i));
      const std::size_t pred = classify_query(z, protos);
      out.actual.push_back(episode.class_ids[k]);
      out.predicted.push_back(episode.class_ids[pred]);
      if (pred == k) ++out.correct;
    }
  }
  return out;
}

EvalResult evaluate(const LabeledDataset& dataset, const EmbeddingNetwork& net,
                    const EpisodeConfig& config, const EvalOptions& options) {
  if (options.n_episodes == 0) {
    throw Error(ErrorCode::kInvalidArgument, "evaluation needs at least one episode");
  }
  if (net.input_dim() != dataset.dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "network input dim " + std::to_string(net.input_dim()) +
                    " differs from feature dim " + std::to_string(dataset.dim));
  }
  const auto start = std::chrono::steady_clock::now();
  const EpisodeSampler sampler(dataset, config);

  std::vector<EpisodeOutcome> outcomes(options.n_episodes);
  const auto run_one = [&](std::size_t i) {
    Rng rng(derive_seed(options.seed, i));
    outcomes[i] = run_episode(dataset, net, sampler.sample(rng));
  };

  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, options.n_episodes);
  if (workers == 1) {
    for (std::size_t i = 0; i < options.n_episodes; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < options.n_episodes; i = next++) run_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
          next = options.n_episodes;
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Reduce in episode order.
  EvalResult result;
  result.confusion = ConfusionMatrix(dataset.n_classes());
  // Episodes all hold n_way * q_query queries, so the mean of the per-episode
  // accuracies is the pooled ratio, which integer counts give exactly rounded.
  std::uint64_t correct = 0, queries = 0;
  for (const auto& o : outcomes) {
    for (std::size_t q = 0; q < o.actual.size(); ++q) {
      result.confusion.add(o.actual[q], o.predicted[q]);
    }
    result.episode_accuracies.push_back(o.accuracy());
    correct += o.correct;
    queries += o.actual.size();
  }
  const auto n = static_cast<double>(options.n_episodes);
  const double mean = queries == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(queries);
  double ci = 0.0;
  if (options.n_episodes > 1) {
    double ss = 0.0;
    for (double a : result.episode_accuracies) ss += (a - mean) * (a - mean);
    ci = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }

  result.row.backbone = options.backbone;
  result.row.n_way = config.n_way;
  result.row.k_shot = config.k_shot;
  result.row.mode = options.mode;
  result.row.episodes = options.n_episodes;
  result.row.accuracy_mean = mean;
  result.row.accuracy_ci95 = ci;
  result.row.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

namespace {

auto row_key(const EvalRow& r) {
  return std::make_tuple(r.backbone, r.k_shot, static_cast<int>(r.mode), r.n_way);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string format_duration(double seconds) {
  char buf[64];
  if (seconds < 60.0) {
    std::snprintf(buf, sizeof(buf), "%.2f s", seconds);
  } else if (seconds < 3600.0) {
    const auto s = static_cast<long>(std::lround(seconds));
    std::snprintf(buf, sizeof(buf), "%02ld min %02ld s", s / 60, s % 60);
  } else {
    const auto m = static_cast<long>(std::lround(seconds / 60.0));
    std::snprintf(buf, sizeof(buf), "%02ld h %02ld min", m / 60, m % 60);
  }
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

EvalReport summarize(std::vector<EvalResult> results, std::vector<std::string> class_names,
                     std::uint64_t seed, std::string config_hash) {
  std::stable_sort(results.begin(), results.end(), [](const EvalResult& a, const EvalResult& b) {
    return row_key(a.row) < row_key(b.row);
  });
  EvalReport report;
  for (auto& r : results) {
    report.rows.push_back(r.row);
    report.confusions.push_back(std::move(r.confusion));
  }
  report.class_names = std::move(class_names);
  report.seed = seed;
  report.config_hash = std::move(config_hash);
  return report;
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
  out << kReportCsvHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.backbone << ',' << r.n_way << ',' << r.k_shot << ',' << mode_name(r.mode) << ','
        << r.episodes << ',' << fixed(r.accuracy_mean, 4) << ',' << fixed(r.accuracy_ci95, 4)
        << ',' << fixed(r.wall_time_s, 3) << '\n';
  }
}

void write_confusion_csv(const EvalReport& report, std::ostream& out) {
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const auto& cm = report.confusions.at(i);
    if (i > 0) out << '\n';
    out << "# backbone=" << r.backbone << " n_way=" << r.n_way << " k_shot=" << r.k_shot
        << " mode=" << mode_name(r.mode) << '\n';
    out << "actual\\predicted";
    for (std::size_t c = 0; c < cm.n_classes(); ++c) {
      out << ',' << (c < report.class_names.size() ? report.class_names[c] : std::to_string(c));
    }
    out << '\n';
    for (std::size_t a = 0; a < cm.n_classes(); ++a) {
      out << (a < report.class_names.size() ? report.class_names[a] : std::to_string(a));
      for (std::size_t p = 0; p < cm.n_classes(); ++p) out << ',' << cm.at(a, p);
      out << '\n';
    }
  }
}

std::vector<EvalRow> read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) {
    throw Error(ErrorCode::kConfigParseError, "report CSV header mismatch");
  }
  std::vector<EvalRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) {
      throw Error(ErrorCode::kConfigParseError,
                  "report CSV line " + std::to_string(line_no) + " has " +
                      std::to_string(f.size()) + " fields");
    }
    try {
      EvalRow r;
      r.backbone = f[0];
      r.n_way = std::stoul(f[1]);
      r.k_shot = std::stoul(f[2]);
      r.mode = parse_mode(f[3]);
      r.episodes = std::stoul(f[4]);
      r.accuracy_mean = std::stod(f[5]);
      r.accuracy_ci95 = std::stod(f[6]);
      r.wall_time_s = std::stod(f[7]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kConfigParseError,
                  "report CSV line " + std::to_string(line_no) + " is malformed");
    }
  }
  return rows;
}

std::string format_table(const std::vector<EvalRow>& rows) {
  struct Cells {
    std::string acc[2] = {"-", "-"};
    std::string time[2] = {"-", "-"};
  };
  std::map<std::tuple<std::string, std::size_t, std::size_t>, Cells> grid;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> order;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.backbone, r.n_way, r.k_shot);
    if (!grid.contains(key)) order.push_back(key);
    auto& cells = grid[key];
    const int m = r.mode == Mode::kWithTraining ? 1 : 0;
    cells.acc[m] = fixed(100.0 * r.accuracy_mean, 2) + "% +/- " + fixed(100.0 * r.accuracy_ci95, 2);
    cells.time[m] = format_duration(r.wall_time_s);
  }

  std::vector<std::vector<std::string>> lines;
  lines.push_back({"Backbone", "Way", "Shot", "Without Training", "Time", "With Training", "Time"});
  std::string previous;
  for (const auto& key : order) {
    const auto& [backbone, way, shot] = key;
    const auto& c = grid[key];
    lines.push_back({backbone == previous ? "" : backbone, std::to_string(way),
                     std::to_string(shot), c.acc[0], c.time[0], c.acc[1], c.time[1]});
    previous = backbone;
  }
  std::vector<std::size_t> width(lines.front().size(), 0);
  for (const auto& l : lines) {
    for (std::size_t i = 0; i < l.size(); ++i) width[i] = std::max(width[i], l[i].size());
  }
  std::ostringstream out;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    for (std::size_t i = 0; i < lines[li].size(); ++i) {
      out << lines[li][i] << std::string(width[i] - lines[li][i].size(), ' ');
      out << (i + 1 < lines[li].size() ? "  " : "\n");
    }
    if (li == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace protonet
