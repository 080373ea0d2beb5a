// protonet: command-line runner for prototypical-network experiments.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "protonet/data.hpp"
#include "protonet/error.hpp"
#include "protonet/eval.hpp"
#include "protonet/experiment.hpp"
#include "protonet/train.hpp"

namespace {

using protonet::Error;
using protonet::ErrorCode;

// Library errors exit with 10 + their code so every failure kind is distinct.
int exit_code(ErrorCode code) { return 10 + static_cast<int>(code); }

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "Experiment config (INI)");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", flags.out, "Output directory");
  cmd->add_option("--threads", flags.threads, "Evaluation worker threads");
}

protonet::ExperimentConfig resolve(const CommonFlags& flags) {
  protonet::ExperimentConfig cfg = protonet::load_config(flags.config_path);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.has_seed = true;
  }
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  if (flags.threads) cfg.threads = *flags.threads;
  cfg.validate();
  return cfg;
}

int cmd_run(const CommonFlags& flags) {
  const auto cfg = resolve(flags);
  const auto report = protonet::run_experiment(cfg);
  std::cout << protonet::format_table(report.rows);
  std::cout << "report: " << (cfg.output_dir / "report.csv").string() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, std::optional<std::size_t> shot) {
  auto cfg = resolve(flags);
  if (shot) cfg.shots = {*shot};
  const protonet::EpisodeConfig ep = cfg.episode_configs().front();
  std::filesystem::create_directories(cfg.output_dir);

  const auto [train, held_out] = protonet::prepare_splits(cfg);
  protonet::TrainConfig tc = cfg.train;
  tc.seed = protonet::train_seed(cfg, ep);
  tc.threads = cfg.threads;
  auto head = protonet::initial_head(cfg, train.dim, protonet::Mode::kWithTraining);
  const auto result = protonet::meta_train(train, held_out, ep, tc, std::move(head));

  const auto ckpt = cfg.output_dir / protonet::checkpoint_name(cfg, ep, protonet::Mode::kWithTraining);
  protonet::save_network(result.network, ckpt);
  std::ofstream hist(cfg.output_dir / "history.csv");
  protonet::write_history_csv(result.history, hist);
  protonet::write_history_csv(result.history, std::cout);
  std::cout << "checkpoint: " << ckpt.string() << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint) {
  const auto cfg = resolve(flags);
  const auto [train, held_out] = protonet::prepare_splits(cfg);
  const protonet::Mode mode =
      checkpoint.empty() ? protonet::Mode::kWithoutTraining : protonet::Mode::kWithTraining;
  const protonet::EmbeddingNetwork net = checkpoint.empty()
                                             ? protonet::initial_head(cfg, held_out.dim, mode)
                                             : protonet::load_network(checkpoint);
  std::vector<protonet::EvalResult> results;
  for (const auto& ep : cfg.episode_configs()) {
    protonet::EvalOptions opts;
    opts.n_episodes = cfg.eval_episodes;
    opts.seed = protonet::eval_seed(cfg);
    opts.threads = cfg.threads;
    opts.backbone = cfg.label.empty() ? "features" : cfg.label;
    opts.mode = mode;
    results.push_back(protonet::evaluate(held_out, net, ep, opts));
  }
  const auto report = protonet::summarize(std::move(results), held_out.class_names, cfg.seed,
                                          protonet::config_hash(cfg));
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream csv(cfg.output_dir / "eval_report.csv");
  protonet::write_report_csv(report, csv);
  std::ofstream cm(cfg.output_dir / "eval_confusion.csv");
  protonet::write_confusion_csv(report, cm);
  std::cout << protonet::format_table(report.rows);
  return 0;
}

int cmd_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::cout << protonet::format_table(protonet::read_report_csv(in));
  return 0;
}

struct SyntheticFlags {
  std::optional<std::size_t> classes;
  std::optional<std::size_t> per_class;
  std::optional<std::size_t> dim;
  std::optional<double> sigma;
  std::optional<double> separation;
  std::optional<std::size_t> nuisance_dims;
};

int cmd_gen(const CommonFlags& flags, const SyntheticFlags& syn, const std::string& out_file) {
  protonet::ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = protonet::load_config(flags.config_path);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.has_seed = true;
  }
  if (!cfg.has_seed) throw Error(ErrorCode::kConfigParseError, "experiment.seed: is required (or pass --seed)");
  auto& spec = cfg.dataset.synthetic;
  if (syn.classes) spec.classes = *syn.classes;
  if (syn.per_class) spec.per_class = {*syn.per_class};
  if (syn.dim) spec.dim = *syn.dim;
  if (syn.sigma) spec.sigma = *syn.sigma;
  if (syn.separation) spec.separation = *syn.separation;
  if (syn.nuisance_dims) spec.nuisance_dims = *syn.nuisance_dims;
  cfg.has_source = true;
  cfg.dataset.source = protonet::SourceKind::kSynthetic;
  cfg.validate();

  // Same stream run_experiment uses, so the file equals the in-memory data.
  const auto ds = protonet::generate_synthetic(spec, protonet::derive_seed(cfg.seed, 1));
  protonet::save_embeddings(ds, out_file);
  std::cout << "wrote " << ds.size() << " examples, dim " << ds.dim << " to " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototypical-network few-shot experiments over frozen features"};
  app.require_subcommand(1);

  CommonFlags run_flags, train_flags, eval_flags, gen_flags;
  auto* run = app.add_subcommand("run", "Run the full shot x mode grid and write reports");
  add_common(run, run_flags, true);

  auto* train = app.add_subcommand("train", "Meta-train a head for one episode shape");
  add_common(train, train_flags, true);
  std::optional<std::size_t> train_shot;
  train->add_option("--shot", train_shot, "Shot count (default: first in config)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (or the untrained head)");
  add_common(eval, eval_flags, true);
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "PFNW checkpoint to evaluate");

  auto* report = app.add_subcommand("report", "Render a report CSV as a table");
  std::string report_path;
  report->add_option("--in", report_path, "report.csv")->required();

  auto* gen = app.add_subcommand("gen-synthetic", "Write a Gaussian-blob dataset as PFEB");
  add_common(gen, gen_flags, false);
  SyntheticFlags syn;
  gen->add_option("--classes", syn.classes);
  gen->add_option("--per-class", syn.per_class);
  gen->add_option("--dim", syn.dim);
  gen->add_option("--sigma", syn.sigma);
  gen->add_option("--separation", syn.separation);
  gen->add_option("--nuisance-dims", syn.nuisance_dims);
  std::string gen_out;
  gen->add_option("--file", gen_out, "Output PFEB path (default: <out>/synthetic.pfeb)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_flags);
    if (*train) return cmd_train(train_flags, train_shot);
    if (*eval) return cmd_eval(eval_flags, checkpoint);
    if (*report) return cmd_report(report_path);
    if (*gen) {
      std::string file = gen_out;
      if (file.empty()) {
        const std::filesystem::path dir = gen_flags.out.empty() ? "." : gen_flags.out;
        std::filesystem::create_directories(dir);
        file = (dir / "synthetic.pfeb").string();
      }
      return cmd_gen(gen_flags, syn, file);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return exit_code(ErrorCode::kIoError);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
