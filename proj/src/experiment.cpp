#include "protonet/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "protonet/error.hpp"

namespace protonet {

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::kConfigParseError, field + ": " + why);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& field, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    config_error(field, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::size_t parse_size(const std::string& field, const std::string& text) {
  return static_cast<std::size_t>(parse_u64(field, text));
}

double parse_real(const std::string& field, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    config_error(field, "expected a number, got '" + text + "'");
  }
}

std::vector<std::size_t> parse_sizes(const std::string& field, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) out.push_back(parse_size(field, item));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const char* source_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::kSynthetic: return "synthetic";
    case SourceKind::kPfeb: return "pfeb";
    case SourceKind::kPgm: return "pgm";
  }
  return "unknown";
}

using Setter = void (*)(ExperimentConfig&, const std::string& field, const std::string& value);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment.seed",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.seed = parse_u64(f, v);
         c.has_seed = true;
       }},
      {"experiment.label",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.label = v; }},
      {"experiment.output_dir",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"experiment.threads",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.threads = parse_size(f, v);
       }},
      {"dataset.source",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         if (v == "synthetic") c.dataset.source = SourceKind::kSynthetic;
         else if (v == "pfeb") c.dataset.source = SourceKind::kPfeb;
         else if (v == "pgm") c.dataset.source = SourceKind::kPgm;
         else config_error(f, "expected synthetic, pfeb or pgm, got '" + v + "'");
         c.has_source = true;
       }},
      {"dataset.path",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.dataset.path = v; }},
      {"dataset.classes",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.synthetic.classes = parse_size(f, v);
       }},
      {"dataset.per_class",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.synthetic.per_class = parse_sizes(f, v);
       }},
      {"dataset.dim",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.synthetic.dim = parse_size(f, v);
       }},
      {"dataset.separation",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.synthetic.separation = parse_real(f, v);
       }},
      {"dataset.sigma",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.synthetic.sigma = parse_real(f, v);
       }},
      {"dataset.nuisance_dims",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.synthetic.nuisance_dims = parse_size(f, v);
       }},
      {"dataset.nuisance_sigma",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.synthetic.nuisance_sigma = parse_real(f, v);
       }},
      {"dataset.class_names",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.dataset.synthetic.class_names = split_list(v);
       }},
      {"dataset.image_size",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.image_size = parse_size(f, v);
       }},
      {"dataset.augment_copies",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.augment_copies = parse_size(f, v);
       }},
      {"dataset.split_ratio",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.dataset.split_ratio = parse_real(f, v);
       }},
      {"embedding.head",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         if (v == "linear") c.head.architecture = Architecture::kLinear;
         else if (v == "mlp") c.head.architecture = Architecture::kMlp;
         else config_error(f, "expected linear or mlp, got '" + v + "'");
       }},
      {"embedding.hidden",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.head.hidden = parse_sizes(f, v);
       }},
      {"embedding.output_dim",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.head.output_dim = parse_size(f, v);
       }},
      {"embedding.untrained",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         if (v == "identity") c.head.untrained_identity = true;
         else if (v == "random") c.head.untrained_identity = false;
         else config_error(f, "expected identity or random, got '" + v + "'");
       }},
      {"episodes.n_way",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.n_way = parse_size(f, v);
       }},
      {"episodes.shots",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.shots = parse_sizes(f, v);
       }},
      {"episodes.queries",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.q_query = parse_size(f, v);
       }},
      {"train.episodes",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.train.episodes_total = parse_size(f, v);
       }},
      {"train.optimizer",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         if (v != "sgd" && v != "adam") config_error(f, "expected sgd or adam, got '" + v + "'");
         c.train.optimizer = parse_optimizer(v);
       }},
      {"train.learning_rate",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.train.learning_rate = parse_real(f, v);
       }},
      {"train.beta1",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.train.beta1 = parse_real(f, v);
       }},
      {"train.beta2",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.train.beta2 = parse_real(f, v);
       }},
      {"train.epsilon",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.train.epsilon = parse_real(f, v);
       }},
      {"train.val_every",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.train.val_every = parse_size(f, v);
       }},
      {"train.val_episodes",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.train.val_episodes = parse_size(f, v);
       }},
      {"eval.episodes",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.eval_episodes = parse_size(f, v);
       }},
      {"eval.modes",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.modes.clear();
         for (const auto& m : split_list(v)) {
           if (m != "without_training" && m != "with_training") {
             config_error(f, "unknown mode '" + m + "'");
           }
           c.modes.push_back(parse_mode(m));
         }
       }},
  };
  return table;
}

}  // namespace

std::vector<std::size_t> SyntheticSpec::counts() const {
  if (per_class.size() == 1) return std::vector<std::size_t>(classes, per_class.front());
  return per_class;
}

std::vector<EpisodeConfig> ExperimentConfig::episode_configs() const {
  std::vector<EpisodeConfig> out;
  for (std::size_t k : shots) out.push_back(EpisodeConfig{n_way, k, q_query});
  return out;
}

void ExperimentConfig::validate() const {
  if (!has_source) config_error("dataset.source", "is required (synthetic, pfeb or pgm)");
  if (!has_seed) config_error("experiment.seed", "is required (or pass --seed)");
  if (dataset.source != SourceKind::kSynthetic && dataset.path.empty()) {
    config_error("dataset.path", "is required for this source");
  }
  if (modes.empty()) config_error("eval.modes", "at least one mode is required");
  if (shots.empty()) config_error("episodes.shots", "at least one shot count is required");
  if (n_way < 2) config_error("episodes.n_way", "must be at least 2");
  if (q_query < 1) config_error("episodes.queries", "must be at least 1");
  for (auto k : shots) {
    if (k < 1) config_error("episodes.shots", "shot counts must be at least 1");
  }
  if (eval_episodes < 1) config_error("eval.episodes", "must be at least 1");
  if (!(dataset.split_ratio > 0.0 && dataset.split_ratio < 1.0)) {
    config_error("dataset.split_ratio", "must lie strictly between 0 and 1");
  }
  if (dataset.source == SourceKind::kPgm && dataset.image_size < 1) {
    config_error("dataset.image_size", "must be at least 1");
  }
  if (head.output_dim < 1) config_error("embedding.output_dim", "must be at least 1");
  if (head.architecture == Architecture::kMlp) {
    if (head.hidden.empty()) config_error("embedding.hidden", "mlp needs at least one hidden width");
    for (auto h : head.hidden) {
      if (h < 1) config_error("embedding.hidden", "widths must be at least 1");
    }
  }
  const auto& syn = dataset.synthetic;
  if (dataset.source == SourceKind::kSynthetic) {
    if (syn.classes < 2) config_error("dataset.classes", "must be at least 2");
    if (syn.dim < 1) config_error("dataset.dim", "must be at least 1");
    if (syn.per_class.size() != 1 && syn.per_class.size() != syn.classes) {
      config_error("dataset.per_class", "give one count or one per class");
    }
    if (!(syn.sigma >= 0.0)) config_error("dataset.sigma", "must be non-negative");
    if (!(syn.nuisance_sigma >= 0.0)) config_error("dataset.nuisance_sigma", "must be non-negative");
    if (!syn.class_names.empty() && syn.class_names.size() != syn.classes) {
      config_error("dataset.class_names", "must list one name per class");
    }
  }
  try {
    train.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigParseError, std::string("train: ") + e.what());
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::kConfigParseError,
                source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig config;
  const auto apply = [&](const std::string& field, const std::string& value) {
    const auto it = setters().find(field);
    if (it == setters().end()) config_error(source + ": " + field, "unknown key");
    it->second(config, field, trim(value));
  };
  for (const auto& [section, node] : tree) {
    if (node.empty()) {
      // Key outside any section.
      apply("experiment." + section, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) apply(section + "." + key, leaf.data());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigParseError, "cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::string render_config(const ExperimentConfig& c) {
  const auto& s = c.dataset.synthetic;
  std::vector<std::string> modes;
  for (auto m : c.modes) modes.emplace_back(mode_name(m));
  std::ostringstream out;
  out << "[experiment]\n"
      << "label = " << c.label << "\n"
      << "seed = " << c.seed << "\n"
      << "[dataset]\n"
      << "source = " << source_name(c.dataset.source) << "\n"
      << "path = " << c.dataset.path.generic_string() << "\n"
      << "classes = " << s.classes << "\n"
      << "per_class = " << join(s.per_class) << "\n"
      << "dim = " << s.dim << "\n"
      << "separation = " << real(s.separation) << "\n"
      << "sigma = " << real(s.sigma) << "\n"
      << "nuisance_dims = " << s.nuisance_dims << "\n"
      << "nuisance_sigma = " << real(s.nuisance_sigma) << "\n"
      << "class_names = " << join(s.class_names) << "\n"
      << "image_size = " << c.dataset.image_size << "\n"
      << "augment_copies = " << c.dataset.augment_copies << "\n"
      << "split_ratio = " << real(c.dataset.split_ratio) << "\n"
      << "[embedding]\n"
      << "head = " << architecture_name(c.head.architecture) << "\n"
      << "hidden = " << join(c.head.hidden) << "\n"
      << "output_dim = " << c.head.output_dim << "\n"
      << "untrained = " << (c.head.untrained_identity ? "identity" : "random") << "\n"
      << "[episodes]\n"
      << "n_way = " << c.n_way << "\n"
      << "shots = " << join(c.shots) << "\n"
      << "queries = " << c.q_query << "\n"
      << "[train]\n"
      << "episodes = " << c.train.episodes_total << "\n"
      << "optimizer = " << optimizer_name(c.train.optimizer) << "\n"
      << "learning_rate = " << real(c.train.learning_rate) << "\n"
      << "beta1 = " << real(c.train.beta1) << "\n"
      << "beta2 = " << real(c.train.beta2) << "\n"
      << "epsilon = " << real(c.train.epsilon) << "\n"
      << "val_every = " << c.train.val_every << "\n"
      << "val_episodes = " << c.train.val_episodes << "\n"
      << "[eval]\n"
      << "episodes = " << c.eval_episodes << "\n"
      << "modes = " << join(modes) << "\n";
  return out.str();
}

std::string config_hash(const ExperimentConfig& config) {
  // FNV-1a, 64-bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : render_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const auto counts = spec.counts();
  const auto means = axis_means(spec.classes, spec.dim, spec.separation);
  LabeledDataset ds = generate_blobs(spec.classes, counts, spec.dim, means, spec.sigma, seed,
                                     spec.class_names);
  if (spec.nuisance_dims > 0) {
    ds = add_nuisance_dimensions(ds, spec.nuisance_dims, spec.nuisance_sigma,
                                 derive_seed(seed, 1));
  }
  return ds;
}

namespace {

std::string effective_label(const ExperimentConfig& c) {
  if (!c.label.empty()) return c.label;
  switch (c.dataset.source) {
    case SourceKind::kSynthetic: return "synthetic";
    case SourceKind::kPfeb: return c.dataset.path.stem().string();
    case SourceKind::kPgm: return "pixels";
  }
  return "features";
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> prepare_splits(const ExperimentConfig& config) {
  LabeledDataset full;
  switch (config.dataset.source) {
    case SourceKind::kSynthetic:
      full = generate_synthetic(config.dataset.synthetic, derive_seed(config.seed, 1));
      break;
    case SourceKind::kPfeb:
      full = load_embeddings(config.dataset.path);
      break;
    case SourceKind::kPgm: {
      ImageDataset images = load_image_dataset(config.dataset.path);
      for (auto& img : images.images) {
        img = preprocess_image(img, config.dataset.image_size, config.dataset.image_size);
      }
      full = images_to_dataset(images);
      break;
    }
  }
  if (full.size() == 0) throw Error(ErrorCode::kEmptyDataset, "dataset has no examples");

  auto [train, held_out] =
      split_train_val(full, config.dataset.split_ratio, derive_seed(config.seed, 2));

  if (config.dataset.source == SourceKind::kPgm && config.dataset.augment_copies > 0) {
    const std::size_t side = config.dataset.image_size;
    Rng rng(derive_seed(config.seed, 6));
    const AugmentationSpec spec;
    const std::size_t original = train.size();
    for (std::size_t c = 0; c < config.dataset.augment_copies; ++c) {
      for (std::size_t i = 0; i < original; ++i) {
        const GrayImage aug = augment_image(row_to_image(train, i, side, side), spec, rng);
        train.add(std::span<const double>(aug.pixels), train.labels[i], train.source_ids[i]);
      }
    }
  }
  return {std::move(train), std::move(held_out)};
}

EmbeddingNetwork initial_head(const ExperimentConfig& config, std::size_t input_dim, Mode mode) {
  if (mode == Mode::kWithoutTraining && config.head.untrained_identity) {
    return init_network(Architecture::kIdentity, {input_dim, input_dim}, 0);
  }
  std::vector<std::size_t> dims{input_dim};
  if (config.head.architecture == Architecture::kMlp) {
    dims.insert(dims.end(), config.head.hidden.begin(), config.head.hidden.end());
  }
  dims.push_back(config.head.output_dim);
  return init_network(config.head.architecture, dims, derive_seed(config.seed, 3));
}

std::uint64_t eval_seed(const ExperimentConfig& config) noexcept {
  return derive_seed(config.seed, 5);
}

std::uint64_t train_seed(const ExperimentConfig& config, const EpisodeConfig& ep) noexcept {
  return derive_seed(derive_seed(config.seed, 4), (ep.n_way << 32) ^ (ep.k_shot << 16) ^ ep.q_query);
}

std::string checkpoint_name(const ExperimentConfig& config, const EpisodeConfig& ep, Mode mode) {
  return "checkpoint_" + effective_label(config) + "_" + std::to_string(ep.n_way) + "way_" +
         std::to_string(ep.k_shot) + "shot_" + mode_name(mode) + ".pfnw";
}

EvalReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIoError,
                "cannot create output directory " + config.output_dir.string() + ": " +
                    ec.message());
  }

  const auto [train, held_out] = prepare_splits(config);
  const std::string label = effective_label(config);

  std::vector<EvalResult> results;
  for (const auto& ep : config.episode_configs()) {
    for (Mode mode : config.modes) {
      EmbeddingNetwork head = initial_head(config, train.dim, mode);
      double train_time = 0.0;
      if (mode == Mode::kWithTraining) {
        TrainConfig tc = config.train;
        tc.seed = train_seed(config, ep);
        tc.threads = config.threads;
        TrainResult trained = meta_train(train, held_out, ep, tc, std::move(head));
        head = std::move(trained.network);
        if (!trained.history.records.empty()) {
          train_time = trained.history.records.back().elapsed_s;
        }
        std::ofstream hist(config.output_dir / ("history_" + label + "_" +
                                                std::to_string(ep.n_way) + "way_" +
                                                std::to_string(ep.k_shot) + "shot.csv"));
        write_history_csv(trained.history, hist);
      }

      EvalOptions opts;
      opts.n_episodes = config.eval_episodes;
      opts.seed = eval_seed(config);
      opts.threads = config.threads;
      opts.backbone = label;
      opts.mode = mode;
      EvalResult r = evaluate(held_out, head, ep, opts);
      r.row.wall_time_s += train_time;
      results.push_back(std::move(r));
      save_network(head, config.output_dir / checkpoint_name(config, ep, mode));
    }
  }

  EvalReport report = summarize(std::move(results), held_out.class_names, config.seed,
                                config_hash(config));
  {
    std::ofstream out(config.output_dir / "report.csv");
    write_report_csv(report, out);
    if (!out) throw Error(ErrorCode::kIoError, "failed to write report.csv");
  }
  {
    std::ofstream out(config.output_dir / "confusion.csv");
    write_confusion_csv(report, out);
  }
  {
    std::ofstream out(config.output_dir / "manifest.txt");
    out << "tool = protonet 1.0.0\n"
        << "config_hash = " << report.config_hash << "\n"
        << "seed = " << config.seed << "\n"
        << "train_examples = " << train.size() << "\n"
        << "held_out_examples = " << held_out.size() << "\n"
        << "feature_dim = " << train.dim << "\n\n"
        << render_config(config);
  }
  return report;
}

}  // namespace protonet
