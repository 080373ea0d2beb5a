#include "protonet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "protonet/error.hpp"
#include "protonet/eval.hpp"

namespace protonet {

const char* optimizer_name(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw Error(ErrorCode::kInvalidArgument, "unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& why) {
    throw Error(ErrorCode::kInvalidArgument, "train config: " + why);
  };
  if (episodes_total < 1) fail("episodes must be at least 1");
  // Zero is accepted: it freezes the parameters, which the tests rely on.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) fail("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) fail("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (val_every < 1) fail("val_every must be at least 1");
  if (val_episodes < 1) fail("val_episodes must be at least 1");
}

void optimizer_step(std::span<double> params, std::span<const double> gradients,
                    OptimizerState& state, const TrainConfig& config) {
  if (params.size() != gradients.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(gradients.size()) + " gradients for " +
                    std::to_string(params.size()) + " parameters");
  }
  const double lr = config.learning_rate;
  ++state.step;
  if (config.optimizer == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double delta = lr * gradients[i];
      if (delta != 0.0) params[i] -= delta;
    }
    return;
  }

  if (state.first_moment.empty() && state.second_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match parameter count");
  }
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const auto t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradients[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    const double delta = lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    // Skipping zero updates keeps a -0.0 parameter bit-identical.
    if (delta != 0.0) params[i] -= delta;
  }
}

void optimizer_step(EmbeddingNetwork& net, const Gradients& gradients, OptimizerState& state,
                    const TrainConfig& config) {
  auto params = flatten_parameters(net);
  const auto grads = gradients.flat();
  optimizer_step(params, grads, state, config);
  assign_parameters(net, params);
}

std::uint64_t training_stream_seed(std::uint64_t seed) noexcept {
  return derive_seed(seed, 0x747261696eULL);
}

std::uint64_t validation_seed(std::uint64_t seed) noexcept {
  return derive_seed(seed, 0x76616cULL);
}

TrainResult meta_train(const LabeledDataset& train, const LabeledDataset& val,
                       const EpisodeConfig& episode_config, const TrainConfig& config,
                       EmbeddingNetwork initial) {
  config.validate();
  initial.validate();
  if (initial.input_dim() != train.dim || initial.input_dim() != val.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "network input dim differs from dataset dim");
  }
  const EpisodeSampler sampler(train, episode_config);
  // Fails early if validation cannot host the episode shape.
  (void)EpisodeSampler(val, episode_config);

  const auto start = std::chrono::steady_clock::now();
  TrainResult result{std::move(initial), {}};
  EmbeddingNetwork& net = result.network;
  OptimizerState state;
  Rng rng(training_stream_seed(config.seed));

  EvalOptions val_options;
  val_options.n_episodes = config.val_episodes;
  val_options.seed = validation_seed(config.seed);
  val_options.threads = config.threads;

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t e = 1; e <= config.episodes_total; ++e) {
    const EpisodeBatch batch = gather_batch(train, sampler.sample(rng));
    const Gradients grads = loss_gradients(net, batch);
    loss_sum += grads.loss;
    ++loss_count;
    if (net.parameter_count() > 0) optimizer_step(net, grads, state, config);

    if (e % config.val_every == 0 || e == config.episodes_total) {
      TrainRecord rec;
      rec.episode = e;
      rec.loss = loss_sum / static_cast<double>(loss_count);
      rec.val_accuracy = evaluate(val, net, episode_config, val_options).row.accuracy_mean;
      rec.elapsed_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.history.records.push_back(rec);
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
  return result;
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
  out << "episode,loss,val_accuracy,elapsed_s\n";
  char buf[128];
  for (const auto& r : history.records) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.4f,%.3f\n", r.episode, r.loss, r.val_accuracy,
                  r.elapsed_s);
    out << buf;
  }
}

}  // namespace protonet
