#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "protonet/data.hpp"
#include "protonet/error.hpp"
#include "protonet/eval.hpp"
#include "protonet/train.hpp"

namespace protonet {
namespace {

LabeledDataset blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double sep,
                     double sigma, std::uint64_t seed) {
  const std::vector<std::size_t> counts(classes, per_class);
  return generate_blobs(classes, counts, dim, axis_means(classes, dim, sep), sigma, seed);
}

TEST(Optimizer, SgdArithmetic) {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.5, -1.0};
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.1;
  OptimizerState st;
  optimizer_step(p, g, st, cfg);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  EXPECT_DOUBLE_EQ(p[1], -1.9);
}

TEST(Optimizer, ZeroLearningRateIsBitwiseNoOp) {
  std::mt19937_64 gen(2);
  auto p = oracle::random_vector(gen, 50, -3, 3);
  const auto before = p;
  const auto g = oracle::random_vector(gen, 50, -3, 3);
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    TrainConfig cfg;
    cfg.optimizer = kind;
    cfg.learning_rate = 0.0;
    OptimizerState st;
    for (int i = 0; i < 5; ++i) optimizer_step(p, g, st, cfg);
    for (std::size_t i = 0; i < p.size(); ++i) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(p[i]), std::bit_cast<std::uint64_t>(before[i]));
    }
  }
}

TEST(Optimizer, AdamMatchesScalarOracleOverSeveralSteps) {
  std::mt19937_64 gen(4);
  auto p = oracle::random_vector(gen, 7, -1, 1);
  auto ref = std::vector<long double>(p.begin(), p.end());
  std::vector<long double> m(7, 0), v(7, 0);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  OptimizerState st;
  for (int t = 1; t <= 6; ++t) {
    const auto g = oracle::random_vector(gen, 7, -2, 2);
    optimizer_step(p, g, st, cfg);
    for (std::size_t i = 0; i < 7; ++i) {
      m[i] = 0.9L * m[i] + 0.1L * g[i];
      v[i] = 0.999L * v[i] + 0.001L * g[i] * g[i];
      const long double mh = m[i] / (1 - std::pow(0.9L, t));
      const long double vh = v[i] / (1 - std::pow(0.999L, t));
      ref[i] -= 0.01L * mh / (std::sqrt(vh) + 1e-8L);
    }
    for (std::size_t i = 0; i < 7; ++i) ASSERT_NEAR(p[i], static_cast<double>(ref[i]), 1e-12);
  }
  EXPECT_EQ(st.step, 6u);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{3.0, -0.25};
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  OptimizerState st;
  optimizer_step(p, g, st, cfg);
  EXPECT_NEAR(p[0], -1e-3, 1e-11);
  EXPECT_NEAR(p[1], 1e-3, 1e-10);
}

TEST(Optimizer, ShapeMismatch) {
  std::vector<double> p(3);
  const std::vector<double> g(2);
  OptimizerState st;
  try {
    optimizer_step(p, g, st, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(Optimizer, SmallSgdStepDecreasesLoss) {
  std::mt19937_64 gen(6);
  int decreased = 0, total = 0;
  for (int t = 0; t < 40; ++t) {
    auto net = init_network(Architecture::kLinear, {6, 4}, 100 + t);
    const auto batch = oracle::random_batch(gen, 3, 2, 3, 6);
    const auto g = loss_gradients(net, batch);
    double norm2 = 0;
    for (double x : g.flat()) norm2 += x * x;
    if (norm2 < 1e-12) continue;
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::kSgd;
    cfg.learning_rate = 1e-3;
    OptimizerState st;
    const double before = batch_loss(net, batch);
    optimizer_step(net, g, st, cfg);
    ++total;
    if (batch_loss(net, batch) < before) ++decreased;
  }
  EXPECT_GT(total, 30);
  EXPECT_EQ(decreased, total);
}

TEST(MetaTrain, ZeroLearningRateKeepsParametersAndValidationMatchesEvaluate) {
  const auto train = blobs(4, 30, 5, 2.0, 1.0, 1);
  const auto val = blobs(4, 20, 5, 2.0, 1.0, 2);
  EpisodeConfig ep{3, 2, 4};
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.episodes_total = 30;
  cfg.val_every = 10;
  cfg.val_episodes = 25;
  cfg.seed = 9;
  const auto initial = init_network(Architecture::kLinear, {5, 3}, 4);
  const auto result = meta_train(train, val, ep, cfg, initial);
  EXPECT_EQ(result.network, initial);
  ASSERT_EQ(result.history.records.size(), 3u);
  EvalOptions opts;
  opts.n_episodes = 25;
  opts.seed = validation_seed(9);
  const double expected = evaluate(val, initial, ep, opts).row.accuracy_mean;
  for (const auto& r : result.history.records) {
    EXPECT_EQ(r.val_accuracy, expected);
    EXPECT_GT(r.loss, 0.0);
  }
  EXPECT_EQ(result.history.records.back().episode, 30u);
}

TEST(MetaTrain, RecordsAtIntervalAndFinalEpisode) {
  const auto ds = blobs(3, 20, 4, 2.0, 1.0, 1);
  TrainConfig cfg;
  cfg.episodes_total = 25;
  cfg.val_every = 10;
  cfg.val_episodes = 5;
  const auto r = meta_train(ds, ds, EpisodeConfig{3, 1, 2},
                            cfg, init_network(Architecture::kLinear, {4, 4}, 1));
  ASSERT_EQ(r.history.records.size(), 3u);
  EXPECT_EQ(r.history.records[0].episode, 10u);
  EXPECT_EQ(r.history.records[1].episode, 20u);
  EXPECT_EQ(r.history.records[2].episode, 25u);
}

TEST(MetaTrain, DeterministicExceptWallTime) {
  const auto ds = blobs(4, 25, 6, 1.5, 1.0, 3);
  TrainConfig cfg;
  cfg.episodes_total = 40;
  cfg.val_every = 20;
  cfg.val_episodes = 10;
  cfg.seed = 77;
  const auto init = init_network(Architecture::kMlp, {6, 8, 4}, 5);
  const auto a = meta_train(ds, ds, EpisodeConfig{3, 2, 3}, cfg, init);
  const auto b = meta_train(ds, ds, EpisodeConfig{3, 2, 3}, cfg, init);
  EXPECT_EQ(a.network, b.network);
  ASSERT_EQ(a.history.records.size(), b.history.records.size());
  for (std::size_t i = 0; i < a.history.records.size(); ++i) {
    EXPECT_EQ(a.history.records[i].loss, b.history.records[i].loss);
    EXPECT_EQ(a.history.records[i].val_accuracy, b.history.records[i].val_accuracy);
  }
  EXPECT_NE(a.network, init);
}

TEST(MetaTrain, IdentityHeadIsUnchanged) {
  const auto ds = blobs(3, 20, 4, 2.0, 1.0, 1);
  TrainConfig cfg;
  cfg.episodes_total = 10;
  cfg.val_every = 10;
  cfg.val_episodes = 5;
  const auto init = init_network(Architecture::kIdentity, {4}, 0);
  EXPECT_EQ(meta_train(ds, ds, EpisodeConfig{3, 1, 2}, cfg, init).network, init);
}

// Averaged over many starting points the loss of the first logging window
// exceeds that of the last one.
TEST(MetaTrain, LossTrendsDownward) {
  const auto train = add_nuisance_dimensions(blobs(5, 40, 4, 1.5, 1.0, 11), 8, 3.0, 12);
  double first = 0.0, last = 0.0;
  const int starts = 100;
  for (int s = 0; s < starts; ++s) {
    TrainConfig cfg;
    cfg.episodes_total = 200;
    cfg.val_every = 50;
    cfg.val_episodes = 1;
    cfg.learning_rate = 5e-3;
    cfg.seed = 1000 + s;
    const auto r = meta_train(train, train, EpisodeConfig{3, 1, 5}, cfg,
                              init_network(Architecture::kLinear, {12, 12}, 2000 + s));
    first += r.history.records.front().loss;
    last += r.history.records.back().loss;
  }
  EXPECT_LT(last / starts, first / starts);
}

TEST(MetaTrain, ConfigValidation) {
  const auto ds = blobs(3, 20, 4, 2.0, 1.0, 1);
  TrainConfig cfg;
  cfg.episodes_total = 0;
  EXPECT_THROW(meta_train(ds, ds, EpisodeConfig{3, 1, 2}, cfg,
                          init_network(Architecture::kLinear, {4, 4}, 1)),
               Error);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::kSgd);
  EXPECT_THROW(parse_optimizer("rmsprop"), Error);
}

TEST(MetaTrain, HistoryCsv) {
  TrainHistory h;
  h.records.push_back({10, 0.5, 0.75, 1.25});
  std::ostringstream out;
  write_history_csv(h, out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "episode,loss,val_accuracy,elapsed_s");
  EXPECT_NE(out.str().find("10,"), std::string::npos);
}

}  // namespace
}  // namespace protonet
