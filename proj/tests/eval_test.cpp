#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <tuple>

#include "oracles.hpp"
#include "protonet/data.hpp"
#include "protonet/error.hpp"
#include "protonet/eval.hpp"

namespace protonet {
namespace {

LabeledDataset blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double sep,
                     double sigma, std::uint64_t seed) {
  const std::vector<std::size_t> counts(classes, per_class);
  return generate_blobs(classes, counts, dim, axis_means(classes, dim, sep), sigma, seed);
}

EmbeddingNetwork identity(std::size_t dim) { return init_network(Architecture::kIdentity, {dim}, 0); }

TEST(Evaluate, ConstantEmbeddingIsExactlyChance) {
  LabeledDataset ds;
  ds.class_names = {"a", "b", "c", "d"};
  ds.dim = 3;
  const std::vector<double> x{0.25, 0.25, 0.25};
  for (std::uint32_t c = 0; c < 4; ++c) {
    for (int i = 0; i < 30; ++i) ds.add(std::span<const double>(x), c, ds.size());
  }
  EvalOptions opts;
  opts.n_episodes = 200;
  opts.seed = 3;
  const auto r = evaluate(ds, identity(3), EpisodeConfig{3, 5, 10}, opts);
  for (double a : r.episode_accuracies) ASSERT_EQ(a, 1.0 / 3.0);
  EXPECT_EQ(r.row.accuracy_mean, 1.0 / 3.0);
}

TEST(Evaluate, SeparatedNoiselessBlobsArePerfect) {
  const auto ds = blobs(5, 30, 5, 3.0, 0.0, 1);
  EvalOptions opts;
  opts.n_episodes = 100;
  const auto r = evaluate(ds, identity(5), EpisodeConfig{3, 1, 10}, opts);
  EXPECT_EQ(r.row.accuracy_mean, 1.0);
  EXPECT_EQ(r.row.accuracy_ci95, 0.0);
  EXPECT_EQ(weighted_accuracy(r.confusion), 1.0);
}

TEST(Evaluate, PredictionsMatchEndToEndOracle) {
  const auto ds = blobs(6, 25, 5, 1.0, 1.0, 8);
  const auto net = init_network(Architecture::kMlp, {5, 7, 4}, 2);
  EpisodeSampler sampler(ds, EpisodeConfig{4, 3, 5});
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    const Episode ep = sampler.sample(rng);
    const auto outcome = run_episode(ds, net, ep);
    std::vector<Vector> s;
    std::vector<std::size_t> sl;
    for (std::size_t k = 0; k < ep.class_ids.size(); ++k) {
      for (std::size_t i : ep.support[k]) {
        s.push_back(oracle::forward(net, ds.row_as_vector(i)));
        sl.push_back(k);
      }
    }
    const auto protos = oracle::class_means(s, sl, ep.class_ids.size());
    std::size_t q = 0, correct = 0;
    for (std::size_t k = 0; k < ep.class_ids.size(); ++k) {
      for (std::size_t i : ep.query[k]) {
        const auto d = oracle::distances(oracle::forward(net, ds.row_as_vector(i)), protos);
        const auto pred = ep.class_ids[oracle::argmin(d)];
        ASSERT_EQ(outcome.actual[q], ep.class_ids[k]);
        ASSERT_EQ(outcome.predicted[q], pred);
        correct += pred == ep.class_ids[k];
        ++q;
      }
    }
    EXPECT_EQ(outcome.correct, correct);
  }
}

TEST(Evaluate, SummaryStatisticsMatchOracle) {
  const auto ds = blobs(4, 40, 3, 1.0, 1.0, 5);
  EvalOptions opts;
  opts.n_episodes = 150;
  opts.seed = 4;
  const auto r = evaluate(ds, identity(3), EpisodeConfig{3, 1, 10}, opts);
  ASSERT_EQ(r.episode_accuracies.size(), 150u);
  long double sum = 0;
  for (double a : r.episode_accuracies) sum += a;
  const long double mean = sum / 150;
  long double ss = 0;
  for (double a : r.episode_accuracies) ss += (a - mean) * (a - mean);
  const long double ci = 1.96L * std::sqrt(ss / 149) / std::sqrt(150.0L);
  EXPECT_NEAR(r.row.accuracy_mean, static_cast<double>(mean), 1e-12);
  EXPECT_NEAR(r.row.accuracy_ci95, static_cast<double>(ci), 1e-12);
  EXPECT_GT(r.row.accuracy_ci95, 0.0);
  EXPECT_EQ(r.row.episodes, 150u);
}

TEST(Evaluate, ConfusionTotalsAndAggregationPathsAgree) {
  const auto ds = blobs(5, 30, 4, 1.0, 1.0, 6);
  EvalOptions opts;
  opts.n_episodes = 120;
  opts.seed = 10;
  const EpisodeConfig cfg{3, 2, 7};
  const auto r = evaluate(ds, identity(4), cfg, opts);
  EXPECT_EQ(r.confusion.total(), 120u * 3 * 7);
  EXPECT_EQ(r.confusion.n_classes(), 5u);

  // Rebuild from independently sampled episodes with the documented seeding.
  ConfusionMatrix manual(5);
  long double acc = 0;
  for (std::size_t i = 0; i < 120; ++i) {
    Rng rng(derive_seed(10, i));
    const auto out = run_episode(ds, identity(4), sample_episode(ds, cfg, rng));
    for (std::size_t q = 0; q < out.actual.size(); ++q) manual.add(out.actual[q], out.predicted[q]);
    acc += out.accuracy();
  }
  EXPECT_EQ(manual, r.confusion);
  EXPECT_NEAR(static_cast<double>(acc / 120), r.row.accuracy_mean, 1e-12);
  // Pooled accuracy equals the mean of episode accuracies when episodes are equal-sized.
  EXPECT_NEAR(static_cast<double>(r.confusion.trace()) / r.confusion.total(), r.row.accuracy_mean,
              1e-12);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  const auto ds = blobs(5, 30, 4, 1.0, 1.0, 6);
  const auto net = init_network(Architecture::kLinear, {4, 3}, 8);
  EvalOptions opts;
  opts.n_episodes = 97;
  opts.seed = 1;
  const auto a = evaluate(ds, net, EpisodeConfig{3, 1, 5}, opts);
  opts.threads = 4;
  const auto b = evaluate(ds, net, EpisodeConfig{3, 1, 5}, opts);
  EXPECT_EQ(a.episode_accuracies, b.episode_accuracies);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_EQ(a.row.accuracy_mean, b.row.accuracy_mean);
  EXPECT_EQ(a.row.accuracy_ci95, b.row.accuracy_ci95);
}

// Weighted accuracy ----------------------------------------------------------

double weighted_oracle(const std::vector<std::vector<std::uint64_t>>& m) {
  long double total = 0, num = 0;
  for (const auto& row : m) for (auto v : row) total += v;
  for (std::size_t a = 0; a < m.size(); ++a) {
    long double support = 0;
    for (auto v : m[a]) support += v;
    if (support == 0) continue;
    num += (support / total) * (m[a][a] / support);
  }
  return static_cast<double>(num);
}

ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& m) {
  ConfusionMatrix cm(m.size());
  for (std::size_t a = 0; a < m.size(); ++a) {
    for (std::size_t p = 0; p < m.size(); ++p) cm.add(a, p, m[a][p]);
  }
  return cm;
}

TEST(WeightedAccuracy, Examples) {
  EXPECT_EQ(weighted_accuracy(from_rows({{10, 0, 0}, {0, 10, 0}, {0, 0, 10}})), 1.0);
  EXPECT_NEAR(weighted_accuracy(from_rows({{10, 0, 0}, {0, 0, 10}, {0, 10, 0}})), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(weighted_accuracy(from_rows({{90, 10}, {5, 0}})), 90.0 / 105.0, 1e-15);
}

TEST(WeightedAccuracy, RandomMatricesMatchOracle) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> n(1, 6);
  std::uniform_int_distribution<std::uint64_t> v(0, 50);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = n(gen);
    std::vector<std::vector<std::uint64_t>> m(k, std::vector<std::uint64_t>(k));
    for (auto& row : m) for (auto& x : row) x = v(gen);
    m[0][0] += 1;
    const double w = weighted_accuracy(from_rows(m));
    EXPECT_NEAR(w, weighted_oracle(m), 1e-12);
    const auto cm = from_rows(m);
    EXPECT_NEAR(w, static_cast<double>(cm.trace()) / static_cast<double>(cm.total()), 1e-12);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
  }
}

TEST(WeightedAccuracy, EmptyMatrix) {
  try {
    weighted_accuracy(ConfusionMatrix(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyMatrix);
  }
}

// Reports --------------------------------------------------------------------

EvalResult fake(std::string backbone, std::size_t n, std::size_t k, Mode m, double acc) {
  EvalResult r;
  r.row = {backbone, n, k, m, 10, acc, 0.01, 0.5};
  r.confusion = ConfusionMatrix(3);
  r.confusion.add(0, 0, k);
  return r;
}

TEST(Report, SummaryOrdersShotsAscending) {
  std::vector<EvalResult> rs;
  for (std::size_t k : {20, 1, 10, 5}) rs.push_back(fake("vgg16", 3, k, Mode::kWithoutTraining, 0.5));
  const auto rep = summarize(rs, {"a", "b", "c"}, 1, "h");
  std::vector<std::size_t> shots;
  for (const auto& r : rep.rows) shots.push_back(r.k_shot);
  EXPECT_EQ(shots, (std::vector<std::size_t>{1, 5, 10, 20}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(rep.confusions[i].at(0, 0), rep.rows[i].k_shot);
}

TEST(Report, SortMatchesTupleOracle) {
  std::vector<EvalResult> rs;
  for (std::string b : {"resnet50", "vgg16", "features"}) {
    for (std::size_t k : {1, 5, 10, 20}) {
      for (Mode m : {Mode::kWithTraining, Mode::kWithoutTraining}) rs.push_back(fake(b, 3, k, m, 0.1));
    }
  }
  std::mt19937_64 gen(5);
  std::shuffle(rs.begin(), rs.end(), gen);
  auto expected = rs;
  std::stable_sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.row.backbone, a.row.k_shot, static_cast<int>(a.row.mode), a.row.n_way) <
           std::make_tuple(b.row.backbone, b.row.k_shot, static_cast<int>(b.row.mode), b.row.n_way);
  });
  const auto rep = summarize(rs, {}, 0, "");
  ASSERT_EQ(rep.rows.size(), 24u);
  for (std::size_t i = 0; i < 24; ++i) {
    EXPECT_EQ(rep.rows[i].backbone, expected[i].row.backbone);
    EXPECT_EQ(rep.rows[i].k_shot, expected[i].row.k_shot);
    EXPECT_EQ(rep.rows[i].mode, expected[i].row.mode);
  }
}

TEST(Report, CsvRoundTripAndTable) {
  std::vector<EvalResult> rs{fake("vgg16", 3, 1, Mode::kWithoutTraining, 0.45678),
                             fake("vgg16", 3, 1, Mode::kWithTraining, 0.61234)};
  const auto rep = summarize(rs, {"Healthy", "Sick", "TB"}, 7, "abc");
  std::stringstream csv;
  write_report_csv(rep, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), kReportCsvHeader);
  EXPECT_NE(csv.str().find("vgg16,3,1,without_training,10,0.4568,0.0100,0.500"), std::string::npos);
  const auto back = read_report_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].mode, Mode::kWithTraining);
  EXPECT_NEAR(back[1].accuracy_mean, 0.6123, 1e-12);

  std::ostringstream conf;
  write_confusion_csv(rep, conf);
  EXPECT_NE(conf.str().find("actual\\predicted,Healthy,Sick,TB"), std::string::npos);
  EXPECT_NE(conf.str().find("Healthy,1,0,0"), std::string::npos);

  const std::string table = format_table(back);
  EXPECT_NE(table.find("vgg16"), std::string::npos);
  EXPECT_NE(table.find("45.68"), std::string::npos);
}

TEST(Report, BadHeaderRejected) {
  std::istringstream in("nope\n");
  EXPECT_THROW(read_report_csv(in), Error);
}

TEST(Mode, Names) {
  EXPECT_EQ(parse_mode("with_training"), Mode::kWithTraining);
  EXPECT_EQ(std::string(mode_name(Mode::kWithoutTraining)), "without_training");
  EXPECT_THROW(parse_mode("both"), Error);
}

}  // namespace
}  // namespace protonet
