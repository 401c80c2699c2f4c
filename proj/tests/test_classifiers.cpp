#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "windclf/classifiers.hpp"
#include "windclf/errors.hpp"
#include "windclf/synth.hpp"

using namespace windclf;

namespace {

FarmDataset small_farm(std::uint64_t seed, int months = 1) {
  FarmProfile p;
  p.months = months;
  p.n_turbines = 2;
  p.seed = seed;
  p.class_mix = {{"normal", 0.8}, {"C1", 0.1}, {"C3", 0.1}};
  return min_max_normalize(generate_farm(p));
}

// Two features, label = [x + y > 1], one turbine.
FarmDataset separable(std::size_t n, std::uint64_t seed) {
  FarmDataset ds;
  ds.farm_id = "sep";
  ds.signal_names = {"wind_speed", "power", "pitch"};
  ds.label_vocab = {"normal", "C1", "other"};
  ds.normalization_ranges = {{0, 1}, {0, 1}, {0, 1}};
  const auto u = oracle::uniform(2 * n, seed);
  TurbineSeries t{"t0", {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u[2 * i], y = u[2 * i + 1];
    t.records.push_back({static_cast<std::int64_t>(i) * 10, {x, y, 0.5}, std::size_t{x + y > 1.0 ? 1u : 0u}});
  }
  ds.turbines.push_back(std::move(t));
  return ds;
}

}  // namespace

TEST(Knn, SingleNeighbourFindsExactMatch) {
  const std::vector<double> pts{0, 0, 1, 1, 2, 2, 3, 3};
  const KnnModel m(1, 2, pts, {0, 1, 2, 1}, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::vector<double> q{pts[2 * i], pts[2 * i + 1]};
    EXPECT_EQ(m.neighbors(q), (std::vector<std::size_t>{i}));
  }
}

TEST(Knn, FourNeighbourVote) {
  const KnnModel m(4, 1, {0, 1, 2, 3}, {0, 0, 1, 1}, 2);
  const auto p = m.predict_proba(std::vector<double>{1.5});
  EXPECT_EQ(p, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(argmax(p), 0u);
}

TEST(Knn, MatchesBruteForceIncludingTies) {
  std::mt19937_64 rng(3);
  for (bool grid : {false, true}) {
    const std::size_t n = 500, dims = 3;
    std::vector<double> pts(n * dims);
    std::vector<std::size_t> labels(n);
    for (auto& v : pts) v = grid ? static_cast<double>(rng() % 4) / 4.0 : std::uniform_real_distribution<double>()(rng);
    for (auto& l : labels) l = rng() % 5;
    for (std::size_t k : {1u, 4u, 50u}) {
      const KnnModel m(k, dims, pts, labels, 5);
      for (int q = 0; q < 50; ++q) {
        std::vector<double> x(dims);
        for (auto& v : x) v = grid ? static_cast<double>(rng() % 4) / 4.0 : std::uniform_real_distribution<double>()(rng);
        const auto want = oracle::brute_knn(pts, labels, dims, k, 5, x);
        ASSERT_EQ(m.predict_proba(x), want) << "k=" << k << " grid=" << grid;
        ASSERT_EQ(argmax(m.predict_proba(x)), oracle::first_max(want));
      }
    }
  }
}

TEST(Knn, PermutationInvariantWithoutTies) {
  const std::size_t n = 300, dims = 2;
  auto pts = oracle::uniform(n * dims, 9);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % 3;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(2));
  std::vector<double> pp(n * dims);
  std::vector<std::size_t> pl(n);
  for (std::size_t i = 0; i < n; ++i) {
    pl[i] = labels[perm[i]];
    for (std::size_t j = 0; j < dims; ++j) pp[i * dims + j] = pts[perm[i] * dims + j];
  }
  const KnnModel a(7, dims, pts, labels, 3), b(7, dims, pp, pl, 3);
  for (const auto& q : {std::vector<double>{0.3, 0.6}, std::vector<double>{0.9, 0.1}, std::vector<double>{0.5, 0.5}})
    EXPECT_EQ(a.predict_proba(q), b.predict_proba(q));
}

TEST(Knn, NeedsAtLeastKPoints) {
  EXPECT_THROW(KnnModel(5, 1, {0, 1, 2}, {0, 0, 1}, 2), InsufficientDataError);
}

TEST(TrainModel, KnnMemorizesSmallSet) {
  const auto ds = separable(10, 1);
  ModelConfig c;
  c.kind = ModelKind::knn;
  c.knn_k = 1;
  c.signals = {"wind_speed", "power"};
  const auto m = train_model(c, ds);
  const auto p = predict(m, ds);
  ASSERT_EQ(p.eligible(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(p.predicted[i], p.truth[i]);
}

TEST(TrainModel, FfnSeparatesLinearlySeparableData) {
  const auto ds = separable(400, 2);
  ModelConfig c;
  c.kind = ModelKind::ffn;
  c.signals = {"wind_speed", "power"};
  c.epochs = 200;
  c.batch_size = 32;
  c.seed = 3;
  const auto m = train_model(c, ds);
  const auto p = predict(m, ds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.eligible(); ++i) hit += p.predicted[i] == p.truth[i];
  EXPECT_GE(static_cast<double>(hit) / static_cast<double>(p.eligible()), 0.99);
  const auto& h = m.metadata.loss_history;
  ASSERT_EQ(h.size(), 200u);
  EXPECT_LT(h.back(), h.front());
}

TEST(TrainModel, FullBatchLossNonIncreasing) {
  const auto ds = separable(200, 4);
  ModelConfig c;
  c.kind = ModelKind::ffn;
  c.signals = {"wind_speed", "power"};
  c.epochs = 40;
  c.batch_size = 200;
  c.learning_rate = 0.005;
  c.seed = 1;
  const auto h = train_model(c, ds).metadata.loss_history;
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1]) << "epoch " << i;
}

TEST(TrainModel, DeterministicForFixedSeed) {
  const auto ds = small_farm(5);
  for (auto kind : {ModelKind::knn, ModelKind::ffn, ModelKind::cnn}) {
    ModelConfig c;
    c.kind = kind;
    c.epochs = 2;
    c.seed = 8;
    c.cnn_channels = {4, 4};
    c.cnn_head = {8};
    const auto a = predict(train_model(c, ds), ds);
    const auto b = predict(train_model(c, ds), ds);
    EXPECT_EQ(a.predicted, b.predicted) << to_string(kind);
    EXPECT_EQ(a.probabilities, b.probabilities) << to_string(kind);
  }
}

TEST(TrainModel, PredictionIsArgmaxOfProbabilities) {
  const auto ds = small_farm(6);
  ModelConfig c;
  c.kind = ModelKind::ffn;
  c.epochs = 3;
  const auto p = predict(train_model(c, ds), ds);
  ASSERT_GT(p.eligible(), 0u);
  for (std::size_t i = 0; i < p.eligible(); ++i) {
    const auto row = p.proba(i);
    ASSERT_EQ(p.predicted[i], argmax(row));
    ASSERT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(TrainModel, CnnShortSeriesHasNoEligibleRecords) {
  const auto ds = small_farm(7);
  ModelConfig c;
  c.kind = ModelKind::cnn;
  c.epochs = 1;
  c.cnn_channels = {4, 4};
  c.cnn_head = {8};
  const auto m = train_model(c, ds);
  auto tiny = ds;
  for (auto& t : tiny.turbines) t.records.resize(8);
  const auto p = predict(m, tiny);
  EXPECT_EQ(p.eligible(), 0u);
  EXPECT_EQ(p.ineligible(), 16u);
  auto nine = ds;
  for (auto& t : nine.turbines) t.records.resize(9);
  EXPECT_EQ(predict(m, nine).eligible(), 2u);
}

TEST(TrainModel, MissingSignalRejected) {
  auto ds = small_farm(8);
  ds = select_signals(ds, {"wind_speed", "power"});
  ModelConfig c;
  c.kind = ModelKind::knn;
  EXPECT_THROW(train_model(c, ds), SchemaError);
}

TEST(TrainModel, CnnMatchesPerTurbineConcatenation) {
  const auto ds = small_farm(9);
  ModelConfig c;
  c.kind = ModelKind::cnn;
  c.epochs = 1;
  c.cnn_channels = {4, 4};
  c.cnn_head = {8};
  const auto m = train_model(c, ds);
  const auto whole = predict(m, ds);
  std::vector<double> parts;
  std::vector<std::size_t> preds;
  for (const auto& t : ds.turbines) {
    auto one = ds;
    one.turbines = {t};
    const auto p = predict(m, one);
    parts.insert(parts.end(), p.probabilities.begin(), p.probabilities.end());
    preds.insert(preds.end(), p.predicted.begin(), p.predicted.end());
  }
  EXPECT_EQ(whole.probabilities, parts);
  EXPECT_EQ(whole.predicted, preds);
}

TEST(TrainModel, TurbineIdsDoNotMatter) {
  const auto ds = small_farm(10);
  auto renamed = ds;
  for (auto& t : renamed.turbines) t.turbine_id = "x_" + t.turbine_id;
  ModelConfig c;
  c.kind = ModelKind::ffn;
  c.epochs = 2;
  const auto m = train_model(c, ds);
  EXPECT_EQ(predict(m, ds).probabilities, predict(m, renamed).probabilities);
  EXPECT_EQ(predict(m, ds).probabilities, predict(train_model(c, renamed), renamed).probabilities);
}

TEST(TrainModel, AbsentClassWarns) {
  const auto ds = small_farm(11);
  auto vocab = ds.label_vocab;
  vocab.insert(vocab.end() - 1, "C4");
  const auto wide = relabel(ds, vocab);
  ModelConfig c;
  c.kind = ModelKind::knn;
  const auto m = train_model(c, wide);
  bool found = false;
  for (const auto& w : m.metadata.warnings) found |= w.find("'C4'") != std::string::npos;
  EXPECT_TRUE(found);
  EXPECT_EQ(m.label_vocab, wide.label_vocab);
}

TEST(TrainModel, UnknownTestLabelRejected) {
  const auto ds = small_farm(12);
  ModelConfig c;
  const auto m = train_model(c, ds);
  auto vocab = ds.label_vocab;
  vocab.insert(vocab.end() - 1, "C7");
  auto other = relabel(ds, vocab);
  other.turbines[0].records[0].label = other.label_index("C7");
  EXPECT_THROW(predict(m, other), VocabularyError);
}

TEST(Bundle, RoundTripPreservesPredictions) {
  const auto ds = small_farm(13);
  for (auto kind : {ModelKind::knn, ModelKind::ffn, ModelKind::cnn}) {
    ModelConfig c;
    c.kind = kind;
    c.epochs = 1;
    c.cnn_channels = {4, 4};
    c.cnn_head = {8};
    auto m = train_model(c, ds, AlignmentParams{1.1, -0.02, 0.1, "ref", ds.farm_id});
    m.provenance = {{"command", "test"}};
    std::stringstream buf;
    save_bundle(buf, m);
    const auto back = load_bundle(buf);
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.label_vocab, m.label_vocab);
    EXPECT_EQ(back.signal_names, m.signal_names);
    ASSERT_TRUE(back.alignment.has_value());
    EXPECT_EQ(back.alignment->alpha, 1.1);
    EXPECT_EQ(back.provenance, m.provenance);
    EXPECT_EQ(back.metadata.loss_history, m.metadata.loss_history);
    EXPECT_EQ(predict(back, ds).probabilities, predict(m, ds).probabilities) << to_string(kind);
  }
}

TEST(Bundle, CorruptInputRejected) {
  std::stringstream bad("NOTAMODEL");
  EXPECT_THROW(load_bundle(bad), Error);
}

TEST(ModelConfigJson, RoundTripAndDefaults) {
  ModelConfig c;
  c.kind = ModelKind::cnn;
  c.window_half_width = 2;
  c.window_mode = WindowMode::causal;
  c.seed = 42;
  const auto back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.resolved_epochs(), 30u);
  EXPECT_EQ(back.window().width(), 3u);
  EXPECT_EQ(default_signals(ModelKind::cnn).size(), 4u);
  EXPECT_THROW(model_kind_from_string("svm"), ConfigError);
}
