// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "m3d/harness.hpp"
#include "m3d/sbm.hpp"
#include "test_util.hpp"

using namespace m3d;

namespace {

ModelData toy_data() {
  return prepare_data(m3d::testing::toy_graph(), Partition::from_assignment({0, 0, 0, 1, 1, 1}));
}

ModelConfig small_cfg() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.seed = 5;
  return c;
}

ModelData small_sbm(std::uint64_t seed, Index n_classes = 3) {
  SbmConfig s;
  s.n_classes = n_classes;
  s.clusters_per_class = 2;
  s.nodes_per_cluster = 30;
  s.p_intra = 0.2;
  s.p_cross_same = 0.02;
  s.p_cross_diff = 0.01;
  s.d_in = 6;
  s.feature_sigma = {1.5};
  s.seed = seed;
  auto g = generate_hierarchical_sbm(s);
  auto part = partition_graph(g, s.n_clusters(), seed);
  return prepare_data(std::move(g), std::move(part));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Brute-force AUC: fraction of positive/negative pairs ordered correctly, ties half.
double pair_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return good / pairs;
}

}  // namespace

TEST(AdamW, ZeroGradientOnlyShrinksByWeightDecay) {
  ParameterStore<double> p(1);
  p.add("w", {4, 3}, InitKind::glorot_uniform);
  const auto before = p.at("w");
  AdamW<double> opt({0.05, 0.1});
  for (int step = 0; step < 3; ++step) {
    p.zero_grad();
    opt.step(p);
  }
  for (Index i = 0; i < before.size(); ++i) {
    double x = before[i];
    for (int step = 0; step < 3; ++step) x = x - 0.05 * 0.1 * x;
    EXPECT_EQ(p.at("w")[i], x);
  }
}

TEST(AdamW, FirstStepMovesByLearningRateTimesSign) {
  ParameterStore<double> p(1);
  p.add("w", {3}, InitKind::zeros);
  p.zero_grad();
  auto g = p.at("w").grad();
  g[0] = 2.0;
  g[1] = -0.5;
  g[2] = 0.0;
  AdamW<double> opt({0.01, 0.0});
  opt.step(p);
  // First bias-corrected step: lr * g / (|g| + eps).
  EXPECT_NEAR(p.at("w")[0], -0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.at("w")[1], 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(p.at("w")[2], 0.0);
}

TEST(AdamW, MatchesScalarReferenceOverSteps) {
  ParameterStore<double> p(2);
  p.add("w", {1}, InitKind::ones);
  AdamW<double> opt({0.1, 0.01});
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double grad = 2.0 * (w - 3.0);
    p.zero_grad();
    p.at("w").grad()[0] = 2.0 * (p.at("w")[0] - 3.0);
    opt.step(p);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    w = w * (1.0 - 0.1 * 0.01);
    w -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.at("w")[0], w, 1e-12);
  }
}

TEST(AdamW, RejectsNegativeRates) {
  EXPECT_THROW(AdamW<float>({-1.0, 0.0}), ValidationError);
  EXPECT_THROW(AdamW<float>({0.1, -0.1}), ValidationError);
}

TEST(Metrics, AucExamples) {
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.3, 0.1}, y), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, y), 0.5);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.1, 0.8, 0.2}, y), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.9, 0.2, 0.8}, y), 0.0);
}

TEST(Metrics, AucMatchesPairEnumerationWithTies) {
  CounterRng r(9, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 2 + r.below(40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(r.below(6)) / 5.0;  // coarse grid forces ties
      y[i] = static_cast<int>(r.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(roc_auc(s, y), pair_auc(s, y), 1e-12);
  }
}

TEST(Metrics, AucErrors) {
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ValidationError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), ValidationError);
  const std::vector<std::vector<double>> probs{{0.2, 0.3, 0.5}};
  EXPECT_THROW(score_predictions(Metric::roc_auc, std::vector<int>{2}, probs, std::vector<int>{2}, 3),
               ValidationError);
}

TEST(Metrics, Accuracy) {
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 2, 1}, std::vector<int>{0, 1, 1, 1}), 0.75);
  EXPECT_THROW(accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), ValidationError);
  EXPECT_EQ(parse_metric("roc_auc"), Metric::roc_auc);
  EXPECT_THROW(parse_metric("f1"), ValidationError);
}

TEST(Ensemble, IdenticalModelsMatchSingleAccuracy) {
  const ProbMatrix a{{0.7, 0.3}, {0.4, 0.6}, {0.9, 0.1}, {0.2, 0.8}};
  const std::vector<int> y{0, 0, 0, 1};
  for (auto s : {EnsembleStrategy::mean, EnsembleStrategy::max, EnsembleStrategy::oracle})
    EXPECT_DOUBLE_EQ(ensemble_combine({a, a}, s, y), 0.75);
}

TEST(Ensemble, OracleIsUnionOfCorrectSets) {
  const ProbMatrix a{{0.9, 0.1}, {0.8, 0.2}, {0.6, 0.4}, {0.3, 0.7}};
  const ProbMatrix b{{0.1, 0.9}, {0.45, 0.55}, {0.7, 0.3}, {0.4, 0.6}};
  const std::vector<int> y{0, 1, 0, 0};
  // a correct on {0, 2}, b correct on {1, 2}.
  EXPECT_DOUBLE_EQ(ensemble_combine({a, b}, EnsembleStrategy::oracle, y), 0.75);
  // mean rows: (0.5,0.5)->0, (0.625,0.375)->0, (0.65,0.35)->0, (0.35,0.65)->1
  EXPECT_DOUBLE_EQ(ensemble_combine({a, b}, EnsembleStrategy::mean, y), 0.5);
  // max picks: 0.9@0 (a), 0.8@0 (a), 0.7@0 (b), 0.7@1 (a)
  EXPECT_DOUBLE_EQ(ensemble_combine({a, b}, EnsembleStrategy::max, y), 0.5);
}

TEST(Ensemble, OracleDominatesEveryMember) {
  CounterRng r(4, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ProbMatrix> models(3, ProbMatrix(25, std::vector<double>(4)));
    std::vector<int> y(25);
    for (auto& v : y) v = static_cast<int>(r.below(4));
    for (auto& m : models)
      for (auto& row : m) {
        double s = 0;
        for (auto& v : row) s += v = r.uniform();
        for (auto& v : row) v /= s;
      }
    const double oracle = ensemble_combine(models, EnsembleStrategy::oracle, y);
    for (const auto& m : models) {
      std::vector<int> pred;
      for (const auto& row : m) pred.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
      EXPECT_GE(oracle, accuracy(pred, y));
    }
  }
}

TEST(Ensemble, Errors) {
  const ProbMatrix a{{0.5, 0.5}};
  const std::vector<int> y{0};
  EXPECT_THROW(ensemble_combine({a}, EnsembleStrategy::mean, y), ValidationError);
  EXPECT_THROW(ensemble_combine({a, ProbMatrix{{0.2, 0.3, 0.5}}}, EnsembleStrategy::mean, y), ValidationError);
  EXPECT_THROW(ensemble_combine({a, ProbMatrix{{0.5, 0.5}, {0.5, 0.5}}}, EnsembleStrategy::max, y), ValidationError);
  EXPECT_THROW(parse_ensemble_strategy("vote"), ValidationError);
}

TEST(Train, ToyGraphMemorizesTrainingNodes) {
  const auto data = toy_data();
  TrainConfig t;
  t.epochs = 200;
  t.patience = 0;
  const auto r = train(data, small_cfg(), t);
  EXPECT_EQ(r.record.epochs_run, 200);
  EXPECT_DOUBLE_EQ(r.record.metric_at(200, Split::train), 1.0);
  const auto pred = predict_split(r.best_params, data, small_cfg(), Split::train);
  EXPECT_EQ(pred.classes, (std::vector<int>{0, 1}));
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto data = toy_data();
  TrainConfig t;
  t.epochs = 7;
  t.learning_rate = 0.0;
  t.weight_decay = 0.5;
  t.patience = 0;
  auto cfg = small_cfg();
  cfg.dropout = 0.3;
  const Model<float> fresh(cfg, data.features.cols(), 2);
  const auto r = train(data, cfg, t);
  for (const auto& [name, e] : fresh.params().entries()) {
    const auto& got = r.best_params.at(name);
    for (Index i = 0; i < got.size(); ++i) ASSERT_EQ(got[i], e.tensor[i]) << name;
  }
}

TEST(Train, SameSeedGivesIdenticalRecordsAndCheckpoints) {
  const auto data = small_sbm(3);
  auto cfg = small_cfg();
  cfg.dropout = 0.2;
  cfg.attention_dropout = 0.1;
  TrainConfig t;
  t.epochs = 15;
  t.seed = 11;
  const auto dir = m3d::testing::tmp_dir("harness_det");
  const auto a = train(data, cfg, t, (dir / "a.ckpt").string());
  const auto b = train(data, cfg, t, (dir / "b.ckpt").string());
  EXPECT_TRUE(a.record.same_results(b.record));
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  save_runrecord_tsv(a.record, dir / "a.tsv");
  save_runrecord_tsv(b.record, dir / "b.tsv");
  EXPECT_EQ(slurp(dir / "a.tsv"), slurp(dir / "b.tsv"));

  TrainConfig t3 = t;
  t3.seed = 12;
  const auto c = train(data, cfg, t3);
  EXPECT_FALSE(a.record.same_results(c.record));
}

TEST(Train, SelectedEpochHasBestValidationMetricEarliestOnTies) {
  const auto data = small_sbm(8);
  TrainConfig t;
  t.epochs = 40;
  t.patience = 0;
  const auto r = train(data, small_cfg(), t);
  double best = -1;
  Index first = -1;
  for (Index e = 1; e <= r.record.epochs_run; ++e) {
    const double v = r.record.metric_at(e, Split::valid);
    if (v > best) {
      best = v;
      first = e;
    }
  }
  EXPECT_EQ(r.record.best_epoch, first);
  EXPECT_EQ(r.record.best_valid_metric, best);
  EXPECT_DOUBLE_EQ(evaluate(r.best_params, data, small_cfg(), Split::valid, Metric::accuracy), best);
  EXPECT_LE(r.record.max_gate_sum_error, 1e-6);
}

TEST(Train, PatienceStopsAfterStagnation) {
  const auto data = toy_data();
  TrainConfig t;
  t.epochs = 100;
  t.learning_rate = 0.0;
  t.patience = 3;
  const auto r = train(data, small_cfg(), t);
  EXPECT_EQ(r.record.best_epoch, 1);
  EXPECT_EQ(r.record.epochs_run, 4);
  EXPECT_EQ(r.record.rows.size(), 12u);
}

TEST(Train, NonFiniteLossAborts) {
  auto data = toy_data();
  data.features(0, 0) = std::nan("");
  TrainConfig t;
  t.epochs = 3;
  EXPECT_THROW(train(data, small_cfg(), t), ComputeError);
}

TEST(Train, ConfigValidationAndJson) {
  TrainConfig t;
  t.epochs = 0;
  EXPECT_THROW(t.validate(), ValidationError);
  auto j = nlohmann::json::parse(R"({"epochs": 12, "learning_rate": 0.002, "metric": "roc_auc", "patience": 0})");
  const auto c = j.get<TrainConfig>();
  EXPECT_EQ(c.epochs, 12);
  EXPECT_EQ(c.metric, Metric::roc_auc);
  EXPECT_EQ(nlohmann::json(c).get<TrainConfig>().learning_rate, 0.002);
  EXPECT_THROW(nlohmann::json::parse(R"({"epoch": 3})").get<TrainConfig>(), ValidationError);
  EXPECT_THROW(nlohmann::json::parse(R"({"learning_rate": -1})").get<TrainConfig>(), ValidationError);
}

TEST(Train, RunRecordTsvHasNoWallTime) {
  const auto data = toy_data();
  TrainConfig t;
  t.epochs = 3;
  const auto r = train(data, small_cfg(), t);
  const auto dir = m3d::testing::tmp_dir("harness_tsv");
  save_runrecord_tsv(r.record, dir / "runrecord.tsv");
  std::istringstream in(slurp(dir / "runrecord.tsv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch\tsplit\tloss\tmetric");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 3);
  }
  EXPECT_EQ(rows, 9);
}

TEST(Evaluate, RocAucOnBinaryAndErrorOnMulticlass) {
  const auto data = toy_data();
  const Model<float> m(small_cfg(), data.features.cols(), 2);
  const double auc = evaluate(m.params(), data, small_cfg(), Split::test, Metric::roc_auc);
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);
  const auto multi = small_sbm(2, 3);
  const Model<float> m3(small_cfg(), multi.features.cols(), 3);
  EXPECT_THROW(evaluate(m3.params(), multi, small_cfg(), Split::test, Metric::roc_auc), ValidationError);
}

TEST(Evaluate, CheckpointRoundTrip) {
  const auto data = toy_data();
  TrainConfig t;
  t.epochs = 20;
  const auto dir = m3d::testing::tmp_dir("harness_eval");
  const auto r = train(data, small_cfg(), t, (dir / "m.ckpt").string());
  EXPECT_EQ(r.record.checkpoint, (dir / "m.ckpt").string());
  EXPECT_EQ(evaluate_checkpoint((dir / "m.ckpt").string(), data, small_cfg(), Split::test, Metric::accuracy),
            evaluate(r.best_params, data, small_cfg(), Split::test, Metric::accuracy));
}

TEST(GateProfile, UntrainedReportsZeroInitGates) {
  const auto data = small_sbm(6);
  const Model<float> m(small_cfg(), data.features.cols(), 3);
  const auto rows = gate_profile(m.params(), data, small_cfg(), parse_degree_bins("0-2,3-8,9+"));
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    if (r.count == 0) continue;
    EXPECT_EQ(r.mean[0], 0.5);
    EXPECT_EQ(r.mean[1], 0.25);
    EXPECT_EQ(r.mean[2], 0.25);
  }
}

TEST(GateProfile, SingleBinGivesGlobalMeansAndEmptyBinIsNA) {
  const auto data = small_sbm(6);
  TrainConfig t;
  t.epochs = 10;
  const auto r = train(data, small_cfg(), t);
  const auto rows = gate_profile(r.best_params, data, small_cfg(), {DegreeBin{0, -1}});
  Model<float> m(small_cfg(), data.features.cols(), 3);
  m.set_params(r.best_params);
  m.forward(data, false);
  for (Index l = 0; l < 2; ++l) {
    std::array<double, 3> mean{};
    for (Index u = 0; u < data.graph.n_nodes; ++u)
      for (int e = 0; e < 3; ++e) mean[e] += m.gates(l)(u, e);
    EXPECT_EQ(rows[l].count, data.graph.n_nodes);
    for (int e = 0; e < 3; ++e) EXPECT_NEAR(rows[l].mean[e], mean[e] / data.graph.n_nodes, 1e-12);
  }
  const auto sparse = gate_profile(r.best_params, data, small_cfg(), parse_degree_bins("1000+"));
  EXPECT_EQ(sparse[0].count, 0);
  const auto dir = m3d::testing::tmp_dir("harness_gates");
  save_gate_profile_tsv(sparse, dir / "gates.tsv");
  EXPECT_EQ(slurp(dir / "gates.tsv"), "layer\tdegree_bin\tcount\tg1\tg2\tg3\n0\t1000+\t0\tNA\tNA\tNA\n"
                                      "1\t1000+\t0\tNA\tNA\tNA\n");
}

TEST(GateProfile, BinParsing) {
  const auto b = parse_degree_bins("0-2,3-8,9+");
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[1].lo, 3);
  EXPECT_EQ(b[1].hi, 8);
  EXPECT_EQ(b[2].hi, -1);
  EXPECT_TRUE(b[2].contains(100));
  EXPECT_EQ(parse_degree_bins("4")[0].hi, 4);
  EXPECT_THROW(parse_degree_bins("3-8,0-2"), ValidationError);
  EXPECT_THROW(parse_degree_bins("0-2,,3"), ValidationError);
  EXPECT_THROW(parse_degree_bins("a-b"), ValidationError);
  EXPECT_THROW(parse_degree_bins("5+,7"), ValidationError);
}

TEST(Bench, PeakIsIndependentOfRepeatsAndCapGivesOom) {
  const auto data = small_sbm(1);
  const auto one = benchmark_schemes(data, small_cfg(), Scheme::dual, 1);
  const auto five = benchmark_schemes(data, small_cfg(), Scheme::dual, 5);
  EXPECT_EQ(one.peak_units, five.peak_units);
  EXPECT_FALSE(one.oom);
  EXPECT_GE(one.median_seconds, 0.0);
  const auto capped = benchmark_schemes(data, small_cfg(), Scheme::dense, 1, one.peak_units);
  EXPECT_TRUE(capped.oom);
  EXPECT_FALSE(benchmark_schemes(data, small_cfg(), Scheme::dual, 1, one.peak_units).oom);
  const auto dir = m3d::testing::tmp_dir("harness_bench");
  save_bench_tsv({one, capped}, dir / "bench.tsv");
  EXPECT_NE(slurp(dir / "bench.tsv").find("dense\t1\tNA\t"), std::string::npos);
}

TEST(Bench, DualNeverExceedsBestFixedSchemeByMoreThanTenPercent) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto data = small_sbm(seed);
    const auto dense = benchmark_schemes(data, small_cfg(), Scheme::dense, 1);
    const auto sparse = benchmark_schemes(data, small_cfg(), Scheme::sparse, 1);
    const auto dual = benchmark_schemes(data, small_cfg(), Scheme::dual, 1);
    EXPECT_LE(static_cast<double>(dual.peak_units),
              1.1 * static_cast<double>(std::min(dense.peak_units, sparse.peak_units)));
  }
}

TEST(EnsembleStudy, OracleDominatesSingleExperts) {
  const auto data = small_sbm(4);
  TrainConfig t;
  t.epochs = 30;
  const auto rep = run_ensemble_study(data, small_cfg(), t);
  for (double s : rep.single) EXPECT_GE(rep.oracle, s);
  EXPECT_GE(rep.oracle, rep.mean);
  EXPECT_GE(rep.oracle, rep.max);
  const auto dir = m3d::testing::tmp_dir("harness_ens");
  save_ensemble_tsv(rep, dir / "ensemble.tsv");
  EXPECT_EQ(slurp(dir / "ensemble.tsv").rfind("model\taccuracy\nlocal\t", 0), 0u);
}
