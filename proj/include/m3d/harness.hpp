// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "m3d/common.hpp"
#include "m3d/metrics.hpp"
#include "m3d/model.hpp"
#include "m3d/optim.hpp"

namespace m3d {

struct TrainConfig {
  Index epochs = 200;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  Index patience = 50;  // 0 disables early stopping
  Metric metric = Metric::accuracy;
  std::uint64_t seed = 0;

  void validate() const {
    M3D_REQUIRE(epochs >= 1, "epochs must be >= 1, got ", epochs);
    M3D_REQUIRE(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be >= 0");
    M3D_REQUIRE(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay must be >= 0");
    M3D_REQUIRE(patience >= 0, "patience must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},   {"learning_rate", c.learning_rate},
                     {"weight_decay", c.weight_decay}, {"patience", c.patience},
                     {"metric", to_string(c.metric)},  {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  M3D_REQUIRE(j.is_object(), "train config must be a JSON object");
  static const std::set<std::string> known{"epochs", "learning_rate", "weight_decay", "patience", "metric", "seed"};
  for (const auto& [k, _] : j.items()) M3D_REQUIRE(known.contains(k), "unknown train config key '", k, "'");
  try {
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<Index>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("patience")) c.patience = j.at("patience").get<Index>();
    if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail_validation("malformed train config: ", e.what());
  }
  c.validate();
}

struct EpochRow {
  Index epoch = 0;
  Split split = Split::train;
  double loss = 0.0;
  double metric = 0.0;
};

struct RunRecord {
  std::vector<EpochRow> rows;
  Index epochs_run = 0;
  Index best_epoch = 0;
  double best_valid_metric = -std::numeric_limits<double>::infinity();
  std::string checkpoint;
  double wall_seconds = 0.0;
  Index peak_accounted_units = 0;
  double max_gate_sum_error = 0.0;  // max |g1+g2+g3-1| over nodes, layers, epochs

  double metric_at(Index epoch, Split s) const {
    for (const auto& r : rows)
      if (r.epoch == epoch && r.split == s) return r.metric;
    return std::numeric_limits<double>::quiet_NaN();
  }

  /// Equality of the recorded curves and selection; wall time is ignored.
  bool same_results(const RunRecord& o) const {
    if (rows.size() != o.rows.size()) return false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto &a = rows[i], &b = o.rows[i];
      if (a.epoch != b.epoch || a.split != b.split || a.loss != b.loss || a.metric != b.metric) return false;
    }
    return epochs_run == o.epochs_run && best_epoch == o.best_epoch &&
           peak_accounted_units == o.peak_accounted_units && max_gate_sum_error == o.max_gate_sum_error;
  }
};

inline void save_runrecord_tsv(const RunRecord& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_compute("cannot write ", path.string());
  out << "epoch\tsplit\tloss\tmetric\n";
  for (const auto& r : rec.rows)
    out << r.epoch << '\t' << to_string(r.split) << '\t' << detail::format_double(r.loss) << '\t'
        << detail::format_double(r.metric) << '\n';
}

struct SplitScore {
  double loss = 0.0;
  double metric = 0.0;
};

/// Eval-mode loss (mean cross-entropy over the split's real nodes) and metric.
template <typename T>
SplitScore score_split(const Tensor<T>& logits, const Graph& g, Split split, Metric metric) {
  const auto ids = g.nodes_in(split);
  M3D_REQUIRE(!ids.empty(), "split '", to_string(split), "' is empty");
  std::vector<int> labels;
  for (Index u : ids) labels.push_back(g.labels[u]);
  SplitScore s;
  s.loss = static_cast<double>(ops::cross_entropy_rows<T>(logits, ids, labels, nullptr));
  const auto pred = predict(logits, ids);
  s.metric = score_predictions(metric, pred.classes, pred.probs, labels, g.n_classes);
  return s;
}

struct TrainResult {
  RunRecord record;
  ParameterStore<float> best_params;
};

/// Full-graph AdamW training with validation-based checkpoint selection.
/// Writes the selected parameters to `checkpoint` when it is non-empty.
inline TrainResult train(const ModelData& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::string& checkpoint = {}) {
  tcfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Graph& g = data.graph;
  Model<float> model(mcfg, data.features.cols(), g.n_classes);
  AdamW<float> opt({tcfg.learning_rate, tcfg.weight_decay});
  const bool have_valid = !g.nodes_in(Split::valid).empty();
  const Split select_on = have_valid ? Split::valid : Split::train;

  TrainResult res;
  res.record.peak_accounted_units = model.accounted_units(data);
  res.best_params = model.params();
  for (Index epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    model.params().zero_grad();
    const float l = model.loss(data, true, stream_id({tcfg.seed, static_cast<std::uint64_t>(epoch)}), true);
    if (!std::isfinite(l)) fail_compute("training diverged: non-finite loss at epoch ", epoch);
    for (Index k = 0; k < model.n_layers(); ++k) {
      const auto& gt = model.gates(k);
      for (Index r = 0; r < gt.rows(); ++r) {
        const double s = static_cast<double>(gt(r, 0)) + gt(r, 1) + gt(r, 2);
        res.record.max_gate_sum_error = std::max(res.record.max_gate_sum_error, std::abs(s - 1.0));
      }
    }
    opt.step(model.params());

    const auto logits = model.forward(data, false);
    for (Split s : {Split::train, Split::valid, Split::test}) {
      if (g.nodes_in(s).empty()) continue;
      const auto sc = score_split(logits, g, s, tcfg.metric);
      if (!std::isfinite(sc.loss)) fail_compute("training diverged: non-finite ", to_string(s), " loss at epoch ", epoch);
      res.record.rows.push_back({epoch, s, sc.loss, sc.metric});
    }
    res.record.epochs_run = epoch;
    const double sel = res.record.metric_at(epoch, select_on);
    if (sel > res.record.best_valid_metric) {
      res.record.best_valid_metric = sel;
      res.record.best_epoch = epoch;
      res.best_params = model.params();
    }
    if (tcfg.patience > 0 && epoch - res.record.best_epoch >= tcfg.patience) break;
  }
  if (!checkpoint.empty()) {
    save_checkpoint(res.best_params, checkpoint);
    res.record.checkpoint = checkpoint;
  }
  res.record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Eval-mode logits of a parameter set.
inline Tensor<float> infer_logits(const ParameterStore<float>& params, const ModelData& data, const ModelConfig& mcfg) {
  Model<float> model(mcfg, data.features.cols(), data.graph.n_classes);
  model.set_params(params);
  return model.forward(data, false);
}

inline Prediction predict_split(const ParameterStore<float>& params, const ModelData& data, const ModelConfig& mcfg,
                                Split split) {
  const auto logits = infer_logits(params, data, mcfg);
  return predict(logits, data.graph.nodes_in(split));
}

inline double evaluate(const ParameterStore<float>& params, const ModelData& data, const ModelConfig& mcfg, Split split,
                       Metric metric) {
  if (metric == Metric::roc_auc)
    M3D_REQUIRE(data.graph.n_classes <= 2, "roc_auc is defined for binary labels, graph has ", data.graph.n_classes,
                " classes");
  const auto logits = infer_logits(params, data, mcfg);
  return score_split(logits, data.graph, split, metric).metric;
}

inline double evaluate_checkpoint(const std::string& path, const ModelData& data, const ModelConfig& mcfg, Split split,
                                  Metric metric) {
  return evaluate(load_checkpoint<float>(path), data, mcfg, split, metric);
}

enum class EnsembleStrategy { mean, max, oracle };

inline std::string to_string(EnsembleStrategy s) {
  return s == EnsembleStrategy::mean ? "mean" : s == EnsembleStrategy::max ? "max" : "oracle";
}

inline EnsembleStrategy parse_ensemble_strategy(const std::string& s) {
  if (s == "mean") return EnsembleStrategy::mean;
  if (s == "max") return EnsembleStrategy::max;
  if (s == "oracle") return EnsembleStrategy::oracle;
  fail_validation("unknown ensemble strategy '", s, "' (expected mean, max or oracle)");
}

using ProbMatrix = std::vector<std::vector<double>>;

/// Accuracy of a combination of per-model probability rows. Ties resolve to
/// the lowest class and, for max, the earliest model.
inline double ensemble_combine(const std::vector<ProbMatrix>& models, EnsembleStrategy strategy,
                               std::span<const int> labels) {
  M3D_REQUIRE(models.size() >= 2, "ensemble needs at least 2 models, got ", models.size());
  const std::size_t n = models[0].size();
  M3D_REQUIRE(n == labels.size(), "ensemble: ", n, " rows for ", labels.size(), " labels");
  M3D_REQUIRE(n > 0, "ensemble over an empty node set");
  const std::size_t c = models[0][0].size();
  M3D_REQUIRE(c > 0, "ensemble: zero classes");
  for (const auto& m : models) {
    M3D_REQUIRE(m.size() == n, "ensemble shape mismatch: ", m.size(), " rows vs ", n);
    for (const auto& r : m) M3D_REQUIRE(r.size() == c, "ensemble shape mismatch: ", r.size(), " classes vs ", c);
  }
  auto argmax = [](const std::vector<double>& r) {
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  };
  std::size_t hit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int cls = -1;
    switch (strategy) {
      case EnsembleStrategy::mean: {
        std::vector<double> avg(c, 0.0);
        for (const auto& m : models)
          for (std::size_t k = 0; k < c; ++k) avg[k] += m[i][k];
        cls = argmax(avg);
        break;
      }
      case EnsembleStrategy::max: {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& m : models)
          for (std::size_t k = 0; k < c; ++k)
            if (m[i][k] > best) {
              best = m[i][k];
              cls = static_cast<int>(k);
            }
        break;
      }
      case EnsembleStrategy::oracle:
        for (const auto& m : models)
          if (argmax(m[i]) == labels[i]) cls = labels[i];
        break;
    }
    hit += cls >= 0 && cls == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(n);
}

struct EnsembleReport {
  std::array<double, 3> single{};  // local, cluster, global
  double full = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double oracle = 0.0;
  double full_max_gate_sum_error = 0.0;
};

/// Three forced-gate single-expert models and the gated model, sharing one
/// config; test accuracy of each at its validation-selected checkpoint.
/// `checkpoint_prefix` (if non-empty) receives <prefix><name>.ckpt and
/// <prefix><name>.runrecord.tsv for name in {local, cluster, global, full}.
inline EnsembleReport run_ensemble_study(const ModelData& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                         const std::string& checkpoint_prefix = {}) {
  EnsembleReport rep;
  const auto test_ids = data.graph.nodes_in(Split::test);
  std::vector<int> labels;
  for (Index u : test_ids) labels.push_back(data.graph.labels[u]);
  TrainConfig acc_cfg = tcfg;
  acc_cfg.metric = Metric::accuracy;
  std::vector<ProbMatrix> probs;
  for (int e = 0; e < 3; ++e) {
    ModelConfig c = mcfg;
    c.forced_gates = std::array<double, 3>{0.0, 0.0, 0.0};
    (*c.forced_gates)[e] = 1.0;
    const std::string name = kExpertNames[e];
    const auto r = train(data, c, acc_cfg, checkpoint_prefix.empty() ? "" : checkpoint_prefix + name + ".ckpt");
    if (!checkpoint_prefix.empty()) save_runrecord_tsv(r.record, checkpoint_prefix + name + ".runrecord.tsv");
    auto pred = predict_split(r.best_params, data, c, Split::test);
    rep.single[e] = accuracy(pred.classes, labels);
    probs.push_back(std::move(pred.probs));
  }
  ModelConfig full = mcfg;
  full.forced_gates.reset();
  const auto r = train(data, full, acc_cfg, checkpoint_prefix.empty() ? "" : checkpoint_prefix + "full.ckpt");
  if (!checkpoint_prefix.empty()) save_runrecord_tsv(r.record, checkpoint_prefix + "full.runrecord.tsv");
  rep.full_max_gate_sum_error = r.record.max_gate_sum_error;
  rep.full = evaluate(r.best_params, data, full, Split::test, Metric::accuracy);
  rep.mean = ensemble_combine(probs, EnsembleStrategy::mean, labels);
  rep.max = ensemble_combine(probs, EnsembleStrategy::max, labels);
  rep.oracle = ensemble_combine(probs, EnsembleStrategy::oracle, labels);
  return rep;
}

inline void save_ensemble_tsv(const EnsembleReport& rep, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_compute("cannot write ", path.string());
  out << "model\taccuracy\n";
  for (int e = 0; e < 3; ++e) out << kExpertNames[e] << '\t' << detail::format_double(rep.single[e]) << '\n';
  out << "ensemble_mean\t" << detail::format_double(rep.mean) << '\n';
  out << "ensemble_max\t" << detail::format_double(rep.max) << '\n';
  out << "ensemble_oracle\t" << detail::format_double(rep.oracle) << '\n';
  out << "full\t" << detail::format_double(rep.full) << '\n';
}

/// Inclusive out-degree range; hi < 0 means unbounded.
struct DegreeBin {
  Index lo = 0;
  Index hi = -1;

  bool contains(Index d) const { return d >= lo && (hi < 0 || d <= hi); }
  std::string label() const { return hi < 0 ? std::to_string(lo) + "+" : std::to_string(lo) + "-" + std::to_string(hi); }
};

/// Parses "0-2,3-8,9+". Bins must be ascending and disjoint.
inline std::vector<DegreeBin> parse_degree_bins(const std::string& spec) {
  std::vector<DegreeBin> bins;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto end = std::min(spec.find(',', pos), spec.size());
    const std::string tok = spec.substr(pos, end - pos);
    M3D_REQUIRE(!tok.empty(), "empty degree bin in '", spec, "'");
    DegreeBin b;
    try {
      if (tok.back() == '+') {
        b.lo = std::stoll(tok.substr(0, tok.size() - 1));
      } else if (const auto dash = tok.find('-'); dash != std::string::npos) {
        b.lo = std::stoll(tok.substr(0, dash));
        b.hi = std::stoll(tok.substr(dash + 1));
      } else {
        b.lo = b.hi = std::stoll(tok);
      }
    } catch (const std::exception&) {
      fail_validation("malformed degree bin '", tok, "'");
    }
    M3D_REQUIRE(b.lo >= 0 && (b.hi < 0 || b.hi >= b.lo), "invalid degree bin '", tok, "'");
    if (!bins.empty())
      M3D_REQUIRE(bins.back().hi >= 0 && b.lo > bins.back().hi, "degree bins must be ascending and disjoint");
    bins.push_back(b);
    pos = end + 1;
  }
  return bins;
}

struct GateProfileRow {
  Index layer = 0;
  DegreeBin bin;
  Index count = 0;
  std::array<double, 3> mean{};  // meaningful only when count > 0
};

/// Eval-mode mean gates per layer and out-degree bin over the real nodes.
inline std::vector<GateProfileRow> gate_profile(const ParameterStore<float>& params, const ModelData& data,
                                                const ModelConfig& mcfg, const std::vector<DegreeBin>& bins) {
  M3D_REQUIRE(!bins.empty(), "gate_profile needs at least one degree bin");
  Model<float> model(mcfg, data.features.cols(), data.graph.n_classes);
  model.set_params(params);
  model.forward(data, false);
  std::vector<GateProfileRow> rows;
  for (Index l = 0; l < model.n_layers(); ++l) {
    const auto& gt = model.gates(l);
    for (const auto& b : bins) {
      GateProfileRow r{l, b, 0, {}};
      for (Index u = 0; u < data.graph.n_nodes; ++u) {
        if (!b.contains(data.graph.degree(u))) continue;
        ++r.count;
        for (int e = 0; e < 3; ++e) r.mean[e] += static_cast<double>(gt(u, e));
      }
      if (r.count > 0)
        for (auto& m : r.mean) m /= static_cast<double>(r.count);
      rows.push_back(r);
    }
  }
  return rows;
}

inline void save_gate_profile_tsv(const std::vector<GateProfileRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_compute("cannot write ", path.string());
  out << "layer\tdegree_bin\tcount\tg1\tg2\tg3\n";
  for (const auto& r : rows) {
    out << r.layer << '\t' << r.bin.label() << '\t' << r.count;
    for (double m : r.mean) out << '\t' << (r.count > 0 ? detail::format_double(m) : "NA");
    out << '\n';
  }
}

struct BenchResult {
  Scheme scheme = Scheme::dual;
  Index repeats = 0;
  double median_seconds = 0.0;
  Index peak_units = 0;
  bool oom = false;
};

/// Times forward+backward under a forced scheme. With a budget cap, a scheme
/// whose accounted units exceed it is reported as OOM without running.
inline BenchResult benchmark_schemes(const ModelData& data, const ModelConfig& mcfg, Scheme scheme, Index repeats,
                                     std::optional<Index> budget_units = std::nullopt) {
  M3D_REQUIRE(repeats >= 1, "repeats must be >= 1");
  ModelConfig c = mcfg;
  c.scheme = scheme;
  Model<float> model(c, data.features.cols(), data.graph.n_classes);
  BenchResult res{scheme, repeats, 0.0, model.accounted_units(data), false};
  if (budget_units && res.peak_units > *budget_units) {
    res.oom = true;
    res.median_seconds = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  std::vector<double> times;
  for (Index i = 0; i < repeats; ++i) {
    model.params().zero_grad();
    const auto t0 = std::chrono::steady_clock::now();
    model.loss(data, false, 0, true);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t m = times.size();
  res.median_seconds = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
  return res;
}

inline void save_bench_tsv(const std::vector<BenchResult>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_compute("cannot write ", path.string());
  out << "scheme\trepeats\tmedian_seconds\tpeak_units\toom\n";
  for (const auto& r : rows)
    out << to_string(r.scheme) << '\t' << r.repeats << '\t'
        << (r.oom ? std::string("NA") : detail::format_double(r.median_seconds)) << '\t' << r.peak_units << '\t'
        << (r.oom ? 1 : 0) << '\n';
}

}  // namespace m3d
