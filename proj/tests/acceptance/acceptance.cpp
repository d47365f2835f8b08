// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "m3d/m3d.hpp"

using namespace m3d;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string str(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int env_threads() {
  const char* e = std::getenv("M3D_THREADS");
  const int t = e ? std::atoi(e) : 1;
  return t >= 1 ? t : 1;
}

/// Random graph with n nodes, about `avg_deg` out-edges per node, labels over
/// n_classes and a random train/valid/test split. With `cover_classes` the
/// first n_classes nodes are training nodes of distinct classes.
Graph random_graph(Index n, double avg_deg, int n_classes, std::uint64_t seed, bool cover_classes = false) {
  CounterRng r(seed, stream_id({0xACC, 1}));
  Graph g;
  g.n_nodes = n;
  std::vector<std::pair<Index, Index>> e;
  const auto m = static_cast<Index>(avg_deg * static_cast<double>(n));
  for (Index i = 0; i < m; ++i)
    e.emplace_back(static_cast<Index>(r.below(static_cast<std::uint64_t>(n))),
                   static_cast<Index>(r.below(static_cast<std::uint64_t>(n))));
  build_csr(g, e);
  g.n_classes = n_classes;
  g.features = Tensor<double>({n, 3});
  for (auto& v : g.features.data()) v = r.normal();
  for (Index u = 0; u < n; ++u) {
    if (cover_classes && u < n_classes) {
      g.labels.push_back(static_cast<int>(u));
      g.splits.push_back(Split::train);
      continue;
    }
    g.labels.push_back(static_cast<int>(r.below(static_cast<std::uint64_t>(n_classes))));
    const auto s = r.below(3);
    g.splits.push_back(s == 0 ? Split::train : s == 1 ? Split::valid : Split::test);
  }
  return normalize_graph(g, true, false);
}

template <typename T>
Tensor<T> random_tensor(std::vector<Index> shape, std::uint64_t seed, std::uint64_t stream, double scale) {
  Tensor<T> t(std::move(shape));
  CounterRng r(seed, stream_id({0xACC, 2, stream}));
  for (auto& v : t.data()) v = static_cast<T>(scale * r.uniform(-1.0, 1.0));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
double scheme_disagreement(const SparseMask& mask, Index heads, Index d_head, std::uint64_t seed, double& peak) {
  const Index d = heads * d_head;
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  const auto wq = random_tensor<T>({d, d}, seed, 1, ws), wk = random_tensor<T>({d, d}, seed, 2, ws),
             wv = random_tensor<T>({d, d}, seed, 3, ws);
  const auto x = random_tensor<T>({mask.total(), d}, seed, 4, 1.0);
  const auto p = make_mha_params(heads, d, wq, wk, wv);
  const auto dense = run_scheme(x, mask, p, Scheme::dense);
  for (const auto v : dense.data()) peak = std::max(peak, std::abs(static_cast<double>(v)));
  return std::max(max_abs_diff(dense, run_scheme(x, mask, p, Scheme::sparse)),
                  max_abs_diff(dense, run_scheme(x, mask, p, Scheme::dual)));
}

// 1 ------------------------------------------------------------------------
Outcome scheme_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  CounterRng r(1, stream_id({0xACC, 10}));
  double worst32 = 0.0, worst64 = 0.0, peak = 0.0;
  Index entries = 0;
  const Index head_opts[] = {1, 2, 4}, dh_opts[] = {4, 8, 16};
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(r.below(63));
    const int classes = 2 + static_cast<int>(r.below(3));
    const Graph g = random_graph(n, 0.5 + 3.0 * r.uniform(), classes, static_cast<std::uint64_t>(trial));
    const Index p = 1 + static_cast<Index>(r.below(static_cast<std::uint64_t>(std::min<Index>(n, 6))));
    const Partition part = partition_graph(g, p, static_cast<std::uint64_t>(trial));
    const auto u = extend_universe(g, part);
    const MaskKind kind = kAllMaskKinds[trial % 9];
    TaxonomyOptions opt;
    opt.k_hops = 1 + static_cast<Index>(r.below(3));
    opt.n_label_free_globals = 1 + static_cast<Index>(r.below(2));
    const auto mask = build_mask(u, g, part, kind, opt);
    const Index heads = head_opts[r.below(3)], dh = dh_opts[r.below(3)];
    entries += mask.nnz();
    worst64 = std::max(worst64, scheme_disagreement<double>(mask, heads, dh, static_cast<std::uint64_t>(trial), peak));
    worst32 = std::max(worst32, scheme_disagreement<float>(mask, heads, dh, static_cast<std::uint64_t>(trial), peak));
  }
  const double t = seconds_since(t0);
  return {worst64 < 1e-10 && worst32 < 1e-5 && t < 120.0,
          "200 trials, " + std::to_string(entries) + " mask entries, max |out| " + str(peak) + ", max diff f64 " + str(worst64) + " f32 " + str(worst32) + ", " + str(t, 3) + " s"};
}

// 2 ------------------------------------------------------------------------
Graph toy_graph() {
  Graph g;
  g.n_nodes = 6;
  build_csr(g, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {3, 5}, {4, 5}});
  g.features = Tensor<double>({6, 3}, {1.0, 0.1, 0.0, 0.9, 0.2, 0.1, 0.7, 0.3, 0.2,
                                       0.2, 0.8, 0.1, 0.1, 1.0, 0.3, 0.0, 0.9, 0.5});
  g.labels = {0, 0, 0, 1, 1, 1};
  g.splits = {Split::train, Split::valid, Split::test, Split::train, Split::valid, Split::test};
  g.n_classes = 2;
  return normalize_graph(g, true, false);
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = prepare_data(toy_graph(), Partition::from_assignment({0, 0, 0, 1, 1, 1}));
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 8;
  cfg.seed = 7;
  Model<double> model(cfg, data.features.cols(), data.graph.n_classes);
  // Move the gates off their zero initialization so routing gradients are non-trivial.
  CounterRng r(7, stream_id({0xACC, 20}));
  for (auto& [name, e] : model.params().entries())
    if (name.find("gate") != std::string::npos)
      for (auto& v : e.tensor.data()) v = r.uniform(-1.0, 1.0);
  Objective<double> obj;
  obj.eval = [&](ParameterStore<double>&, bool want_grad) { return model.loss(data, false, 0, want_grad); };
  GradCheckOptions opt;
  opt.n_coords = 500;
  opt.seed = 3;
  const Index available = model.params().total_size();
  const auto rep = finite_diff_check(obj, model.params(), opt);
  const double t = seconds_since(t0);
  const bool enough = rep.coords_checked >= 500;
  return {enough && rep.max_rel_error < 1e-5 && t < 300.0,
          std::to_string(rep.coords_checked) + " of " + std::to_string(available) + " coords, max rel err " +
              str(rep.max_rel_error) + " (" + rep.worst_param + "), " + str(t, 3) + " s"};
}

// 3 ------------------------------------------------------------------------
Outcome sandwich_and_mc(int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  CounterRng r(3, stream_id({0xACC, 30}));
  Index sandwich_fail = 0, mc_fail = 0;
  const Index points = 1000;
  for (Index i = 0; i < points; ++i) {
    const auto s = random_feasible_scenario(r);
    const auto b = probability_bounds(s);
    const double p = exact_probability(s);
    if (!(b.lower <= p && p <= b.upper)) ++sandwich_fail;
    const auto e = mc_probability(s, 100000, static_cast<std::uint64_t>(1000 + i), threads);
    if (std::abs(e.estimate - p) > 3.0 * e.stderr_) ++mc_fail;
  }
  const double t = seconds_since(t0);
  const double frac = 1.0 - static_cast<double>(mc_fail) / static_cast<double>(points);
  return {sandwich_fail == 0 && frac >= 0.99 && t < 600.0,
          "sandwich violations " + std::to_string(sandwich_fail) + ", MC within 3 stderr at " + str(100.0 * frac) +
              "% of " + std::to_string(points) + " points, " + str(t, 3) + " s"};
}

// 4 ------------------------------------------------------------------------
std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

Outcome monotonicity() {
  Index scans = 0, violations = 0;
  std::string first;
  auto run = [&](const GaussianScenario& base, ScanAxis axis, const std::vector<double>& grid) {
    const auto rep = monotonicity_scan(base, axis, grid);
    ++scans;
    violations += static_cast<Index>(rep.violations.size());
    if (first.empty() && !rep.violations.empty()) first = rep.violations.front();
  };
  for (int classes : {2, 3, 5})
    for (Index k : {4, 10, 20})
      for (double rho : {0.3, 0.5, 0.8})
        for (double frac : {0.0, 0.5, 1.0}) {
          // alpha_c between 1/k and 1/(k rho).
          const double kd = static_cast<double>(k);
          const double alpha = 1.0 / kd + frac * (1.0 / (kd * rho) - 1.0 / kd);
          std::vector<double> sig(static_cast<std::size_t>(classes));
          for (int i = 0; i < classes; ++i) sig[i] = 0.4 + 0.3 * i;
          const double mass = kd * rho * alpha;
          // delta > 0 and below the smallest target mass along every scan.
          const double delta = 0.5 * std::min(rho, mass) * rho;
          const auto base = make_scenario(k, rho, alpha, sig, delta);
          run(base, ScanAxis::k, {2, 4, 8, 16, 32, 64});
          run(base, ScanAxis::rho_c, linspace(0.5 * rho, std::min(1.0, 1.0 / (kd * alpha)), 8));
          run(base, ScanAxis::alpha_c, linspace(1.0 / kd, 1.0 / (kd * rho), 8));
          run(base, ScanAxis::sigma_c, linspace(0.05, 3.0, 10));
          run(base, ScanAxis::sigma_m, linspace(0.05, 3.0, 10));
        }
  return {violations == 0, std::to_string(scans) + " scans over k, rho_c, alpha_c, sigma_c, sigma_m; " +
                               std::to_string(violations) + " violations" + (first.empty() ? "" : " (" + first + ")")};
}

// 5, 6 --------------------------------------------------------------------
struct Instance {
  Graph g;
  Partition part;
};

std::vector<Instance> random_instances(int count, std::uint64_t salt, bool cover_classes = false) {
  std::vector<Instance> out;
  CounterRng r(salt, stream_id({0xACC, 50}));
  for (int i = 0; i < count; ++i) {
    const Index n = 5 + static_cast<Index>(r.below(76));
    Graph g = random_graph(n, 0.5 + 3.0 * r.uniform(), 2 + static_cast<int>(r.below(4)), salt * 1000 + i,
                           cover_classes);
    const Index p = 1 + static_cast<Index>(r.below(static_cast<std::uint64_t>(std::min<Index>(n, 8))));
    Partition part = partition_graph(g, p, static_cast<std::uint64_t>(i));
    out.push_back({std::move(g), std::move(part)});
  }
  return out;
}

Outcome two_hop_support() {
  Index bad = 0, rows = 0;
  double worst = 0.0;
  const auto inst = random_instances(50, 5);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto rep = c4_c3_support_check(inst[i].g, inst[i].part, i);
    bad += !rep.ok();
    rows += rep.rows_checked;
    worst = std::max(worst, rep.max_row_sum_error);
  }
  return {bad == 0, "50 instances, " + std::to_string(rows) + " rows, " + std::to_string(bad) +
                        " violating instances, max composite row-sum error " + str(worst)};
}

// 9 configuration shared by 8, 10 and 11.
struct StudyConfig {
  SbmConfig sbm;
  ModelConfig model;
  TrainConfig train;
  int seeds = 5;
};

StudyConfig study_config() {
  StudyConfig c;
  c.sbm.n_classes = 3;
  c.sbm.clusters_per_class = 2;
  c.sbm.nodes_per_cluster = 200;
  c.sbm.minority_fraction = 0.15;
  c.sbm.p_intra = 0.04;
  c.sbm.p_cross_same = 0.01;
  c.sbm.p_cross_diff = 0.005;
  c.sbm.feature_sigma = {1.0};
  c.sbm.d_in = 8;
  c.model.n_layers = 2;
  c.model.d_model = 16;
  c.model.n_heads = 2;
  c.train.epochs = 100;
  c.train.learning_rate = 0.01;
  c.train.weight_decay = 5e-4;
  c.train.patience = 0;
  return c;
}

ModelData study_data(const StudyConfig& c, std::uint64_t seed) {
  SbmConfig s = c.sbm;
  s.seed = seed;
  auto g = generate_hierarchical_sbm(s);
  auto part = partition_graph(g, s.n_clusters(), seed);
  return prepare_data(std::move(g), std::move(part));
}

Outcome mask_counts(const StudyConfig& study) {
  Index checked = 0, bad = 0;
  auto check = [&](const Graph& g, const Partition& part) {
    const auto u = extend_universe(g, part);
    const auto m = build_designed_masks(u, g, part);
    const Index n = g.n_nodes;
    const auto train = static_cast<Index>(g.nodes_in(Split::train).size());
    ++checked;
    if (m.cluster.nnz() != 3 * n || m.global.nnz() != n * g.n_classes + train) ++bad;
    if (build_mask(u, g, part, MaskKind::C4).nnz() != 3 * n) ++bad;
    if (build_mask(u, g, part, MaskKind::G3).nnz() != n * g.n_classes + train) ++bad;
  };
  for (const auto& i : random_instances(50, 6, true)) check(i.g, i.part);
  for (int s = 0; s < study.seeds; ++s) {
    const auto d = study_data(study, static_cast<std::uint64_t>(s));
    check(d.graph, d.partition);
  }
  return {bad == 0, std::to_string(checked) + " instances, " + std::to_string(bad) + " count mismatches"};
}

// 7 ------------------------------------------------------------------------
AttentionRegion sized_region(Index q, Index k, Index nnz) {
  AttentionRegion r;
  r.query_ids.resize(static_cast<std::size_t>(q));
  r.key_ids.resize(static_cast<std::size_t>(k));
  r.nnz = nnz;
  r.kappa = static_cast<double>(nnz) / static_cast<double>(q * k);
  return r;
}

Outcome break_even() {
  CounterRng r(7, stream_id({0xACC, 70}));
  const Index dh_opts[] = {4, 8, 16, 32}, heads_opts[] = {1, 2, 4, 8};
  Index mismatch = 0, below = 0, above = 0;
  for (int i = 0; i < 1000; ++i) {
    const Index dh = dh_opts[r.below(4)], heads = heads_opts[r.below(4)];
    const Index q = 1 + static_cast<Index>(r.below(300)), k = 1 + static_cast<Index>(r.below(300));
    // kappa within a factor 2 of the break-even 1/(3 d_head), either side.
    const double target = static_cast<double>(q * k) / static_cast<double>(3 * dh) * std::exp2(r.uniform(-1.0, 1.0));
    const Index nnz = std::clamp<Index>(static_cast<Index>(std::llround(target)), 1, q * k);
    const auto reg = sized_region(q, k, nnz);
    const auto est = memory_footprint(reg, RegionMode::automatic, heads, dh);
    const Index best = std::min(est.dense_units, est.sparse_units);
    if (est.chosen_units != best) ++mismatch;
    (3 * dh * nnz < q * k ? below : above)++;
  }
  Index identity_fail = 0;
  for (Index dh : dh_opts)
    for (Index heads : heads_opts)
      for (Index q : {3, 24, 96})
        for (Index mult : {1, 5, 17}) {
          const Index k = 2 * dh * mult;  // q * k divisible by 3 d_head
          const Index nnz = q * k / (3 * dh);
          const auto est = memory_footprint(sized_region(q, k, nnz), RegionMode::automatic, heads, dh);
          if (3 * dh * nnz != q * k || est.dense_units != est.sparse_units) ++identity_fail;
        }
  return {mismatch == 0 && identity_fail == 0 && below > 0 && above > 0,
          "1000 regions (" + std::to_string(below) + " below, " + std::to_string(above) + " at/above break-even), " +
              std::to_string(mismatch) + " mode mismatches; break-even identity failures " +
              std::to_string(identity_fail)};
}

// 9, 11 -------------------------------------------------------------------
struct StudyRun {
  std::vector<EnsembleReport> reports;
  double seconds = 0.0;
};

StudyRun run_study(const StudyConfig& c, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(out);
  StudyRun run;
  for (int s = 0; s < c.seeds; ++s) {
    const auto dir = out / ("seed" + std::to_string(s));
    fs::create_directories(dir);
    const auto data = study_data(c, static_cast<std::uint64_t>(s));
    save_graph(data.graph, dir / "graph");
    save_partition(data.partition, dir / "partition.tsv");
    ModelConfig m = c.model;
    m.seed = static_cast<std::uint64_t>(s);
    TrainConfig t = c.train;
    t.seed = static_cast<std::uint64_t>(s);
    const auto rep = run_ensemble_study(data, m, t, (dir / "").string());
    save_ensemble_tsv(rep, dir / "ensemble.tsv");
    run.reports.push_back(rep);
  }
  run.seconds = seconds_since(t0);
  return run;
}

Outcome gates(const StudyConfig& c, const StudyRun& run) {
  const auto data = study_data(c, 0);
  Model<float> m(c.model, data.features.cols(), data.graph.n_classes);
  m.forward(data, false);
  Index off = 0;
  for (Index l = 0; l < m.n_layers(); ++l)
    for (Index u = 0; u < m.gates(l).rows(); ++u)
      off += m.gates(l)(u, 0) != 0.5f || m.gates(l)(u, 1) != 0.25f || m.gates(l)(u, 2) != 0.25f;
  double worst = 0.0;
  for (const auto& r : run.reports) worst = std::max(worst, r.full_max_gate_sum_error);
  return {off == 0 && worst <= 1e-6,
          "untrained gates off (0.5, 0.25, 0.25) at " + std::to_string(off) + " node-layers; max |g1+g2+g3-1| over " +
              std::to_string(run.reports.size()) + " full training runs " + str(worst)};
}

Outcome replication(const StudyRun& run) {
  std::array<double, 3> single{};
  double oracle = 0.0, full = 0.0;
  for (const auto& r : run.reports) {
    for (int e = 0; e < 3; ++e) single[e] += r.single[e];
    oracle += r.oracle;
    full += r.full;
  }
  const double n = static_cast<double>(run.reports.size());
  for (auto& s : single) s /= n;
  oracle /= n;
  full /= n;
  const double best = *std::max_element(single.begin(), single.end());
  const double oracle_margin = 100.0 * (oracle - best), full_margin = 100.0 * (full - best);
  return {oracle_margin >= 3.0 && full_margin >= 2.0 && run.seconds < 900.0,
          "mean test acc local " + str(single[0]) + " cluster " + str(single[1]) + " global " + str(single[2]) +
              " oracle " + str(oracle) + " full " + str(full) + "; oracle - best single " + str(oracle_margin, 3) +
              " pts, full - best single " + str(full_margin, 3) + " pts, " + str(run.seconds, 4) + " s"};
}

Outcome memory(const StudyConfig& c) {
  const auto data = study_data(c, 0);
  std::array<Index, 3> units{};
  const Scheme schemes[] = {Scheme::dense, Scheme::sparse, Scheme::dual};
  for (int i = 0; i < 3; ++i) {
    ModelConfig m = c.model;
    m.scheme = schemes[i];
    units[i] = Model<float>(m, data.features.cols(), data.graph.n_classes).accounted_units(data);
  }
  const double ratio = static_cast<double>(units[0]) / static_cast<double>(units[2]);
  return {units[2] <= units[1] && units[1] <= units[0] && ratio >= 5.0,
          "accounted units dense " + std::to_string(units[0]) + " sparse " + std::to_string(units[1]) + " dual " +
              std::to_string(units[2]) + ", dense/dual " + str(ratio)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const StudyConfig& c, const fs::path& first, const fs::path& second) {
  run_study(c, second);
  Index files = 0, differ = 0;
  std::set<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(first))
    if (e.is_regular_file()) names.insert(fs::relative(e.path(), first).string());
  for (const auto& e : fs::recursive_directory_iterator(second))
    if (e.is_regular_file()) names.insert(fs::relative(e.path(), second).string());
  Index ckpt = 0, tsv = 0;
  for (const auto& n : names) {
    ++files;
    ckpt += n.ends_with(".ckpt");
    tsv += n.ends_with(".tsv");
    if (!fs::exists(first / n) || !fs::exists(second / n) || slurp(first / n) != slurp(second / n)) ++differ;
  }
  return {differ == 0 && ckpt > 0 && tsv > 0, std::to_string(files) + " files (" + std::to_string(ckpt) +
                                                   " checkpoints, " + std::to_string(tsv) + " TSVs), " +
                                                   std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"m3d acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto want = [&](int c) { return selected.empty() || selected.contains(c); };

  const fs::path tmp = fs::path(M3D_TEST_TMP);
  fs::create_directories(tmp);
  const int threads = env_threads();
  const auto study = study_config();

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!want(id)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " " << name << ": " << o.detail << std::endl;
  };

  report(1, "scheme equivalence", scheme_equivalence);
  report(2, "gradient check", gradient_check);
  report(3, "sandwich and Monte Carlo", [&] { return sandwich_and_mc(threads); });
  report(4, "monotonicity", monotonicity);
  report(5, "two-hop support equivalence", two_hop_support);
  report(6, "mask counts", [&] { return mask_counts(study); });
  report(7, "dense/sparse break-even", break_even);

  std::optional<StudyRun> run;
  auto ensure_run = [&]() -> const StudyRun& {
    if (!run) run = run_study(study, tmp / "study_a");
    return *run;
  };
  report(8, "gate invariants", [&] { return gates(study, ensure_run()); });
  report(9, "ensemble replication", [&] { return replication(ensure_run()); });
  report(10, "memory accounting", [&] { return memory(study); });
  report(11, "determinism", [&] {
    ensure_run();
    return determinism(study, tmp / "study_a", tmp / "study_b");
  });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
