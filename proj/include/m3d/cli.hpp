// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "m3d/config.hpp"
#include "m3d/harness.hpp"
#include "m3d/mask.hpp"
#include "m3d/partition.hpp"
#include "m3d/sbm.hpp"
#include "m3d/theory.hpp"

namespace m3d::cli {

inline constexpr const char* kVersion = "0.1.0";

inline const std::set<std::string>& subcommands() {
  static const std::set<std::string> s{"gen-sbm", "partition", "masks",        "train", "eval",
                                       "ensemble", "theory",   "gate-profile", "bench"};
  return s;
}

namespace detail {

namespace fs = std::filesystem;

struct Run {
  std::vector<std::string> argv;
  int threads = 1;
  nlohmann::json manifest = nlohmann::json::object();

  void write_manifest(const fs::path& out_dir, const std::string& command) {
    fs::create_directories(out_dir);
    manifest["tool"] = "m3d";
    manifest["command"] = command;
    manifest["argv"] = argv;
    manifest["threads"] = threads;
    manifest["versions"] = {{"m3d", kVersion},
                            {"compiler", __VERSION__},
                            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                            {"cli11", CLI11_VERSION}};
    std::ofstream out(out_dir / "manifest.json");
    if (!out) fail_compute("cannot write ", (out_dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }
};

inline std::string fmt(double v) { return m3d::detail::format_double(v); }

/// Graph plus partition: an explicit partition file wins, then a cluster
/// count from the flag, then the config, then one cluster per class.
struct DataArgs {
  std::string data;
  std::string partition;
  Index clusters = 0;
  std::uint64_t partition_seed = 0;
  bool partition_seed_set = false;
};

inline void add_data_args(CLI::App* sub, DataArgs& a) {
  sub->add_option("--data", a.data, "graph directory (edges/features/labels/splits TSV)")->required();
  sub->add_option("--partition", a.partition, "partition TSV (node<TAB>cluster)");
  sub->add_option("--clusters", a.clusters, "cluster count when partitioning on the fly");
  sub->add_option("--partition-seed", a.partition_seed, "seed for on-the-fly partitioning")
      ->each([&a](const std::string&) { a.partition_seed_set = true; });
}

inline std::pair<Graph, Partition> load_data(const DataArgs& a, const std::optional<RunConfig>& rc, Run& run) {
  Graph g = load_graph(a.data);
  Partition part;
  if (!a.partition.empty()) {
    part = load_partition(a.partition, g.n_nodes);
    run.manifest["partition"] = {{"file", a.partition}};
  } else {
    Index p = a.clusters;
    if (p == 0 && rc && rc->clusters) p = *rc->clusters;
    if (p == 0) p = std::max<Index>(1, g.n_classes);
    const std::uint64_t seed = a.partition_seed_set ? a.partition_seed : rc ? rc->model.seed : 0;
    part = partition_graph(g, p, seed);
    run.manifest["partition"] = {{"clusters", p}, {"seed", seed}};
  }
  run.manifest["data"] = a.data;
  return {std::move(g), std::move(part)};
}

inline void print_tsv_file(const fs::path& p) {
  std::ifstream in(p);
  std::cout << in.rdbuf();
}

struct ScenarioArgs {
  Index k = 10;
  double rho_c = 0.8;
  double alpha_c = 0.125;
  std::vector<double> sigma{0.5, 0.5};
  double delta = 0.5;
};

inline void add_scenario_args(CLI::App* sub, ScenarioArgs& s) {
  sub->add_option("--k", s.k, "receptive field size")->capture_default_str();
  sub->add_option("--rho-c", s.rho_c, "label consistency of the target class")->capture_default_str();
  sub->add_option("--alpha-c", s.alpha_c, "attention weight on a target-class neighbour")->capture_default_str();
  sub->add_option("--sigma", s.sigma, "per-class stds, target first (comma separated)")->delimiter(',');
  sub->add_option("--delta", s.delta, "decision threshold")->capture_default_str();
}

inline GaussianScenario scenario_of(const ScenarioArgs& a) {
  return make_scenario(a.k, a.rho_c, a.alpha_c, a.sigma, a.delta);
}

inline nlohmann::json scenario_json(const GaussianScenario& s) {
  return {{"k", s.k}, {"rho", s.rho}, {"alpha", s.alpha}, {"sigma", s.sigma}, {"delta", s.delta}};
}

inline std::string bound_cells(const GaussianScenario& s) {
  try {
    const auto b = probability_bounds(s);
    return fmt(b.lower) + "\t" + fmt(b.upper);
  } catch (const ValidationError&) {
    return "NA\tNA";
  }
}

}  // namespace detail

/// Runs one CLI invocation and returns its exit code: 0 success, 1 invalid
/// input, 2 runtime failure.
inline int dispatch(int argc, char** argv) {
  using namespace detail;
  Run run;
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);

  if (argc >= 2 && argv[1][0] != '-' && !subcommands().contains(argv[1])) {
    std::cerr << "m3d: unknown subcommand '" << argv[1] << "'\n";
    return 1;
  }

  CLI::App app{"m3d: hierarchical-mask graph transformer toolkit", "m3d"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  app.add_option("--threads", run.threads, "worker threads (default 1)")
      ->envname("M3D_THREADS")
      ->check(CLI::PositiveNumber);

  // gen-sbm
  auto* gen = app.add_subcommand("gen-sbm", "generate a hierarchical SBM graph");
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "SBM config JSON")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "override the config seed");

  // partition
  auto* part_cmd = app.add_subcommand("partition", "balanced partition of a graph");
  std::string part_data, part_out = ".";
  Index part_p = 0;
  std::uint64_t part_seed = 0;
  double part_eps = 0.1;
  bool part_no_refine = false;
  part_cmd->add_option("--data", part_data, "graph directory")->required();
  part_cmd->add_option("--clusters", part_p, "number of clusters")->required();
  part_cmd->add_option("--seed", part_seed, "seed")->capture_default_str();
  part_cmd->add_option("--epsilon", part_eps, "balance slack")->capture_default_str();
  part_cmd->add_flag("--no-refine", part_no_refine, "skip refinement");
  part_cmd->add_option("--out", part_out, "output directory")->capture_default_str();

  // masks
  auto* masks = app.add_subcommand("masks", "build and export attention masks");
  DataArgs mask_data;
  std::string mask_kinds = "designed", mask_out = ".";
  Index mask_hops = 1, mask_label_free = 1;
  add_data_args(masks, mask_data);
  masks->add_option("--kind", mask_kinds, "comma list of L1..G3, 'designed' or 'all'")->capture_default_str();
  masks->add_option("--k-hops", mask_hops, "hop count for L1")->capture_default_str();
  masks->add_option("--label-free-globals", mask_label_free, "virtual count for G2")->capture_default_str();
  masks->add_option("--out", mask_out, "output directory")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model and write runrecord.tsv");
  DataArgs train_data;
  std::string train_config, train_out = ".";
  add_data_args(train_cmd, train_data);
  train_cmd->add_option("--config", train_config, "model/train config JSON")->required();
  train_cmd->add_option("--out", train_out, "output directory")->capture_default_str();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  DataArgs eval_data;
  std::string eval_config, eval_ckpt, eval_split = "test", eval_metric, eval_out = ".";
  add_data_args(eval_cmd, eval_data);
  eval_cmd->add_option("--config", eval_config, "model config JSON")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "train, valid or test")->capture_default_str();
  eval_cmd->add_option("--metric", eval_metric, "accuracy or roc_auc (default: config)");
  eval_cmd->add_option("--out", eval_out, "directory for manifest.json")->capture_default_str();

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "single-expert models and their mean/max/oracle ensembles");
  DataArgs ens_data;
  std::string ens_config, ens_out = ".";
  add_data_args(ens, ens_data);
  ens->add_option("--config", ens_config, "model/train config JSON")->required();
  ens->add_option("--out", ens_out, "output directory")->capture_default_str();

  // theory
  auto* theory = app.add_subcommand("theory", "Gaussian-model probability lab");
  theory->require_subcommand(1);
  ScenarioArgs sc;
  std::string th_out = ".";
  auto* th_bounds = theory->add_subcommand("bounds", "exact probability and its bounds");
  add_scenario_args(th_bounds, sc);
  th_bounds->add_option("--out", th_out, "directory for manifest.json")->capture_default_str();

  auto* th_mc = theory->add_subcommand("mc", "Monte Carlo estimate against the exact probability");
  Index mc_samples = 100000, mc_random = 0;
  std::uint64_t mc_seed = 0;
  add_scenario_args(th_mc, sc);
  th_mc->add_option("--samples", mc_samples, "trials per scenario")->capture_default_str();
  th_mc->add_option("--seed", mc_seed, "seed")->capture_default_str();
  th_mc->add_option("--random", mc_random, "instead of the given scenario, N random feasible scenarios");
  th_mc->add_option("--out", th_out, "directory for manifest.json")->capture_default_str();

  auto* th_mono = theory->add_subcommand("monotone", "bound sequences along one axis");
  std::string mono_axis = "k";
  std::vector<double> mono_grid;
  add_scenario_args(th_mono, sc);
  th_mono->add_option("--axis", mono_axis, "k, rho_c, alpha_c, sigma_c or sigma_m")->capture_default_str();
  th_mono->add_option("--grid", mono_grid, "increasing axis values (comma separated)")->delimiter(',')->required();
  th_mono->add_option("--out", th_out, "directory for manifest.json")->capture_default_str();

  auto* th_prop = theory->add_subcommand("prop1", "two-hop cluster-virtual support check");
  DataArgs prop_data;
  std::uint64_t prop_seed = 0;
  add_data_args(th_prop, prop_data);
  th_prop->add_option("--seed", prop_seed, "seed for the random attention weights")->capture_default_str();
  th_prop->add_option("--out", th_out, "directory for manifest.json")->capture_default_str();

  // gate-profile
  auto* gates = app.add_subcommand("gate-profile", "mean gates per layer and degree bin");
  DataArgs gate_data;
  std::string gate_config, gate_ckpt, gate_bins = "0-2,3-8,9+", gate_out = ".";
  add_data_args(gates, gate_data);
  gates->add_option("--config", gate_config, "model config JSON")->required();
  gates->add_option("--checkpoint", gate_ckpt, "checkpoint file")->required();
  gates->add_option("--bins", gate_bins, "degree bins, e.g. 0-2,3-8,9+")->capture_default_str();
  gates->add_option("--out", gate_out, "output directory")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "time and accounted memory per attention scheme");
  DataArgs bench_data;
  std::string bench_config, bench_schemes = "dense,sparse,dual", bench_out = ".";
  Index bench_repeats = 5;
  std::optional<Index> bench_budget;
  add_data_args(bench, bench_data);
  bench->add_option("--config", bench_config, "model config JSON")->required();
  bench->add_option("--schemes", bench_schemes, "comma list of dense, sparse, dual")->capture_default_str();
  bench->add_option("--repeats", bench_repeats, "forward+backward steps")->capture_default_str();
  bench->add_option("--budget", bench_budget, "accounted-unit cap; larger schemes report OOM");
  bench->add_option("--out", bench_out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto split_list = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const auto end = std::min(s.find(',', pos), s.size());
      out.push_back(s.substr(pos, end - pos));
      pos = end + 1;
    }
    return out;
  };

  try {
    if (gen->parsed()) {
      auto cfg = load_sbm_config(gen_config);
      if (gen_seed) cfg.seed = *gen_seed;
      const auto g = generate_hierarchical_sbm(cfg);
      fs::create_directories(gen_out);
      save_graph(g, gen_out);
      run.manifest["config"] = cfg;
      run.manifest["seeds"] = {{"sbm", cfg.seed}};
      run.manifest["result"] = {{"n_nodes", g.n_nodes}, {"n_edges", g.n_edges()}, {"edge_homophily", edge_homophily(g)}};
      run.write_manifest(gen_out, "gen-sbm");
      std::cout << "n_nodes\tn_edges\tedge_homophily\n"
                << g.n_nodes << '\t' << g.n_edges() << '\t' << fmt(edge_homophily(g)) << '\n';
    } else if (part_cmd->parsed()) {
      const auto g = load_graph(part_data);
      PartitionOptions opt;
      opt.epsilon = part_eps;
      opt.refine = !part_no_refine;
      const auto p = partition_graph(g, part_p, part_seed, opt);
      fs::create_directories(part_out);
      save_partition(p, fs::path(part_out) / "partition.tsv");
      const auto m = partition_metrics(g, p);
      run.manifest["data"] = part_data;
      run.manifest["seeds"] = {{"partition", part_seed}};
      run.manifest["config"] = {{"clusters", part_p}, {"epsilon", part_eps}, {"refine", opt.refine}};
      run.manifest["result"] = {{"edge_cut", m.edge_cut}, {"balance", m.balance}};
      run.write_manifest(part_out, "partition");
      std::cout << "clusters\tedge_cut\tbalance\n" << part_p << '\t' << m.edge_cut << '\t' << fmt(m.balance) << '\n';
    } else if (masks->parsed()) {
      auto [g, p] = load_data(mask_data, std::nullopt, run);
      const auto u = extend_universe(g, p);
      std::vector<MaskKind> kinds;
      if (mask_kinds == "designed") {
        kinds = {MaskKind::L2, MaskKind::C4, MaskKind::G3};
      } else if (mask_kinds == "all") {
        kinds.assign(std::begin(kAllMaskKinds), std::end(kAllMaskKinds));
      } else {
        for (const auto& k : split_list(mask_kinds)) kinds.push_back(parse_mask_kind(k));
      }
      TaxonomyOptions topt;
      topt.k_hops = mask_hops;
      topt.n_label_free_globals = mask_label_free;
      fs::create_directories(mask_out);
      std::ofstream stats(fs::path(mask_out) / "mask_stats.tsv");
      const std::string header = "kind\ttotal\tnnz\tkappa\tregions\n";
      stats << header;
      std::cout << header;
      nlohmann::json res = nlohmann::json::array();
      for (MaskKind k : kinds) {
        const auto m = build_mask(u, g, p, k, topt);
        export_mask(m, fs::path(mask_out) / ("mask_" + std::string(to_string(k)) + ".tsv"));
        const auto s = mask_stats(m);
        std::ostringstream row;
        row << to_string(k) << '\t' << s.total << '\t' << s.nnz << '\t' << fmt(s.kappa) << '\t' << s.regions.size()
            << '\n';
        stats << row.str();
        std::cout << row.str();
        res.push_back({{"kind", std::string(to_string(k))}, {"nnz", s.nnz}});
      }
      run.manifest["config"] = {{"kinds", mask_kinds}, {"k_hops", mask_hops}, {"label_free_globals", mask_label_free}};
      run.manifest["result"] = res;
      run.write_manifest(mask_out, "masks");
    } else if (train_cmd->parsed()) {
      const auto rc = load_run_config(train_config);
      auto [g, p] = load_data(train_data, rc, run);
      const auto data = prepare_data(std::move(g), std::move(p));
      fs::create_directories(train_out);
      const auto ckpt = (fs::path(train_out) / "model.ckpt").string();
      const auto r = train(data, rc.model, rc.train, ckpt);
      save_runrecord_tsv(r.record, fs::path(train_out) / "runrecord.tsv");
      const bool has_test = !data.graph.nodes_in(Split::test).empty();
      const double test_at_best = has_test ? r.record.metric_at(r.record.best_epoch, Split::test) : 0.0;
      run.manifest["config"] = rc.raw;
      run.manifest["seeds"] = {{"model", rc.model.seed}, {"train", rc.train.seed}};
      run.manifest["result"] = {{"epochs_run", r.record.epochs_run},
                                {"best_epoch", r.record.best_epoch},
                                {"best_valid_metric", r.record.best_valid_metric},
                                {"checkpoint", ckpt},
                                {"wall_seconds", r.record.wall_seconds},
                                {"peak_accounted_units", r.record.peak_accounted_units},
                                {"max_gate_sum_error", r.record.max_gate_sum_error}};
      if (has_test) run.manifest["result"]["test_metric_at_best"] = test_at_best;
      run.write_manifest(train_out, "train");
      std::cout << "best_epoch\tvalid_" << to_string(rc.train.metric) << "\ttest_" << to_string(rc.train.metric)
                << '\n'
                << r.record.best_epoch << '\t' << fmt(r.record.best_valid_metric) << '\t'
                << (has_test ? fmt(test_at_best) : std::string("NA")) << '\n';
    } else if (eval_cmd->parsed()) {
      const auto rc = load_run_config(eval_config);
      auto [g, p] = load_data(eval_data, rc, run);
      const auto data = prepare_data(std::move(g), std::move(p));
      const Split split = parse_split(eval_split);
      const Metric metric = eval_metric.empty() ? rc.train.metric : parse_metric(eval_metric);
      const double score = evaluate_checkpoint(eval_ckpt, data, rc.model, split, metric);
      run.manifest["config"] = rc.raw;
      run.manifest["checkpoint"] = eval_ckpt;
      run.manifest["result"] = {{"split", eval_split}, {"metric", to_string(metric)}, {"score", score}};
      run.write_manifest(eval_out, "eval");
      std::cout << "split\tmetric\tscore\n" << eval_split << '\t' << to_string(metric) << '\t' << fmt(score) << '\n';
    } else if (ens->parsed()) {
      const auto rc = load_run_config(ens_config);
      auto [g, p] = load_data(ens_data, rc, run);
      const auto data = prepare_data(std::move(g), std::move(p));
      fs::create_directories(ens_out);
      const auto rep = run_ensemble_study(data, rc.model, rc.train, (fs::path(ens_out) / "").string());
      save_ensemble_tsv(rep, fs::path(ens_out) / "ensemble.tsv");
      run.manifest["config"] = rc.raw;
      run.manifest["seeds"] = {{"model", rc.model.seed}, {"train", rc.train.seed}};
      run.manifest["result"] = {{"local", rep.single[0]}, {"cluster", rep.single[1]}, {"global", rep.single[2]},
                                {"mean", rep.mean},       {"max", rep.max},           {"oracle", rep.oracle},
                                {"full", rep.full}};
      run.write_manifest(ens_out, "ensemble");
      print_tsv_file(fs::path(ens_out) / "ensemble.tsv");
    } else if (th_bounds->parsed()) {
      const auto s = scenario_of(sc);
      const auto b = probability_bounds(s);
      const double p = exact_probability(s);
      run.manifest["config"] = scenario_json(s);
      run.manifest["result"] = {{"exact", p}, {"lower", b.lower}, {"upper", b.upper}};
      run.write_manifest(th_out, "theory bounds");
      std::cout << "k\trho_c\talpha_c\tdelta\tlower\tupper\texact\n"
                << s.k << '\t' << fmt(s.rho[0]) << '\t' << fmt(s.alpha[0]) << '\t' << fmt(s.delta) << '\t'
                << fmt(b.lower) << '\t' << fmt(b.upper) << '\t' << fmt(p) << '\n';
    } else if (th_mc->parsed()) {
      std::vector<GaussianScenario> scenarios;
      if (mc_random > 0) {
        CounterRng rng(mc_seed, stream_id({0x7A5}));
        for (Index i = 0; i < mc_random; ++i) scenarios.push_back(random_feasible_scenario(rng));
      } else {
        scenarios.push_back(scenario_of(sc));
      }
      std::cout << "k\trho_c\talpha_c\tdelta\tlower\tupper\texact\tmc\tstderr\twithin_3se\n";
      Index within = 0;
      for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const auto& s = scenarios[i];
        const double p = exact_probability(s);
        const auto e = mc_probability(s, mc_samples, mc_seed + i, run.threads);
        const bool ok = std::abs(e.estimate - p) <= 3.0 * e.stderr_;
        within += ok;
        std::cout << s.k << '\t' << fmt(s.rho[0]) << '\t' << fmt(s.alpha[0]) << '\t' << fmt(s.delta) << '\t'
                  << bound_cells(s) << '\t' << fmt(p) << '\t' << fmt(e.estimate) << '\t' << fmt(e.stderr_) << '\t'
                  << (ok ? 1 : 0) << '\n';
      }
      if (mc_random == 0) run.manifest["config"] = scenario_json(scenarios[0]);
      run.manifest["seeds"] = {{"mc", mc_seed}};
      run.manifest["result"] = {{"scenarios", scenarios.size()}, {"within_3se", within}, {"samples", mc_samples}};
      run.write_manifest(th_out, "theory mc");
    } else if (th_mono->parsed()) {
      const auto axis = parse_scan_axis(mono_axis);
      const auto base = scenario_of(sc);
      const auto rep = monotonicity_scan(base, axis, mono_grid);
      std::cout << "axis\tvalue\tlower\tupper\n";
      for (const auto& pt : rep.points)
        std::cout << to_string(axis) << '\t' << fmt(pt.value) << '\t' << fmt(pt.lower) << '\t' << fmt(pt.upper)
                  << '\n';
      run.manifest["config"] = scenario_json(base);
      run.manifest["config"]["axis"] = to_string(axis);
      run.manifest["config"]["grid"] = mono_grid;
      run.manifest["result"] = {{"monotone", rep.monotone()}, {"violations", rep.violations}};
      run.write_manifest(th_out, "theory monotone");
      if (!rep.monotone()) fail_compute("monotonicity violated: ", rep.violations.front());
    } else if (th_prop->parsed()) {
      auto [g, p] = load_data(prop_data, std::nullopt, run);
      const auto rep = c4_c3_support_check(g, p, prop_seed);
      run.manifest["seeds"] = {{"weights", prop_seed}};
      run.manifest["result"] = {{"rows_checked", rep.rows_checked},
                                {"support_violations", rep.support_violations},
                                {"composite_violations", rep.composite_violations},
                                {"max_row_sum_error", rep.max_row_sum_error}};
      run.write_manifest(th_out, "theory prop1");
      std::cout << "rows_checked\tsupport_violations\tcomposite_violations\tmax_row_sum_error\n"
                << rep.rows_checked << '\t' << rep.support_violations << '\t' << rep.composite_violations << '\t'
                << fmt(rep.max_row_sum_error) << '\n';
      if (!rep.ok()) fail_compute("support equivalence violated on ", rep.support_violations + rep.composite_violations,
                                  " rows");
    } else if (gates->parsed()) {
      const auto rc = load_run_config(gate_config);
      auto [g, p] = load_data(gate_data, rc, run);
      const auto data = prepare_data(std::move(g), std::move(p));
      const auto bins = parse_degree_bins(gate_bins);
      const auto rows = gate_profile(load_checkpoint<float>(gate_ckpt), data, rc.model, bins);
      fs::create_directories(gate_out);
      save_gate_profile_tsv(rows, fs::path(gate_out) / "gate_profile.tsv");
      run.manifest["config"] = rc.raw;
      run.manifest["checkpoint"] = gate_ckpt;
      run.manifest["bins"] = gate_bins;
      run.write_manifest(gate_out, "gate-profile");
      print_tsv_file(fs::path(gate_out) / "gate_profile.tsv");
    } else if (bench->parsed()) {
      const auto rc = load_run_config(bench_config);
      auto [g, p] = load_data(bench_data, rc, run);
      const auto data = prepare_data(std::move(g), std::move(p));
      std::vector<BenchResult> rows;
      for (const auto& s : split_list(bench_schemes))
        rows.push_back(benchmark_schemes(data, rc.model, parse_scheme(s), bench_repeats, bench_budget));
      fs::create_directories(bench_out);
      save_bench_tsv(rows, fs::path(bench_out) / "bench.tsv");
      run.manifest["config"] = rc.raw;
      run.manifest["repeats"] = bench_repeats;
      if (bench_budget) run.manifest["budget_units"] = *bench_budget;
      run.write_manifest(bench_out, "bench");
      print_tsv_file(fs::path(bench_out) / "bench.tsv");
    }
  } catch (const ValidationError& e) {
    std::cerr << "m3d: error: " << e.what() << '\n';
    return 1;
  } catch (const ComputeError& e) {
    std::cerr << "m3d: failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "m3d: failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace m3d::cli
