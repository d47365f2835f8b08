// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Hierarchical stochastic block model: classes split into clusters, dense
// inside clusters, sparser across them, with a minority of relabeled nodes
// in every cluster.

#include <cmath>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/graph.hpp"
#include "m3d/rng.hpp"

namespace m3d {

struct SbmConfig {
  int n_classes = 2;
  int clusters_per_class = 2;
  Index nodes_per_cluster = 50;
  double p_intra = 0.1;
  double p_cross_same = 0.01;
  double p_cross_diff = 0.005;
  double minority_fraction = 0.0;
  /// One entry applies to every class; otherwise one entry per class.
  std::vector<double> feature_sigma{1.0};
  Index d_in = 8;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
  std::uint64_t seed = 0;

  Index n_clusters() const { return static_cast<Index>(n_classes) * clusters_per_class; }
  Index n_nodes() const { return n_clusters() * nodes_per_cluster; }
  double sigma_of(int c) const { return feature_sigma.size() == 1 ? feature_sigma[0] : feature_sigma.at(c); }

  void validate() const {
    M3D_REQUIRE(n_classes >= 1, "n_classes must be >= 1");
    M3D_REQUIRE(clusters_per_class >= 1, "clusters_per_class must be >= 1");
    M3D_REQUIRE(nodes_per_cluster >= 1, "nodes_per_cluster must be >= 1");
    for (double p : {p_intra, p_cross_same, p_cross_diff})
      M3D_REQUIRE(p >= 0.0 && p <= 1.0, "edge probability ", p, " outside [0, 1]");
    M3D_REQUIRE(minority_fraction >= 0.0 && minority_fraction < 0.5, "minority_fraction ", minority_fraction,
                " outside [0, 0.5)");
    M3D_REQUIRE(minority_fraction == 0.0 || n_classes >= 2, "minority relabeling needs at least 2 classes");
    M3D_REQUIRE(train_fraction >= 0.0 && valid_fraction >= 0.0 && train_fraction + valid_fraction <= 1.0,
                "split fractions must be non-negative and sum to at most 1");
    M3D_REQUIRE(feature_sigma.size() == 1 || static_cast<int>(feature_sigma.size()) == n_classes,
                "feature_sigma needs 1 or n_classes entries");
    for (double s : feature_sigma) M3D_REQUIRE(s >= 0.0, "feature_sigma must be non-negative");
    M3D_REQUIRE(d_in >= n_classes, "d_in ", d_in, " < n_classes ", n_classes,
                ": orthonormal class prototypes need d_in >= n_classes");
  }
};

/// Cluster index of node u in a generated graph (clusters are contiguous).
inline Index sbm_cluster_of(const SbmConfig& cfg, Index u) { return u / cfg.nodes_per_cluster; }

/// Class that owns cluster q before relabeling.
inline int sbm_cluster_class(const SbmConfig& cfg, Index q) {
  return static_cast<int>(q / cfg.clusters_per_class);
}

inline Graph generate_hierarchical_sbm(const SbmConfig& cfg) {
  cfg.validate();
  const Index n = cfg.n_nodes();
  const Index npc = cfg.nodes_per_cluster;
  Graph g;
  g.n_nodes = n;
  g.n_classes = cfg.n_classes;
  g.labels.resize(static_cast<std::size_t>(n));
  for (Index u = 0; u < n; ++u) g.labels[u] = sbm_cluster_class(cfg, sbm_cluster_of(cfg, u));

  // Minority relabeling: floor(mf * npc) random members per cluster,
  // cycling through the other classes.
  const Index relabel = static_cast<Index>(std::floor(cfg.minority_fraction * static_cast<double>(npc)));
  for (Index q = 0; q < cfg.n_clusters(); ++q) {
    std::vector<Index> members(static_cast<std::size_t>(npc));
    for (Index i = 0; i < npc; ++i) members[i] = q * npc + i;
    CounterRng rng(cfg.seed, stream_id({0x5B3, 1, static_cast<std::uint64_t>(q)}));
    shuffle(members, rng);
    const int home = sbm_cluster_class(cfg, q);
    for (Index i = 0; i < relabel; ++i) {
      const int offset = 1 + static_cast<int>(i % (cfg.n_classes - 1));
      g.labels[members[i]] = (home + offset) % cfg.n_classes;
    }
  }

  // Features: standard-basis prototype of the (final) label plus Gaussian noise.
  g.features = Tensor<double>({n, cfg.d_in});
  for (Index u = 0; u < n; ++u) {
    CounterRng rng(cfg.seed, stream_id({0x5B3, 2, static_cast<std::uint64_t>(u)}));
    const int y = g.labels[u];
    const double sigma = cfg.sigma_of(y);
    auto row = g.features.row(u);
    for (Index j = 0; j < cfg.d_in; ++j) row[j] = (j == y ? 1.0 : 0.0) + sigma * rng.normal();
  }

  // Edges: one Bernoulli draw per unordered pair, keyed by the pair.
  std::vector<std::pair<Index, Index>> edges;
  for (Index u = 0; u < n; ++u) {
    const Index qu = sbm_cluster_of(cfg, u);
    for (Index v = u + 1; v < n; ++v) {
      const Index qv = sbm_cluster_of(cfg, v);
      double p;
      if (qu == qv)
        p = cfg.p_intra;
      else if (sbm_cluster_class(cfg, qu) == sbm_cluster_class(cfg, qv))
        p = cfg.p_cross_same;
      else
        p = cfg.p_cross_diff;
      if (p == 0.0) continue;
      const auto pair = static_cast<std::uint64_t>(u * n + v);
      if (keyed_uniform(cfg.seed, stream_id({0x5B3, 3}), pair) < p) {
        edges.emplace_back(u, v);
        edges.emplace_back(v, u);
      }
    }
  }
  build_csr(g, std::move(edges));

  // Splits: uniform random permutation cut by the fractions.
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index u = 0; u < n; ++u) order[u] = u;
  CounterRng rng(cfg.seed, stream_id({0x5B3, 4}));
  shuffle(order, rng);
  const auto n_train = static_cast<Index>(std::floor(cfg.train_fraction * static_cast<double>(n)));
  const auto n_valid = static_cast<Index>(std::floor(cfg.valid_fraction * static_cast<double>(n)));
  g.splits.assign(static_cast<std::size_t>(n), Split::test);
  for (Index i = 0; i < n; ++i) {
    if (i < n_train)
      g.splits[order[i]] = Split::train;
    else if (i < n_train + n_valid)
      g.splits[order[i]] = Split::valid;
  }
  return g;
}

}  // namespace m3d
