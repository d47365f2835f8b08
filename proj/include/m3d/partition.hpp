// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Balanced disjoint partitioning: seeded multi-source BFS growth followed by
// boundary moves and pair swaps that strictly reduce the edge cut.

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/graph.hpp"
#include "m3d/rng.hpp"

namespace m3d {

struct Partition {
  std::vector<Index> assignment;
  Index p = 0;
  std::vector<Index> sizes;

  Index n_nodes() const { return static_cast<Index>(assignment.size()); }

  std::vector<std::vector<Index>> members() const {
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(p));
    for (Index u = 0; u < n_nodes(); ++u) out[assignment[u]].push_back(u);
    return out;
  }

  void validate() const {
    M3D_REQUIRE(p >= 1, "partition needs at least one cluster");
    std::vector<Index> count(static_cast<std::size_t>(p), 0);
    for (Index c : assignment) {
      M3D_REQUIRE(c >= 0 && c < p, "cluster id ", c, " outside [0, ", p, ")");
      ++count[c];
    }
    for (Index c = 0; c < p; ++c) M3D_REQUIRE(count[c] > 0, "cluster ", c, " is empty");
    M3D_REQUIRE(count == sizes, "cluster sizes out of sync with assignment");
  }

  static Partition from_assignment(std::vector<Index> assignment) {
    Partition part;
    part.assignment = std::move(assignment);
    Index mx = -1;
    for (Index c : part.assignment) mx = std::max(mx, c);
    part.p = mx + 1;
    part.sizes.assign(static_cast<std::size_t>(std::max<Index>(part.p, 0)), 0);
    for (Index c : part.assignment) {
      M3D_REQUIRE(c >= 0, "negative cluster id ", c);
      ++part.sizes[c];
    }
    part.validate();
    return part;
  }

  friend bool operator==(const Partition&, const Partition&) = default;
};

struct PartitionOptions {
  double epsilon = 0.1;
  Index move_budget_per_node = 10;
  bool refine = true;
};

struct PartitionMetrics {
  Index edge_cut = 0;
  double balance = 0.0;
};

inline PartitionMetrics partition_metrics(const Graph& g, const Partition& part) {
  M3D_REQUIRE(part.n_nodes() == g.n_nodes, "partition covers ", part.n_nodes(), " nodes, graph has ",
              g.n_nodes);
  part.validate();
  PartitionMetrics m;
  for (Index u = 0; u < g.n_nodes; ++u)
    for (Index v : g.neighbors(u)) m.edge_cut += part.assignment[u] != part.assignment[v];
  const Index mx = *std::max_element(part.sizes.begin(), part.sizes.end());
  m.balance = static_cast<double>(mx) * static_cast<double>(part.p) / static_cast<double>(g.n_nodes);
  return m;
}

inline Index partition_size_bound(Index n, Index p, double epsilon) {
  return static_cast<Index>(std::ceil((1.0 + epsilon) * static_cast<double>(n) / static_cast<double>(p) - 1e-9));
}

namespace detail {

/// Undirected view with multiplicities: weight(u,v) = [u->v] + [v->u].
/// Self-loops are dropped since they never cross.
struct WeightedAdjacency {
  std::vector<std::vector<std::pair<Index, int>>> adj;

  explicit WeightedAdjacency(const Graph& g) : adj(static_cast<std::size_t>(g.n_nodes)) {
    std::vector<std::map<Index, int>> w(static_cast<std::size_t>(g.n_nodes));
    for (Index u = 0; u < g.n_nodes; ++u)
      for (Index v : g.neighbors(u)) {
        if (u == v) continue;
        ++w[u][v];
        ++w[v][u];
      }
    for (Index u = 0; u < g.n_nodes; ++u) adj[u].assign(w[u].begin(), w[u].end());
  }

  int weight(Index u, Index v) const {
    const auto& a = adj[u];
    auto it = std::lower_bound(a.begin(), a.end(), std::pair<Index, int>{v, std::numeric_limits<int>::min()});
    return it != a.end() && it->first == v ? it->second : 0;
  }
};

inline std::vector<Index> bfs_distance(const WeightedAdjacency& g, const std::vector<Index>& sources) {
  const Index n = static_cast<Index>(g.adj.size());
  std::vector<Index> dist(static_cast<std::size_t>(n), -1);
  std::deque<Index> q;
  for (Index s : sources) {
    dist[s] = 0;
    q.push_back(s);
  }
  while (!q.empty()) {
    const Index u = q.front();
    q.pop_front();
    for (auto [v, _] : g.adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push_back(v);
      }
  }
  return dist;
}

}  // namespace detail

inline Partition partition_graph(const Graph& g, Index p, std::uint64_t seed, PartitionOptions opt = {}) {
  M3D_REQUIRE(p >= 1, "partition count ", p, " must be >= 1");
  M3D_REQUIRE(p <= g.n_nodes, "partition count ", p, " exceeds node count ", g.n_nodes);
  const Index n = g.n_nodes;
  const detail::WeightedAdjacency adj(g);

  // Seeds: one random node, then repeatedly the node farthest from all
  // chosen seeds. Unreachable nodes count as farthest; ties go to lowest id.
  std::vector<Index> seeds;
  CounterRng rng(seed, stream_id({0x9A27}));
  seeds.push_back(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  while (static_cast<Index>(seeds.size()) < p) {
    const auto dist = detail::bfs_distance(adj, seeds);
    Index best = -1, best_d = -1;
    for (Index u = 0; u < n; ++u) {
      if (dist[u] == 0) continue;
      const Index d = dist[u] < 0 ? std::numeric_limits<Index>::max() : dist[u];
      if (d > best_d) {
        best_d = d;
        best = u;
      }
    }
    seeds.push_back(best);
  }

  // Round-robin growth, smallest cluster first, capped at ceil(n / p).
  Partition part;
  part.p = p;
  part.assignment.assign(static_cast<std::size_t>(n), -1);
  part.sizes.assign(static_cast<std::size_t>(p), 0);
  const Index cap = (n + p - 1) / p;
  std::vector<std::deque<Index>> frontier(static_cast<std::size_t>(p));
  auto assign = [&](Index u, Index c) {
    part.assignment[u] = c;
    ++part.sizes[c];
    for (auto [v, _] : adj.adj[u])
      if (part.assignment[v] < 0) frontier[c].push_back(v);
  };
  for (Index c = 0; c < p; ++c) assign(seeds[c], c);
  Index assigned = p;
  Index next_stranded = 0;
  while (assigned < n) {
    Index pick = -1;
    for (Index c = 0; c < p; ++c) {
      if (part.sizes[c] >= cap) continue;
      while (!frontier[c].empty() && part.assignment[frontier[c].front()] >= 0) frontier[c].pop_front();
      if (frontier[c].empty()) continue;
      if (pick < 0 || part.sizes[c] < part.sizes[pick]) pick = c;
    }
    if (pick >= 0) {
      const Index u = frontier[pick].front();
      frontier[pick].pop_front();
      assign(u, pick);
    } else {
      // No cluster can grow: the lowest unassigned node joins the smallest cluster.
      while (part.assignment[next_stranded] >= 0) ++next_stranded;
      const auto smallest = std::min_element(part.sizes.begin(), part.sizes.end()) - part.sizes.begin();
      assign(next_stranded, static_cast<Index>(smallest));
    }
    ++assigned;
  }

  // Refinement: strictly improving single moves and pair swaps, lowest node
  // id first, within the balance bound and never emptying a cluster.
  const Index bound = partition_size_bound(n, p, opt.epsilon);
  Index budget = opt.refine ? opt.move_budget_per_node * n : 0;
  std::vector<Index> link(static_cast<std::size_t>(p), 0);
  auto link_weights = [&](Index u) {
    std::fill(link.begin(), link.end(), 0);
    for (auto [v, w] : adj.adj[u]) link[part.assignment[v]] += w;
  };
  auto move_gain = [&](Index u, Index to) {
    Index gain = 0;
    const Index from = part.assignment[u];
    for (auto [v, w] : adj.adj[u]) {
      if (part.assignment[v] == to) gain += w;
      if (part.assignment[v] == from) gain -= w;
    }
    return gain;
  };
  bool improved = true;
  while (improved && budget > 0) {
    improved = false;
    for (Index u = 0; u < n && budget > 0; ++u) {
      const Index a = part.assignment[u];
      link_weights(u);
      Index best_c = -1, best_gain = 0;
      if (part.sizes[a] > 1) {
        for (Index c = 0; c < p; ++c) {
          if (c == a || part.sizes[c] + 1 > bound) continue;
          const Index gain = link[c] - link[a];
          if (gain > best_gain) {
            best_gain = gain;
            best_c = c;
          }
        }
      }
      if (best_c >= 0) {
        --part.sizes[a];
        ++part.sizes[best_c];
        part.assignment[u] = best_c;
        --budget;
        improved = true;
        continue;
      }
      // Swap with a boundary node of an adjacent cluster.
      const std::vector<Index> link_u = link;
      Index best_v = -1;
      for (Index v = 0; v < n; ++v) {
        const Index b = part.assignment[v];
        if (b == a || link_u[b] == 0) continue;
        const Index gain = (link_u[b] - link_u[a]) + move_gain(v, a) - 2 * adj.weight(u, v);
        if (gain > 0) {
          best_v = v;
          break;
        }
      }
      if (best_v >= 0) {
        const Index b = part.assignment[best_v];
        part.assignment[u] = b;
        part.assignment[best_v] = a;
        --budget;
        improved = true;
      }
    }
  }
  part.validate();
  return part;
}

inline void save_partition(const Partition& part, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_compute("cannot write ", path.string());
  for (Index u = 0; u < part.n_nodes(); ++u) out << u << '\t' << part.assignment[u] << '\n';
}

inline Partition load_partition(const std::filesystem::path& path, Index n_nodes) {
  auto in = detail::open_input(path);
  std::vector<Index> assignment(static_cast<std::size_t>(n_nodes), -1);
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto sv = detail::trim_cr(line);
    if (detail::skip_line(sv)) continue;
    auto toks = detail::split_tabs(sv);
    if (toks.size() != 2) fail_validation(path.string(), ":", line_no, ": expected 'u<TAB>cluster'");
    const auto u = detail::parse_number<Index>(toks[0], path.string(), line_no);
    const auto c = detail::parse_number<Index>(toks[1], path.string(), line_no);
    if (u < 0 || u >= n_nodes) fail_validation(path.string(), ":", line_no, ": node id out of range");
    if (c < 0) fail_validation(path.string(), ":", line_no, ": negative cluster id");
    assignment[u] = c;
  }
  for (Index u = 0; u < n_nodes; ++u)
    if (assignment[u] < 0) fail_validation(path.string(), ": node ", u, " has no cluster");
  return Partition::from_assignment(std::move(assignment));
}

}  // namespace m3d
