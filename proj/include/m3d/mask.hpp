// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "m3d/common.hpp"
#include "m3d/graph.hpp"
#include "m3d/partition.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

/// Real nodes followed by one virtual node per cluster and one per class.
struct NodeUniverse {
  Index n_real = 0;
  Index n_cluster = 0;
  Index n_global = 0;
  Tensor<double> virtual_features;  // [(n_cluster + n_global) x d_in]
  std::vector<std::vector<Index>> train_ids_by_class;

  Index total() const { return n_real + n_cluster + n_global; }
  Index cluster_node(Index p) const { return n_real + p; }
  Index global_node(Index c) const { return n_real + n_cluster + c; }
  bool is_real(Index u) const { return u < n_real; }
  bool is_cluster(Index u) const { return u >= n_real && u < n_real + n_cluster; }
  bool is_global(Index u) const { return u >= n_real + n_cluster && u < total(); }

  /// Real features stacked on top of the virtual features.
  Tensor<double> all_features(const Graph& g) const {
    const Index d = g.d_in();
    Tensor<double> x({total(), d});
    std::copy(g.features.data().begin(), g.features.data().end(), x.data().begin());
    std::copy(virtual_features.data().begin(), virtual_features.data().end(),
              x.data().begin() + static_cast<std::ptrdiff_t>(n_real * d));
    return x;
  }
};

inline NodeUniverse extend_universe(const Graph& g, const Partition& part) {
  M3D_REQUIRE(part.n_nodes() == g.n_nodes, "partition covers ", part.n_nodes(), " nodes, graph has ",
              g.n_nodes);
  part.validate();
  NodeUniverse u;
  u.n_real = g.n_nodes;
  u.n_cluster = part.p;
  u.n_global = g.n_classes;
  const Index d = g.d_in();
  u.virtual_features = Tensor<double>({u.n_cluster + u.n_global, d});
  for (Index v = 0; v < g.n_nodes; ++v) {
    auto dst = u.virtual_features.row(part.assignment[v]);
    auto src = g.features.row(v);
    for (Index j = 0; j < d; ++j) dst[j] += src[j];
  }
  for (Index p = 0; p < part.p; ++p)
    for (auto& x : u.virtual_features.row(p)) x /= static_cast<double>(part.sizes[p]);

  u.train_ids_by_class.assign(static_cast<std::size_t>(u.n_global), {});
  for (Index v = 0; v < g.n_nodes; ++v)
    if (g.splits[v] == Split::train) u.train_ids_by_class[g.labels[v]].push_back(v);
  for (Index c = 0; c < u.n_global; ++c) {
    const auto& ids = u.train_ids_by_class[c];
    if (ids.empty()) continue;
    auto dst = u.virtual_features.row(u.n_cluster + c);
    for (Index v : ids) {
      auto src = g.features.row(v);
      for (Index j = 0; j < d; ++j) dst[j] += src[j];
    }
    for (auto& x : dst) x /= static_cast<double>(ids.size());
  }
  return u;
}

enum class MaskKind { L1, L2, C1, C2, C3, C4, G1, G2, G3 };

inline constexpr MaskKind kAllMaskKinds[] = {MaskKind::L1, MaskKind::L2, MaskKind::C1, MaskKind::C2, MaskKind::C3,
                                             MaskKind::C4, MaskKind::G1, MaskKind::G2, MaskKind::G3};

inline std::string_view to_string(MaskKind k) {
  switch (k) {
    case MaskKind::L1: return "L1";
    case MaskKind::L2: return "L2";
    case MaskKind::C1: return "C1";
    case MaskKind::C2: return "C2";
    case MaskKind::C3: return "C3";
    case MaskKind::C4: return "C4";
    case MaskKind::G1: return "G1";
    case MaskKind::G2: return "G2";
    case MaskKind::G3: return "G3";
  }
  return "?";
}

inline MaskKind parse_mask_kind(std::string_view s) {
  for (MaskKind k : kAllMaskKinds)
    if (to_string(k) == s) return k;
  fail_validation("unknown mask kind '", s, "'");
}

enum class RegionMode { dense, sparse, automatic };

inline std::string_view to_string(RegionMode m) {
  switch (m) {
    case RegionMode::dense: return "dense";
    case RegionMode::sparse: return "sparse";
    case RegionMode::automatic: return "auto";
  }
  return "?";
}

struct AttentionRegion {
  std::vector<Index> query_ids;
  std::vector<Index> key_ids;
  Index nnz = 0;
  double kappa = 0.0;
  RegionMode mode = RegionMode::automatic;

  Index n_query() const { return static_cast<Index>(query_ids.size()); }
  Index n_key() const { return static_cast<Index>(key_ids.size()); }
};

/// Binary attention pattern over a universe of `total` ids, CSR by query row.
struct SparseMask {
  MaskKind kind = MaskKind::L2;
  Index n_real = 0, n_cluster = 0, n_global = 0;
  std::vector<Index> row_ptr;
  std::vector<Index> col;
  std::vector<AttentionRegion> regions;

  Index total() const { return n_real + n_cluster + n_global; }
  Index nnz() const { return static_cast<Index>(col.size()); }
  std::span<const Index> row(Index r) const {
    return std::span<const Index>(col).subspan(static_cast<std::size_t>(row_ptr[r]),
                                               static_cast<std::size_t>(row_ptr[r + 1] - row_ptr[r]));
  }
  bool contains(Index r, Index c) const {
    auto rr = row(r);
    return std::binary_search(rr.begin(), rr.end(), c);
  }
};

namespace detail {

inline SparseMask mask_from_entries(MaskKind kind, const NodeUniverse& u,
                                    std::vector<std::pair<Index, Index>> entries) {
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
  SparseMask m;
  m.kind = kind;
  m.n_real = u.n_real;
  m.n_cluster = u.n_cluster;
  m.n_global = u.n_global;
  const Index t = u.total();
  m.row_ptr.assign(static_cast<std::size_t>(t + 1), 0);
  m.col.reserve(entries.size());
  for (auto [r, c] : entries) {
    M3D_REQUIRE(r >= 0 && r < t && c >= 0 && c < t, "mask entry (", r, ", ", c, ") outside universe of ", t);
    ++m.row_ptr[r + 1];
    m.col.push_back(c);
  }
  for (Index r = 0; r < t; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

inline void check_universe(const NodeUniverse& u, const Graph& g, const Partition& part) {
  M3D_REQUIRE(u.n_real == g.n_nodes && part.n_nodes() == g.n_nodes && u.n_cluster == part.p &&
                  u.n_global == g.n_classes,
              "universe, graph and partition do not match");
}

/// 0 = real, 1 = cluster virtual, 2 = global virtual.
inline int segment_of(const SparseMask& m, Index r) {
  if (r < m.n_real) return 0;
  if (r < m.n_real + m.n_cluster) return 1;
  return 2;
}

}  // namespace detail

/// Splits query rows into regions by universe segment (real, cluster
/// virtual, global virtual). Each region's keys are the union of the
/// columns of its rows, so every row's softmax stays inside one region.
inline SparseMask regionize(SparseMask m) {
  m.regions.clear();
  for (int seg = 0; seg < 3; ++seg) {
    AttentionRegion reg;
    std::vector<Index> keys;
    for (Index r = 0; r < m.total(); ++r) {
      if (detail::segment_of(m, r) != seg || m.row_ptr[r + 1] == m.row_ptr[r]) continue;
      reg.query_ids.push_back(r);
      auto cols = m.row(r);
      keys.insert(keys.end(), cols.begin(), cols.end());
      reg.nnz += static_cast<Index>(cols.size());
    }
    if (reg.query_ids.empty()) continue;
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    reg.key_ids = std::move(keys);
    reg.kappa = static_cast<double>(reg.nnz) /
                (static_cast<double>(reg.n_query()) * static_cast<double>(reg.n_key()));
    m.regions.push_back(std::move(reg));
  }
  return m;
}

/// Checks the region invariants: query-disjoint cover of non-empty rows and
/// every entry inside its region's key set.
inline void validate_regions(const SparseMask& m) {
  std::vector<int> owner(static_cast<std::size_t>(m.total()), -1);
  for (std::size_t i = 0; i < m.regions.size(); ++i) {
    const auto& reg = m.regions[i];
    Index nnz = 0;
    for (Index q : reg.query_ids) {
      M3D_REQUIRE(q >= 0 && q < m.total(), "region query id out of range");
      M3D_REQUIRE(owner[q] < 0, "query row ", q, " spans multiple regions");
      owner[q] = static_cast<int>(i);
      for (Index c : m.row(q)) {
        M3D_REQUIRE(std::binary_search(reg.key_ids.begin(), reg.key_ids.end(), c), "entry (", q, ", ", c,
                    ") outside its region's key set");
        ++nnz;
      }
    }
    M3D_REQUIRE(nnz == reg.nnz, "region nnz out of sync");
    M3D_REQUIRE(reg.kappa > 0.0 && reg.kappa <= 1.0, "region density ", reg.kappa, " outside (0, 1]");
  }
  for (Index r = 0; r < m.total(); ++r)
    M3D_REQUIRE(m.row_ptr[r + 1] == m.row_ptr[r] || owner[r] >= 0, "row ", r, " not covered by any region");
}

struct DesignedMasks {
  SparseMask local;    // L2
  SparseMask cluster;  // C4
  SparseMask global;   // G3
};

inline DesignedMasks build_designed_masks(const NodeUniverse& u, const Graph& g, const Partition& part) {
  detail::check_universe(u, g, part);
  const Index n = u.n_real;
  DesignedMasks out;

  std::vector<std::pair<Index, Index>> e;
  for (Index v = 0; v < n; ++v) {
    e.emplace_back(v, v);
    for (Index w : g.neighbors(v)) e.emplace_back(v, w);
  }
  out.local = regionize(detail::mask_from_entries(MaskKind::L2, u, std::move(e)));

  e.clear();
  for (Index v = 0; v < n; ++v) {
    e.emplace_back(v, v);
    e.emplace_back(v, u.cluster_node(part.assignment[v]));
    e.emplace_back(u.cluster_node(part.assignment[v]), v);
  }
  out.cluster = regionize(detail::mask_from_entries(MaskKind::C4, u, std::move(e)));

  e.clear();
  for (Index v = 0; v < n; ++v)
    for (Index c = 0; c < u.n_global; ++c) e.emplace_back(v, u.global_node(c));
  for (Index c = 0; c < u.n_global; ++c) {
    const auto& ids = u.train_ids_by_class[c];
    if (ids.empty()) e.emplace_back(u.global_node(c), u.global_node(c));
    for (Index t : ids) e.emplace_back(u.global_node(c), t);
  }
  out.global = regionize(detail::mask_from_entries(MaskKind::G3, u, std::move(e)));
  return out;
}

struct TaxonomyOptions {
  Index k_hops = 1;
  Index n_label_free_globals = 1;
};

inline SparseMask build_taxonomy_mask(const NodeUniverse& u, const Graph& g, const Partition& part, MaskKind kind,
                                      TaxonomyOptions opt = {}) {
  detail::check_universe(u, g, part);
  const Index n = u.n_real;
  std::vector<std::pair<Index, Index>> e;
  switch (kind) {
    case MaskKind::L1: {
      M3D_REQUIRE(opt.k_hops >= 1, "k_hops must be >= 1");
      // Row-wise reachability within k steps of A + I.
      std::vector<Index> frontier, next;
      std::vector<Index> seen(static_cast<std::size_t>(n), -1);
      for (Index s = 0; s < n; ++s) {
        frontier.assign(1, s);
        seen[s] = s;
        e.emplace_back(s, s);
        for (Index step = 0; step < opt.k_hops && !frontier.empty(); ++step) {
          next.clear();
          for (Index v : frontier)
            for (Index w : g.neighbors(v))
              if (seen[w] != s) {
                seen[w] = s;
                next.push_back(w);
                e.emplace_back(s, w);
              }
          frontier.swap(next);
        }
      }
      break;
    }
    case MaskKind::C1:
      for (Index p = 0; p < u.n_cluster; ++p)
        for (Index q = 0; q < u.n_cluster; ++q) e.emplace_back(u.cluster_node(p), u.cluster_node(q));
      break;
    case MaskKind::C2:
      for (Index p = 0; p < u.n_cluster; ++p)
        for (Index v = 0; v < n; ++v) e.emplace_back(u.cluster_node(p), v);
      break;
    case MaskKind::C3: {
      const auto members = part.members();
      for (const auto& mem : members)
        for (Index a : mem)
          for (Index b : mem) e.emplace_back(a, b);
      break;
    }
    case MaskKind::G1:
      for (Index a = 0; a < n; ++a)
        for (Index b = 0; b < n; ++b) e.emplace_back(a, b);
      break;
    case MaskKind::G2: {
      M3D_REQUIRE(opt.n_label_free_globals >= 1 && opt.n_label_free_globals <= u.n_global,
                  "G2 global count ", opt.n_label_free_globals, " outside [1, ", u.n_global, "]");
      for (Index c = 0; c < opt.n_label_free_globals; ++c)
        for (Index v = 0; v < n; ++v) {
          e.emplace_back(u.global_node(c), v);
          e.emplace_back(v, u.global_node(c));
        }
      break;
    }
    default:
      fail_validation("build_taxonomy_mask does not build kind ", to_string(kind));
  }
  return regionize(detail::mask_from_entries(kind, u, std::move(e)));
}

/// Any of the nine kinds. Designed kinds ignore the options.
inline SparseMask build_mask(const NodeUniverse& u, const Graph& g, const Partition& part, MaskKind kind,
                             TaxonomyOptions opt = {}) {
  switch (kind) {
    case MaskKind::L2: return build_designed_masks(u, g, part).local;
    case MaskKind::C4: return build_designed_masks(u, g, part).cluster;
    case MaskKind::G3: return build_designed_masks(u, g, part).global;
    default: return build_taxonomy_mask(u, g, part, kind, opt);
  }
}

struct RegionStats {
  Index n_query = 0, n_key = 0, nnz = 0;
  double kappa = 0.0;
  RegionMode mode = RegionMode::automatic;
};

struct MaskStats {
  MaskKind kind = MaskKind::L2;
  Index total = 0;
  Index nnz = 0;
  double kappa = 0.0;
  std::vector<RegionStats> regions;
};

inline MaskStats mask_stats(const SparseMask& m) {
  MaskStats s;
  s.kind = m.kind;
  s.total = m.total();
  s.nnz = m.nnz();
  s.kappa = s.total == 0 || s.nnz == 0
                ? 0.0
                : static_cast<double>(s.nnz) / (static_cast<double>(s.total) * static_cast<double>(s.total));
  for (const auto& r : m.regions) s.regions.push_back({r.n_query(), r.n_key(), r.nnz, r.kappa, r.mode});
  return s;
}

/// Writes `row<TAB>col` lines to `tsv_path` and a JSON sidecar next to it.
inline void export_mask(const SparseMask& m, const std::filesystem::path& tsv_path) {
  {
    std::ofstream out(tsv_path);
    if (!out) fail_compute("cannot write ", tsv_path.string());
    for (Index r = 0; r < m.total(); ++r)
      for (Index c : m.row(r)) out << r << '\t' << c << '\n';
  }
  nlohmann::json j;
  j["kind"] = std::string(to_string(m.kind));
  j["n_real"] = m.n_real;
  j["n_cluster_virtual"] = m.n_cluster;
  j["n_global_virtual"] = m.n_global;
  j["total"] = m.total();
  j["nnz"] = m.nnz();
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : m.regions)
    regions.push_back({{"query_first", r.query_ids.front()},
                       {"query_last", r.query_ids.back()},
                       {"n_query", r.n_query()},
                       {"n_key", r.n_key()},
                       {"nnz", r.nnz},
                       {"kappa", r.kappa},
                       {"mode", std::string(to_string(r.mode))}});
  j["regions"] = regions;
  auto sidecar = tsv_path;
  sidecar += ".json";
  std::ofstream out(sidecar);
  if (!out) fail_compute("cannot write ", sidecar.string());
  out << j.dump(2) << '\n';
}

}  // namespace m3d
