// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  fail_validation("unknown split tag '", s, "'");
}

/// Directed edge list, features, labels and split tags over dense node ids.
/// The adjacency is stored as CSR with strictly increasing columns per row.
struct Graph {
  Index n_nodes = 0;
  std::vector<Index> row_ptr{0};
  std::vector<Index> col;
  Tensor<double> features;
  std::vector<int> labels;
  std::vector<Split> splits;
  int n_classes = 0;

  Index n_edges() const { return static_cast<Index>(col.size()); }
  Index d_in() const { return features.cols(); }
  Index degree(Index u) const { return row_ptr[u + 1] - row_ptr[u]; }

  std::span<const Index> neighbors(Index u) const {
    return std::span<const Index>(col).subspan(static_cast<std::size_t>(row_ptr[u]),
                                               static_cast<std::size_t>(degree(u)));
  }

  bool has_edge(Index u, Index v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  std::vector<Index> nodes_in(Split s) const {
    std::vector<Index> out;
    for (Index u = 0; u < n_nodes; ++u)
      if (splits[u] == s) out.push_back(u);
    return out;
  }

  /// Throws ValidationError when an invariant is broken.
  void validate() const {
    M3D_REQUIRE(n_nodes >= 0, "negative node count");
    M3D_REQUIRE(static_cast<Index>(row_ptr.size()) == n_nodes + 1, "row_ptr length mismatch");
    M3D_REQUIRE(row_ptr.front() == 0 && row_ptr.back() == n_edges(), "row_ptr bounds mismatch");
    for (Index u = 0; u < n_nodes; ++u) {
      M3D_REQUIRE(row_ptr[u] <= row_ptr[u + 1], "row_ptr not monotone at ", u);
      auto nb = neighbors(u);
      for (std::size_t i = 0; i < nb.size(); ++i) {
        M3D_REQUIRE(nb[i] >= 0 && nb[i] < n_nodes, "edge ", u, "->", nb[i], " out of range");
        M3D_REQUIRE(i == 0 || nb[i - 1] < nb[i], "columns of row ", u, " not strictly increasing");
      }
    }
    M3D_REQUIRE(features.rows() == n_nodes || (n_nodes == 0), "feature rows ", features.rows(),
                " != n_nodes ", n_nodes);
    M3D_REQUIRE(static_cast<Index>(labels.size()) == n_nodes, "label count mismatch");
    M3D_REQUIRE(static_cast<Index>(splits.size()) == n_nodes, "split count mismatch");
    for (int y : labels) M3D_REQUIRE(y >= 0 && y < n_classes, "label ", y, " outside [0, ", n_classes, ")");
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.n_nodes == b.n_nodes && a.row_ptr == b.row_ptr && a.col == b.col && a.features == b.features &&
           a.labels == b.labels && a.splits == b.splits && a.n_classes == b.n_classes;
  }
};

/// Builds CSR rows from an unsorted edge list. Duplicates are removed.
inline void build_csr(Graph& g, std::vector<std::pair<Index, Index>> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.row_ptr.assign(static_cast<std::size_t>(g.n_nodes + 1), 0);
  g.col.clear();
  g.col.reserve(edges.size());
  for (auto [u, v] : edges) {
    M3D_REQUIRE(u >= 0 && u < g.n_nodes && v >= 0 && v < g.n_nodes, "edge (", u, ", ", v,
                ") outside [0, ", g.n_nodes, ")");
    ++g.row_ptr[u + 1];
    g.col.push_back(v);
  }
  for (Index u = 0; u < g.n_nodes; ++u) g.row_ptr[u + 1] += g.row_ptr[u];
}

inline std::vector<std::pair<Index, Index>> edge_list(const Graph& g) {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(g.col.size());
  for (Index u = 0; u < g.n_nodes; ++u)
    for (Index v : g.neighbors(u)) out.emplace_back(u, v);
  return out;
}

inline Graph normalize_graph(const Graph& g, bool symmetrize, bool add_self_loops) {
  g.validate();
  Graph out = g;
  auto edges = edge_list(g);
  if (symmetrize) {
    const std::size_t n = edges.size();
    for (std::size_t i = 0; i < n; ++i) edges.emplace_back(edges[i].second, edges[i].first);
  }
  if (add_self_loops)
    for (Index u = 0; u < g.n_nodes; ++u) edges.emplace_back(u, u);
  build_csr(out, std::move(edges));
  return out;
}

/// Fraction of directed non-loop edges whose endpoints share a label.
inline double edge_homophily(const Graph& g) {
  Index same = 0, total = 0;
  for (Index u = 0; u < g.n_nodes; ++u)
    for (Index v : g.neighbors(u)) {
      if (u == v) continue;
      ++total;
      same += g.labels[u] == g.labels[v];
    }
  return total == 0 ? 1.0 : static_cast<double>(same) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// TSV I/O

struct LoadOptions {
  bool symmetrize = true;
  bool add_self_loops = false;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  return s;
}

template <typename Num>
Num parse_number(std::string_view tok, const std::string& file, Index line_no) {
  Num v{};
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || ptr != end || tok.empty())
    fail_validation(file, ":", line_no, ": cannot parse '", tok, "' as a number");
  return v;
}

inline bool skip_line(std::string_view line) {
  return line.empty() || line.front() == '#';
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail_validation("missing or unreadable file: ", p.string());
  return in;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads edges.tsv, features.tsv, labels.tsv and splits.tsv from a directory.
/// The node count is the number of feature rows.
inline Graph load_graph(const std::filesystem::path& dir, LoadOptions opt = {}) {
  Graph g;
  std::string line;

  {
    const auto path = dir / "features.tsv";
    auto in = detail::open_input(path);
    std::vector<double> values;
    Index d_in = -1, rows = 0, line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto sv = detail::trim_cr(line);
      if (!sv.empty() && sv.front() == '#') continue;
      std::vector<std::string_view> toks;
      if (!sv.empty()) toks = detail::split_tabs(sv);
      if (d_in < 0) d_in = static_cast<Index>(toks.size());
      if (static_cast<Index>(toks.size()) != d_in)
        fail_validation(path.string(), ":", line_no, ": expected ", d_in, " values, found ", toks.size());
      for (auto t : toks) values.push_back(detail::parse_number<double>(t, path.string(), line_no));
      ++rows;
    }
    g.n_nodes = rows;
    g.features = Tensor<double>({rows, std::max<Index>(d_in, 0)}, std::move(values));
  }

  std::vector<std::pair<Index, Index>> edges;
  {
    const auto path = dir / "edges.tsv";
    auto in = detail::open_input(path);
    Index line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto sv = detail::trim_cr(line);
      if (detail::skip_line(sv)) continue;
      auto toks = detail::split_tabs(sv);
      if (toks.size() != 2) fail_validation(path.string(), ":", line_no, ": expected 'u<TAB>v'");
      const auto u = detail::parse_number<Index>(toks[0], path.string(), line_no);
      const auto v = detail::parse_number<Index>(toks[1], path.string(), line_no);
      if (u < 0 || u >= g.n_nodes || v < 0 || v >= g.n_nodes)
        fail_validation(path.string(), ":", line_no, ": node id out of range [0, ", g.n_nodes, ")");
      edges.emplace_back(u, v);
    }
  }

  auto read_per_node = [&](const char* name, auto&& handle) {
    const auto path = dir / name;
    auto in = detail::open_input(path);
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(g.n_nodes), 0);
    Index line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto sv = detail::trim_cr(line);
      if (detail::skip_line(sv)) continue;
      auto toks = detail::split_tabs(sv);
      if (toks.size() != 2) fail_validation(path.string(), ":", line_no, ": expected two tab-separated fields");
      const auto u = detail::parse_number<Index>(toks[0], path.string(), line_no);
      if (u < 0 || u >= g.n_nodes)
        fail_validation(path.string(), ":", line_no, ": node id ", u, " out of range [0, ", g.n_nodes, ")");
      if (seen[u]) fail_validation(path.string(), ":", line_no, ": node ", u, " listed twice");
      seen[u] = 1;
      handle(u, toks[1], path.string(), line_no);
    }
    for (Index u = 0; u < g.n_nodes; ++u)
      if (!seen[u]) fail_validation(path.string(), ": node ", u, " has no entry");
  };

  g.labels.assign(static_cast<std::size_t>(g.n_nodes), 0);
  read_per_node("labels.tsv", [&](Index u, std::string_view tok, const std::string& file, Index ln) {
    const int y = detail::parse_number<int>(tok, file, ln);
    if (y < 0) fail_validation(file, ":", ln, ": negative label");
    g.labels[u] = y;
  });
  g.n_classes = g.labels.empty() ? 0 : 1 + *std::max_element(g.labels.begin(), g.labels.end());

  g.splits.assign(static_cast<std::size_t>(g.n_nodes), Split::test);
  read_per_node("splits.tsv", [&](Index u, std::string_view tok, const std::string& file, Index ln) {
    if (tok != "train" && tok != "valid" && tok != "test")
      fail_validation(file, ":", ln, ": unknown split tag '", tok, "'");
    g.splits[u] = parse_split(tok);
  });

  build_csr(g, std::move(edges));
  if (opt.symmetrize || opt.add_self_loops) g = normalize_graph(g, opt.symmetrize, opt.add_self_loops);
  return g;
}

/// Writes the four TSV files. Floats use the shortest round-trip form.
inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) fail_compute("cannot write ", (dir / name).string());
    return out;
  };
  {
    auto out = open("edges.tsv");
    for (Index u = 0; u < g.n_nodes; ++u)
      for (Index v : g.neighbors(u)) out << u << '\t' << v << '\n';
  }
  {
    auto out = open("features.tsv");
    for (Index u = 0; u < g.n_nodes; ++u) {
      auto r = g.features.row(u);
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (j) out << '\t';
        out << detail::format_double(r[j]);
      }
      out << '\n';
    }
  }
  {
    auto out = open("labels.tsv");
    for (Index u = 0; u < g.n_nodes; ++u) out << u << '\t' << g.labels[u] << '\n';
  }
  {
    auto out = open("splits.tsv");
    for (Index u = 0; u < g.n_nodes; ++u) out << u << '\t' << to_string(g.splits[u]) << '\n';
  }
}

}  // namespace m3d
