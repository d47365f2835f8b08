// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "m3d/graph.hpp"

namespace m3d::testing {

inline std::filesystem::path tmp_dir(const std::string& name) {
  auto p = std::filesystem::path(M3D_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// Two triangles {0,1,2} and {3,4,5} joined by the bridge 2-3.
inline const char* kToyEdges = "0\t1\n0\t2\n1\t2\n2\t3\n3\t4\n3\t5\n4\t5\n";

inline Graph toy_graph(bool self_loops = false) {
  Graph g;
  g.n_nodes = 6;
  build_csr(g, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {3, 5}, {4, 5}});
  g = normalize_graph(
      [&] {
        g.features = Tensor<double>({6, 3}, {1.0, 0.1, 0.0, 0.9, 0.2, 0.1, 0.7, 0.3, 0.2,
                                             0.2, 0.8, 0.1, 0.1, 1.0, 0.3, 0.0, 0.9, 0.5});
        g.labels = {0, 0, 0, 1, 1, 1};
        g.splits = {Split::train, Split::valid, Split::test, Split::train, Split::valid, Split::test};
        g.n_classes = 2;
        return g;
      }(),
      true, self_loops);
  return g;
}

inline std::filesystem::path write_toy_dir(const std::string& name) {
  auto dir = tmp_dir(name);
  write_file(dir / "edges.tsv", std::string("# toy graph\n") + kToyEdges);
  write_file(dir / "features.tsv",
             "1\t0.1\t0\n0.9\t0.2\t0.1\n0.7\t0.3\t0.2\n0.2\t0.8\t0.1\n0.1\t1\t0.3\n0\t0.9\t0.5\n");
  write_file(dir / "labels.tsv", "0\t0\n1\t0\n2\t0\n3\t1\n4\t1\n5\t1\n");
  write_file(dir / "splits.tsv", "0\ttrain\n1\tvalid\n2\ttest\n3\ttrain\n4\tvalid\n5\ttest\n");
  return dir;
}

}  // namespace m3d::testing
