// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "m3d/common.hpp"
#include "m3d/harness.hpp"
#include "m3d/model.hpp"
#include "m3d/sbm.hpp"

namespace m3d {

inline void to_json(nlohmann::json& j, const SbmConfig& c) {
  j = nlohmann::json{{"n_classes", c.n_classes},
                     {"clusters_per_class", c.clusters_per_class},
                     {"nodes_per_cluster", c.nodes_per_cluster},
                     {"p_intra", c.p_intra},
                     {"p_cross_same", c.p_cross_same},
                     {"p_cross_diff", c.p_cross_diff},
                     {"minority_fraction", c.minority_fraction},
                     {"feature_sigma", c.feature_sigma},
                     {"d_in", c.d_in},
                     {"train_fraction", c.train_fraction},
                     {"valid_fraction", c.valid_fraction},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SbmConfig& c) {
  M3D_REQUIRE(j.is_object(), "sbm config must be a JSON object");
  static const std::set<std::string> known{"n_classes",    "clusters_per_class", "nodes_per_cluster",
                                           "p_intra",      "p_cross_same",       "p_cross_diff",
                                           "minority_fraction", "feature_sigma", "d_in",
                                           "train_fraction", "valid_fraction",   "seed"};
  for (const auto& [k, _] : j.items()) M3D_REQUIRE(known.contains(k), "unknown sbm config key '", k, "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("n_classes", c.n_classes);
    get("clusters_per_class", c.clusters_per_class);
    get("nodes_per_cluster", c.nodes_per_cluster);
    get("p_intra", c.p_intra);
    get("p_cross_same", c.p_cross_same);
    get("p_cross_diff", c.p_cross_diff);
    get("minority_fraction", c.minority_fraction);
    if (j.contains("feature_sigma")) {
      const auto& fs = j.at("feature_sigma");
      c.feature_sigma = fs.is_array() ? fs.get<std::vector<double>>() : std::vector<double>{fs.get<double>()};
    }
    get("d_in", c.d_in);
    get("train_fraction", c.train_fraction);
    get("valid_fraction", c.valid_fraction);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail_validation("malformed sbm config: ", e.what());
  }
  c.validate();
}

/// One config file: model fields at top level, plus optional "train",
/// "clusters" (partition count) and "sbm" sections.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::optional<Index> clusters;
  std::optional<SbmConfig> sbm;
  nlohmann::json raw = nlohmann::json::object();
};

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_validation("cannot open config ", path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail_validation(path.string(), ": invalid JSON: ", e.what());
  }
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  M3D_REQUIRE(j.is_object(), "config must be a JSON object");
  RunConfig rc;
  rc.raw = j;
  rc.model = j.get<ModelConfig>();
  if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
  if (j.contains("clusters")) {
    M3D_REQUIRE(j.at("clusters").is_number_integer(), "'clusters' must be an integer");
    rc.clusters = j.at("clusters").get<Index>();
    M3D_REQUIRE(*rc.clusters >= 1, "'clusters' must be >= 1");
  }
  if (j.contains("sbm")) rc.sbm = j.at("sbm").get<SbmConfig>();
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_json_file(path)); }

/// An SBM config file is either a bare SBM object or a run config with an "sbm" section.
inline SbmConfig load_sbm_config(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  M3D_REQUIRE(j.is_object(), "sbm config must be a JSON object");
  if (j.contains("sbm")) return j.at("sbm").get<SbmConfig>();
  return j.get<SbmConfig>();
}

}  // namespace m3d
