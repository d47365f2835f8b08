// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "m3d/common.hpp"

namespace m3d {

enum class Metric { accuracy, roc_auc };

inline std::string to_string(Metric m) { return m == Metric::accuracy ? "accuracy" : "roc_auc"; }

inline Metric parse_metric(const std::string& s) {
  if (s == "accuracy") return Metric::accuracy;
  if (s == "roc_auc") return Metric::roc_auc;
  fail_validation("unknown metric '", s, "' (expected accuracy or roc_auc)");
}

inline double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  M3D_REQUIRE(predicted.size() == labels.size(), "accuracy: ", predicted.size(), " predictions for ",
              labels.size(), " labels");
  M3D_REQUIRE(!labels.empty(), "accuracy over an empty node set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Mann-Whitney statistic with average ranks for tied scores. Labels must be
/// 0/1 and both classes present.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  M3D_REQUIRE(scores.size() == labels.size(), "roc_auc: ", scores.size(), " scores for ", labels.size(), " labels");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) {
    M3D_REQUIRE(y == 0 || y == 1, "roc_auc needs binary labels, got class ", y);
    n_pos += y == 1;
  }
  const std::size_t n_neg = n - n_pos;
  M3D_REQUIRE(n_pos > 0 && n_neg > 0, "roc_auc needs both classes present");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Metric over class probabilities; roc_auc scores with the class-1 probability.
inline double score_predictions(Metric metric, std::span<const int> classes,
                                const std::vector<std::vector<double>>& probs, std::span<const int> labels,
                                Index n_classes) {
  if (metric == Metric::accuracy) return accuracy(classes, labels);
  M3D_REQUIRE(n_classes <= 2, "roc_auc is defined for binary labels, graph has ", n_classes, " classes");
  std::vector<double> s;
  s.reserve(probs.size());
  for (const auto& p : probs) s.push_back(p.size() > 1 ? p[1] : 0.0);
  return roc_auc(s, labels);
}

}  // namespace m3d
