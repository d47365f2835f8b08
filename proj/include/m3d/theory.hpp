// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Class-conditional Gaussian model of one attention update: node u of class c
// aggregates k neighbour representations x_j ~ N(e_class(j), sigma_class(j)^2 I)
// with weights alpha_class(j), and is classified correctly when z^T e_c >= delta.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/mask.hpp"
#include "m3d/partition.hpp"
#include "m3d/rng.hpp"

namespace m3d {

struct GaussianScenario {
  Index n_classes = 2;
  Index dim = 2;
  Index k = 1;
  std::vector<double> rho;    // per-class fraction of the receptive field
  std::vector<double> alpha;  // per-class attention weight of one neighbour
  std::vector<double> sigma;  // per-class std
  double delta = 0.0;
  Index target = 0;

  double mean_coeff(Index i) const { return static_cast<double>(k) * rho[i] * alpha[i]; }

  /// Largest std among the non-target classes (0 with a single class).
  double sigma_other_max() const {
    double m = 0.0;
    for (Index i = 0; i < n_classes; ++i)
      if (i != target) m = std::max(m, sigma[i]);
    return m;
  }

  void validate() const {
    M3D_REQUIRE(n_classes >= 1, "scenario needs at least one class");
    M3D_REQUIRE(dim >= n_classes, "dim ", dim, " < number of classes ", n_classes);
    M3D_REQUIRE(k >= 1, "receptive field size k must be >= 1");
    const auto nc = static_cast<std::size_t>(n_classes);
    M3D_REQUIRE(rho.size() == nc && alpha.size() == nc && sigma.size() == nc,
                "rho, alpha and sigma need one entry per class");
    M3D_REQUIRE(target >= 0 && target < n_classes, "target class ", target, " out of range");
    M3D_REQUIRE(std::isfinite(delta), "delta must be finite");
    double rs = 0.0, mass = 0.0;
    for (Index i = 0; i < n_classes; ++i) {
      M3D_REQUIRE(rho[i] >= 0.0, "rho[", i, "] < 0");
      M3D_REQUIRE(alpha[i] >= 0.0, "alpha[", i, "] < 0");
      M3D_REQUIRE(sigma[i] >= 0.0 && std::isfinite(sigma[i]), "sigma[", i, "] must be finite and >= 0");
      rs += rho[i];
      mass += mean_coeff(i);
    }
    M3D_REQUIRE(std::abs(rs - 1.0) <= 1e-9, "rho sums to ", rs, ", expected 1");
    M3D_REQUIRE(std::abs(mass - 1.0) <= 1e-9, "attention mass sum k*rho*alpha = ", mass, ", expected 1");
  }
};

/// Scenario with class 0 as target and the non-target fraction and attention
/// mass spread uniformly over the other classes. sigmas holds one std per class.
inline GaussianScenario make_scenario(Index k, double rho_c, double alpha_c, std::vector<double> sigmas, double delta) {
  const Index n = static_cast<Index>(sigmas.size());
  M3D_REQUIRE(n >= 1, "need at least one class std");
  M3D_REQUIRE(k >= 1, "receptive field size k must be >= 1");
  GaussianScenario s;
  s.n_classes = n;
  s.dim = n;
  s.k = k;
  s.sigma = std::move(sigmas);
  s.delta = delta;
  s.rho.assign(static_cast<std::size_t>(n), 0.0);
  s.alpha.assign(static_cast<std::size_t>(n), 0.0);
  s.rho[0] = rho_c;
  s.alpha[0] = alpha_c;
  if (n > 1 && rho_c < 1.0) {
    const double other = (1.0 - rho_c) / static_cast<double>(n - 1);
    const double rest = 1.0 - static_cast<double>(k) * rho_c * alpha_c;
    for (Index i = 1; i < n; ++i) {
      s.rho[i] = other;
      s.alpha[i] = std::max(0.0, rest) / (static_cast<double>(k) * (1.0 - rho_c));
    }
  }
  s.validate();
  return s;
}

/// Standard normal CDF.
inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct ReprDistribution {
  std::vector<double> mean_coeff;  // k * rho_i * alpha_i
  double variance = 0.0;           // sum k * rho_i * alpha_i^2 * sigma_i^2
};

inline ReprDistribution updated_repr_distribution(const GaussianScenario& s) {
  s.validate();
  ReprDistribution d;
  for (Index i = 0; i < s.n_classes; ++i) {
    d.mean_coeff.push_back(s.mean_coeff(i));
    d.variance += static_cast<double>(s.k) * s.rho[i] * s.alpha[i] * s.alpha[i] * s.sigma[i] * s.sigma[i];
  }
  return d;
}

/// P(N(0, var) >= num); a point mass at zero when var == 0.
inline double tail_prob(double num, double var) {
  if (var == 0.0) return num <= 0.0 ? 1.0 : 0.0;
  return 1.0 - std_normal_cdf(num / std::sqrt(var));
}

inline double exact_probability(const GaussianScenario& s) {
  const auto d = updated_repr_distribution(s);
  return tail_prob(s.delta - d.mean_coeff[s.target], d.variance);
}

struct ProbabilityBounds {
  double lower = 0.0;
  double upper = 0.0;
  double lower_variance = 0.0;
  double upper_variance = 0.0;
};

/// Checks delta <= k rho_c alpha_c and 0 <= alpha_other <= 1/k <= alpha_c <= 1/(k rho_c).
inline void check_bound_preconditions(const GaussianScenario& s) {
  s.validate();
  constexpr double tol = 1e-12;
  const double kd = static_cast<double>(s.k);
  const Index c = s.target;
  const double m = s.mean_coeff(c);
  if (s.delta - m > tol) fail_validation("bounds need delta <= k*rho_c*alpha_c (", s.delta, " > ", m, ")");
  if (s.alpha[c] < 1.0 / kd - tol) fail_validation("bounds need alpha_c >= 1/k");
  if (s.rho[c] > 0.0 && s.alpha[c] > 1.0 / (kd * s.rho[c]) + tol) fail_validation("bounds need alpha_c <= 1/(k*rho_c)");
  for (Index i = 0; i < s.n_classes; ++i)
    if (i != c && s.alpha[i] > 1.0 / kd + tol) fail_validation("bounds need alpha[", i, "] <= 1/k");
}

inline ProbabilityBounds probability_bounds(const GaussianScenario& s) {
  check_bound_preconditions(s);
  const Index c = s.target;
  const double kd = static_cast<double>(s.k);
  const double num = s.delta - s.mean_coeff(c);
  ProbabilityBounds b;
  b.upper_variance = kd * s.rho[c] * s.alpha[c] * s.alpha[c] * s.sigma[c] * s.sigma[c];
  const double sm = s.sigma_other_max();
  b.lower_variance = b.upper_variance + (1.0 - s.rho[c]) / kd * sm * sm;
  b.lower = tail_prob(num, b.lower_variance);
  b.upper = tail_prob(num, b.upper_variance);
  return b;
}

struct McEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  Index samples = 0;
  Index hits = 0;
};

/// Integral per-class neighbour counts k * rho_i.
inline std::vector<Index> class_counts(const GaussianScenario& s) {
  std::vector<Index> n;
  Index total = 0;
  for (Index i = 0; i < s.n_classes; ++i) {
    const double x = static_cast<double>(s.k) * s.rho[i];
    const double r = std::round(x);
    M3D_REQUIRE(std::abs(x - r) <= 1e-9, "k*rho[", i, "] = ", x, " is not an integer");
    n.push_back(static_cast<Index>(r));
    total += n.back();
  }
  M3D_REQUIRE(total == s.k, "class counts sum to ", total, ", expected k = ", s.k);
  return n;
}

/// Monte Carlo estimate of the correct-classification probability. Each trial
/// draws the target coordinate of all k neighbours from its own counter
/// stream, so the result does not depend on the thread count.
inline McEstimate mc_probability(const GaussianScenario& s, Index samples, std::uint64_t seed, int threads = 1) {
  s.validate();
  M3D_REQUIRE(samples >= 1, "samples must be >= 1");
  M3D_REQUIRE(threads >= 1, "threads must be >= 1");
  const auto counts = class_counts(s);
  auto run = [&](Index begin, Index end) {
    Index hits = 0;
    for (Index t = begin; t < end; ++t) {
      CounterRng rng(seed, stream_id({0x3C7, static_cast<std::uint64_t>(t)}));
      double z = 0.0;
      for (Index i = 0; i < s.n_classes; ++i) {
        const double mu = i == s.target ? 1.0 : 0.0;
        for (Index j = 0; j < counts[i]; ++j) z += s.alpha[i] * (mu + s.sigma[i] * rng.normal());
      }
      hits += z >= s.delta;
    }
    return hits;
  };
  const Index nt = std::min<Index>(threads, samples);
  std::vector<Index> hits(static_cast<std::size_t>(nt), 0);
  if (nt == 1) {
    hits[0] = run(0, samples);
  } else {
    std::vector<std::thread> pool;
    for (Index w = 0; w < nt; ++w)
      pool.emplace_back([&, w] { hits[w] = run(samples * w / nt, samples * (w + 1) / nt); });
    for (auto& th : pool) th.join();
  }
  McEstimate e;
  e.samples = samples;
  e.hits = std::accumulate(hits.begin(), hits.end(), Index{0});
  e.estimate = static_cast<double>(e.hits) / static_cast<double>(samples);
  e.stderr_ = std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(samples));
  return e;
}

/// Random feasible scenario with integral class counts, k in [2, max_k],
/// positive stds and delta placed so the exact z-score lies in [-2.5, 0].
inline GaussianScenario random_feasible_scenario(CounterRng& rng, Index max_k = 32) {
  GaussianScenario s;
  s.n_classes = 2 + static_cast<Index>(rng.below(4));
  s.dim = s.n_classes;
  s.k = 2 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_k - 1)));
  const Index nc = s.n_classes;
  const double kd = static_cast<double>(s.k);
  std::vector<Index> counts(static_cast<std::size_t>(nc), 0);
  counts[0] = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(s.k)));
  for (Index j = counts[0]; j < s.k; ++j) ++counts[1 + rng.below(static_cast<std::uint64_t>(nc - 1))];
  for (Index i = 0; i < nc; ++i) s.rho.push_back(static_cast<double>(counts[i]) / kd);
  // alpha_c in [1/k, 1/(k rho_c)]; the rest of the mass is spread uniformly.
  const double hi = 1.0 / (kd * s.rho[0]);
  const double ac = 1.0 / kd + (hi - 1.0 / kd) * rng.uniform();
  s.alpha.assign(static_cast<std::size_t>(nc), 0.0);
  s.alpha[0] = ac;
  const double rest = std::max(0.0, 1.0 - kd * s.rho[0] * ac);
  if (counts[0] < s.k)
    for (Index i = 1; i < nc; ++i)
      if (counts[i] > 0) s.alpha[i] = rest / (kd * (1.0 - s.rho[0]));
  if (counts[0] == s.k) s.alpha[0] = 1.0 / kd;
  for (Index i = 0; i < nc; ++i) s.sigma.push_back(rng.uniform(0.1, 2.0));
  const auto d = updated_repr_distribution(s);
  const double z = -2.5 * rng.uniform();
  s.delta = d.mean_coeff[0] + z * std::sqrt(d.variance);
  s.validate();
  return s;
}

enum class ScanAxis { k, rho_c, alpha_c, sigma_c, sigma_m };

inline std::string to_string(ScanAxis a) {
  switch (a) {
    case ScanAxis::k: return "k";
    case ScanAxis::rho_c: return "rho_c";
    case ScanAxis::alpha_c: return "alpha_c";
    case ScanAxis::sigma_c: return "sigma_c";
    case ScanAxis::sigma_m: return "sigma_m";
  }
  return "?";
}

inline ScanAxis parse_scan_axis(const std::string& s) {
  if (s == "k") return ScanAxis::k;
  if (s == "rho_c" || s == "rho-c") return ScanAxis::rho_c;
  if (s == "alpha_c" || s == "alpha-c") return ScanAxis::alpha_c;
  if (s == "sigma_c" || s == "sigma" || s == "sigma-c") return ScanAxis::sigma_c;
  if (s == "sigma_m" || s == "sigma-m") return ScanAxis::sigma_m;
  fail_validation("unknown scan axis '", s, "' (expected k, rho_c, alpha_c, sigma_c or sigma_m)");
}

/// Bounds increase along k, rho_c and alpha_c and decrease along the stds.
inline bool scan_increasing(ScanAxis a) { return a == ScanAxis::k || a == ScanAxis::rho_c || a == ScanAxis::alpha_c; }

/// Base scenario moved to one grid value. Along k the target mass
/// k*rho_c*alpha_c is held fixed; along rho_c and alpha_c the other one of the
/// pair is held and the off-target attention is re-spread uniformly; along
/// sigma_m every non-target std is set to the value.
inline GaussianScenario scan_point(const GaussianScenario& base, ScanAxis axis, double value) {
  base.validate();
  const Index c = base.target;
  M3D_REQUIRE(c == 0, "scans expect the target to be class 0");
  double k = static_cast<double>(base.k), rho = base.rho[c], alpha = base.alpha[c];
  std::vector<double> sig = base.sigma;
  switch (axis) {
    case ScanAxis::k: {
      const double mass = k * rho * alpha;
      M3D_REQUIRE(value >= 1.0 && value == std::floor(value), "k grid values must be integers >= 1");
      k = value;
      alpha = mass / (k * rho);
      break;
    }
    case ScanAxis::rho_c: rho = value; break;
    case ScanAxis::alpha_c: alpha = value; break;
    case ScanAxis::sigma_c: sig[c] = value; break;
    case ScanAxis::sigma_m:
      for (Index i = 0; i < base.n_classes; ++i)
        if (i != c) sig[i] = value;
      break;
  }
  M3D_REQUIRE(rho > 0.0 && rho <= 1.0, "infeasible grid point: rho_c = ", rho);
  M3D_REQUIRE(k * rho * alpha <= 1.0 + 1e-12, "infeasible grid point: k*rho_c*alpha_c > 1");
  auto s = make_scenario(static_cast<Index>(k), rho, alpha, sig, base.delta);
  check_bound_preconditions(s);
  return s;
}

struct ScanPoint {
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct MonotonicityReport {
  ScanAxis axis = ScanAxis::k;
  std::vector<ScanPoint> points;
  std::vector<std::string> violations;

  bool monotone() const { return violations.empty(); }
};

inline MonotonicityReport monotonicity_scan(const GaussianScenario& base, ScanAxis axis, const std::vector<double>& grid) {
  M3D_REQUIRE(!grid.empty(), "scan grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    M3D_REQUIRE(grid[i] > grid[i - 1], "scan grid must be strictly increasing");
  MonotonicityReport rep;
  rep.axis = axis;
  for (double v : grid) {
    const auto b = probability_bounds(scan_point(base, axis, v));
    rep.points.push_back({v, b.lower, b.upper});
  }
  const bool inc = scan_increasing(axis);
  for (std::size_t i = 1; i < rep.points.size(); ++i) {
    const auto &a = rep.points[i - 1], &b = rep.points[i];
    for (int which = 0; which < 2; ++which) {
      const double pa = which == 0 ? a.lower : a.upper, pb = which == 0 ? b.lower : b.upper;
      if (inc ? pb < pa : pb > pa)
        rep.violations.push_back(detail::concat(which == 0 ? "lower" : "upper", " bound ",
                                                inc ? "decreases" : "increases", " from ", to_string(axis), "=",
                                                a.value, " (", pa, ") to ", to_string(axis), "=", b.value, " (",
                                                pb, ")"));
    }
  }
  return rep;
}

struct SupportCheckReport {
  Index rows_checked = 0;
  Index support_violations = 0;   // real rows where supp(C4^2) != supp(C3 + I)
  Index composite_violations = 0; // rows where the two-hop weights differ in support or mass
  double max_row_sum_error = 0.0;

  bool ok() const { return support_violations == 0 && composite_violations == 0; }
};

/// Two hops through the cluster-virtual mask reach exactly the cluster-wide
/// mask (plus self) on real nodes, and random softmax weights on the two hops
/// compose into a row-stochastic attention over the cluster.
inline SupportCheckReport c4_c3_support_check(const Graph& g, const Partition& part, std::uint64_t seed = 0) {
  const auto u = extend_universe(g, part);
  const auto c4 = build_mask(u, g, part, MaskKind::C4);
  const auto c3 = build_mask(u, g, part, MaskKind::C3);
  const Index n = u.n_real, total = u.total();

  // Random softmax weights on every C4 row.
  std::vector<std::vector<std::pair<Index, double>>> w(static_cast<std::size_t>(total));
  for (Index r = 0; r < total; ++r) {
    CounterRng rng(seed, stream_id({0xC43, static_cast<std::uint64_t>(r)}));
    double z = 0.0;
    for (Index col : c4.row(r)) {
      const double e = std::exp(rng.uniform(-2.0, 2.0));
      w[r].push_back({col, e});
      z += e;
    }
    for (auto& [_, x] : w[r]) x /= z;
  }

  SupportCheckReport rep;
  std::vector<std::uint8_t> reach(static_cast<std::size_t>(n));
  std::vector<double> comp(static_cast<std::size_t>(n));
  for (Index a = 0; a < n; ++a) {
    std::fill(reach.begin(), reach.end(), 0);
    std::fill(comp.begin(), comp.end(), 0.0);
    for (auto [mid, w1] : w[a]) {
      // A real key on the first hop stays put for the second (self term).
      if (mid == a) comp[a] += w1;
      for (Index b : c4.row(mid))
        if (b < n) reach[b] = 1;
      if (mid >= n)
        for (auto [b, w2] : w[mid])
          if (b < n) comp[b] += w1 * w2;
    }
    std::vector<std::uint8_t> want(static_cast<std::size_t>(n), 0);
    want[a] = 1;
    for (Index b : c3.row(a)) want[b] = 1;
    ++rep.rows_checked;
    if (reach != want) ++rep.support_violations;
    double sum = 0.0;
    bool support_ok = true;
    for (Index b = 0; b < n; ++b) {
      sum += comp[b];
      if ((comp[b] > 0.0) != (want[b] != 0)) support_ok = false;
    }
    const double err = std::abs(sum - 1.0);
    rep.max_row_sum_error = std::max(rep.max_row_sum_error, err);
    if (!support_ok || err > 1e-6) ++rep.composite_violations;
  }
  return rep;
}

}  // namespace m3d
