// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/rng.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

/// Violated precondition of a verification routine.
class PreconditionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Scalar objective over a parameter store. With want_grad set, eval must
/// also write d(objective)/d(param) into each parameter's grad buffer.
template <typename T>
struct Objective {
  std::function<double(ParameterStore<T>&, bool want_grad)> eval;
  bool dropout_active = false;
};

struct GradCheckReport {
  Index coords_checked = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  Index n_coords = 500;
  double step = 1e-6;
  std::uint64_t seed = 0;
};

/// Compares analytic gradients with central differences on a random sample
/// of coordinates. Error per coordinate: |a - n| / max(1, |n|).
template <typename T>
GradCheckReport finite_diff_check(const Objective<T>& obj, ParameterStore<T>& store, GradCheckOptions opt = {}) {
  if (obj.dropout_active)
    throw PreconditionError("finite_diff_check needs a deterministic objective; disable dropout first");
  store.zero_grad();
  const double f0 = obj.eval(store, true);
  store.zero_grad();
  const double f1 = obj.eval(store, true);
  if (f0 != f1) throw PreconditionError("objective is not deterministic across evaluations");

  struct Coord {
    std::string name;
    Index index;
  };
  std::vector<Coord> all;
  for (auto& [name, e] : store.entries())
    for (Index i = 0; i < e.tensor.size(); ++i) all.push_back({name, i});
  M3D_REQUIRE(!all.empty(), "finite_diff_check: empty parameter store");
  CounterRng rng(opt.seed, stream_id({0x6C4}));
  shuffle(all, rng);
  if (static_cast<Index>(all.size()) > opt.n_coords) all.resize(static_cast<std::size_t>(opt.n_coords));

  std::map<std::string, std::vector<T>> analytic;
  for (auto& [name, e] : store.entries()) {
    auto g = e.tensor.grad();
    analytic[name].assign(g.begin(), g.end());
  }

  GradCheckReport rep;
  for (const auto& c : all) {
    auto& t = store.at(c.name);
    const T orig = t[c.index];
    t[c.index] = orig + static_cast<T>(opt.step);
    const double fp = obj.eval(store, false);
    t[c.index] = orig - static_cast<T>(opt.step);
    const double fm = obj.eval(store, false);
    t[c.index] = orig;
    const double num = (fp - fm) / (2.0 * opt.step);
    const double ana = static_cast<double>(analytic[c.name][static_cast<std::size_t>(c.index)]);
    const double err = std::abs(ana - num) / std::max(1.0, std::abs(num));
    ++rep.coords_checked;
    if (err > rep.max_rel_error || rep.worst_index < 0) {
      rep.max_rel_error = std::max(rep.max_rel_error, err);
      rep.worst_param = c.name;
      rep.worst_index = c.index;
      rep.worst_analytic = ana;
      rep.worst_numeric = num;
    }
  }
  return rep;
}

}  // namespace m3d
