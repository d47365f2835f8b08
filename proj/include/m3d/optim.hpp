// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay: theta <- theta - lr*wd*theta, then the
/// bias-corrected Adam step. Moments are kept in double.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWOptions opt) : opt_(opt) {
    M3D_REQUIRE(opt.lr >= 0.0 && opt.weight_decay >= 0.0, "learning rate and weight decay must be >= 0");
    M3D_REQUIRE(opt.beta1 >= 0.0 && opt.beta1 < 1.0 && opt.beta2 >= 0.0 && opt.beta2 < 1.0,
                "Adam betas must lie in [0, 1)");
    M3D_REQUIRE(opt.eps > 0.0, "Adam eps must be > 0");
  }

  const AdamWOptions& options() const { return opt_; }
  Index steps() const { return t_; }

  void step(ParameterStore<T>& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto& [name, e] : store.entries()) {
      auto& st = state_[name];
      auto w = e.tensor.data();
      e.tensor.ensure_grad();
      auto g = e.tensor.grad();
      if (st.m.empty()) {
        st.m.assign(w.size(), 0.0);
        st.v.assign(w.size(), 0.0);
      }
      M3D_REQUIRE(st.m.size() == w.size(), "parameter '", name, "' changed size between steps");
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        st.m[i] = opt_.beta1 * st.m[i] + (1.0 - opt_.beta1) * gi;
        st.v[i] = opt_.beta2 * st.v[i] + (1.0 - opt_.beta2) * gi * gi;
        double x = static_cast<double>(w[i]);
        x -= opt_.lr * opt_.weight_decay * x;
        x -= opt_.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + opt_.eps);
        w[i] = static_cast<T>(x);
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
  };
  AdamWOptions opt_;
  Index t_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace m3d
