// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Node classifier over the extended universe. Each layer normalizes its
// input, mixes three masked-attention experts (local, cluster, global) with
// two-level sigmoid gates, applies ReLU and adds a residual projection.

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "m3d/attention.hpp"
#include "m3d/common.hpp"
#include "m3d/graph.hpp"
#include "m3d/mask.hpp"
#include "m3d/ops.hpp"
#include "m3d/partition.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

inline constexpr std::array<const char*, 3> kExpertNames{"local", "cluster", "global"};

enum class FfnKind { none, standard };

struct ModelConfig {
  Index n_layers = 2;
  Index d_model = 32;
  Index n_heads = 4;
  double dropout = 0.0;
  double attention_dropout = 0.0;
  AttentionKernel local_kernel = AttentionKernel::softmax_dot;
  FfnKind ffn = FfnKind::none;
  Scheme scheme = Scheme::dual;
  std::uint64_t seed = 0;
  /// When set, gates are these constants instead of the learned routing.
  /// Experts with a zero gate are not evaluated.
  std::optional<std::array<double, 3>> forced_gates;

  Index d_head() const { return d_model / n_heads; }

  void validate() const {
    M3D_REQUIRE(n_layers >= 1, "n_layers must be >= 1");
    M3D_REQUIRE(d_model >= 1 && n_heads >= 1, "d_model and n_heads must be >= 1");
    M3D_REQUIRE(d_model % n_heads == 0, "d_model ", d_model, " not divisible by n_heads ", n_heads);
    M3D_REQUIRE(dropout >= 0.0 && dropout < 1.0, "dropout outside [0, 1)");
    M3D_REQUIRE(attention_dropout >= 0.0 && attention_dropout < 1.0, "attention_dropout outside [0, 1)");
    if (forced_gates) {
      double s = 0;
      for (double g : *forced_gates) {
        M3D_REQUIRE(g >= 0.0, "forced gates must be non-negative");
        s += g;
      }
      M3D_REQUIRE(std::abs(s - 1.0) < 1e-12, "forced gates must sum to 1");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"n_layers", c.n_layers},
       {"d_model", c.d_model},
       {"n_heads", c.n_heads},
       {"dropout", c.dropout},
       {"attention_dropout", c.attention_dropout},
       {"local_kernel", std::string(to_string(c.local_kernel))},
       {"ffn", c.ffn == FfnKind::none ? "none" : "standard"},
       {"scheme", std::string(to_string(c.scheme))},
       {"seed", c.seed}};
  if (c.forced_gates) j["forced_gates"] = *c.forced_gates;
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known{"n_layers", "d_model", "n_heads", "dropout", "attention_dropout",
                                           "local_kernel", "ffn", "scheme", "seed", "forced_gates",
                                           "norm", "activation", "train", "clusters", "sbm"};
  for (const auto& [k, _] : j.items()) M3D_REQUIRE(known.contains(k), "unknown model config key '", k, "'");
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.dropout = j.value("dropout", c.dropout);
    c.attention_dropout = j.value("attention_dropout", c.attention_dropout);
    c.seed = j.value("seed", c.seed);
    if (j.contains("local_kernel")) c.local_kernel = parse_kernel(j.at("local_kernel").get<std::string>());
    if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    if (j.contains("ffn")) {
      const auto f = j.at("ffn").get<std::string>();
      M3D_REQUIRE(f == "none" || f == "standard", "ffn must be 'none' or 'standard'");
      c.ffn = f == "none" ? FfnKind::none : FfnKind::standard;
    }
    if (j.contains("norm")) M3D_REQUIRE(j.at("norm") == "pre-rmsnorm", "only norm = pre-rmsnorm is supported");
    if (j.contains("activation")) M3D_REQUIRE(j.at("activation") == "relu", "only activation = relu is supported");
    if (j.contains("forced_gates")) c.forced_gates = j.at("forced_gates").get<std::array<double, 3>>();
  } catch (const nlohmann::json::exception& e) {
    fail_validation("malformed model config: ", e.what());
  }
  c.validate();
}

/// Graph, partition, universe and the three designed masks, plus the rows
/// and labels that enter the loss.
struct ModelData {
  Graph graph;
  Partition partition;
  NodeUniverse universe;
  DesignedMasks masks;
  Tensor<double> features;       // universe features [total x d_in]
  std::vector<Index> loss_rows;  // training nodes, then global virtuals
  std::vector<int> loss_labels;

  const SparseMask& mask(int expert) const {
    return expert == 0 ? masks.local : expert == 1 ? masks.cluster : masks.global;
  }
};

inline ModelData prepare_data(Graph g, Partition part) {
  ModelData d;
  d.universe = extend_universe(g, part);
  d.masks = build_designed_masks(d.universe, g, part);
  d.features = d.universe.all_features(g);
  for (Index u : g.nodes_in(Split::train)) {
    d.loss_rows.push_back(u);
    d.loss_labels.push_back(g.labels[u]);
  }
  for (Index c = 0; c < d.universe.n_global; ++c) {
    d.loss_rows.push_back(d.universe.global_node(c));
    d.loss_labels.push_back(static_cast<int>(c));
  }
  d.graph = std::move(g);
  d.partition = std::move(part);
  return d;
}

/// Mean cross-entropy over the training nodes and the global virtuals, whose
/// label is their class.
template <typename T>
T compute_loss(const Tensor<T>& logits, std::span<const Index> train_ids, std::span<const int> train_labels,
               std::span<const Index> global_ids, Tensor<T>* dlogits = nullptr) {
  std::vector<Index> rows(train_ids.begin(), train_ids.end());
  std::vector<int> labels(train_labels.begin(), train_labels.end());
  for (std::size_t c = 0; c < global_ids.size(); ++c) {
    rows.push_back(global_ids[c]);
    labels.push_back(static_cast<int>(c));
  }
  M3D_REQUIRE(!rows.empty(), "loss over an empty node set");
  return ops::cross_entropy_rows<T>(logits, rows, labels, dlogits);
}

struct Prediction {
  std::vector<int> classes;
  std::vector<std::vector<double>> probs;
};

/// Softmax rows and argmax, ties to the lowest class index.
template <typename T>
Prediction predict(const Tensor<T>& logits, std::span<const Index> node_ids) {
  Prediction p;
  for (Index u : node_ids) {
    auto r = logits.row(u);
    std::vector<double> row(r.begin(), r.end());
    ops::softmax_inplace<double>(row);
    int best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (r[c] > r[best]) best = static_cast<int>(c);
    p.classes.push_back(best);
    p.probs.push_back(std::move(row));
  }
  return p;
}

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, Index d_in, Index n_classes) : cfg_(cfg), d_in_(d_in), n_classes_(n_classes) {
    cfg_.validate();
    M3D_REQUIRE(d_in >= 1 && n_classes >= 1, "model needs d_in >= 1 and n_classes >= 1");
    params_ = ParameterStore<T>(cfg.seed);
    const Index d = cfg.d_model;
    params_.add("in.weight", {d_in, d}, InitKind::glorot_uniform);
    params_.add("cls.weight", {d, n_classes}, InitKind::glorot_uniform);
    for (Index l = 0; l < cfg.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      params_.add(p + "norm.scale", {d}, InitKind::ones);
      for (int e = 0; e < 3; ++e) {
        const std::string x = p + kExpertNames[e] + ".";
        for (const char* w : {"wq", "wk", "wv"}) params_.add(x + w, {d, d}, InitKind::glorot_uniform);
        if (kernel_of(e) == AttentionKernel::gat_additive) {
          params_.add(x + "a_src", {cfg.n_heads, cfg.d_head()}, InitKind::glorot_uniform);
          params_.add(x + "a_dst", {cfg.n_heads, cfg.d_head()}, InitKind::glorot_uniform);
        }
      }
      params_.add(p + "gate1.weight", {d, 1}, InitKind::zeros);
      params_.add(p + "gate2.weight", {d, 1}, InitKind::zeros);
      params_.add(p + "res.weight", {d, d}, InitKind::identity);
      if (cfg.ffn == FfnKind::standard) {
        params_.add(p + "ffn.norm.scale", {d}, InitKind::ones);
        params_.add(p + "ffn.w1", {d, 4 * d}, InitKind::glorot_uniform);
        params_.add(p + "ffn.w2", {4 * d, d}, InitKind::glorot_uniform);
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

  /// Replaces the parameters, e.g. from a checkpoint. Names and shapes must match.
  void set_params(const ParameterStore<T>& other) {
    M3D_REQUIRE(other.entries().size() == params_.entries().size(), "checkpoint has ",
                other.entries().size(), " tensors, model has ", params_.entries().size());
    for (auto& [name, e] : params_.entries()) {
      M3D_REQUIRE(other.contains(name), "checkpoint lacks parameter '", name, "'");
      const auto& t = other.at(name);
      M3D_REQUIRE(t.shape() == e.tensor.shape(), "shape mismatch for parameter '", name, "'");
      e.tensor = t;
    }
  }

  /// Attention plans for the three experts under the configured scheme.
  std::array<AttentionPlan, 3> make_plans(const ModelData& data) const {
    std::array<AttentionPlan, 3> plans;
    for (int e = 0; e < 3; ++e) plans[e] = make_plan(data.mask(e), cfg_.scheme, cfg_.d_head(), kernel_of(e));
    return plans;
  }

  /// Accounted attention memory: layers x sum over experts and regions.
  Index accounted_units(const ModelData& data) const {
    const auto plans = make_plans(data);
    Index per_layer = 0;
    for (int e = 0; e < 3; ++e) {
      if (cfg_.forced_gates && (*cfg_.forced_gates)[e] == 0.0) continue;
      per_layer += plans[e].accounted_units(cfg_.n_heads, cfg_.d_head());
    }
    return cfg_.n_layers * per_layer;
  }

  /// Logits for every universe node. `round` keys dropout masks; training
  /// enables dropout.
  Tensor<T> forward(const ModelData& data, bool training, std::uint64_t round = 0) {
    M3D_REQUIRE(data.features.cols() == d_in_, "feature width ", data.features.cols(), " != model d_in ", d_in_);
    x_ = data.features.template cast<T>();
    plans_ = make_plans(data);
    data_ = &data;
    training_ = training;
    drop_seed_ = stream_id({cfg_.seed, round, 0xD0});
    const Index n = x_->rows();
    const Index d = cfg_.d_model;

    in_pre_ = ops::matmul(*x_, params_.at("in.weight"));
    Tensor<T> h = ops::dropout(in_pre_, cfg_.dropout, drop_seed_, stream_id({0xA0}), training);
    layers_.clear();
    layers_.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (Index l = 0; l < cfg_.n_layers; ++l) {
      auto& c = layers_[l];
      const std::string p = prefix(l);
      c.x = std::move(h);
      c.n = ops::rmsnorm(c.x, params_.at(p + "norm.scale"), T(1e-6), &c.inv_rms);
      c.gates = Tensor<T>({n, 3});
      if (cfg_.forced_gates) {
        for (Index r = 0; r < n; ++r)
          for (int e = 0; e < 3; ++e) c.gates(r, e) = static_cast<T>((*cfg_.forced_gates)[e]);
      } else {
        c.beta1 = ops::sigmoid(ops::matmul(c.n, params_.at(p + "gate1.weight")));
        c.beta2 = ops::sigmoid(ops::matmul(c.n, params_.at(p + "gate2.weight")));
        for (Index r = 0; r < n; ++r) {
          const T b1 = c.beta1[r], b2 = c.beta2[r];
          c.gates(r, 0) = b1;
          c.gates(r, 1) = (T{1} - b1) * b2;
          c.gates(r, 2) = (T{1} - b1) * (T{1} - b2);
        }
      }
      c.mix = Tensor<T>({n, d});
      for (int e = 0; e < 3; ++e) {
        c.active[e] = !(cfg_.forced_gates && (*cfg_.forced_gates)[e] == 0.0);
        if (!c.active[e]) continue;
        c.y[e] = c.experts[e].forward(c.n, data.mask(e), plans_[e], mha_params(l, e));
        for (Index r = 0; r < n; ++r) {
          const T g = c.gates(r, e);
          auto yr = c.y[e].row(r);
          auto mr = c.mix.row(r);
          for (Index j = 0; j < d; ++j) mr[j] += g * yr[j];
        }
      }
      auto act = ops::dropout(ops::relu(c.mix), cfg_.dropout, drop_seed_, stream_id({0xA1, static_cast<std::uint64_t>(l)}),
                              training);
      h = ops::add(act, ops::matmul(c.x, params_.at(p + "res.weight")));
      if (cfg_.ffn == FfnKind::standard) {
        c.ffn_in = h;
        c.ffn_n = ops::rmsnorm(h, params_.at(p + "ffn.norm.scale"), T(1e-6), &c.ffn_inv_rms);
        c.ffn_u = ops::matmul(c.ffn_n, params_.at(p + "ffn.w1"));
        c.ffn_r = ops::relu(c.ffn_u);
        h = ops::add(h, ops::matmul(c.ffn_r, params_.at(p + "ffn.w2")));
      }
    }
    h_last_ = std::move(h);
    return ops::matmul(h_last_, params_.at("cls.weight"));
  }

  /// Accumulates parameter gradients for the last forward call.
  void backward(const Tensor<T>& dlogits) {
    M3D_REQUIRE(data_ != nullptr, "backward called before forward");
    const Index d = cfg_.d_model;
    const Index n = x_->rows();
    ops::matmul_backward_b(h_last_, dlogits, params_.at("cls.weight").grad());
    Tensor<T> dh({n, d});
    ops::matmul_backward_a(dlogits, params_.at("cls.weight"), dh.data());

    for (Index l = cfg_.n_layers - 1; l >= 0; --l) {
      auto& c = layers_[l];
      const std::string p = prefix(l);
      if (cfg_.ffn == FfnKind::standard) {
        // h_out = h + relu(norm(h) W1) W2
        auto& w1 = params_.at(p + "ffn.w1");
        auto& w2 = params_.at(p + "ffn.w2");
        ops::matmul_backward_b(c.ffn_r, dh, w2.grad());
        Tensor<T> dr({n, 4 * d});
        ops::matmul_backward_a(dh, w2, dr.data());
        auto du = ops::relu_backward(c.ffn_u, dr);
        ops::matmul_backward_b(c.ffn_n, du, w1.grad());
        Tensor<T> dn2({n, d});
        ops::matmul_backward_a(du, w1, dn2.data());
        auto& sc = params_.at(p + "ffn.norm.scale");
        ops::rmsnorm_backward<T>(c.ffn_in, sc, c.ffn_inv_rms, dn2, dh.data(), sc.grad());
      }
      // h = dropout(relu(mix)) + x W_res
      auto& wres = params_.at(p + "res.weight");
      ops::matmul_backward_b(c.x, dh, wres.grad());
      Tensor<T> dx({n, d});
      ops::matmul_backward_a(dh, wres, dx.data());
      auto dact = ops::dropout_backward(dh, cfg_.dropout, drop_seed_, stream_id({0xA1, static_cast<std::uint64_t>(l)}),
                                        training_);
      auto dmix = ops::relu_backward(c.mix, dact);

      Tensor<T> dn({n, d});
      Tensor<T> dgates({n, 3});
      for (int e = 0; e < 3; ++e) {
        if (!c.active[e]) continue;
        Tensor<T> dy({n, d});
        for (Index r = 0; r < n; ++r) {
          const T g = c.gates(r, e);
          auto dm = dmix.row(r);
          auto yr = c.y[e].row(r);
          auto out = dy.row(r);
          T acc{0};
          for (Index j = 0; j < d; ++j) {
            out[j] = g * dm[j];
            acc += dm[j] * yr[j];
          }
          dgates(r, e) = acc;
        }
        auto eg = c.experts[e].backward(dy);
        const std::string x = p + kExpertNames[e] + ".";
        accumulate(params_.at(x + "wq").grad(), eg.dwq);
        accumulate(params_.at(x + "wk").grad(), eg.dwk);
        accumulate(params_.at(x + "wv").grad(), eg.dwv);
        if (kernel_of(e) == AttentionKernel::gat_additive) {
          accumulate(params_.at(x + "a_src").grad(), eg.da_src);
          accumulate(params_.at(x + "a_dst").grad(), eg.da_dst);
        }
        accumulate(dn.data(), eg.dx);
      }
      if (!cfg_.forced_gates) {
        Tensor<T> dz1({n, 1}), dz2({n, 1});
        for (Index r = 0; r < n; ++r) {
          const T b1 = c.beta1[r], b2 = c.beta2[r];
          const T dg1 = dgates(r, 0), dg2 = dgates(r, 1), dg3 = dgates(r, 2);
          const T db1 = dg1 - b2 * dg2 - (T{1} - b2) * dg3;
          const T db2 = (T{1} - b1) * (dg2 - dg3);
          dz1[r] = db1 * b1 * (T{1} - b1);
          dz2[r] = db2 * b2 * (T{1} - b2);
        }
        auto& wg1 = params_.at(p + "gate1.weight");
        auto& wg2 = params_.at(p + "gate2.weight");
        ops::matmul_backward_b(c.n, dz1, wg1.grad());
        ops::matmul_backward_b(c.n, dz2, wg2.grad());
        ops::matmul_backward_a(dz1, wg1, dn.data());
        ops::matmul_backward_a(dz2, wg2, dn.data());
      }
      auto& sc = params_.at(p + "norm.scale");
      ops::rmsnorm_backward<T>(c.x, sc, c.inv_rms, dn, dx.data(), sc.grad());
      dh = std::move(dx);
    }
    auto dpre = ops::dropout_backward(dh, cfg_.dropout, drop_seed_, stream_id({0xA0}), training_);
    ops::matmul_backward_b(*x_, dpre, params_.at("in.weight").grad());
  }

  /// Forward + loss (+ backward when want_grad), the usual training objective.
  T loss(const ModelData& data, bool training, std::uint64_t round, bool want_grad) {
    auto logits = forward(data, training, round);
    Tensor<T> dl;
    const T l = ops::cross_entropy_rows<T>(logits, data.loss_rows, data.loss_labels, want_grad ? &dl : nullptr);
    if (want_grad) backward(dl);
    return l;
  }

  /// Per-node gates [total x 3] of layer l from the last forward call.
  const Tensor<T>& gates(Index l) const { return layers_.at(static_cast<std::size_t>(l)).gates; }
  Index n_layers() const { return cfg_.n_layers; }

 private:
  struct LayerCache {
    Tensor<T> x, n, beta1, beta2, gates, mix;
    std::vector<T> inv_rms;
    std::array<Tensor<T>, 3> y;
    std::array<AttentionExpert<T>, 3> experts;
    std::array<bool, 3> active{};
    Tensor<T> ffn_in, ffn_n, ffn_u, ffn_r;
    std::vector<T> ffn_inv_rms;
  };

  static std::string prefix(Index l) { return "layer" + std::to_string(l) + "."; }

  AttentionKernel kernel_of(int expert) const {
    return expert == 0 ? cfg_.local_kernel : AttentionKernel::softmax_dot;
  }

  MhaParams<T> mha_params(Index l, int e) const {
    const std::string x = prefix(l) + kExpertNames[e] + ".";
    auto p = make_mha_params<T>(cfg_.n_heads, cfg_.d_model, params_.at(x + "wq"), params_.at(x + "wk"),
                                params_.at(x + "wv"));
    p.kernel = kernel_of(e);
    if (p.kernel == AttentionKernel::gat_additive) {
      p.a_src = &params_.at(x + "a_src");
      p.a_dst = &params_.at(x + "a_dst");
    }
    p.attention_dropout = cfg_.attention_dropout;
    p.training = training_;
    p.seed = drop_seed_;
    p.layer = static_cast<std::uint64_t>(l);
    p.expert = static_cast<std::uint64_t>(e);
    return p;
  }

  static void accumulate(std::span<T> dst, const Tensor<T>& src) {
    auto s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s[i];
  }

  ModelConfig cfg_;
  Index d_in_, n_classes_;
  ParameterStore<T> params_;
  std::optional<Tensor<T>> x_;
  std::array<AttentionPlan, 3> plans_;
  const ModelData* data_ = nullptr;
  bool training_ = false;
  std::uint64_t drop_seed_ = 0;
  Tensor<T> in_pre_, h_last_;
  std::vector<LayerCache> layers_;
};

}  // namespace m3d
