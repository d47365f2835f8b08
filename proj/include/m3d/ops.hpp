// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Fixed catalog of differentiable primitives. Each primitive has a forward
// function and a hand-written backward function; there is no tape. Models
// call these directly and chain the backward rules themselves.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/rng.hpp"
#include "m3d/tensor.hpp"

namespace m3d::ops {

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  M3D_REQUIRE(a.cols() == b.rows(), "matmul shape mismatch: [", a.rows(), "x", a.cols(), "] * [",
              b.rows(), "x", b.cols(), "]");
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> c({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = c.data().data();
  for (Index i = 0; i < m; ++i) {
    T* crow = pc + i * n;
    for (Index p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T{0}) continue;
      const T* brow = pb + p * n;
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

/// da += dc * b^T
template <typename T>
void matmul_backward_a(const Tensor<T>& dc, const Tensor<T>& b, std::span<T> da) {
  const Index m = dc.rows(), n = dc.cols(), k = b.rows();
  const T* pd = dc.data().data();
  const T* pb = b.data().data();
  for (Index i = 0; i < m; ++i) {
    for (Index p = 0; p < k; ++p) {
      T acc{0};
      const T* brow = pb + p * n;
      const T* drow = pd + i * n;
      for (Index j = 0; j < n; ++j) acc += drow[j] * brow[j];
      da[static_cast<std::size_t>(i * k + p)] += acc;
    }
  }
}

/// db += a^T * dc
template <typename T>
void matmul_backward_b(const Tensor<T>& a, const Tensor<T>& dc, std::span<T> db) {
  const Index m = a.rows(), k = a.cols(), n = dc.cols();
  const T* pa = a.data().data();
  const T* pd = dc.data().data();
  for (Index i = 0; i < m; ++i) {
    const T* drow = pd + i * n;
    for (Index p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T{0}) continue;
      T* out = db.data() + p * n;
      for (Index j = 0; j < n; ++j) out[j] += av * drow[j];
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  M3D_REQUIRE(a.same_shape(b), "add shape mismatch");
  Tensor<T> c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
  return c;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  Tensor<T> c = a;
  for (auto& v : c.data()) v *= s;
  return c;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  return y;
}

/// Gradient of relu evaluated at the pre-activation x.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx = dy;
  auto xd = x.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(xd[i] > T{0})) d[i] = T{0};
  return dx;
}

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= T{0}) {
    const T e = std::exp(-z);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data()) v = sigmoid_scalar(v);
  return y;
}

/// Gradient of sigmoid given its output y.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx = dy;
  auto yd = y.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= yd[i] * (T{1} - yd[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// RMSNorm: y = x / sqrt(mean(x^2) + eps) * scale, per row.

template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& scale, T eps, std::vector<T>* inv_rms = nullptr) {
  const Index n = x.rows(), d = x.cols();
  M3D_REQUIRE(scale.size() == d, "rmsnorm scale has ", scale.size(), " entries, expected ", d);
  Tensor<T> y({n, d});
  if (inv_rms) inv_rms->assign(static_cast<std::size_t>(n), T{0});
  for (Index r = 0; r < n; ++r) {
    auto xr = x.row(r);
    T ss{0};
    for (T v : xr) ss += v * v;
    const T inv = T{1} / std::sqrt(ss / static_cast<T>(d) + eps);
    if (inv_rms) (*inv_rms)[static_cast<std::size_t>(r)] = inv;
    auto yr = y.row(r);
    for (Index j = 0; j < d; ++j) yr[j] = xr[j] * inv * scale[j];
  }
  return y;
}

/// Accumulates into dx and dscale.
template <typename T>
void rmsnorm_backward(const Tensor<T>& x, const Tensor<T>& scale, std::span<const T> inv_rms,
                      const Tensor<T>& dy, std::span<T> dx, std::span<T> dscale) {
  const Index n = x.rows(), d = x.cols();
  for (Index r = 0; r < n; ++r) {
    auto xr = x.row(r);
    auto gr = dy.row(r);
    const T inv = inv_rms[static_cast<std::size_t>(r)];
    T dot{0};
    for (Index j = 0; j < d; ++j) {
      dot += gr[j] * scale[j] * xr[j];
      dscale[static_cast<std::size_t>(j)] += gr[j] * xr[j] * inv;
    }
    const T coef = dot * inv * inv * inv / static_cast<T>(d);
    T* dxr = dx.data() + r * d;
    for (Index j = 0; j < d; ++j) dxr[j] += gr[j] * scale[j] * inv - xr[j] * coef;
  }
}

// ---------------------------------------------------------------------------
// softmax variants. Masked-out or absent entries get weight 0; a row with no
// valid entry is all zeros instead of NaN.

template <typename T>
void softmax_inplace(std::span<T> v, std::span<const std::uint8_t> valid = {}) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (valid.empty() || valid[i]) mx = std::max(mx, v[i]);
  if (mx == -std::numeric_limits<T>::infinity()) {
    std::fill(v.begin(), v.end(), T{0});
    return;
  }
  T sum{0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (valid.empty() || valid[i]) {
      v[i] = std::exp(v[i] - mx);
      sum += v[i];
    } else {
      v[i] = T{0};
    }
  }
  for (auto& x : v) x /= sum;
}

template <typename T>
Tensor<T> row_softmax_masked(const Tensor<T>& scores, std::span<const std::uint8_t> mask) {
  M3D_REQUIRE(mask.empty() || static_cast<Index>(mask.size()) == scores.size(),
              "row_softmax_masked: mask size mismatch");
  Tensor<T> p = scores;
  const Index m = scores.cols();
  for (Index r = 0; r < scores.rows(); ++r) {
    softmax_inplace<T>(p.row(r), mask.empty() ? std::span<const std::uint8_t>{}
                                              : mask.subspan(static_cast<std::size_t>(r * m),
                                                             static_cast<std::size_t>(m)));
  }
  return p;
}

/// ds = p * (dp - <p, dp>) per row.
template <typename T>
Tensor<T> row_softmax_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  Tensor<T> ds({p.rows(), p.cols()});
  for (Index r = 0; r < p.rows(); ++r) {
    auto pr = p.row(r);
    auto gr = dp.row(r);
    T dot{0};
    for (Index j = 0; j < p.cols(); ++j) dot += pr[j] * gr[j];
    auto out = ds.row(r);
    for (Index j = 0; j < p.cols(); ++j) out[j] = pr[j] * (gr[j] - dot);
  }
  return ds;
}

/// Softmax over variable-length groups of entries sharing a row id.
/// Uses segment max and segment sum; entries need not be grouped.
template <typename T>
std::vector<T> scatter_row_softmax(std::span<const T> scores, std::span<const Index> row_index,
                                   Index n_rows) {
  M3D_REQUIRE(scores.size() == row_index.size(), "scatter_row_softmax: ", scores.size(),
              " scores for ", row_index.size(), " row ids");
  std::vector<T> row_max(static_cast<std::size_t>(n_rows), -std::numeric_limits<T>::infinity());
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const Index r = row_index[e];
    M3D_REQUIRE(r >= 0 && r < n_rows, "scatter_row_softmax: row id ", r, " out of range [0, ", n_rows, ")");
    M3D_REQUIRE(std::isfinite(scores[e]), "scatter_row_softmax: non-finite score at entry ", e);
    row_max[static_cast<std::size_t>(r)] = std::max(row_max[static_cast<std::size_t>(r)], scores[e]);
  }
  std::vector<T> w(scores.size());
  std::vector<T> row_sum(static_cast<std::size_t>(n_rows), T{0});
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const auto r = static_cast<std::size_t>(row_index[e]);
    w[e] = std::exp(scores[e] - row_max[r]);
    row_sum[r] += w[e];
  }
  for (std::size_t e = 0; e < scores.size(); ++e) w[e] /= row_sum[static_cast<std::size_t>(row_index[e])];
  return w;
}

template <typename T>
std::vector<T> scatter_row_softmax_backward(std::span<const T> weights, std::span<const Index> row_index,
                                            Index n_rows, std::span<const T> dweights) {
  std::vector<T> dot(static_cast<std::size_t>(n_rows), T{0});
  for (std::size_t e = 0; e < weights.size(); ++e)
    dot[static_cast<std::size_t>(row_index[e])] += weights[e] * dweights[e];
  std::vector<T> ds(weights.size());
  for (std::size_t e = 0; e < weights.size(); ++e)
    ds[e] = weights[e] * (dweights[e] - dot[static_cast<std::size_t>(row_index[e])]);
  return ds;
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> concat_last_dim(const Tensor<T>& a, const Tensor<T>& b) {
  M3D_REQUIRE(a.rows() == b.rows(), "concat_last_dim row mismatch: ", a.rows(), " vs ", b.rows());
  Tensor<T> c({a.rows(), a.cols() + b.cols()});
  for (Index r = 0; r < a.rows(); ++r) {
    auto out = c.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), out.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.begin() + a.cols());
  }
  return c;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const Index> ids) {
  Tensor<T> y({static_cast<Index>(ids.size()), x.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    M3D_REQUIRE(ids[i] >= 0 && ids[i] < x.rows(), "gather_rows: id ", ids[i], " out of range");
    std::copy(x.row(ids[i]).begin(), x.row(ids[i]).end(), y.row(static_cast<Index>(i)).begin());
  }
  return y;
}

template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::span<const Index> ids, Index n_rows) {
  M3D_REQUIRE(static_cast<Index>(ids.size()) == x.rows(), "scatter_add_rows: id count mismatch");
  Tensor<T> y({n_rows, x.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    M3D_REQUIRE(ids[i] >= 0 && ids[i] < n_rows, "scatter_add_rows: id ", ids[i], " out of range");
    auto src = x.row(static_cast<Index>(i));
    auto dst = y.row(ids[i]);
    for (Index j = 0; j < x.cols(); ++j) dst[j] += src[j];
  }
  return y;
}

// ---------------------------------------------------------------------------
// dropout: inverted scaling, keyed by (seed, stream, element index).

template <typename T>
T dropout_keep_scale(double p, std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  return keyed_uniform(seed, stream, counter) < p ? T{0} : static_cast<T>(1.0 / (1.0 - p));
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed, std::uint64_t stream, bool training) {
  M3D_REQUIRE(p >= 0.0 && p < 1.0, "dropout probability ", p, " outside [0, 1)");
  Tensor<T> y = x;
  if (!training || p == 0.0) return y;
  auto d = y.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= dropout_keep_scale<T>(p, seed, stream, i);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, double p, std::uint64_t seed, std::uint64_t stream,
                           bool training) {
  return dropout(dy, p, seed, stream, training);
}

// ---------------------------------------------------------------------------
// cross entropy: mean over the selected rows.

template <typename T>
T cross_entropy_rows(const Tensor<T>& logits, std::span<const Index> row_ids, std::span<const int> labels,
                     Tensor<T>* dlogits = nullptr) {
  M3D_REQUIRE(row_ids.size() == labels.size(), "cross_entropy_rows: ", row_ids.size(), " rows but ",
              labels.size(), " labels");
  M3D_REQUIRE(!row_ids.empty(), "cross_entropy_rows: empty row set");
  const Index c = logits.cols();
  const T inv_n = T{1} / static_cast<T>(row_ids.size());
  if (dlogits) *dlogits = Tensor<T>({logits.rows(), c});
  T loss{0};
  std::vector<T> p(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    const Index r = row_ids[i];
    const int y = labels[i];
    M3D_REQUIRE(r >= 0 && r < logits.rows(), "cross_entropy_rows: row ", r, " out of range");
    M3D_REQUIRE(y >= 0 && y < c, "cross_entropy_rows: label ", y, " out of range");
    auto lr = logits.row(r);
    T mx = *std::max_element(lr.begin(), lr.end());
    T sum{0};
    for (Index j = 0; j < c; ++j) sum += std::exp(lr[j] - mx);
    const T lse = mx + std::log(sum);
    loss += (lse - lr[y]) * inv_n;
    if (dlogits) {
      auto g = dlogits->row(r);
      for (Index j = 0; j < c; ++j) g[j] += std::exp(lr[j] - lse) * inv_n;
      g[y] -= inv_n;
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Uniform catalog interface.

enum class PrimitiveKind {
  matmul,
  add,
  mul_scalar,
  relu,
  sigmoid,
  rmsnorm,
  row_softmax_masked,
  scatter_row_softmax,
  concat_last_dim,
  dropout,
  cross_entropy_rows,
  gather_rows,
  scatter_add_rows,
};

inline constexpr PrimitiveKind kAllPrimitives[] = {
    PrimitiveKind::matmul,          PrimitiveKind::add,
    PrimitiveKind::mul_scalar,      PrimitiveKind::relu,
    PrimitiveKind::sigmoid,         PrimitiveKind::rmsnorm,
    PrimitiveKind::row_softmax_masked, PrimitiveKind::scatter_row_softmax,
    PrimitiveKind::concat_last_dim, PrimitiveKind::dropout,
    PrimitiveKind::cross_entropy_rows, PrimitiveKind::gather_rows,
    PrimitiveKind::scatter_add_rows,
};

inline std::string_view to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::matmul: return "matmul";
    case PrimitiveKind::add: return "add";
    case PrimitiveKind::mul_scalar: return "mul_scalar";
    case PrimitiveKind::relu: return "relu";
    case PrimitiveKind::sigmoid: return "sigmoid";
    case PrimitiveKind::rmsnorm: return "rmsnorm";
    case PrimitiveKind::row_softmax_masked: return "row_softmax_masked";
    case PrimitiveKind::scatter_row_softmax: return "scatter_row_softmax";
    case PrimitiveKind::concat_last_dim: return "concat_last_dim";
    case PrimitiveKind::dropout: return "dropout";
    case PrimitiveKind::cross_entropy_rows: return "cross_entropy_rows";
    case PrimitiveKind::gather_rows: return "gather_rows";
    case PrimitiveKind::scatter_add_rows: return "scatter_add_rows";
  }
  return "?";
}

/// Non-tensor arguments of a primitive.
struct PrimitiveAttrs {
  double scalar = 1.0;                 // mul_scalar factor
  double eps = 1e-6;                   // rmsnorm
  double p = 0.0;                      // dropout probability
  std::uint64_t seed = 0;              // dropout
  std::uint64_t stream = 0;            // dropout
  bool training = true;                // dropout
  std::vector<std::uint8_t> mask;      // row_softmax_masked
  std::vector<Index> ids;              // row ids: scatter/gather/cross entropy
  std::vector<int> labels;             // cross_entropy_rows
  Index n_rows = 0;                    // scatter_row_softmax / scatter_add_rows
};

inline std::size_t arity(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::matmul:
    case PrimitiveKind::add:
    case PrimitiveKind::rmsnorm:
    case PrimitiveKind::concat_last_dim: return 2;
    default: return 1;
  }
}

template <typename T>
Tensor<T> apply_primitive(PrimitiveKind kind, std::span<const Tensor<T>> in, const PrimitiveAttrs& at) {
  M3D_REQUIRE(in.size() == arity(kind), to_string(kind), " expects ", arity(kind), " inputs, got ", in.size());
  switch (kind) {
    case PrimitiveKind::matmul: return matmul(in[0], in[1]);
    case PrimitiveKind::add: return add(in[0], in[1]);
    case PrimitiveKind::mul_scalar: return mul_scalar(in[0], static_cast<T>(at.scalar));
    case PrimitiveKind::relu: return relu(in[0]);
    case PrimitiveKind::sigmoid: return sigmoid(in[0]);
    case PrimitiveKind::rmsnorm: return rmsnorm(in[0], in[1], static_cast<T>(at.eps));
    case PrimitiveKind::row_softmax_masked: return row_softmax_masked(in[0], std::span<const std::uint8_t>(at.mask));
    case PrimitiveKind::scatter_row_softmax: {
      auto w = scatter_row_softmax<T>(in[0].data(), at.ids, at.n_rows);
      const auto n = static_cast<Index>(w.size());
      return Tensor<T>({n}, std::move(w));
    }
    case PrimitiveKind::concat_last_dim: return concat_last_dim(in[0], in[1]);
    case PrimitiveKind::dropout: return dropout(in[0], at.p, at.seed, at.stream, at.training);
    case PrimitiveKind::cross_entropy_rows: {
      const T loss = cross_entropy_rows<T>(in[0], at.ids, at.labels);
      return Tensor<T>({1}, std::vector<T>{loss});
    }
    case PrimitiveKind::gather_rows: return gather_rows(in[0], at.ids);
    case PrimitiveKind::scatter_add_rows: return scatter_add_rows(in[0], at.ids, at.n_rows);
  }
  fail_validation("unsupported primitive");
}

/// Gradients with respect to every tensor input, given the forward output
/// and the upstream gradient of the output.
template <typename T>
std::vector<Tensor<T>> primitive_backward(PrimitiveKind kind, std::span<const Tensor<T>> in,
                                          const PrimitiveAttrs& at, const Tensor<T>& out,
                                          const Tensor<T>& dout) {
  M3D_REQUIRE(out.same_shape(dout), to_string(kind), ": upstream gradient shape mismatch");
  std::vector<Tensor<T>> g;
  for (const auto& t : in) g.emplace_back(t.shape());
  switch (kind) {
    case PrimitiveKind::matmul:
      matmul_backward_a(dout, in[1], g[0].data());
      matmul_backward_b(in[0], dout, g[1].data());
      break;
    case PrimitiveKind::add:
      g[0] = dout;
      g[1] = dout;
      break;
    case PrimitiveKind::mul_scalar:
      g[0] = mul_scalar(dout, static_cast<T>(at.scalar));
      break;
    case PrimitiveKind::relu:
      g[0] = relu_backward(in[0], dout);
      break;
    case PrimitiveKind::sigmoid:
      g[0] = sigmoid_backward(out, dout);
      break;
    case PrimitiveKind::rmsnorm: {
      std::vector<T> inv;
      rmsnorm(in[0], in[1], static_cast<T>(at.eps), &inv);
      rmsnorm_backward<T>(in[0], in[1], inv, dout, g[0].data(), g[1].data());
      break;
    }
    case PrimitiveKind::row_softmax_masked:
      g[0] = row_softmax_backward(out, dout);
      break;
    case PrimitiveKind::scatter_row_softmax: {
      auto ds = scatter_row_softmax_backward<T>(out.data(), at.ids, at.n_rows, dout.data());
      g[0] = Tensor<T>(in[0].shape(), std::move(ds));
      break;
    }
    case PrimitiveKind::concat_last_dim: {
      const Index a = in[0].cols();
      for (Index r = 0; r < dout.rows(); ++r) {
        auto src = dout.row(r);
        std::copy(src.begin(), src.begin() + a, g[0].row(r).begin());
        std::copy(src.begin() + a, src.end(), g[1].row(r).begin());
      }
      break;
    }
    case PrimitiveKind::dropout:
      g[0] = dropout_backward(dout, at.p, at.seed, at.stream, at.training);
      break;
    case PrimitiveKind::cross_entropy_rows: {
      Tensor<T> dl;
      cross_entropy_rows<T>(in[0], at.ids, at.labels, &dl);
      for (auto& v : dl.data()) v *= dout[0];
      g[0] = std::move(dl);
      break;
    }
    case PrimitiveKind::gather_rows:
      g[0] = scatter_add_rows(dout, at.ids, in[0].rows());
      break;
    case PrimitiveKind::scatter_add_rows:
      g[0] = gather_rows(dout, at.ids);
      break;
  }
  return g;
}

}  // namespace m3d::ops
