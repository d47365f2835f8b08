// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Masked multi-head attention over a node universe in three schemes:
// dense (per-region |Q|x|K| score matrices), sparse (per-entry scores with
// scatter softmax) and dual (each region in its own mode).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include "m3d/common.hpp"
#include "m3d/mask.hpp"
#include "m3d/ops.hpp"
#include "m3d/rng.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

enum class AttentionKernel { softmax_dot, gat_additive };

inline std::string_view to_string(AttentionKernel k) {
  return k == AttentionKernel::softmax_dot ? "softmax-dot" : "gat-additive";
}

inline AttentionKernel parse_kernel(std::string_view s) {
  if (s == "softmax-dot") return AttentionKernel::softmax_dot;
  if (s == "gat-additive") return AttentionKernel::gat_additive;
  fail_validation("unknown attention kernel '", s, "'");
}

enum class Scheme { dense, sparse, dual };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::dense: return "dense";
    case Scheme::sparse: return "sparse";
    case Scheme::dual: return "dual";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "dense") return Scheme::dense;
  if (s == "sparse") return Scheme::sparse;
  if (s == "dual") return Scheme::dual;
  fail_validation("unknown attention scheme '", s, "'");
}

/// Projections and settings of one attention expert. Head h uses columns
/// [h*d_head, (h+1)*d_head) of each projection.
template <typename T>
struct MhaParams {
  Index n_heads = 1;
  Index d_model = 1;
  Index d_head = 1;
  const Tensor<T>* wq = nullptr;
  const Tensor<T>* wk = nullptr;
  const Tensor<T>* wv = nullptr;
  const Tensor<T>* a_src = nullptr;  // [n_heads x d_head], additive kernel only
  const Tensor<T>* a_dst = nullptr;
  double attention_dropout = 0.0;
  double score_scale = 1.0;
  AttentionKernel kernel = AttentionKernel::softmax_dot;
  bool training = false;
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t expert = 0;

  void validate() const {
    M3D_REQUIRE(n_heads >= 1 && d_model >= 1, "attention needs n_heads >= 1 and d_model >= 1");
    M3D_REQUIRE(d_model % n_heads == 0, "d_model ", d_model, " not divisible by n_heads ", n_heads);
    M3D_REQUIRE(d_head == d_model / n_heads, "d_head must equal d_model / n_heads");
    M3D_REQUIRE(score_scale > 0.0, "score_scale must be positive");
    M3D_REQUIRE(attention_dropout >= 0.0 && attention_dropout < 1.0, "attention dropout outside [0, 1)");
    for (const auto* w : {wq, wk, wv}) {
      M3D_REQUIRE(w != nullptr, "missing attention projection");
      M3D_REQUIRE(w->rows() == d_model && w->cols() == d_model, "attention projection must be d_model x d_model");
    }
    if (kernel == AttentionKernel::gat_additive) {
      M3D_REQUIRE(a_src && a_dst, "additive kernel needs a_src and a_dst");
      M3D_REQUIRE(a_src->size() == n_heads * d_head && a_dst->size() == n_heads * d_head,
                  "a_src/a_dst must hold n_heads x d_head values");
    }
  }
};

template <typename T>
MhaParams<T> make_mha_params(Index n_heads, Index d_model, const Tensor<T>& wq, const Tensor<T>& wk,
                             const Tensor<T>& wv) {
  MhaParams<T> p;
  p.n_heads = n_heads;
  p.d_model = d_model;
  p.d_head = n_heads > 0 ? d_model / n_heads : 0;
  p.wq = &wq;
  p.wk = &wk;
  p.wv = &wv;
  p.score_scale = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(p.d_head, 1)));
  return p;
}

// ---------------------------------------------------------------------------
// Mode selection and memory accounting

/// Sparse iff kappa < 1/(3 d_head), evaluated exactly in integers. An
/// explicit per-region mode overrides the rule.
inline RegionMode select_mode(const AttentionRegion& r, Index d_head) {
  if (r.mode != RegionMode::automatic) return r.mode;
  return 3 * d_head * r.nnz < r.n_query() * r.n_key() ? RegionMode::sparse : RegionMode::dense;
}

struct MemoryEstimate {
  Index dense_units = 0;
  Index sparse_units = 0;
  Index chosen_units = 0;
};

inline MemoryEstimate memory_footprint(const AttentionRegion& r, RegionMode mode, Index n_heads, Index d_head) {
  MemoryEstimate m;
  m.dense_units = 2 * n_heads * r.n_query() * r.n_key();
  m.sparse_units = 6 * n_heads * r.nnz * d_head;
  if (mode == RegionMode::automatic) mode = select_mode(r, d_head);
  m.chosen_units = mode == RegionMode::dense ? m.dense_units : m.sparse_units;
  return m;
}

// ---------------------------------------------------------------------------
// Plans

/// Regions with resolved modes, ready to execute.
struct AttentionPlan {
  Scheme scheme = Scheme::dual;
  std::vector<AttentionRegion> regions;

  Index accounted_units(Index n_heads, Index d_head) const {
    Index total = 0;
    for (const auto& r : regions) total += memory_footprint(r, r.mode, n_heads, d_head).chosen_units;
    return total;
  }
};

/// One region over the whole universe: every row is a query, every id a key.
inline AttentionRegion whole_mask_region(const SparseMask& m) {
  AttentionRegion r;
  r.query_ids.resize(static_cast<std::size_t>(m.total()));
  for (Index i = 0; i < m.total(); ++i) r.query_ids[i] = i;
  r.key_ids = r.query_ids;
  r.nnz = m.nnz();
  r.kappa = m.total() == 0 ? 0.0 : static_cast<double>(r.nnz) / static_cast<double>(m.total() * m.total());
  return r;
}

/// dense: one whole-universe region computed densely. sparse: one
/// whole-universe region computed per entry. dual: the mask's regions, each
/// in its selected mode. The additive kernel has no dense path and forces
/// sparse everywhere.
inline AttentionPlan make_plan(const SparseMask& m, Scheme scheme, Index d_head,
                               AttentionKernel kernel = AttentionKernel::softmax_dot) {
  AttentionPlan plan;
  plan.scheme = scheme;
  if (scheme == Scheme::dual) {
    M3D_REQUIRE(!m.regions.empty() || m.nnz() == 0, "dual scheme needs a regionized mask");
    plan.regions = m.regions;
    for (auto& r : plan.regions) r.mode = select_mode(r, d_head);
  } else {
    auto r = whole_mask_region(m);
    r.mode = scheme == Scheme::dense ? RegionMode::dense : RegionMode::sparse;
    plan.regions.push_back(std::move(r));
  }
  if (kernel == AttentionKernel::gat_additive)
    for (auto& r : plan.regions) r.mode = RegionMode::sparse;
  return plan;
}

// ---------------------------------------------------------------------------
// Expert

/// Stateful attention expert. forward() caches what backward() needs.
template <typename T>
class AttentionExpert {
 public:
  struct Grads {
    Tensor<T> dx, dwq, dwk, dwv, da_src, da_dst;
  };

  Tensor<T> forward(const Tensor<T>& x, const SparseMask& mask, const AttentionPlan& plan, const MhaParams<T>& p) {
    p.validate();
    M3D_REQUIRE(x.cols() == p.d_model, "attention input has ", x.cols(), " columns, expected ", p.d_model);
    M3D_REQUIRE(x.rows() == mask.total(), "attention input has ", x.rows(), " rows, mask universe has ",
                mask.total());
    x_ = &x;
    mask_ = &mask;
    p_ = p;
    n_ = x.rows();
    check_plan(plan);
    q_ = ops::matmul(x, *p.wq);
    k_ = ops::matmul(x, *p.wk);
    v_ = ops::matmul(x, *p.wv);
    Tensor<T> out({n_, p.d_model});
    regions_.clear();
    for (const auto& r : plan.regions) {
      RegionCache rc;
      rc.region = r;
      rc.mode = r.mode == RegionMode::automatic ? select_mode(r, p.d_head) : r.mode;
      M3D_REQUIRE(!(rc.mode == RegionMode::dense && p.kernel == AttentionKernel::gat_additive),
                  "the additive kernel has no dense path");
      if (rc.mode == RegionMode::dense)
        dense_forward(rc, out);
      else
        sparse_forward(rc, out);
      regions_.push_back(std::move(rc));
    }
    return out;
  }

  /// Gradients for the last forward call.
  Grads backward(const Tensor<T>& dout) {
    M3D_REQUIRE(x_ != nullptr, "backward called before forward");
    const Index d = p_.d_model;
    Tensor<T> dq({n_, d}), dk({n_, d}), dv({n_, d});
    Grads g;
    g.da_src = Tensor<T>({p_.n_heads, p_.d_head});
    g.da_dst = Tensor<T>({p_.n_heads, p_.d_head});
    for (auto& rc : regions_) {
      if (rc.mode == RegionMode::dense)
        dense_backward(rc, dout, dq, dk, dv);
      else
        sparse_backward(rc, dout, dq, dk, dv, g);
    }
    g.dwq = Tensor<T>({d, d});
    g.dwk = Tensor<T>({d, d});
    g.dwv = Tensor<T>({d, d});
    ops::matmul_backward_b(*x_, dq, g.dwq.data());
    ops::matmul_backward_b(*x_, dk, g.dwk.data());
    ops::matmul_backward_b(*x_, dv, g.dwv.data());
    g.dx = Tensor<T>({n_, d});
    ops::matmul_backward_a(dq, *p_.wq, g.dx.data());
    ops::matmul_backward_a(dk, *p_.wk, g.dx.data());
    ops::matmul_backward_a(dv, *p_.wv, g.dx.data());
    return g;
  }

  /// Normalized attention weights (before dropout) of query `row`, as
  /// (key, weight) pairs. For tests and profiling.
  std::vector<std::pair<Index, T>> row_weights(Index row, Index head) const {
    std::vector<std::pair<Index, T>> out;
    for (const auto& rc : regions_) {
      const auto& r = rc.region;
      auto it = std::lower_bound(r.query_ids.begin(), r.query_ids.end(), row);
      if (it == r.query_ids.end() || *it != row) continue;
      const Index qi = it - r.query_ids.begin();
      if (rc.mode == RegionMode::dense) {
        const auto& w = rc.weights[head];
        for (Index j = 0; j < r.n_key(); ++j)
          if (w[qi * r.n_key() + j] != T{0}) out.emplace_back(r.key_ids[j], w[qi * r.n_key() + j]);
      } else {
        for (std::size_t e = 0; e < rc.entry_row.size(); ++e)
          if (rc.entry_row[e] == row) out.emplace_back(rc.entry_col[e], rc.weights[head][e]);
      }
    }
    return out;
  }

 private:
  struct RegionCache {
    AttentionRegion region;
    RegionMode mode = RegionMode::dense;
    std::vector<std::vector<T>> weights;  // per head; dense: |Q|x|K|, sparse: per entry
    std::vector<std::vector<T>> pre_act;  // additive kernel: per head, per entry
    std::vector<Index> entry_row, entry_col;
  };

  void check_plan(const AttentionPlan& plan) const {
    std::vector<std::uint8_t> owned(static_cast<std::size_t>(n_), 0);
    for (const auto& r : plan.regions) {
      for (Index q : r.query_ids) {
        M3D_REQUIRE(q >= 0 && q < n_, "region query id ", q, " out of range");
        M3D_REQUIRE(!owned[q], "query row ", q, " belongs to more than one region");
        owned[q] = 1;
      }
      for (std::size_t i = 0; i < r.key_ids.size(); ++i) {
        M3D_REQUIRE(r.key_ids[i] >= 0 && r.key_ids[i] < n_, "region key id out of range");
        M3D_REQUIRE(i == 0 || r.key_ids[i - 1] < r.key_ids[i], "region key ids must be sorted and unique");
      }
    }
  }

  std::uint64_t head_stream(Index h) const {
    return stream_id({p_.seed, p_.layer, p_.expert, static_cast<std::uint64_t>(h)});
  }

  T drop_scale(Index h, Index row, Index col) const {
    if (!p_.training || p_.attention_dropout == 0.0) return T{1};
    return ops::dropout_keep_scale<T>(p_.attention_dropout, p_.seed, head_stream(h),
                                      static_cast<std::uint64_t>(row * n_ + col));
  }

  T dot_head(const Tensor<T>& a, Index ra, const Tensor<T>& b, Index rb, Index h) const {
    const T* pa = a.data().data() + ra * p_.d_model + h * p_.d_head;
    const T* pb = b.data().data() + rb * p_.d_model + h * p_.d_head;
    T s{0};
    for (Index j = 0; j < p_.d_head; ++j) s += pa[j] * pb[j];
    return s;
  }

  void dense_forward(RegionCache& rc, Tensor<T>& out) {
    const auto& r = rc.region;
    const Index nq = r.n_query(), nk = r.n_key();
    // Validity pattern of the |Q| x |K| submatrix.
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(nq * nk), 0);
    for (Index i = 0; i < nq; ++i)
      for (Index c : mask_->row(r.query_ids[i])) {
        auto it = std::lower_bound(r.key_ids.begin(), r.key_ids.end(), c);
        M3D_REQUIRE(it != r.key_ids.end() && *it == c, "mask entry (", r.query_ids[i], ", ", c,
                    ") outside its region's key set");
        valid[i * nk + (it - r.key_ids.begin())] = 1;
      }
    const T scale = static_cast<T>(p_.score_scale);
    rc.weights.assign(static_cast<std::size_t>(p_.n_heads), {});
    for (Index h = 0; h < p_.n_heads; ++h) {
      Tensor<T> s({nq, nk});
      for (Index i = 0; i < nq; ++i)
        for (Index j = 0; j < nk; ++j) s(i, j) = dot_head(q_, r.query_ids[i], k_, r.key_ids[j], h) * scale;
      auto prob = ops::row_softmax_masked<T>(s, valid);
      for (Index i = 0; i < nq; ++i) {
        T* o = out.data().data() + r.query_ids[i] * p_.d_model + h * p_.d_head;
        for (Index j = 0; j < nk; ++j) {
          const T w = prob(i, j);
          if (w == T{0}) continue;
          const T wd = w * drop_scale(h, r.query_ids[i], r.key_ids[j]);
          const T* vv = v_.data().data() + r.key_ids[j] * p_.d_model + h * p_.d_head;
          for (Index t = 0; t < p_.d_head; ++t) o[t] += wd * vv[t];
        }
      }
      rc.weights[h] = std::move(prob.values());
    }
  }

  void dense_backward(RegionCache& rc, const Tensor<T>& dout, Tensor<T>& dq, Tensor<T>& dk, Tensor<T>& dv) {
    const auto& r = rc.region;
    const Index nq = r.n_query(), nk = r.n_key();
    const T scale = static_cast<T>(p_.score_scale);
    for (Index h = 0; h < p_.n_heads; ++h) {
      const auto& w = rc.weights[h];
      Tensor<T> prob({nq, nk}, w);
      Tensor<T> dprob({nq, nk});
      for (Index i = 0; i < nq; ++i) {
        const Index qi = r.query_ids[i];
        for (Index j = 0; j < nk; ++j) {
          if (w[i * nk + j] == T{0}) continue;
          const Index kj = r.key_ids[j];
          const T ds = drop_scale(h, qi, kj);
          dprob(i, j) = dot_head(dout, qi, v_, kj, h) * ds;
          const T wd = w[i * nk + j] * ds;
          const T* go = dout.data().data() + qi * p_.d_model + h * p_.d_head;
          T* dvv = dv.data().data() + kj * p_.d_model + h * p_.d_head;
          for (Index t = 0; t < p_.d_head; ++t) dvv[t] += wd * go[t];
        }
      }
      auto dscore = ops::row_softmax_backward(prob, dprob);
      for (Index i = 0; i < nq; ++i) {
        const Index qi = r.query_ids[i];
        T* dqq = dq.data().data() + qi * p_.d_model + h * p_.d_head;
        const T* qq = q_.data().data() + qi * p_.d_model + h * p_.d_head;
        for (Index j = 0; j < nk; ++j) {
          const T g = dscore(i, j) * scale;
          if (g == T{0}) continue;
          const Index kj = r.key_ids[j];
          const T* kk = k_.data().data() + kj * p_.d_model + h * p_.d_head;
          T* dkk = dk.data().data() + kj * p_.d_model + h * p_.d_head;
          for (Index t = 0; t < p_.d_head; ++t) {
            dqq[t] += g * kk[t];
            dkk[t] += g * qq[t];
          }
        }
      }
    }
  }

  void sparse_forward(RegionCache& rc, Tensor<T>& out) {
    const auto& r = rc.region;
    rc.entry_row.clear();
    rc.entry_col.clear();
    for (Index q : r.query_ids) {
      auto cols = mask_->row(q);
      for (std::size_t i = 0; i < cols.size(); ++i) {
        M3D_REQUIRE(i == 0 || cols[i - 1] < cols[i], "mask entries of row ", q, " are not sorted");
        rc.entry_row.push_back(q);
        rc.entry_col.push_back(cols[i]);
      }
    }
    const std::size_t ne = rc.entry_row.size();
    rc.weights.assign(static_cast<std::size_t>(p_.n_heads), {});
    rc.pre_act.assign(static_cast<std::size_t>(p_.n_heads), {});
    const T scale = static_cast<T>(p_.score_scale);
    std::vector<T> scores(ne);
    for (Index h = 0; h < p_.n_heads; ++h) {
      if (p_.kernel == AttentionKernel::softmax_dot) {
        for (std::size_t e = 0; e < ne; ++e) scores[e] = dot_head(q_, rc.entry_row[e], k_, rc.entry_col[e], h) * scale;
      } else {
        auto& z = rc.pre_act[h];
        z.resize(ne);
        for (std::size_t e = 0; e < ne; ++e) {
          const T* qq = q_.data().data() + rc.entry_row[e] * p_.d_model + h * p_.d_head;
          const T* kk = k_.data().data() + rc.entry_col[e] * p_.d_model + h * p_.d_head;
          const T* as = p_.a_src->data().data() + h * p_.d_head;
          const T* ad = p_.a_dst->data().data() + h * p_.d_head;
          T acc{0};
          for (Index t = 0; t < p_.d_head; ++t) acc += as[t] * qq[t] + ad[t] * kk[t];
          z[e] = acc;
          scores[e] = z[e] > T{0} ? z[e] : T(0.2) * z[e];
        }
      }
      rc.weights[h] = ops::scatter_row_softmax<T>(scores, rc.entry_row, n_);
      const auto& w = rc.weights[h];
      for (std::size_t e = 0; e < ne; ++e) {
        const T wd = w[e] * drop_scale(h, rc.entry_row[e], rc.entry_col[e]);
        T* o = out.data().data() + rc.entry_row[e] * p_.d_model + h * p_.d_head;
        const T* vv = v_.data().data() + rc.entry_col[e] * p_.d_model + h * p_.d_head;
        for (Index t = 0; t < p_.d_head; ++t) o[t] += wd * vv[t];
      }
    }
  }

  void sparse_backward(RegionCache& rc, const Tensor<T>& dout, Tensor<T>& dq, Tensor<T>& dk, Tensor<T>& dv,
                       Grads& g) {
    const std::size_t ne = rc.entry_row.size();
    const T scale = static_cast<T>(p_.score_scale);
    std::vector<T> dw(ne);
    for (Index h = 0; h < p_.n_heads; ++h) {
      const auto& w = rc.weights[h];
      for (std::size_t e = 0; e < ne; ++e) {
        const Index qi = rc.entry_row[e], kj = rc.entry_col[e];
        const T ds = drop_scale(h, qi, kj);
        dw[e] = dot_head(dout, qi, v_, kj, h) * ds;
        const T wd = w[e] * ds;
        const T* go = dout.data().data() + qi * p_.d_model + h * p_.d_head;
        T* dvv = dv.data().data() + kj * p_.d_model + h * p_.d_head;
        for (Index t = 0; t < p_.d_head; ++t) dvv[t] += wd * go[t];
      }
      const auto dscore = ops::scatter_row_softmax_backward<T>(w, rc.entry_row, n_, dw);
      for (std::size_t e = 0; e < ne; ++e) {
        const Index qi = rc.entry_row[e], kj = rc.entry_col[e];
        T* dqq = dq.data().data() + qi * p_.d_model + h * p_.d_head;
        T* dkk = dk.data().data() + kj * p_.d_model + h * p_.d_head;
        const T* qq = q_.data().data() + qi * p_.d_model + h * p_.d_head;
        const T* kk = k_.data().data() + kj * p_.d_model + h * p_.d_head;
        if (p_.kernel == AttentionKernel::softmax_dot) {
          const T gs = dscore[e] * scale;
          for (Index t = 0; t < p_.d_head; ++t) {
            dqq[t] += gs * kk[t];
            dkk[t] += gs * qq[t];
          }
        } else {
          const T gz = dscore[e] * (rc.pre_act[h][e] > T{0} ? T{1} : T(0.2));
          const T* as = p_.a_src->data().data() + h * p_.d_head;
          const T* ad = p_.a_dst->data().data() + h * p_.d_head;
          T* das = g.da_src.data().data() + h * p_.d_head;
          T* dad = g.da_dst.data().data() + h * p_.d_head;
          for (Index t = 0; t < p_.d_head; ++t) {
            dqq[t] += gz * as[t];
            das[t] += gz * qq[t];
            dkk[t] += gz * ad[t];
            dad[t] += gz * kk[t];
          }
        }
      }
    }
  }

  const Tensor<T>* x_ = nullptr;
  const SparseMask* mask_ = nullptr;
  MhaParams<T> p_;
  Index n_ = 0;
  Tensor<T> q_, k_, v_;
  std::vector<RegionCache> regions_;
};

// ---------------------------------------------------------------------------
// Stateless entry points

/// Dense computation of one region. Output covers the whole universe; rows
/// outside the region are zero.
template <typename T>
Tensor<T> dense_masked_mha(const Tensor<T>& x, const SparseMask& mask, const AttentionRegion& region,
                           const MhaParams<T>& p) {
  M3D_REQUIRE(p.kernel == AttentionKernel::softmax_dot, "dense attention supports the softmax-dot kernel only");
  AttentionPlan plan;
  plan.scheme = Scheme::dense;
  plan.regions.push_back(region);
  plan.regions.back().mode = RegionMode::dense;
  AttentionExpert<T> e;
  return e.forward(x, mask, plan, p);
}

template <typename T>
Tensor<T> sparse_mha(const Tensor<T>& x, const SparseMask& mask, const MhaParams<T>& p) {
  AttentionExpert<T> e;
  return e.forward(x, mask, make_plan(mask, Scheme::sparse, p.d_head, p.kernel), p);
}

template <typename T>
Tensor<T> dual_mha(const Tensor<T>& x, const SparseMask& mask, const MhaParams<T>& p) {
  AttentionExpert<T> e;
  return e.forward(x, mask, make_plan(mask, Scheme::dual, p.d_head, p.kernel), p);
}

template <typename T>
Tensor<T> run_scheme(const Tensor<T>& x, const SparseMask& mask, const MhaParams<T>& p, Scheme s) {
  AttentionExpert<T> e;
  return e.forward(x, mask, make_plan(mask, s, p.d_head, p.kernel), p);
}

}  // namespace m3d
