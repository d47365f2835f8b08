// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "m3d/common.hpp"
#include "m3d/rng.hpp"

namespace m3d {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native order and must be little-endian");

/// Dense row-major array with an optional same-shape gradient buffer.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<Index> shape, T fill = T{0}) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(count(shape_)), fill);
  }

  Tensor(std::vector<Index> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    M3D_REQUIRE(static_cast<Index>(data_.size()) == count(shape_),
                "tensor data length ", data_.size(), " does not match shape product ", count(shape_));
  }

  static Tensor zeros(Index rows, Index cols) { return Tensor({rows, cols}); }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return static_cast<Index>(data_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }

  // 2-D view helpers. A rank-1 tensor is a single row.
  Index rows() const { return shape_.size() <= 1 ? 1 : shape_[0]; }
  Index cols() const {
    if (shape_.empty()) return 1;
    if (shape_.size() == 1) return shape_[0];
    return count(shape_) / shape_[0];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  std::span<T> row(Index r) {
    return std::span<T>(data_).subspan(static_cast<std::size_t>(r * cols()),
                                       static_cast<std::size_t>(cols()));
  }
  std::span<const T> row(Index r) const {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(r * cols()),
                                             static_cast<std::size_t>(cols()));
  }

  T& operator()(Index r, Index c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  const T& operator()(Index r, Index c) const {
    return data_[static_cast<std::size_t>(r * cols() + c)];
  }
  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<T> grad() {
    ensure_grad();
    return grad_;
  }
  std::span<const T> grad() const { return grad_; }
  void ensure_grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), T{0});
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T{0}); }
  void drop_grad() { grad_.clear(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static Index count(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) {
      M3D_REQUIRE(d >= 0, "negative tensor dimension ", d);
      n *= d;
    }
    return n;
  }

 private:
  std::vector<Index> shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

enum class InitKind { zeros, ones, glorot_uniform, identity };

inline const char* to_string(InitKind k) {
  switch (k) {
    case InitKind::zeros: return "zeros";
    case InitKind::ones: return "ones";
    case InitKind::glorot_uniform: return "uniform-glorot";
    case InitKind::identity: return "identity";
  }
  return "?";
}

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) {
    return "f32";
  } else {
    static_assert(std::is_same_v<T, double>, "only f32/f64 tensors are supported");
    return "f64";
  }
}

/// Named parameters with deterministic initialization. Iteration order is
/// lexicographic by name, which also fixes the checkpoint layout.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    Tensor<T> tensor;
    InitKind init = InitKind::zeros;
  };

  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Registers and initializes a parameter. Initialization depends only on
  /// (seed, name), not on registration order.
  Tensor<T>& add(const std::string& name, std::vector<Index> shape, InitKind init) {
    M3D_REQUIRE(!entries_.contains(name), "duplicate parameter name '", name, "'");
    Tensor<T> t(shape);
    initialize(t, name, init);
    auto [it, _] = entries_.emplace(name, Entry{std::move(t), init});
    return it->second.tensor;
  }

  bool contains(const std::string& name) const { return entries_.contains(name); }

  Tensor<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    M3D_REQUIRE(it != entries_.end(), "unknown parameter '", name, "'");
    return it->second.tensor;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    M3D_REQUIRE(it != entries_.end(), "unknown parameter '", name, "'");
    return it->second.tensor;
  }

  InitKind init_of(const std::string& name) const { return entries_.at(name).init; }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  Index total_size() const {
    Index n = 0;
    for (const auto& [_, e] : entries_) n += e.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, e] : entries_) {
      e.tensor.ensure_grad();
      e.tensor.zero_grad();
    }
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out(seed_);
    for (const auto& [name, e] : entries_) {
      auto& t = out.add(name, e.tensor.shape(), e.init);
      t = e.tensor.template cast<U>();
    }
    return out;
  }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (auto ia = a.entries_.begin(), ib = b.entries_.begin(); ia != a.entries_.end(); ++ia, ++ib) {
      if (ia->first != ib->first || !(ia->second.tensor == ib->second.tensor)) return false;
    }
    return true;
  }

 private:
  void initialize(Tensor<T>& t, const std::string& name, InitKind init) const {
    switch (init) {
      case InitKind::zeros: t.fill(T{0}); break;
      case InitKind::ones: t.fill(T{1}); break;
      case InitKind::identity: {
        M3D_REQUIRE(t.rank() == 2 && t.dim(0) == t.dim(1), "identity init needs a square matrix: ", name);
        t.fill(T{0});
        for (Index i = 0; i < t.dim(0); ++i) t(i, i) = T{1};
        break;
      }
      case InitKind::glorot_uniform: {
        const double fan_in = static_cast<double>(t.rows());
        const double fan_out = static_cast<double>(t.cols());
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        CounterRng rng(seed_, stream_id({hash_name(name), 0x1417}));
        for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
        break;
      }
    }
  }

  std::uint64_t seed_;
  std::map<std::string, Entry> entries_;
};

// Checkpoint: one JSON manifest line, then the raw little-endian blobs in
// manifest order. Offsets are relative to the first byte after the newline.

template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::string& path) {
  nlohmann::json manifest;
  manifest["format"] = "m3d-checkpoint";
  manifest["version"] = 1;
  manifest["seed"] = store.seed();
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, e] : store.entries()) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(e.tensor.size()) * sizeof(T);
    tensors.push_back({{"name", name},
                       {"shape", e.tensor.shape()},
                       {"dtype", dtype_name<T>()},
                       {"init", to_string(e.init)},
                       {"offset", offset},
                       {"length", bytes}});
    offset += bytes;
  }
  manifest["tensors"] = tensors;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_compute("cannot open checkpoint for writing: ", path);
  out << manifest.dump() << '\n';
  for (const auto& [_, e] : store.entries()) {
    out.write(reinterpret_cast<const char*>(e.tensor.data().data()),
              static_cast<std::streamsize>(e.tensor.size() * sizeof(T)));
  }
  if (!out) fail_compute("write failed for checkpoint ", path);
}

inline InitKind parse_init_kind(const std::string& s) {
  if (s == "zeros") return InitKind::zeros;
  if (s == "ones") return InitKind::ones;
  if (s == "uniform-glorot") return InitKind::glorot_uniform;
  if (s == "identity") return InitKind::identity;
  fail_validation("unknown init kind '", s, "'");
}

/// Loads a checkpoint written with the same dtype.
template <typename T>
ParameterStore<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("cannot open checkpoint ", path);
  std::string header;
  std::getline(in, header);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    fail_validation("malformed checkpoint manifest in ", path, ": ", e.what());
  }
  M3D_REQUIRE(manifest.value("format", "") == "m3d-checkpoint", "not an m3d checkpoint: ", path);
  const auto data_start = in.tellg();
  ParameterStore<T> store(manifest.value("seed", std::uint64_t{0}));
  for (const auto& t : manifest.at("tensors")) {
    const std::string dtype = t.at("dtype");
    M3D_REQUIRE(dtype == dtype_name<T>(), "checkpoint dtype ", dtype, " does not match ", dtype_name<T>());
    auto& tensor = store.add(t.at("name"), t.at("shape").get<std::vector<Index>>(),
                             parse_init_kind(t.value("init", "zeros")));
    const std::uint64_t length = t.at("length");
    M3D_REQUIRE(length == static_cast<std::uint64_t>(tensor.size()) * sizeof(T),
                "blob length mismatch for ", t.at("name").get<std::string>());
    in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(tensor.data().data()), static_cast<std::streamsize>(length));
    if (!in) fail_validation("truncated checkpoint ", path);
  }
  return store;
}

}  // namespace m3d
