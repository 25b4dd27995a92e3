#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "medmerge/common.hpp"

namespace mm {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense row-major tensor over a single scalar type (f32 for training,
/// f64 for oracle tests).
template <class S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(Shape sh) : shape(std::move(sh)), data(shape_numel(shape), S(0)) {}
  Tensor(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
    require(static_cast<int64_t>(data.size()) == shape_numel(shape),
            "tensor: data length does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }
  static Tensor full(Shape sh, S v) {
    Tensor t(std::move(sh));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }
  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  S operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out(shape);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }

  using EigenMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  /// View the buffer as a rows x cols row-major matrix.
  EigenMap mat(int64_t rows, int64_t cols) {
    require(rows * cols == numel(), "tensor: matrix view size mismatch");
    return EigenMap(ptr(), rows, cols);
  }
  ConstEigenMap mat(int64_t rows, int64_t cols) const {
    require(rows * cols == numel(), "tensor: matrix view size mismatch");
    return ConstEigenMap(ptr(), rows, cols);
  }
};

using IntTensor = std::vector<int64_t>;

enum class Dtype { F32, F64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }
inline Dtype dtype_from_name(const std::string& s) {
  if (s == "f32") return Dtype::F32;
  if (s == "f64") return Dtype::F64;
  fail("unknown dtype: " + s);
}

/// Dtype-erased tensor for parameter trees and checkpoint files.
struct AnyTensor {
  std::variant<Tensor<float>, Tensor<double>> v;

  AnyTensor() : v(Tensor<float>{}) {}
  AnyTensor(Tensor<float> t) : v(std::move(t)) {}
  AnyTensor(Tensor<double> t) : v(std::move(t)) {}

  Dtype dtype() const { return v.index() == 0 ? Dtype::F32 : Dtype::F64; }
  const Shape& shape() const {
    return std::visit([](const auto& t) -> const Shape& { return t.shape; }, v);
  }
  int64_t numel() const {
    return std::visit([](const auto& t) { return t.numel(); }, v);
  }

  template <class S>
  const Tensor<S>& as() const {
    const auto* p = std::get_if<Tensor<S>>(&v);
    require(p != nullptr, "tensor dtype mismatch (wanted " +
                              std::string(std::is_same_v<S, float> ? "f32" : "f64") + ", have " +
                              dtype_name(dtype()) + ")");
    return *p;
  }
  template <class S>
  Tensor<S>& as() {
    auto* p = std::get_if<Tensor<S>>(&v);
    require(p != nullptr, "tensor dtype mismatch");
    return *p;
  }

  /// Convert to the requested scalar type, copying if needed.
  template <class S>
  Tensor<S> to() const {
    return std::visit([](const auto& t) { return t.template cast<S>(); }, v);
  }

  bool bit_equal(const AnyTensor& o) const {
    if (dtype() != o.dtype() || shape() != o.shape()) return false;
    return std::visit(
        [&](const auto& a) {
          const auto& b = std::get<std::decay_t<decltype(a)>>(o.v);
          return std::memcmp(a.ptr(), b.ptr(), a.data.size() * sizeof(a.data[0])) == 0;
        },
        v);
  }
};

/// Named hierarchy of tensors: all parameters and BN running statistics of
/// one model. std::map keeps iteration (and thus serialization) ordered.
using ParamTree = std::map<std::string, AnyTensor>;

inline bool trees_bit_equal(const ParamTree& a, const ParamTree& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !ia->second.bit_equal(ib->second)) return false;
  }
  return true;
}

template <class S>
ParamTree cast_tree(const ParamTree& src) {
  ParamTree out;
  for (const auto& [name, t] : src) out.emplace(name, AnyTensor(t.template to<S>()));
  return out;
}

}  // namespace mm
