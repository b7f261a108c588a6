#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "svc/common.hpp"
#include "svc/random.hpp"

namespace svc {

// Dense row-major tensor. Rank is small (1-3) throughout the repo:
// sequences are [frames, channels], conv weights [taps, in, out].
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(static_cast<int64_t>(data.size()) == numel_of(shape), "tensor_shape",
            "tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      require(d >= 0, "tensor_shape", "negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  int rows() const { return rank() >= 1 ? shape[0] : 1; }
  int cols() const { return rank() >= 2 ? shape[1] : 1; }

  T& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  T* row(int r) { return data.data() + static_cast<size_t>(r) * cols(); }
  const T* row(int r) const { return data.data() + static_cast<size_t>(r) * cols(); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream ss;
    ss << "[";
    for (size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
    ss << "]";
    return ss.str();
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int> s, T v) {
    TensorT t(std::move(s));
    t.fill(v);
    return t;
  }

  // Uniform in [-a, a]; the usual fan-based init is built on top of this.
  static TensorT uniform(std::vector<int> s, T a, Rng& rng) {
    TensorT t(std::move(s));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-double(a), double(a)));
    return t;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename T>
inline bool all_finite(const TensorT<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
inline void check_finite(const TensorT<T>& t, const std::string& where) {
  if (!all_finite(t)) fail("non_finite", "non-finite values in " + where);
}

}  // namespace svc
