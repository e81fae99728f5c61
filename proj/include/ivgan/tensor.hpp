#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivgan/rng.hpp"

namespace ivgan {

// Extents of a dense tensor. Video batches follow the fixed row-major
// layout (N, T, H, W, C).
using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

inline void check_shape_valid(const Shape& shape) {
  for (int64_t d : shape)
    if (d < 1)
      throw std::invalid_argument("invalid tensor shape " + shape_str(shape));
}

// Dense row-major N-dimensional array. T is float for training and double
// for gradient-check mode.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_shape_valid(shape_);
    data_.assign(size_t(ivgan::numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape_valid(shape_);
    if (int64_t(data_.size()) != ivgan::numel(shape_))
      throw std::invalid_argument("data size " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int64_t ndim() const { return int64_t(shape_.size()); }
  int64_t numel() const { return int64_t(data_.size()); }
  int64_t extent(int64_t axis) const { return shape_[size_t(axis)]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](int64_t i) { return data_[size_t(i)]; }
  const T& operator[](int64_t i) const { return data_[size_t(i)]; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

namespace detail {

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
}

template <typename T, typename F>
Tensor<T> unary(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i]);
  return out;
}

// b must either match a's shape or be a scalar (numel 1).
template <typename T, typename F>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, F f, const char* op) {
  if (b.numel() == 1) {
    T bv = b[0];
    return unary(a, [&](T x) { return f(x, bv); });
  }
  check_same_shape(a.shape(), b.shape(), op);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x + y; }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x * y; }, "mul");
}

// strict: division by an exact zero is an error
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b,
      [](T x, T y) {
        if (y == T(0)) throw std::domain_error("div: division by zero");
        return x / y;
      },
      "div");
}

// a/b with the convention 0 where b == 0 (used by norm backward at 0)
template <typename T>
Tensor<T> zero_guarded_div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return y == T(0) ? T(0) : x / y; }, "zgdiv");
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return -x; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return detail::unary(a, [slope](T x) { return x > T(0) ? x : slope * x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::sqrt(x); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return x * x; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x + s; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x * s; });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw std::invalid_argument("matmul: expects 2-d operands, got " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  if (a.extent(1) != b.extent(0))
    throw std::invalid_argument("matmul: inner extent mismatch " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> out({m, n});
  using Mat =
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> ma(a.data(), m, k);
  Eigen::Map<const Mat> mb(b.data(), k, n);
  Eigen::Map<Mat> mo(out.data(), m, n);
  mo.noalias() = ma * mb;
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace detail {

inline Shape reduced_shape(const Shape& in, const std::vector<int64_t>& axes,
                           bool keepdims) {
  std::vector<bool> red(in.size(), false);
  for (int64_t ax : axes) {
    if (ax < 0 || ax >= int64_t(in.size()))
      throw std::invalid_argument("reduce: invalid axis " + std::to_string(ax) +
                                  " for shape " + shape_str(in));
    red[size_t(ax)] = true;
  }
  Shape out;
  for (size_t i = 0; i < in.size(); ++i) {
    if (red[i]) {
      if (keepdims) out.push_back(1);
    } else {
      out.push_back(in[i]);
    }
  }
  if (out.empty()) out.push_back(1);
  return out;
}

inline std::vector<int64_t> row_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

}  // namespace detail

// Sum over the named axes. Reduction order is the flat row-major element
// order, so results are reproducible.
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, const std::vector<int64_t>& axes,
                     bool keepdims = false) {
  const Shape& in = a.shape();
  Shape out_shape = detail::reduced_shape(in, axes, keepdims);
  std::vector<bool> red(in.size(), false);
  for (int64_t ax : axes) red[size_t(ax)] = true;

  // stride of each input axis within the output buffer (0 if reduced)
  Shape kept = in;
  for (size_t i = 0; i < in.size(); ++i)
    if (red[i]) kept[i] = 1;
  auto kept_strides = detail::row_strides(kept);
  std::vector<int64_t> out_stride(in.size());
  for (size_t i = 0; i < in.size(); ++i)
    out_stride[i] = red[i] ? 0 : kept_strides[i];

  Tensor<T> out(out_shape, T(0));
  std::vector<int64_t> idx(in.size(), 0);
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t flat = 0; flat < a.numel(); ++flat) {
    int64_t o = 0;
    for (size_t i = 0; i < in.size(); ++i) o += idx[i] * out_stride[i];
    po[o] += pa[flat];
    for (size_t i = in.size(); i-- > 0;) {
      if (++idx[i] < in[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, const std::vector<int64_t>& axes,
                      bool keepdims = false) {
  int64_t count = 1;
  for (int64_t ax : axes) {
    if (ax < 0 || ax >= a.ndim())
      throw std::invalid_argument("reduce: invalid axis " + std::to_string(ax));
    count *= a.extent(ax);
  }
  return scale(reduce_sum(a, axes, keepdims), T(1) / T(count));
}

template <typename T>
Tensor<T> reduce_max(const Tensor<T>& a, const std::vector<int64_t>& axes,
                     bool keepdims = false) {
  const Shape& in = a.shape();
  Shape out_shape = detail::reduced_shape(in, axes, keepdims);
  std::vector<bool> red(in.size(), false);
  for (int64_t ax : axes) red[size_t(ax)] = true;
  Shape kept = in;
  for (size_t i = 0; i < in.size(); ++i)
    if (red[i]) kept[i] = 1;
  auto kept_strides = detail::row_strides(kept);
  std::vector<int64_t> out_stride(in.size());
  for (size_t i = 0; i < in.size(); ++i)
    out_stride[i] = red[i] ? 0 : kept_strides[i];

  Tensor<T> out(out_shape, std::numeric_limits<T>::lowest());
  std::vector<int64_t> idx(in.size(), 0);
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t flat = 0; flat < a.numel(); ++flat) {
    int64_t o = 0;
    for (size_t i = 0; i < in.size(); ++i) o += idx[i] * out_stride[i];
    po[o] = std::max(po[o], pa[flat]);
    for (size_t i = in.size(); i-- > 0;) {
      if (++idx[i] < in[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

template <typename T>
T sum_all(const Tensor<T>& a) {
  T acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
  return acc;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  check_shape_valid(shape);
  if (numel(shape) != a.numel())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(a.shape()) + " -> " +
                                shape_str(shape));
  return Tensor<T>(shape, std::vector<T>(a.data(), a.data() + a.numel()));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, const std::vector<int64_t>& perm) {
  if (int64_t(perm.size()) != a.ndim())
    throw std::invalid_argument("transpose: bad permutation size");
  std::vector<bool> seen(perm.size(), false);
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    int64_t p = perm[i];
    if (p < 0 || p >= a.ndim() || seen[size_t(p)])
      throw std::invalid_argument("transpose: invalid permutation");
    seen[size_t(p)] = true;
    out_shape[i] = a.extent(p);
  }
  Tensor<T> out(out_shape);
  auto in_strides = detail::row_strides(a.shape());
  std::vector<int64_t> src_stride(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) src_stride[i] = in_strides[size_t(perm[i])];
  std::vector<int64_t> idx(perm.size(), 0);
  T* po = out.data();
  const T* pa = a.data();
  for (int64_t flat = 0; flat < out.numel(); ++flat) {
    int64_t src = 0;
    for (size_t i = 0; i < perm.size(); ++i) src += idx[i] * src_stride[i];
    po[flat] = pa[src];
    for (size_t i = perm.size(); i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, const std::vector<int64_t>& offsets,
                const Shape& extents) {
  if (int64_t(offsets.size()) != a.ndim() || int64_t(extents.size()) != a.ndim())
    throw std::invalid_argument("slice: spec rank mismatch");
  for (int64_t i = 0; i < a.ndim(); ++i) {
    if (offsets[size_t(i)] < 0 || extents[size_t(i)] < 1 ||
        offsets[size_t(i)] + extents[size_t(i)] > a.extent(i))
      throw std::invalid_argument(
          "slice: out of bounds on axis " + std::to_string(i) + " for shape " +
          shape_str(a.shape()));
  }
  Tensor<T> out(extents);
  auto in_strides = detail::row_strides(a.shape());
  std::vector<int64_t> idx(extents.size(), 0);
  T* po = out.data();
  const T* pa = a.data();
  for (int64_t flat = 0; flat < out.numel(); ++flat) {
    int64_t src = 0;
    for (size_t i = 0; i < extents.size(); ++i)
      src += (idx[i] + offsets[i]) * in_strides[i];
    po[flat] = pa[src];
    for (size_t i = extents.size(); i-- > 0;) {
      if (++idx[i] < extents[size_t(i)]) break;
      idx[i] = 0;
    }
  }
  return out;
}

template <typename T>
Tensor<T> pad(const Tensor<T>& a, const std::vector<int64_t>& before,
              const std::vector<int64_t>& after, T value = T(0)) {
  if (int64_t(before.size()) != a.ndim() || int64_t(after.size()) != a.ndim())
    throw std::invalid_argument("pad: spec rank mismatch");
  Shape out_shape(a.shape());
  for (size_t i = 0; i < out_shape.size(); ++i) {
    if (before[i] < 0 || after[i] < 0)
      throw std::invalid_argument("pad: negative padding");
    out_shape[i] += before[i] + after[i];
  }
  Tensor<T> out(out_shape, value);
  auto out_strides = detail::row_strides(out_shape);
  std::vector<int64_t> idx(out_shape.size(), 0);
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t flat = 0; flat < a.numel(); ++flat) {
    int64_t dst = 0;
    for (size_t i = 0; i < out_shape.size(); ++i)
      dst += (idx[i] + before[i]) * out_strides[i];
    po[dst] = pa[flat];
    for (size_t i = out_shape.size(); i-- > 0;) {
      if (++idx[i] < a.shape()[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

// Expand a tensor to a larger shape. Source extents must equal the target
// extent or 1 per axis; a 1-element source broadcasts to any shape.
template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& shape) {
  if (a.numel() == 1) {
    return Tensor<T>(shape, std::vector<T>(size_t(numel(shape)), a[0]));
  }
  if (a.ndim() != int64_t(shape.size()))
    throw std::invalid_argument("broadcast_to: rank mismatch " +
                                shape_str(a.shape()) + " -> " +
                                shape_str(shape));
  auto in_strides = detail::row_strides(a.shape());
  std::vector<int64_t> src_stride(shape.size());
  for (size_t i = 0; i < shape.size(); ++i) {
    if (a.shape()[i] == shape[i]) {
      src_stride[i] = in_strides[i];
    } else if (a.shape()[i] == 1) {
      src_stride[i] = 0;
    } else {
      throw std::invalid_argument("broadcast_to: incompatible " +
                                  shape_str(a.shape()) + " -> " +
                                  shape_str(shape));
    }
  }
  Tensor<T> out(shape);
  std::vector<int64_t> idx(shape.size(), 0);
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t flat = 0; flat < out.numel(); ++flat) {
    int64_t src = 0;
    for (size_t i = 0; i < shape.size(); ++i) src += idx[i] * src_stride[i];
    po[flat] = pa[src];
    for (size_t i = shape.size(); i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// random fills
// ---------------------------------------------------------------------------

enum class Dist { Normal01, Uniform01, Uniform };

// Deterministic given (dist, shape, seed): samples are drawn in flat order
// from a SplitMix64 stream and computed in double before narrowing.
template <typename T>
Tensor<T> rng_fill(Dist dist, const Shape& shape, uint64_t seed,
                   double lo = 0.0, double hi = 1.0) {
  Tensor<T> out(shape);
  Rng rng(seed);
  for (int64_t i = 0; i < out.numel(); ++i) {
    switch (dist) {
      case Dist::Normal01: out[i] = T(rng.normal()); break;
      case Dist::Uniform01: out[i] = T(rng.uniform()); break;
      case Dist::Uniform: out[i] = T(rng.uniform(lo, hi)); break;
    }
  }
  return out;
}

}  // namespace ivgan
