#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <vector>

#include "echodet/core/common.hpp"

namespace echodet {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major n-d array with shared storage. Copies are shallow; use
// clone() for a deep copy. Rank 4 ([batch, channels, height, width]) is the
// common case throughout.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), numel_(shape_numel(shape_)) {
    ECHODET_CHECK(numel_ >= 0, "negative tensor size " << shape_str(shape_));
    data_ = std::shared_ptr<T[]>(new T[static_cast<size_t>(numel_)]());
  }

  static Tensor empty(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = shape_numel(t.shape_);
    t.data_ = std::shared_ptr<T[]>(new T[static_cast<size_t>(t.numel_)]);
    return t;
  }

  static Tensor full(Shape shape, T v) {
    Tensor t = empty(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor from(Shape shape, std::vector<T> values) {
    Tensor t = empty(std::move(shape));
    ECHODET_CHECK(static_cast<int64_t>(values.size()) == t.numel(),
                  "value count " << values.size() << " != " << shape_str(t.shape()));
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return numel_; }

  int64_t size(int i) const {
    if (i < 0) i += rank();
    ECHODET_CHECK(i >= 0 && i < rank(), "dim " << i << " out of range for " << shape_str(shape_));
    return shape_[i];
  }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }

  // rank-4 accessor
  T& at(int64_t b, int64_t c, int64_t y, int64_t x) {
    return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  const T& at(int64_t b, int64_t c, int64_t y, int64_t x) const {
    return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  void fill(T v) { std::fill(data(), data() + numel_, v); }

  Tensor clone() const {
    Tensor t = empty(shape_);
    std::memcpy(t.data(), data(), sizeof(T) * static_cast<size_t>(numel_));
    return t;
  }

  // shares storage
  Tensor reshaped(Shape shape) const {
    ECHODET_CHECK(shape_numel(shape) == numel_,
                  "reshape " << shape_str(shape_) << " -> " << shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> t = Tensor<U>::empty(shape_);
    for (int64_t i = 0; i < numel_; ++i) t[i] = static_cast<U>(data_[i]);
    return t;
  }

  bool all_finite() const {
    for (int64_t i = 0; i < numel_; ++i)
      if (!std::isfinite(static_cast<double>(data_[i]))) return false;
    return true;
  }

 private:
  Shape shape_;
  int64_t numel_ = 0;
  std::shared_ptr<T[]> data_;
};

template <class T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape();
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  ECHODET_CHECK(same_shape(a, b), "shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace echodet
