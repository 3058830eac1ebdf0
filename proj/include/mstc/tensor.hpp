#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mstc {

/// NCHW extent of a dense tensor. Vectors and scalars use trailing 1s.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  size_t numel() const {
    return static_cast<size_t>(n) * static_cast<size_t>(c) * static_cast<size_t>(h) *
           static_cast<size_t>(w);
  }
  size_t plane() const { return static_cast<size_t>(h) * static_cast<size_t>(w); }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require_shape(data_.size() == shape_.numel(), "tensor data does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  size_t index(int n, int c, int h, int w) const {
    assert(n >= 0 && n < shape_.n && c >= 0 && c < shape_.c && h >= 0 && h < shape_.h && w >= 0 &&
           w < shape_.w);
    return ((static_cast<size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  /// Pointer to the (n, c) plane.
  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same storage, new extent. Element count must match.
  Tensor reshaped(Shape s) const {
    require_shape(s.numel() == shape_.numel(), "reshape " + shape_.str() + " -> " + s.str());
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) v[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(v));
  }

  Tensor& operator+=(const Tensor& o) {
    require_shape(o.shape_ == shape_, "accumulate " + o.shape_.str() + " into " + shape_.str());
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "max_abs_diff shape mismatch");
  T m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace mstc
