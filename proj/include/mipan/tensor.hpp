#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mipan {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T> struct dtype_code;
template <> struct dtype_code<float>  { static constexpr DType value = DType::f32; };
template <> struct dtype_code<double> { static constexpr DType value = DType::f64; };

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  if (s.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Dense row-major tensor. Extents are fixed at construction; all math that
// mutates values goes through data().
template <typename T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), T(0));
  }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    check_shape(shape);
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("tensor: data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const {
    if (axis >= shape_.size())
      throw std::invalid_argument("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    return shape_[axis];
  }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(const std::vector<std::size_t>& idx) { return data_[offset(idx)]; }
  const T& at(const std::vector<std::size_t>& idx) const { return data_[offset(idx)]; }
  T& operator[](std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  const T& operator[](std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  std::size_t offset(const std::vector<std::size_t>& idx) const {
    if (idx.size() != shape_.size())
      throw std::invalid_argument("tensor: index rank mismatch for " + shape_str(shape_));
    std::size_t off = 0, stride = 1;
    for (std::size_t i = shape_.size(); i-- > 0;) {
      if (idx[i] >= shape_[i])
        throw std::invalid_argument("tensor: index out of range on axis " + std::to_string(i));
      off += idx[i] * stride;
      stride *= shape_[i];
    }
    return off;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out = Tensor<U>(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

private:
  static void check_shape(const Shape& s) {
    if (s.empty()) throw std::invalid_argument("tensor: rank-0 shape not supported");
    for (std::size_t e : s)
      if (e == 0) throw std::invalid_argument("tensor: zero extent in " + shape_str(s));
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
inline void require_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite())
    throw std::runtime_error(std::string(op) + ": non-finite value in result");
}

}  // namespace mipan
