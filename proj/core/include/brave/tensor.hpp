#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace brave {

// Run-wide float width. f64 is used by gradient-check suites and
// reproducibility tests, f32 by ordinary training runs.
enum class Precision : uint8_t { f32 = 0, f64 = 1 };

const char* precision_name(Precision p);
Precision precision_from_name(const std::string& name);

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor holding either float or double data. The precision
// is a property of the whole run, so mixed-precision arithmetic never occurs;
// all element access widens to double at the API boundary.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Precision prec);  // zero-filled

  static Tensor scalar(double v, Precision prec);
  static Tensor from(Shape shape, const std::vector<double>& values, Precision prec);
  static Tensor full(Shape shape, double v, Precision prec);

  const Shape& shape() const { return shape_; }
  int64_t size() const { return size_; }
  int64_t dim(size_t i) const { return shape_[i]; }
  size_t rank() const { return shape_.size(); }
  Precision precision() const { return prec_; }
  bool empty() const { return size_ == 0; }

  double at(int64_t i) const;
  void set(int64_t i, double v);
  void fill(double v);

  template <typename T>
  std::span<T> data();
  template <typename T>
  std::span<const T> data() const;

  Tensor to(Precision target) const;
  std::vector<double> to_vector() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  bool bitwise_equal(const Tensor& other) const;

 private:
  Shape shape_;
  int64_t size_ = 0;
  Precision prec_ = Precision::f64;
  std::vector<float> f32_;
  std::vector<double> f64_;
};

template <>
inline std::span<float> Tensor::data<float>() {
  return {f32_.data(), f32_.size()};
}
template <>
inline std::span<double> Tensor::data<double>() {
  return {f64_.data(), f64_.size()};
}
template <>
inline std::span<const float> Tensor::data<float>() const {
  return {f32_.data(), f32_.size()};
}
template <>
inline std::span<const double> Tensor::data<double>() const {
  return {f64_.data(), f64_.size()};
}

// Calls f with a value of the active scalar type, e.g.
//   dispatch(prec, [&](auto tag) { using T = decltype(tag); ... });
template <typename F>
decltype(auto) dispatch(Precision p, F&& f) {
  if (p == Precision::f64) return f(double{});
  return f(float{});
}

}  // namespace brave
