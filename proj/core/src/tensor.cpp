#include "brave/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "brave/error.hpp"

namespace brave {

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_name(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + name + "' (expected f32 or f64)");
}

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Precision prec) : shape_(std::move(shape)), prec_(prec) {
  size_ = shape_size(shape_);
  if (size_ < 0) throw NumericError("negative tensor extent in shape " + shape_str(shape_));
  if (prec_ == Precision::f32) {
    f32_.assign(static_cast<size_t>(size_), 0.0f);
  } else {
    f64_.assign(static_cast<size_t>(size_), 0.0);
  }
}

Tensor Tensor::scalar(double v, Precision prec) {
  Tensor t(Shape{}, prec);
  t.set(0, v);
  return t;
}

Tensor Tensor::from(Shape shape, const std::vector<double>& values, Precision prec) {
  Tensor t(std::move(shape), prec);
  if (static_cast<int64_t>(values.size()) != t.size_) {
    throw NumericError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_str(t.shape_));
  }
  for (int64_t i = 0; i < t.size_; ++i) t.set(i, values[static_cast<size_t>(i)]);
  return t;
}

Tensor Tensor::full(Shape shape, double v, Precision prec) {
  Tensor t(std::move(shape), prec);
  t.fill(v);
  return t;
}

double Tensor::at(int64_t i) const {
  return prec_ == Precision::f32 ? static_cast<double>(f32_[static_cast<size_t>(i)])
                                 : f64_[static_cast<size_t>(i)];
}

void Tensor::set(int64_t i, double v) {
  if (prec_ == Precision::f32) {
    f32_[static_cast<size_t>(i)] = static_cast<float>(v);
  } else {
    f64_[static_cast<size_t>(i)] = v;
  }
}

void Tensor::fill(double v) {
  if (prec_ == Precision::f32) {
    f32_.assign(f32_.size(), static_cast<float>(v));
  } else {
    f64_.assign(f64_.size(), v);
  }
}

Tensor Tensor::to(Precision target) const {
  if (target == prec_) return *this;
  Tensor t(shape_, target);
  for (int64_t i = 0; i < size_; ++i) t.set(i, at(i));
  return t;
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> v(static_cast<size_t>(size_));
  for (int64_t i = 0; i < size_; ++i) v[static_cast<size_t>(i)] = at(i);
  return v;
}

bool Tensor::all_finite() const {
  for (int64_t i = 0; i < size_; ++i) {
    if (!std::isfinite(at(i))) return false;
  }
  return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || prec_ != other.prec_) return false;
  if (prec_ == Precision::f32) {
    return f32_.empty() ? other.f32_.empty()
                        : std::memcmp(f32_.data(), other.f32_.data(), f32_.size() * sizeof(float)) == 0;
  }
  return f64_.empty() ? other.f64_.empty()
                      : std::memcmp(f64_.data(), other.f64_.data(), f64_.size() * sizeof(double)) == 0;
}

}  // namespace brave
