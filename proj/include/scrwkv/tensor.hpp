#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace scrwkv {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

// Thrown for any shape, range or configuration violation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown for unreadable/unwritable files and corrupt containers.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Index shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major N-d array. Image tensors are [B,C,H,W]; token tensors are
/// [B,N,C] with token n = h*W + w.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    values_ = Array::Zero(shape_numel(shape_));
  }

  Tensor(Shape shape, Array values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_numel(shape_))
      throw ShapeError("Tensor: " + std::to_string(values_.size()) +
                       " values do not fill shape " + shape_str(shape_));
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape),
               Eigen::Map<const Array>(values.begin(),
                                       static_cast<Index>(values.size()))) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.values_.setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) { return constant({1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  // Negative axes count from the back.
  Index dim(Index axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank())
      throw ShapeError("Tensor::dim: axis out of range for " + shape_str(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }

  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }
  std::span<Scalar> values() noexcept { return {data(), static_cast<std::size_t>(size())}; }
  std::span<const Scalar> values() const noexcept {
    return {data(), static_cast<std::size_t>(size())};
  }
  Array& array() noexcept { return values_; }
  const Array& array() const noexcept { return values_; }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar item() const {
    if (size() != 1) throw ShapeError("Tensor::item on non-scalar " + shape_str(shape_));
    return values_[0];
  }

  Tensor reshaped(Shape shape) const& {
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (shape_numel(shape) != size())
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    shape_ = std::move(shape);
    check_shape();
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    values_ += other.values_;
    return *this;
  }
  Tensor& operator-=(const Tensor& other) {
    require_same_shape(other, "-=");
    values_ -= other.values_;
    return *this;
  }
  Tensor& operator*=(Scalar s) {
    values_ *= s;
    return *this;
  }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (shape_ != other.shape_)
      throw ShapeError(std::string(what) + ": shape " + shape_str(shape_) + " vs " +
                       shape_str(other.shape_));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) return false;
    return std::equal(a.data(), a.data() + a.size(), b.data());
  }

 private:
  void check_shape() const {
    for (Index d : shape_)
      if (d < 1) throw ShapeError("Tensor: non-positive dimension in " + shape_str(shape_));
  }

  Shape shape_;
  Array values_;
};

template <typename Scalar>
Tensor<Scalar> operator+(Tensor<Scalar> a, const Tensor<Scalar>& b) {
  return a += b;
}
template <typename Scalar>
Tensor<Scalar> operator-(Tensor<Scalar> a, const Tensor<Scalar>& b) {
  return a -= b;
}

template <typename Scalar>
Scalar inner(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  a.require_same_shape(b, "inner");
  return (a.array() * b.array()).sum();
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  a.require_same_shape(b, "max_abs_diff");
  if (a.size() == 0) return Scalar(0);
  return (a.array() - b.array()).abs().maxCoeff();
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
template <typename Scalar>
Scalar max_rel_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                    Scalar floor = Scalar(1e-30)) {
  a.require_same_shape(b, "max_rel_diff");
  Scalar worst = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const Scalar den = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / den);
  }
  return worst;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.array().isFinite().all();
}

using Rng = std::mt19937_64;

template <typename Scalar>
Tensor<Scalar> uniform(Shape shape, Rng& rng, Scalar lo = Scalar(-1), Scalar hi = Scalar(1)) {
  Tensor<Scalar> t(std::move(shape));
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.values()) v = static_cast<Scalar>(dist(rng));
  return t;
}

template <typename Scalar>
Tensor<Scalar> normal(Shape shape, Rng& rng, Scalar stddev = Scalar(1)) {
  Tensor<Scalar> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  for (auto& v : t.values()) v = static_cast<Scalar>(dist(rng));
  return t;
}

// Normal samples redrawn until within two standard deviations.
template <typename Scalar>
Tensor<Scalar> truncated_normal(Shape shape, Rng& rng, Scalar stddev) {
  Tensor<Scalar> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.values()) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = static_cast<Scalar>(z * static_cast<double>(stddev));
  }
  return t;
}

}  // namespace scrwkv
