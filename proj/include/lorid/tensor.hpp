#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lorid {

using Shape = std::vector<std::size_t>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Dense n-way real array. Values are stored row-major: the last index
/// varies fastest.
template <typename Scalar>
class Tensor {
 public:
  using Storage = VectorX<Scalar>;

  Tensor() : Tensor(Shape{1}) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Storage::Zero(static_cast<Eigen::Index>(shape_size(shape_)));
  }

  Tensor(Shape shape, Storage data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (static_cast<std::size_t>(data_.size()) != shape_size(shape_))
      throw std::invalid_argument("tensor data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " +
                                  shape_string(shape_));
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape),
               Eigen::Map<const Storage>(values.begin(),
                                         static_cast<Eigen::Index>(values.size()))
                   .eval()) {}

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }

  const Storage& values() const { return data_; }
  Storage& values() { return data_; }

  Scalar operator[](std::size_t flat) const { return data_[static_cast<Eigen::Index>(flat)]; }
  Scalar& operator[](std::size_t flat) { return data_[static_cast<Eigen::Index>(flat)]; }

  Scalar operator()(std::initializer_list<std::size_t> index) const {
    return data_[static_cast<Eigen::Index>(offset(index))];
  }
  Scalar& operator()(std::initializer_list<std::size_t> index) {
    return data_[static_cast<Eigen::Index>(offset(index))];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw std::invalid_argument("cannot reshape " + shape_string(shape_) +
                                  " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other);
    data_ += other.data_;
    return *this;
  }
  Tensor& operator-=(const Tensor& other) {
    require_same_shape(other);
    data_ -= other.data_;
    return *this;
  }
  Tensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, Scalar s) { return a *= s; }
  friend Tensor operator*(Scalar s, Tensor a) { return a *= s; }

  void require_same_shape(const Tensor& other) const {
    if (shape_ != other.shape_)
      throw std::invalid_argument("shape mismatch: " + shape_string(shape_) +
                                  " vs " + shape_string(other.shape_));
  }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor order must be >= 1");
    for (auto d : shape)
      if (d == 0) throw std::invalid_argument("tensor dims must be >= 1");
  }

  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size())
      throw std::out_of_range("index order does not match tensor order");
    std::size_t flat = 0;
    std::size_t mode = 0;
    for (auto i : index) {
      if (i >= shape_[mode]) throw std::out_of_range("tensor index out of range");
      flat = flat * shape_[mode] + i;
      ++mode;
    }
    return flat;
  }

  Shape shape_;
  Storage data_;
};

using Tensord = Tensor<double>;
using Matrixd = MatrixX<double>;
using Vectord = VectorX<double>;

namespace detail {

// Row-major tensor viewed around `mode` as (outer, shape[mode], inner).
struct ModeSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline ModeSplit split_at(const Shape& shape, std::size_t mode) {
  if (mode >= shape.size())
    throw std::out_of_range("mode " + std::to_string(mode) +
                            " out of range for order " +
                            std::to_string(shape.size()));
  ModeSplit s;
  for (std::size_t k = 0; k < mode; ++k) s.outer *= shape[k];
  s.extent = shape[mode];
  for (std::size_t k = mode + 1; k < shape.size(); ++k) s.inner *= shape[k];
  return s;
}

template <typename Scalar>
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

/// Mode-n matricization. Row i collects every entry whose mode-n index is i.
/// Columns enumerate the remaining indices in their natural row-major order
/// (earlier modes major, later modes minor), so column = a * inner + b where
/// a indexes the modes before n and b the modes after it. fold() inverts it.
template <typename Scalar>
MatrixX<Scalar> unfold(const Tensor<Scalar>& x, std::size_t mode) {
  const auto s = detail::split_at(x.shape(), mode);
  MatrixX<Scalar> m(s.extent, s.outer * s.inner);
  const Scalar* src = x.values().data();
  for (std::size_t a = 0; a < s.outer; ++a) {
    detail::ConstRowMajorMap<Scalar> slab(src + a * s.extent * s.inner,
                                          s.extent, s.inner);
    m.middleCols(a * s.inner, s.inner) = slab;
  }
  return m;
}

template <typename Scalar, typename Derived>
Tensor<Scalar> fold_impl(const Eigen::MatrixBase<Derived>& m, std::size_t mode,
                         const Shape& shape) {
  const auto s = detail::split_at(shape, mode);
  if (static_cast<std::size_t>(m.rows()) != s.extent ||
      static_cast<std::size_t>(m.cols()) != s.outer * s.inner)
    throw std::invalid_argument("fold: matrix is " + std::to_string(m.rows()) +
                                "x" + std::to_string(m.cols()) +
                                ", inconsistent with shape " +
                                shape_string(shape) + " at mode " +
                                std::to_string(mode));
  Tensor<Scalar> out(shape);
  Scalar* dst = out.values().data();
  for (std::size_t a = 0; a < s.outer; ++a) {
    detail::RowMajorMap<Scalar> slab(dst + a * s.extent * s.inner, s.extent,
                                     s.inner);
    slab = m.middleCols(a * s.inner, s.inner);
  }
  return out;
}

/// Inverse of unfold().
template <typename Derived>
Tensor<typename Derived::Scalar> fold(const Eigen::MatrixBase<Derived>& m,
                                      std::size_t mode, const Shape& shape) {
  return fold_impl<typename Derived::Scalar>(m, mode, shape);
}

/// x ×_mode u: contracts mode `mode` of x with the columns of u.
/// The result has shape[mode] replaced by u.rows().
template <typename Scalar, typename Derived>
Tensor<Scalar> mode_product(const Tensor<Scalar>& x,
                            const Eigen::MatrixBase<Derived>& u,
                            std::size_t mode) {
  const auto s = detail::split_at(x.shape(), mode);
  if (static_cast<std::size_t>(u.cols()) != s.extent)
    throw std::invalid_argument("mode_product: factor has " +
                                std::to_string(u.cols()) +
                                " columns, tensor mode " + std::to_string(mode) +
                                " has extent " + std::to_string(s.extent));
  Shape out_shape = x.shape();
  out_shape[mode] = static_cast<std::size_t>(u.rows());
  Tensor<Scalar> out(out_shape);
  const MatrixX<Scalar> factor = u;
  const Scalar* src = x.values().data();
  Scalar* dst = out.values().data();
  const auto rows = static_cast<std::size_t>(u.rows());
  for (std::size_t a = 0; a < s.outer; ++a) {
    detail::ConstRowMajorMap<Scalar> in(src + a * s.extent * s.inner, s.extent,
                                        s.inner);
    detail::RowMajorMap<Scalar> res(dst + a * rows * s.inner, rows, s.inner);
    res.noalias() = factor * in;
  }
  return out;
}

template <typename Scalar>
Scalar squared_norm(const Tensor<Scalar>& x) {
  return x.values().squaredNorm();
}

template <typename Scalar>
Scalar frobenius_norm(const Tensor<Scalar>& x) {
  return x.values().norm();
}

/// l2 norm of the flattened tensor; identical to the Frobenius norm.
template <typename Scalar>
Scalar l2_norm(const Tensor<Scalar>& x) {
  return frobenius_norm(x);
}

template <typename Scalar>
Scalar linf_norm(const Tensor<Scalar>& x) {
  return x.size() ? x.values().cwiseAbs().maxCoeff() : Scalar(0);
}

template <typename Scalar>
Scalar distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  a.require_same_shape(b);
  return (a.values() - b.values()).norm();
}

/// Mean of squared entrywise differences.
template <typename Scalar>
Scalar mse(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  a.require_same_shape(b);
  return (a.values() - b.values()).squaredNorm() / static_cast<Scalar>(a.size());
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& x) {
  return x.values().allFinite();
}

}  // namespace lorid
