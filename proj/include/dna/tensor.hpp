// Dense row-major float tensors on Eigen storage.
//
// Tensor<Scalar> is the carrier for every intermediate quantity in the
// pipeline: images (B,C,H,W), sinograms (views, detectors), kernels and
// flat parameter blocks. The optional grad buffer holds accumulated
// cotangents for trainable tensors; it always matches the data shape.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dna/rng.hpp"

namespace dna {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline constexpr double kPi = 3.141592653589793238462643383279;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

[[noreturn]] inline void shape_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) shape_error(msg);
}

template <class Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using VecMap = Eigen::Map<Array>;
  using ConstVecMap = Eigen::Map<const Array>;

  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(Array::Zero(shape_numel(shape_))) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor from(Shape shape, std::initializer_list<Scalar> values) {
    Tensor t(std::move(shape));
    require(static_cast<Index>(values.size()) == t.numel(),
            "Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                shape_str(t.shape_));
    Index i = 0;
    for (Scalar v : values) t.data_[i++] = v;
    return t;
  }

  // value = mean + sigma * N(0,1); element index is the RNG counter.
  static Tensor randn(Shape shape, const Rng& rng, Scalar sigma = Scalar(1),
                      Scalar mean = Scalar(0)) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i)
      t.data_[i] = mean + sigma * static_cast<Scalar>(rng.normal(static_cast<std::uint64_t>(i)));
    return t;
  }

  static Tensor rand_uniform(Shape shape, const Rng& rng, Scalar lo = Scalar(0),
                             Scalar hi = Scalar(1)) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i)
      t.data_[i] = static_cast<Scalar>(rng.uniform(static_cast<std::uint64_t>(i), lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index numel() const { return data_.size(); }

  Index dim(int i) const {
    require(i >= 0 && i < rank(), "Tensor::dim: axis " + std::to_string(i) + " out of range for " +
                                      shape_str(shape_));
    return shape_[static_cast<std::size_t>(i)];
  }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index i, Index j) { return data_[i * shape_[1] + j]; }
  Scalar operator()(Index i, Index j) const { return data_[i * shape_[1] + j]; }
  Scalar& operator()(Index i, Index j, Index k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Scalar operator()(Index i, Index j, Index k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Scalar& operator()(Index i, Index j, Index k, Index l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  Scalar operator()(Index i, Index j, Index k, Index l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  // Trailing two axes viewed as a row-major matrix, offset in units of planes.
  MatrixMap plane(Index plane_index, Index rows, Index cols) {
    return MatrixMap(data_.data() + plane_index * rows * cols, rows, cols);
  }
  ConstMatrixMap plane(Index plane_index, Index rows, Index cols) const {
    return ConstMatrixMap(data_.data() + plane_index * rows * cols, rows, cols);
  }

  VecMap chunk(Index offset, Index n) { return VecMap(data_.data() + offset, n); }
  ConstVecMap chunk(Index offset, Index n) const {
    return ConstVecMap(data_.data() + offset, n);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(Shape shape) const {
    require(shape_numel(shape) == numel(), "Tensor::reshaped: cannot view " + shape_str(shape_) +
                                               " as " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool all_finite() const { return data_.isFinite().all(); }

  void require_finite(const std::string& what) const {
    if (!all_finite())
      throw std::runtime_error("non-finite values detected in " + what);
  }

  // --- gradient slot ----------------------------------------------------
  bool has_grad() const { return grad_.has_value(); }

  Array& grad() {
    if (!grad_) grad_ = Array::Zero(data_.size());
    return *grad_;
  }
  const Array& grad() const {
    require(grad_.has_value(), "Tensor::grad: no gradient buffer allocated");
    return *grad_;
  }

  void zero_grad() {
    if (grad_) grad_->setZero();
  }
  void drop_grad() { grad_.reset(); }

  void accumulate_grad(const Tensor& g) {
    require(same_shape(g), "accumulate_grad: shape " + shape_str(g.shape_) + " vs " +
                               shape_str(shape_));
    grad() += g.data_;
  }

 private:
  Shape shape_;
  Array data_;
  std::optional<Array> grad_;
};

template <class Scalar>
Scalar dot(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.numel() == b.numel(), "dot: size mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  return (a.array() * b.array()).sum();
}

template <class Scalar>
void check_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* where) {
  require(a.same_shape(b), std::string(where) + ": shape mismatch " + shape_str(a.shape()) +
                               " vs " + shape_str(b.shape()));
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace dna
