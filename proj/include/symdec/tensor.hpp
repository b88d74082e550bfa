#ifndef SYMDEC_TENSOR_HPP
#define SYMDEC_TENSOR_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "symdec/errors.hpp"

namespace symdec {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major tensor (last axis fastest) backed by an Eigen column vector.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector::Constant(shape_size(shape_), fill);
  }

  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), Vector(Eigen::Map<const Vector>(values.begin(), Index(values.size())))) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  static Tensor randn(Shape shape, std::mt19937_64& rng, Scalar stddev = Scalar(1)) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = Scalar(dist(rng)) * stddev;
    return t;
  }

  static Tensor uniform(Shape shape, std::mt19937_64& rng, Scalar lo, Scalar hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist{double(lo), double(hi)};
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = Scalar(dist(rng));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  Index dim(int axis) const { return shape_.at(axis < 0 ? shape_.size() + axis : axis); }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  template <typename... Ix>
  Scalar& operator()(Ix... ix) {
    return data_[offset({Index(ix)...})];
  }
  template <typename... Ix>
  Scalar operator()(Ix... ix) const {
    return data_[offset({Index(ix)...})];
  }

  /// View as a row-major matrix; rows * cols must equal size().
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  /// First axis as rows, everything else flattened into columns.
  MatrixMap matrix() { return matrix(shape_.at(0), size() / shape_.at(0)); }
  ConstMatrixMap matrix() const { return matrix(shape_.at(0), size() / shape_.at(0)); }

  /// All elements as a single row, for broadcasting along matrix rows.
  Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> row() {
    return Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(data_.data(), size());
  }
  Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> row() const {
    return Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(data_.data(), size());
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  Index offset(std::initializer_list<Index> ix) const {
    Index off = 0;
    auto it = ix.begin();
    for (std::size_t a = 0; a < shape_.size(); ++a, ++it) off = off * shape_[a] + *it;
    return off;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    for (Index d : shape) {
      if (d <= 0) throw ShapeError("tensor shape entries must be positive, got " + shape_string(shape));
    }
  }
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not fit tensor " + shape_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  if (a.size() == 0) return Scalar(0);
  return (a.vec() - b.vec()).cwiseAbs().maxCoeff();
}

}  // namespace symdec

#endif  // SYMDEC_TENSOR_HPP
