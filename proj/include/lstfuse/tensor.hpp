#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace lstfuse {

using Index = Eigen::Index;

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using PlaneMap = Eigen::Map<Plane<Scalar>>;

template <typename Scalar>
using ConstPlaneMap = Eigen::Map<const Plane<Scalar>>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Batch x channels x height x width.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index size() const { return n * c * h * w; }
  Index plane() const { return h * w; }
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

/// Dense NCHW tensor, contiguous row-major planes.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Array::Constant(shape.size(), fill)) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

  const Shape& shape() const { return shape_; }
  Index size() const { return shape_.size(); }
  bool empty() const { return shape_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) { return data_[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return data_[offset(n, c, y, x)]; }

  Scalar* plane_data(Index n, Index c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const Scalar* plane_data(Index n, Index c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }
  PlaneMap<Scalar> plane(Index n, Index c) { return PlaneMap<Scalar>(plane_data(n, c), shape_.h, shape_.w); }
  ConstPlaneMap<Scalar> plane(Index n, Index c) const {
    return ConstPlaneMap<Scalar>(plane_data(n, c), shape_.h, shape_.w);
  }

  // Channel-major view of one sample: rows = channels, cols = pixels.
  Eigen::Map<RowMatrix<Scalar>> sample_matrix(Index n) {
    return Eigen::Map<RowMatrix<Scalar>>(plane_data(n, 0), shape_.c, shape_.plane());
  }
  Eigen::Map<const RowMatrix<Scalar>> sample_matrix(Index n) const {
    return Eigen::Map<const RowMatrix<Scalar>>(plane_data(n, 0), shape_.c, shape_.plane());
  }

  Tensor reshaped(Shape s) const {
    require_shape(s.size() == size(), "reshape " + shape_.str() + " -> " + s.str());
    Tensor out;
    out.shape_ = s;
    out.data_ = data_;
    return out;
  }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.array() = data_.template cast<Other>();
    return out;
  }

 private:
  Index offset(Index n, Index c, Index y, Index x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  Array data_;
};

}  // namespace lstfuse
