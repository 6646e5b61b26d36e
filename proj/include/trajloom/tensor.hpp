#pragma once

#include <numeric>
#include <vector>

#include "trajloom/core.hpp"

namespace trajloom {

// N-d row-major array. Used for file payloads and latent blocks; the
// differentiable code works on 2-d views of the same buffer.
template <typename Scalar>
class Tensor {
 public:
  using Shape = std::vector<Index>;

  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(count(shape_))) {}
  Tensor(Shape shape, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) throw ShapeError("tensor: data length does not match shape");
  }

  static Index count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<Index>());
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  Index dim(std::size_t i) const { return shape_.at(i); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& flat() { return data_; }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& flat() const { return data_; }

  // View the buffer as rows x cols, row-major.
  Eigen::Map<RowMatrix<Scalar>> matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return {data_.data(), rows, cols};
  }
  Eigen::Map<const RowMatrix<Scalar>> matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return {data_.data(), rows, cols};
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  void check_view(Index rows, Index cols) const {
    if (rows * cols != data_.size())
      throw ShapeError("tensor view " + shape_str(rows, cols) + " over " + std::to_string(data_.size()) + " values");
  }

  Shape shape_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> data_;
};

using Tensord = Tensor<double>;
using Tensorf = Tensor<float>;

}  // namespace trajloom
