#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace trajloom {

using Index = Eigen::Index;

// Row-major dynamic matrix; all token x feature blocks use this layout so a
// flat row-major reshape is a plain reinterpretation of the buffer.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = RowMatrix<double>;
using Vec = Eigen::VectorXd;

template <typename Scalar>
using Coords = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree; message names the primitive and both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite value, zero denominator, or solver breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace trajloom
