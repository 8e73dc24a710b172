#pragma once

#include <Eigen/Dense>

#include <string>

namespace ruda {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major float64 array; every tape value and gradient is one of these.
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

inline std::string shape_string(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ruda
