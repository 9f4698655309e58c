#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>

#include "dmpsnn/errors.hpp"

namespace dmpsnn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Explicit-order kernels. Every component that must agree bit-for-bit with
// another (layers vs. dataflow replay) goes through these, so the summation
// order is ascending column index regardless of how Eigen would vectorize.
namespace kernel {

inline double row_dot(const Mat& W, Eigen::Index row, const Vec& x) {
  double acc = 0.0;
  const double* w = W.data() + row * W.cols();
  for (Eigen::Index j = 0; j < W.cols(); ++j) acc += w[j] * x[j];
  return acc;
}

inline void matvec(const Mat& W, const Vec& x, Vec& out) {
  out.resize(W.rows());
  for (Eigen::Index i = 0; i < W.rows(); ++i) out[i] = row_dot(W, i, x);
}

inline void matvec_transposed_add(const Mat& W, const Vec& y, Vec& out) {
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    const double* w = W.data() + i * W.cols();
    for (Eigen::Index j = 0; j < W.cols(); ++j) out[j] += w[j] * yi;
  }
}

inline void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(name) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

}  // namespace kernel
}  // namespace dmpsnn
