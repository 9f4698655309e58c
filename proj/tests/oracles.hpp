#pragma once

// Test-only reference computations, independent of the library code paths.

#include <Eigen/Dense>

#include <cmath>

namespace oracle {

using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// exp(A) by truncated Taylor series in extended precision: scale so that
// ||A/2^s|| <= 1/8, sum 40 terms, square back.
inline Eigen::MatrixXd expm_series(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  LMat X = A.cast<long double>();
  long double norm = 0;
  for (Eigen::Index j = 0; j < n; ++j) norm = std::max(norm, X.col(j).cwiseAbs().sum());
  int s = 0;
  while (norm > 0.125L) {
    norm /= 2;
    ++s;
  }
  X /= std::ldexp(1.0L, s);
  LMat term = LMat::Identity(n, n);
  LMat sum = LMat::Identity(n, n);
  for (int k = 1; k <= 40; ++k) {
    term = (term * X) / static_cast<long double>(k);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum.cast<double>();
}

// B_bar = A^{-1} (exp(A dt) - I) B, with the exponential from the series oracle.
inline Eigen::VectorXd zoh_input_closed_form(const Eigen::MatrixXd& A_dt, const Eigen::VectorXd& B_dt) {
  const Eigen::Index n = A_dt.rows();
  const LMat E = expm_series(A_dt).cast<long double>();
  const LMat Al = A_dt.cast<long double>();
  const Eigen::Matrix<long double, Eigen::Dynamic, 1> rhs =
      (E - LMat::Identity(n, n)) * B_dt.cast<long double>();
  return Al.fullPivLu().solve(rhs).cast<double>();
}

inline double inf_norm(const Eigen::MatrixXd& M) { return M.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace oracle
