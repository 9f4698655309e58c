#pragma once

// Slow memory pathway: Legendre (Padé) state-space system, its zero-order-hold
// discretization, stepping, the folded (P, v) readout and dilation schedule.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include "dmpsnn/errors.hpp"
#include "dmpsnn/linalg.hpp"

namespace dmpsnn {

struct StateSpaceConfig {
  std::size_t d = 10;        // memory dimension
  double theta = 40.0;       // state buffer length, in timesteps
  double dt = 1.0;
  bool theta_scaling = true;  // use A/theta, B/theta before discretizing

  void validate() const {
    if (d < 1) throw ConfigError("memory dimension d must be >= 1");
    if (!(theta >= 1.0)) throw ConfigError("theta must be >= 1");
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be finite and >= 0");
  }
};

struct ContinuousSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
};

struct DiscretizedMemory {
  Mat A_bar;
  Vec B_bar;

  std::size_t dim() const { return static_cast<std::size_t>(B_bar.size()); }
};

struct MemoryState {
  Vec m;
  std::int64_t k_last_update = 0;

  static MemoryState zeros(std::size_t d) { return {Vec::Zero(static_cast<Eigen::Index>(d)), 0}; }
};

// Dependency-broken readout: W_m * m[k] == P * m[k-1] + v * x[k].
struct FoldedReadout {
  Mat P;
  Vec v;
};

/// Closed-form Legendre delay-network matrices of order d (integer entries).
inline ContinuousSystem build_pade(std::size_t d) {
  if (d == 0) throw DimensionError("build_pade: invalid dimension d = 0");
  const auto n = static_cast<Eigen::Index>(d);
  ContinuousSystem sys{Eigen::MatrixXd(n, n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double scale = 2.0 * static_cast<double>(i) + 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double sign;
      if (i < j) {
        sign = -1.0;
      } else {
        sign = ((i - j + 1) % 2 == 0) ? 1.0 : -1.0;
      }
      sys.A(i, j) = scale * sign;
    }
    sys.B(i) = scale * ((i % 2 == 0) ? 1.0 : -1.0);
  }
  return sys;
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant
/// (Higham 2005 coefficients).
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw DimensionError("expm: matrix must be square");
  const Eigen::Index n = A.rows();
  if (n == 0) return A;
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  if (!std::isfinite(norm1)) throw NumericError("expm: non-finite input");
  int s = 0;
  if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Eigen::MatrixXd As = A / std::ldexp(1.0, s);

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd A2 = As * As;
  const Eigen::MatrixXd A4 = A2 * A2;
  const Eigen::MatrixXd A6 = A4 * A2;
  const Eigen::MatrixXd U =
      As * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
  const Eigen::MatrixXd V =
      A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
  Eigen::MatrixXd R = (V - U).partialPivLu().solve(V + U);
  for (int i = 0; i < s; ++i) R = R * R;
  if (!R.allFinite()) throw NumericError("expm: non-finite result");
  return R;
}

/// Zero-order-hold discretization. B_bar comes from the exponential of the
/// augmented block [[A, B], [0, 0]] so no inverse of A is formed.
inline DiscretizedMemory discretize_zoh(const ContinuousSystem& sys, const StateSpaceConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = sys.A.rows();
  if (sys.A.cols() != n || sys.B.size() != n) throw DimensionError("discretize_zoh: A/B shape mismatch");
  const double scale = cfg.theta_scaling ? 1.0 / cfg.theta : 1.0;
  if (cfg.dt == 0.0) return {Mat::Identity(n, n), Vec::Zero(n)};

  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = sys.A * (scale * cfg.dt);
  aug.topRightCorner(n, 1) = sys.B * (scale * cfg.dt);
  Eigen::MatrixXd e;
  try {
    e = expm(aug);
  } catch (const NumericError&) {
    throw NumericError("discretize_zoh: overflow (dt too large for d = " + std::to_string(n) + ")");
  }
  DiscretizedMemory mem{Mat(e.topLeftCorner(n, n)), Vec(e.topRightCorner(n, 1))};
  if (!mem.A_bar.allFinite() || !mem.B_bar.allFinite()) {
    throw NumericError("discretize_zoh: overflow (dt too large for d = " + std::to_string(n) + ")");
  }
  return mem;
}

inline DiscretizedMemory make_memory(const StateSpaceConfig& cfg) {
  cfg.validate();
  return discretize_zoh(build_pade(cfg.d), cfg);
}

inline double spectral_radius(const Mat& M) {
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(M), false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// m' = A_bar * m + B_bar * x, accumulated in ascending column order.
inline void memory_step_inplace(const Vec& m, double x, const DiscretizedMemory& mem, Vec& out) {
  const Eigen::Index d = mem.A_bar.rows();
  out.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) out[i] = kernel::row_dot(mem.A_bar, i, m) + mem.B_bar[i] * x;
}

inline MemoryState memory_step(const MemoryState& state, double x, const DiscretizedMemory& mem) {
  if (state.m.size() != mem.A_bar.rows()) throw DimensionError("memory_step: state dimension mismatch");
  MemoryState next{Vec(), state.k_last_update};
  memory_step_inplace(state.m, x, mem, next.m);
  return next;
}

inline FoldedReadout fold_readout(const Mat& W_m, const DiscretizedMemory& mem) {
  if (W_m.cols() != mem.A_bar.rows()) {
    throw DimensionError("fold_readout: W_m has " + std::to_string(W_m.cols()) +
                         " columns, memory dimension is " + std::to_string(mem.A_bar.rows()));
  }
  return {W_m * mem.A_bar, W_m * mem.B_bar};
}

inline std::int64_t dilated_index(std::int64_t k, std::int64_t ds) {
  if (ds <= 0) throw ConfigError("dilated_index: invalid dilation factor " + std::to_string(ds));
  if (k < 0) throw ConfigError("dilated_index: negative timestep");
  return (k / ds) * ds;
}

inline bool is_memory_update_step(std::int64_t k, std::int64_t ds) { return dilated_index(k, ds) == k; }

/// Memory updates over timesteps 0..T-1 under dilation ds: ceil(T/ds).
inline std::int64_t memory_update_count(std::int64_t T, std::int64_t ds) {
  if (ds <= 0) throw ConfigError("memory_update_count: invalid dilation factor");
  return T <= 0 ? 0 : (T + ds - 1) / ds;
}

}  // namespace dmpsnn
