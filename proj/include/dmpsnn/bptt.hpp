#pragma once

// Reverse-mode gradients through the unrolled network. The Heaviside
// derivative is replaced by a surrogate; the memory chain (W_x -> x -> m ->
// W_m) is linear apart from f_x and receives exact gradients. A_bar/B_bar are
// frozen and get none.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "dmpsnn/errors.hpp"
#include "dmpsnn/linalg.hpp"
#include "dmpsnn/spiking_layers.hpp"
#include "dmpsnn/surrogate.hpp"

namespace dmpsnn {

struct LayerGrad {
  Mat W_f;
  Mat W_m;
  Vec W_x;
  double b = 0.0;
  Mat W_r;

  static LayerGrad zeros_like(const LayerParams& p) {
    LayerGrad g;
    g.W_f = Mat::Zero(p.W_f.rows(), p.W_f.cols());
    g.W_m = Mat::Zero(p.W_m.rows(), p.W_m.cols());
    g.W_x = Vec::Zero(p.W_x.size());
    g.W_r = Mat::Zero(p.W_r.rows(), p.W_r.cols());
    return g;
  }

  LayerGrad& operator+=(const LayerGrad& o) {
    W_f += o.W_f;
    W_m += o.W_m;
    W_x += o.W_x;
    b += o.b;
    W_r += o.W_r;
    return *this;
  }
};

struct Gradients {
  std::vector<LayerGrad> layers;

  static Gradients zeros_like(const Network& net) {
    Gradients g;
    for (const auto& p : net.layers) g.layers.push_back(LayerGrad::zeros_like(p));
    return g;
  }

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l] += o.layers[l];
    return *this;
  }

  void scale(double s) {
    for (auto& g : layers) {
      g.W_f *= s;
      g.W_m *= s;
      g.W_x *= s;
      g.b *= s;
      g.W_r *= s;
    }
  }

  bool all_finite() const {
    for (const auto& g : layers)
      if (!g.W_f.allFinite() || !g.W_m.allFinite() || !g.W_x.allFinite() || !std::isfinite(g.b) ||
          !g.W_r.allFinite())
        return false;
    return true;
  }
};

struct GradientTape {
  Vec logits;
  double loss = 0.0;
  Gradients grads;
  // dL/du_pre per layer and step; u_pre is the membrane after leak and
  // integration, before reset.
  std::vector<std::vector<Vec>> membrane_adjoints;
};

inline Vec softmax(const Vec& z) {
  const double mx = z.maxCoeff();
  Vec e = (z.array() - mx).exp().matrix();
  return e / e.sum();
}

inline double cross_entropy(const Vec& logits, std::size_t label) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits[static_cast<Eigen::Index>(label)];
}

inline Vec logits_from_trace(const ForwardTrace& trace, ReadoutMode mode) {
  const auto& out = trace.back();
  if (mode == ReadoutMode::last) return out.back().u_pre;
  Vec sum = Vec::Zero(out.front().u_pre.size());
  for (const auto& r : out) sum += r.u_pre;
  return sum / static_cast<double>(out.size());
}

/// BPTT over a recorded forward trace. `fwd.trace` must be present.
inline GradientTape backward(const Network& net, const ForwardResult& fwd, std::size_t label, ReadoutMode loss_mode,
                             const SurrogateSpec& surrogate, bool keep_adjoints = false) {
  if (!fwd.trace) throw UsageError("backward: forward pass was run without a recorded trace");
  const ForwardTrace& tr = *fwd.trace;
  const std::size_t L = net.layers.size();
  if (tr.size() != L) throw UsageError("backward: trace does not match network depth");
  const std::size_t T = tr.front().size();
  const std::size_t C = net.config.outputs();
  if (label >= C) throw DimensionError("backward: label out of range");

  GradientTape tape;
  tape.logits = logits_from_trace(tr, loss_mode);
  tape.loss = cross_entropy(tape.logits, label);
  Vec g_logits = softmax(tape.logits);
  g_logits[static_cast<Eigen::Index>(label)] -= 1.0;

  tape.grads = Gradients::zeros_like(net);
  if (keep_adjoints) tape.membrane_adjoints.resize(L);

  // Adjoint w.r.t. the input activity of the layer above, per step.
  std::vector<Vec> d_above;

  for (std::size_t li = L; li-- > 0;) {
    const LayerParams& p = net.layers[li];
    const auto& recs = tr[li];
    LayerGrad& G = tape.grads.layers[li];
    const auto N = static_cast<Eigen::Index>(p.N());
    const auto M = static_cast<Eigen::Index>(p.M());
    const auto d = static_cast<Eigen::Index>(p.d());
    const double beta = p.spec.lif.beta;
    const double theta = p.spec.lif.threshold;
    const bool spiking = p.spec.spiking;
    const bool recurrent = p.spec.variant == Variant::recurrent;
    const bool delayed = p.spec.variant == Variant::delay;
    const bool need_input_grad = li > 0;

    std::vector<Vec> d_input;
    if (need_input_grad) d_input.assign(T, Vec::Zero(M));
    if (keep_adjoints) tape.membrane_adjoints[li].assign(T, Vec());

    Vec d_pre_next = Vec::Zero(N);
    Vec lam = Vec::Zero(d);
    Vec d_u(N), d_pre(N), d_e(M);

    for (std::size_t k = T; k-- > 0;) {
      const StepRecord& r = recs[k];
      d_u = beta * d_pre_next;
      if (!spiking) {
        if (loss_mode == ReadoutMode::mean)
          d_u += g_logits / static_cast<double>(T);
        else if (k + 1 == T)
          d_u += g_logits;
        d_pre = d_u;
      } else {
        for (Eigen::Index i = 0; i < N; ++i) {
          double d_s = d_above.empty() ? 0.0 : d_above[k][i];
          double du_dpre = 1.0;
          switch (p.spec.lif.reset) {
            case ResetMode::soft_subtract: d_s -= theta * d_u[i]; break;
            case ResetMode::hard_zero:
              d_s -= r.u_pre[i] * d_u[i];
              du_dpre = 1.0 - r.s[i];
              break;
            case ResetMode::none: break;
          }
          d_pre[i] = d_u[i] * du_dpre;
          if (d_s != 0.0) d_pre[i] += d_s * surrogate.derivative(r.u_pre[i] - theta);
        }
        // Recurrent term: s[k] feeds step k + 1 through W_r.
        if (recurrent && k + 1 < T) {
          Vec d_s_rec = Vec::Zero(N);
          kernel::matvec_transposed_add(p.W_r, d_pre_next, d_s_rec);
          for (Eigen::Index i = 0; i < N; ++i)
            if (d_s_rec[i] != 0.0) d_pre[i] += d_s_rec[i] * surrogate.derivative(r.u_pre[i] - theta);
        }
      }
      if (keep_adjoints) tape.membrane_adjoints[li][k] = d_pre;

      for (std::size_t n = 0; n < r.input.nnz(); ++n) G.W_f.col(r.input.idx[n]) += r.input.val[n] * d_pre;
      if (recurrent && k > 0) {
        const Vec& s_prev = recs[k - 1].s;
        for (Eigen::Index j = 0; j < N; ++j)
          if (s_prev[j] != 0.0) G.W_r.col(j) += s_prev[j] * d_pre;
      }

      if (need_input_grad) {
        d_e.setZero();
        kernel::matvec_transposed_add(p.W_f, d_pre, d_e);
      }

      if (d > 0) {
        for (Eigen::Index i = 0; i < N; ++i)
          if (d_pre[i] != 0.0) G.W_m.row(i) += d_pre[i] * r.m.transpose();
        kernel::matvec_transposed_add(p.W_m, d_pre, lam);
        if (r.memory_updated) {
          const double d_x = p.memory.B_bar.dot(lam);
          Vec prev = Vec::Zero(d);
          kernel::matvec_transposed_add(p.memory.A_bar, lam, prev);
          lam = std::move(prev);
          const double d_xpre = d_x * activation_derivative(p.spec.fx, r.x_pre);
          if (d_xpre != 0.0) {
            G.b += d_xpre;
            for (std::size_t n = 0; n < r.input.nnz(); ++n) G.W_x[r.input.idx[n]] += d_xpre * r.input.val[n];
            if (need_input_grad) d_e += d_xpre * p.W_x;
          }
        }
      }

      if (need_input_grad) {
        if (delayed) {
          for (Eigen::Index j = 0; j < M; ++j) {
            const auto lag = static_cast<std::size_t>(p.delays[static_cast<std::size_t>(j)]);
            if (lag <= k) d_input[k - lag][j] += d_e[j];
          }
        } else {
          d_input[k] += d_e;
        }
      }
      d_pre_next = d_pre;
    }
    d_above = std::move(d_input);
  }
  return tape;
}

/// Forward with trace, then backward.
inline GradientTape forward_backward(const Network& net, const InputSequence& in, std::size_t label,
                                     ReadoutMode loss_mode, const SurrogateSpec& surrogate, bool smooth = false,
                                     bool keep_adjoints = false) {
  ForwardOptions opt;
  opt.record = true;
  opt.smooth = smooth;
  opt.surrogate = surrogate;
  const ForwardResult fwd = network_forward(net, in, opt);
  return backward(net, fwd, label, loss_mode, surrogate, keep_adjoints);
}

/// Per-step first-layer membrane gradient norms ||dL/du^1[k]|| under
/// last-timestep supervision, normalized by the maximum over k.
inline std::vector<double> gradient_profile(const Network& net, const InputSequence& in, std::size_t label,
                                            const SurrogateSpec& surrogate, bool normalize = true) {
  const GradientTape tape = forward_backward(net, in, label, ReadoutMode::last, surrogate, false, true);
  const auto& adj = tape.membrane_adjoints.front();
  std::vector<double> g(adj.size());
  double mx = 0.0;
  for (std::size_t k = 0; k < adj.size(); ++k) {
    g[k] = adj[k].norm();
    mx = std::max(mx, g[k]);
  }
  if (normalize && mx > 0.0)
    for (auto& v : g) v /= mx;
  return g;
}

// ---------------------------------------------------------------------------
// Joint membrane/memory transition F = [[beta*I_N, W_m*A_bar], [0, A_bar]].

inline Mat joint_transition(double beta, const Mat& W_m, const Mat& A_bar) {
  const Eigen::Index N = W_m.rows();
  const Eigen::Index d = A_bar.rows();
  if (A_bar.cols() != d || W_m.cols() != d) throw DimensionError("joint_transition: W_m / A_bar shape mismatch");
  Mat F = Mat::Zero(N + d, N + d);
  F.topLeftCorner(N, N).diagonal().setConstant(beta);
  if (d > 0) {
    F.topRightCorner(N, d) = W_m * A_bar;
    F.bottomRightCorner(d, d) = A_bar;
  }
  return F;
}

using Spectrum = std::vector<std::complex<double>>;

inline void sort_spectrum(Spectrum& s) {
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma < mb;
    return std::arg(a) < std::arg(b);
  });
}

inline Spectrum eigenvalues(const Mat& M) {
  Spectrum out;
  if (M.size() == 0) return out;
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(M), false);
  if (es.info() != Eigen::Success) throw NumericError("eigenvalue solver did not converge");
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()[i]);
  sort_spectrum(out);
  return out;
}

/// Eigenvalues of F, sorted by modulus then argument.
inline Spectrum joint_spectrum(double beta, const Mat& W_m, const Mat& A_bar) {
  return eigenvalues(joint_transition(beta, W_m, A_bar));
}

}  // namespace dmpsnn
