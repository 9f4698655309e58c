#pragma once

// Forward dynamics of plain (FSNN), recurrent (RSNN), axonal-delay (DSNN) and
// dual-memory-pathway (DMP) LIF layers, plus network assembly with a
// mean-membrane (or last-step) readout.
//
// Membrane arithmetic has one canonical order, shared with the dataflow
// replay in hw_dataflow.hpp:
//   acc  = beta * u
//   acc += W_f[i, j] * s_j      for active inputs j, ascending
//   acc += W_r[i, j] * s_j[k-1] for active recurrent inputs j, ascending
//   acc += I_m[i]               I_m = W_m * m (row dot, ascending)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dmpsnn/errors.hpp"
#include "dmpsnn/linalg.hpp"
#include "dmpsnn/memory_kernel.hpp"
#include "dmpsnn/surrogate.hpp"

namespace dmpsnn {

enum class ResetMode { soft_subtract, hard_zero, none };
enum class Activation { relu, identity, tanh };
enum class Variant { plain, dmp, recurrent, delay };
enum class ReadoutMode { mean, last };

struct LIFParams {
  double beta = 0.9;
  double threshold = 10.0;
  ResetMode reset = ResetMode::soft_subtract;

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("LIF beta must lie in (0, 1)");
    if (!(threshold > 0.0)) throw ConfigError("LIF threshold must be positive");
  }
};

// Sparse activity vector: ascending indices with their (nonzero) values.
struct Frame {
  std::vector<std::uint32_t> idx;
  std::vector<double> val;

  std::size_t nnz() const { return idx.size(); }
  void clear() {
    idx.clear();
    val.clear();
  }
  void push(std::uint32_t j, double v) {
    idx.push_back(j);
    val.push_back(v);
  }
  Vec dense(std::size_t width) const {
    Vec out = Vec::Zero(static_cast<Eigen::Index>(width));
    for (std::size_t n = 0; n < idx.size(); ++n) out[idx[n]] = val[n];
    return out;
  }
  static Frame from_dense(const Vec& v) {
    Frame f;
    for (Eigen::Index j = 0; j < v.size(); ++j)
      if (v[j] != 0.0) f.push(static_cast<std::uint32_t>(j), v[j]);
    return f;
  }
};

struct LayerSpec {
  std::size_t inputs = 0;
  std::size_t neurons = 0;
  Variant variant = Variant::plain;
  StateSpaceConfig memory{};  // dmp only; memory.d == 0 disables the pathway
  std::int64_t dilation = 1;
  LIFParams lif{};
  Activation fx = Activation::relu;
  bool spiking = true;  // false for the readout layer
  std::size_t max_delay = 0;
  double init_gain = 0.0;  // 0 selects the default (threshold for spiking layers, 1 otherwise)

  std::size_t memory_dim() const { return variant == Variant::dmp ? memory.d : 0; }

  double effective_gain() const {
    if (init_gain > 0.0) return init_gain;
    return spiking ? lif.threshold : 1.0;
  }

  void validate() const {
    if (inputs == 0 || neurons == 0) throw ConfigError("layer widths must be positive");
    lif.validate();
    if (dilation < 1) throw ConfigError("dilation must be >= 1");
    if (variant == Variant::dmp && memory.d > 0) {
      memory.validate();
      if (spiking && memory.d > neurons)
        throw ConfigError("memory dimension d = " + std::to_string(memory.d) +
                          " exceeds layer width N = " + std::to_string(neurons));
    }
  }
};

struct LayerParams {
  LayerSpec spec;
  Mat W_f;                         // N x M
  Mat W_m;                         // N x d
  Vec W_x;                         // M
  double b = 0.0;
  Mat W_r;                         // N x N, recurrent only
  std::vector<std::size_t> delays;  // per presynaptic channel, delay only
  DiscretizedMemory memory;        // frozen

  std::size_t M() const { return spec.inputs; }
  std::size_t N() const { return spec.neurons; }
  std::size_t d() const { return spec.memory_dim(); }

  void validate() const {
    spec.validate();
    const auto M_ = static_cast<Eigen::Index>(M());
    const auto N_ = static_cast<Eigen::Index>(N());
    const auto d_ = static_cast<Eigen::Index>(d());
    kernel::require_shape(W_f, N_, M_, "W_f");
    if (d_ > 0) {
      kernel::require_shape(W_m, N_, d_, "W_m");
      if (W_x.size() != M_) throw DimensionError("W_x: expected length " + std::to_string(M_));
      kernel::require_shape(memory.A_bar, d_, d_, "A_bar");
      if (memory.B_bar.size() != d_) throw DimensionError("B_bar: wrong length");
    }
    if (spec.variant == Variant::recurrent) kernel::require_shape(W_r, N_, N_, "W_r");
    if (spec.variant == Variant::delay) {
      if (delays.size() != M()) throw DimensionError("delays: expected one per presynaptic channel");
      for (auto dl : delays)
        if (dl > spec.max_delay)
          throw ConfigError("axonal delay " + std::to_string(dl) + " exceeds ring depth " +
                            std::to_string(spec.max_delay));
    }
  }
};

struct LayerState {
  Vec u;
  MemoryState m;
  Vec s;                    // last output spikes (s[k-1] during a step)
  Frame s_frame;            // sparse copy of s
  std::vector<Frame> ring;  // presynaptic history, depth max_delay + 1

  static LayerState initial(const LayerParams& p) {
    LayerState st;
    st.u = Vec::Zero(static_cast<Eigen::Index>(p.N()));
    st.m = MemoryState::zeros(p.d());
    st.s = Vec::Zero(static_cast<Eigen::Index>(p.N()));
    if (p.spec.variant == Variant::delay) st.ring.assign(p.spec.max_delay + 1, Frame{});
    return st;
  }
};

// Quantities of one layer at one timestep, kept for BPTT and trace export.
struct StepRecord {
  Frame input;  // effective presynaptic input (after axonal delays)
  double x_pre = 0.0;
  double x = 0.0;
  bool memory_updated = false;
  Vec m;  // memory in use at this step (post-update, or held)
  Vec u_pre;
  Vec s;
};

struct ForwardOptions {
  bool smooth = false;  // spike function = surrogate antiderivative
  SurrogateSpec surrogate{};
  bool record = false;
};

inline double apply_activation(Activation f, double v) {
  switch (f) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::identity: return v;
    case Activation::tanh: return std::tanh(v);
  }
  return v;
}

inline double activation_derivative(Activation f, double pre) {
  switch (f) {
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

inline double spike_of(double u_pre, const LIFParams& lif, const ForwardOptions& opt) {
  if (opt.smooth) return opt.surrogate.smooth_step(u_pre - lif.threshold);
  return u_pre >= lif.threshold ? 1.0 : 0.0;
}

inline double reset_of(double u_pre, double s, const LIFParams& lif) {
  switch (lif.reset) {
    case ResetMode::soft_subtract: return u_pre - s * lif.threshold;
    case ResetMode::hard_zero: return u_pre * (1.0 - s);
    case ResetMode::none: return u_pre;
  }
  return u_pre;
}

struct LifStepResult {
  Vec u;
  Vec s;
};

inline LifStepResult lif_step(const Vec& u, const Vec& I_total, const LIFParams& lif) {
  if (u.size() != I_total.size()) throw DimensionError("lif_step: u and I differ in length");
  LifStepResult r{Vec(u.size()), Vec(u.size())};
  const ForwardOptions hard{};
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double u_pre = lif.beta * u[i] + I_total[i];
    r.s[i] = spike_of(u_pre, lif, hard);
    r.u[i] = reset_of(u_pre, r.s[i], lif);
  }
  return r;
}

inline double compress_drive(const Frame& s_pre, const Vec& W_x, double b, Activation fx) {
  double acc = 0.0;
  for (std::size_t n = 0; n < s_pre.nnz(); ++n) {
    if (s_pre.idx[n] >= static_cast<std::size_t>(W_x.size()))
      throw DimensionError("compress_drive: spike index out of range");
    acc += W_x[s_pre.idx[n]] * s_pre.val[n];
  }
  return apply_activation(fx, acc + b);
}

namespace detail {

inline void check_frame(const Frame& f, std::size_t width) {
  if (!f.idx.empty() && f.idx.back() >= width)
    throw DimensionError("presynaptic index " + std::to_string(f.idx.back()) + " >= width " +
                         std::to_string(width));
}

inline Frame delayed_input(const LayerParams& p, LayerState& st, const Frame& s_pre, std::int64_t k) {
  const std::size_t depth = st.ring.size();
  st.ring[static_cast<std::size_t>(k) % depth] = s_pre;
  Frame e;
  std::vector<std::pair<std::uint32_t, double>> items;
  for (std::size_t lag = 0; lag < depth && static_cast<std::int64_t>(lag) <= k; ++lag) {
    const Frame& f = st.ring[static_cast<std::size_t>(k - static_cast<std::int64_t>(lag)) % depth];
    for (std::size_t n = 0; n < f.nnz(); ++n)
      if (p.delays[f.idx[n]] == lag) items.emplace_back(f.idx[n], f.val[n]);
  }
  std::sort(items.begin(), items.end());
  for (auto& [j, v] : items) e.push(j, v);
  return e;
}

}  // namespace detail

/// One timestep of any layer variant. Returns the sparse output spikes.
inline Frame layer_step(const LayerParams& p, LayerState& st, const Frame& s_pre, std::int64_t k,
                        const ForwardOptions& opt = {}, StepRecord* rec = nullptr) {
  detail::check_frame(s_pre, p.M());
  const auto N = static_cast<Eigen::Index>(p.N());
  const std::size_t d = p.d();
  const Variant var = p.spec.variant;

  Frame delayed;
  const Frame* in = &s_pre;
  if (var == Variant::delay) {
    delayed = detail::delayed_input(p, st, s_pre, k);
    in = &delayed;
  }

  double x_pre = 0.0, x = 0.0;
  bool updated = false;
  if (d > 0 && is_memory_update_step(k, p.spec.dilation)) {
    x_pre = 0.0;
    for (std::size_t n = 0; n < in->nnz(); ++n) x_pre += p.W_x[in->idx[n]] * in->val[n];
    x_pre += p.b;
    x = apply_activation(p.spec.fx, x_pre);
    Vec next;
    memory_step_inplace(st.m.m, x, p.memory, next);
    st.m.m = std::move(next);
    st.m.k_last_update = k;
    updated = true;
  }

  Vec u_pre(N);
  Vec s_out(N);
  const Frame& s_prev = st.s_frame;
  for (Eigen::Index i = 0; i < N; ++i) {
    double acc = p.spec.lif.beta * st.u[i];
    const double* wf = p.W_f.data() + i * p.W_f.cols();
    for (std::size_t n = 0; n < in->nnz(); ++n) acc += wf[in->idx[n]] * in->val[n];
    if (var == Variant::recurrent) {
      const double* wr = p.W_r.data() + i * p.W_r.cols();
      for (std::size_t n = 0; n < s_prev.nnz(); ++n) acc += wr[s_prev.idx[n]] * s_prev.val[n];
    }
    if (d > 0) acc += kernel::row_dot(p.W_m, i, st.m.m);
    u_pre[i] = acc;
  }

  Frame out;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double s = p.spec.spiking ? spike_of(u_pre[i], p.spec.lif, opt) : 0.0;
    s_out[i] = s;
    st.u[i] = p.spec.spiking ? reset_of(u_pre[i], s, p.spec.lif) : u_pre[i];
    if (s != 0.0) out.push(static_cast<std::uint32_t>(i), s);
  }
  st.s = s_out;
  st.s_frame = out;

  if (rec) {
    rec->input = *in;
    rec->x_pre = x_pre;
    rec->x = x;
    rec->memory_updated = updated;
    rec->m = st.m.m;
    rec->u_pre = std::move(u_pre);
    rec->s = std::move(s_out);
  }
  return out;
}

inline Frame dmp_layer_step(const LayerParams& p, LayerState& st, const Frame& s_pre, std::int64_t k,
                            const ForwardOptions& opt = {}, StepRecord* rec = nullptr) {
  if (p.spec.variant != Variant::dmp) throw ConfigError("dmp_layer_step: layer is not a DMP layer");
  return layer_step(p, st, s_pre, k, opt, rec);
}

inline Frame delay_layer_step(const LayerParams& p, LayerState& st, const Frame& s_pre, std::int64_t k,
                              const ForwardOptions& opt = {}, StepRecord* rec = nullptr) {
  if (p.spec.variant != Variant::delay) throw ConfigError("delay_layer_step: layer has no axonal delays");
  for (auto dl : p.delays)
    if (dl >= st.ring.size()) throw ConfigError("delay_layer_step: delay exceeds ring depth");
  return layer_step(p, st, s_pre, k, opt, rec);
}

inline Frame recurrent_layer_step(const LayerParams& p, LayerState& st, const Frame& s_pre, std::int64_t k,
                                  const ForwardOptions& opt = {}, StepRecord* rec = nullptr) {
  if (p.spec.variant != Variant::recurrent || p.W_r.size() == 0)
    throw ConfigError("recurrent_layer_step: layer has no recurrent weights");
  return layer_step(p, st, s_pre, k, opt, rec);
}

// ---------------------------------------------------------------------------
// Network

struct NetworkConfig {
  std::size_t input_channels = 0;
  std::vector<LayerSpec> layers;  // hidden layers then the (non-spiking) readout
  ReadoutMode readout = ReadoutMode::mean;

  std::size_t outputs() const { return layers.empty() ? 0 : layers.back().neurons; }

  void validate() const {
    if (layers.empty()) throw ConfigError("network needs at least a readout layer");
    std::size_t width = input_channels;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      L.validate();
      if (L.inputs != width)
        throw ConfigError("layer " + std::to_string(l) + " expects " + std::to_string(L.inputs) +
                          " inputs but receives " + std::to_string(width));
      const bool last = l + 1 == layers.size();
      if (last == L.spiking) throw ConfigError("exactly the last layer must be the non-spiking readout");
      width = L.neurons;
    }
  }
};

struct Network {
  NetworkConfig config;
  std::vector<LayerParams> layers;

  void validate() const {
    config.validate();
    if (layers.size() != config.layers.size()) throw DimensionError("layer count mismatch");
    for (const auto& L : layers) L.validate();
  }
};

// Each tensor gets its own stream keyed by (seed, layer, tensor), so adding or
// removing a tensor never shifts the initial values of the others.
enum class TensorId : std::uint32_t { W_f = 1, W_m = 2, W_x = 3, W_r = 4, delays = 5 };

inline std::mt19937_64 tensor_rng(std::uint64_t seed, std::size_t layer, TensorId t) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(layer), static_cast<std::uint32_t>(t)};
  return std::mt19937_64(seq);
}

inline double uniform_pm(std::mt19937_64& rng, double bound) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * bound;
}

inline LayerParams init_layer(const LayerSpec& spec, std::uint64_t seed, std::size_t layer_index) {
  LayerParams p;
  p.spec = spec;
  const auto M = static_cast<Eigen::Index>(spec.inputs);
  const auto N = static_cast<Eigen::Index>(spec.neurons);
  const auto d = static_cast<Eigen::Index>(spec.memory_dim());
  const double gain = spec.effective_gain();

  auto fill = [&](Mat& W, Eigen::Index r, Eigen::Index c, double bound, TensorId id) {
    W.resize(r, c);
    auto rng = tensor_rng(seed, layer_index, id);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = uniform_pm(rng, bound);
  };

  fill(p.W_f, N, M, gain * std::sqrt(3.0 / static_cast<double>(M)), TensorId::W_f);
  if (d > 0) {
    fill(p.W_m, N, d, gain / std::sqrt(static_cast<double>(d)), TensorId::W_m);
    Mat wx;
    fill(wx, 1, M, std::sqrt(3.0 / static_cast<double>(M)), TensorId::W_x);
    p.W_x = wx.row(0).transpose();
    p.memory = make_memory(spec.memory);
  } else {
    p.W_m.resize(N, 0);
    p.W_x.resize(0);
  }
  if (spec.variant == Variant::recurrent)
    fill(p.W_r, N, N, gain * std::sqrt(3.0 / static_cast<double>(N)), TensorId::W_r);
  if (spec.variant == Variant::delay) {
    auto rng = tensor_rng(seed, layer_index, TensorId::delays);
    p.delays.resize(spec.inputs);
    for (auto& dl : p.delays) dl = static_cast<std::size_t>(rng() % (spec.max_delay + 1));
  }
  return p;
}

inline Network init_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network net{cfg, {}};
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) net.layers.push_back(init_layer(cfg.layers[l], seed, l));
  return net;
}

/// Trainable parameter count (W_f, W_m, W_x, b, W_r; frozen memory matrices excluded).
inline std::size_t count_parameters(const Network& net) {
  std::size_t n = 0;
  for (const auto& L : net.layers) {
    n += static_cast<std::size_t>(L.W_f.size());
    if (L.d() > 0) n += static_cast<std::size_t>(L.W_m.size() + L.W_x.size()) + 1;
    if (L.spec.variant == Variant::recurrent) n += static_cast<std::size_t>(L.W_r.size());
  }
  return n;
}

struct InputSequence {
  std::size_t T = 0;
  std::size_t channels = 0;
  std::vector<Frame> frames;  // one per timestep
};

using ForwardTrace = std::vector<std::vector<StepRecord>>;  // [layer][k]

struct ForwardResult {
  Vec logits;
  std::optional<ForwardTrace> trace;
};

inline ForwardResult network_forward(const Network& net, const InputSequence& in, const ForwardOptions& opt = {}) {
  if (in.T < 1 || in.frames.size() != in.T) throw DimensionError("network_forward: sample length must be >= 1");
  if (in.channels != net.config.input_channels)
    throw DimensionError("network_forward: sample has " + std::to_string(in.channels) +
                         " channels, network expects " + std::to_string(net.config.input_channels));
  const std::size_t L = net.layers.size();
  std::vector<LayerState> states;
  states.reserve(L);
  for (const auto& p : net.layers) states.push_back(LayerState::initial(p));

  ForwardResult res;
  if (opt.record) {
    res.trace.emplace(L);
    for (auto& v : *res.trace) v.resize(in.T);
  }
  const auto C = static_cast<Eigen::Index>(net.config.outputs());
  Vec sum = Vec::Zero(C);
  for (std::size_t k = 0; k < in.T; ++k) {
    Frame cur = in.frames[k];
    for (std::size_t l = 0; l < L; ++l) {
      StepRecord* rec = opt.record ? &(*res.trace)[l][k] : nullptr;
      cur = layer_step(net.layers[l], states[l], cur, static_cast<std::int64_t>(k), opt, rec);
    }
    sum += states.back().u;
  }
  if (net.config.readout == ReadoutMode::mean)
    res.logits = sum / static_cast<double>(in.T);
  else
    res.logits = states.back().u;
  return res;
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::dmp: return "dmp";
    case Variant::recurrent: return "recurrent";
    case Variant::delay: return "delay";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "plain" || s == "fsnn") return Variant::plain;
  if (s == "dmp") return Variant::dmp;
  if (s == "recurrent" || s == "rsnn") return Variant::recurrent;
  if (s == "delay" || s == "dsnn") return Variant::delay;
  throw ConfigError("unknown layer variant '" + s + "'");
}

inline ResetMode parse_reset(const std::string& s) {
  if (s == "soft-subtract") return ResetMode::soft_subtract;
  if (s == "hard-zero") return ResetMode::hard_zero;
  if (s == "none") return ResetMode::none;
  throw ConfigError("unknown reset mode '" + s + "'");
}

inline std::string to_string(ResetMode r) {
  switch (r) {
    case ResetMode::soft_subtract: return "soft-subtract";
    case ResetMode::hard_zero: return "hard-zero";
    case ResetMode::none: return "none";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

}  // namespace dmpsnn
