#pragma once

// Access-counting model of the near-memory dataflow. Four paths run in
// parallel per layer and timestep: spike integration (W_f), two memory
// integration paths (P * m[k-1] and v * x[k], or W_m * m[k] when the
// dependency is not broken) and the memory update (A_bar, B_bar). Each path
// executes one MAC per cycle. Counts are exact functions of the spike trace.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dmpsnn/errors.hpp"
#include "dmpsnn/memory_kernel.hpp"
#include "dmpsnn/spiking_layers.hpp"
#include "dmpsnn/train.hpp"

namespace dmpsnn {

struct CostModel {
  double sram_read = 1.0;
  double sram_write = 1.0;
  double mac = 0.2;
  double register_access = 0.01;
  std::size_t words_per_row = 4;  // neurons per weight row (skipped-pointer groups)
  std::size_t parallel_paths = 4;
  std::size_t neuron_register_slots = 4;
  std::size_t memory_register_slots = 2;  // m[k] and m[k-1]

  void validate() const {
    if (sram_read < 0 || sram_write < 0 || mac < 0 || register_access < 0)
      throw ConfigError("cost model: costs must be >= 0");
    if (words_per_row < 1 || neuron_register_slots < 1 || memory_register_slots < 1 || parallel_paths < 1)
      throw ConfigError("cost model: row width, paths and register slots must be >= 1");
  }
};

enum class Stationarity { heterogeneous, uniform_output, uniform_input };

inline std::string to_string(Stationarity s) {
  switch (s) {
    case Stationarity::heterogeneous: return "heterogeneous";
    case Stationarity::uniform_output: return "uniform-output";
    case Stationarity::uniform_input: return "uniform-input";
  }
  return "?";
}

inline Stationarity parse_stationarity(const std::string& s) {
  if (s == "heterogeneous") return Stationarity::heterogeneous;
  if (s == "uniform-output") return Stationarity::uniform_output;
  if (s == "uniform-input") return Stationarity::uniform_input;
  throw ConfigError("unknown stationarity \"" + s + "\"");
}

struct ScheduleConfig {
  bool fusion = true;
  Stationarity stationarity = Stationarity::heterogeneous;
  bool dependency_breaking = true;
  std::int64_t dilation = 0;  // 0: use each layer's own dilation

  std::string name() const {
    return std::string(fusion ? "fused" : "unfused") + "," + to_string(stationarity) + "," +
           (dependency_breaking ? "breaking" : "no-breaking");
  }

  bool operator==(const ScheduleConfig&) const = default;
};

/// Parses "fused", "unfused" or a comma list such as
/// "unfused,uniform-output,no-breaking". Unlisted fields keep their defaults.
inline ScheduleConfig parse_schedule(const std::string& text) {
  ScheduleConfig s;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    const std::string tok = text.substr(pos, end - pos);
    if (tok == "fused")
      s.fusion = true;
    else if (tok == "unfused")
      s.fusion = false;
    else if (tok == "breaking")
      s.dependency_breaking = true;
    else if (tok == "no-breaking")
      s.dependency_breaking = false;
    else
      s.stationarity = parse_stationarity(tok);
    pos = end + 1;
  }
  return s;
}

/// All 12 combinations of fusion x stationarity x dependency breaking.
inline std::vector<ScheduleConfig> all_schedules() {
  std::vector<ScheduleConfig> out;
  for (bool f : {true, false})
    for (auto st : {Stationarity::heterogeneous, Stationarity::uniform_output, Stationarity::uniform_input})
      for (bool br : {true, false}) out.push_back({f, st, br, 0});
  return out;
}

struct AccessLedger {
  // neuron SRAM: one read + one write per read-modify-write of a neuron word
  std::uint64_t neuron_reads = 0, neuron_writes = 0;
  // partial-sum spills of the memory integration under uniform input stationarity
  std::uint64_t spill_reads = 0, spill_writes = 0;
  // weight SRAM
  std::uint64_t wf_reads = 0, wm_reads = 0, p_reads = 0, v_reads = 0, wx_reads = 0, ab_reads = 0;
  std::uint64_t register_accesses = 0;
  std::uint64_t row_activations = 0;
  std::uint64_t spike_macs = 0, compress_macs = 0, memory_update_macs = 0, memory_integration_macs = 0;
  std::uint64_t memory_updates = 0;
  // cycles
  std::uint64_t spike_path_cycles = 0, memory_update_cycles = 0, memory_integration_cycles = 0;
  std::uint64_t neuron_cycles = 0;
  std::uint64_t critical_path_cycles = 0;  // summed over timesteps
  std::uint64_t memory_critical_cycles = 0;  // memory paths + neuron stage only
  std::uint64_t max_step_cycles = 0;
  std::uint64_t steps = 0;

  std::uint64_t macs() const { return spike_macs + compress_macs + memory_update_macs + memory_integration_macs; }
  std::uint64_t memory_path_macs() const { return memory_update_macs + memory_integration_macs; }
  std::uint64_t weight_reads() const { return wf_reads + wm_reads + p_reads + v_reads + wx_reads + ab_reads; }
  std::uint64_t sram_reads() const { return neuron_reads + spill_reads + weight_reads(); }
  std::uint64_t sram_writes() const { return neuron_writes + spill_writes; }
  std::uint64_t sram_words() const { return sram_reads() + sram_writes(); }
  std::uint64_t neuron_rmw() const { return neuron_reads; }

  AccessLedger& operator+=(const AccessLedger& o) {
    neuron_reads += o.neuron_reads;
    neuron_writes += o.neuron_writes;
    spill_reads += o.spill_reads;
    spill_writes += o.spill_writes;
    wf_reads += o.wf_reads;
    wm_reads += o.wm_reads;
    p_reads += o.p_reads;
    v_reads += o.v_reads;
    wx_reads += o.wx_reads;
    ab_reads += o.ab_reads;
    register_accesses += o.register_accesses;
    row_activations += o.row_activations;
    spike_macs += o.spike_macs;
    compress_macs += o.compress_macs;
    memory_update_macs += o.memory_update_macs;
    memory_integration_macs += o.memory_integration_macs;
    memory_updates += o.memory_updates;
    spike_path_cycles += o.spike_path_cycles;
    memory_update_cycles += o.memory_update_cycles;
    memory_integration_cycles += o.memory_integration_cycles;
    neuron_cycles += o.neuron_cycles;
    critical_path_cycles += o.critical_path_cycles;
    memory_critical_cycles += o.memory_critical_cycles;
    max_step_cycles = std::max(max_step_cycles, o.max_step_cycles);
    steps += o.steps;
    return *this;
  }

  bool operator==(const AccessLedger&) const = default;
};

struct LayerDims {
  std::size_t M = 0, N = 0, d = 0;
  std::int64_t dilation = 1;

  bool operator==(const LayerDims&) const = default;
};

// Closed-form per-step path lengths of the memory pathway (dense m-path).
inline std::uint64_t memory_critical_path(std::uint64_t N, std::uint64_t d, bool breaking) {
  if (breaking) return std::max({N * d, N, d * d + d}) + N;
  return d * d + d + N * d + N;
}

/// Ledger delta of one layer at one timestep. `nnz` active presynaptic inputs;
/// `update` marks a memory-update step.
inline AccessLedger simulate_timestep(std::size_t nnz, const LayerDims& dims, bool update, const ScheduleConfig& sched,
                                      const CostModel& cost = {}) {
  if (nnz > dims.M) throw DimensionError("simulate_timestep: more active inputs than channels");
  const std::uint64_t M = dims.M, N = dims.N, d = dims.d, a = nnz;
  const bool mem = d > 0 && update;
  const bool input_stationary_spikes = sched.stationarity != Stationarity::uniform_output;
  const std::uint64_t wpr = cost.words_per_row;
  AccessLedger L;
  L.steps = 1;

  // Spike integration. MACs are effective (nonzero) products in every schedule.
  L.spike_macs = a * N;
  if (input_stationary_spikes) {
    L.wf_reads = a * N;
    L.spike_path_cycles = a * N;
    L.row_activations += a * ((N + wpr - 1) / wpr);
  } else {
    L.wf_reads = M * N;
    L.spike_path_cycles = M * N;
    L.row_activations += N * ((M + wpr - 1) / wpr);
  }

  // Compression x[k] = f(W_x s + b): computed by the upstream fused pass, so it
  // adds traffic but no cycles on this layer's paths.
  if (mem) {
    L.compress_macs = a;
    L.wx_reads = input_stationary_spikes ? a : M;
  }

  std::uint64_t integ_p = 0, integ_v = 0, upd = 0;
  if (mem) {
    L.memory_updates = 1;
    upd = d * d + d;
    L.ab_reads = d * d + d;
    L.memory_update_macs = d * d + d;
    L.register_accesses += 2 * d;  // read m[k-1] slot, write m[k] slot
    if (sched.dependency_breaking) {
      L.p_reads = N * d;
      L.v_reads = N;
      L.memory_integration_macs = N * d + N;
      integ_p = N * d;
      integ_v = N;
    } else {
      L.wm_reads = N * d;
      L.memory_integration_macs = N * d;
      integ_p = N * d;
    }
    if (sched.stationarity == Stationarity::uniform_input) {
      // input-stationary memory integration streams partial sums through the
      // neuron memory once per memory operand
      const std::uint64_t spills = (sched.dependency_breaking ? d + 1 : d) * N;
      L.spill_reads = spills;
      L.spill_writes = spills;
    }
  }
  L.memory_update_cycles = upd;
  L.memory_integration_cycles = integ_p + integ_v;

  // Neuron state: one RMW per neuron when leak, spike integration, memory
  // current and fire/reset are fused; three separate passes otherwise.
  const std::uint64_t passes = sched.fusion ? 1 : 3;
  L.neuron_reads = passes * N;
  L.neuron_writes = passes * N;
  L.neuron_cycles = passes * N;
  L.register_accesses += 2 * passes * N + L.spike_macs + L.memory_integration_macs + L.memory_update_macs;

  std::uint64_t crit;
  if (sched.dependency_breaking)
    crit = std::max({L.spike_path_cycles, integ_p, integ_v, upd}) + L.neuron_cycles;
  else
    crit = std::max(L.spike_path_cycles, upd + integ_p) + L.neuron_cycles;
  L.critical_path_cycles = crit;
  L.max_step_cycles = crit;
  if (d > 0) {
    const std::uint64_t mcrit =
        mem ? (sched.dependency_breaking ? std::max({integ_p, integ_v, upd}) : upd + integ_p + integ_v) : 0;
    L.memory_critical_cycles = mcrit + L.neuron_cycles;
  }
  return L;
}

// ---------------------------------------------------------------------------
// Traces

struct TraceStep {
  Frame input;  // effective presynaptic activity of the layer
  double x = 0.0;
  Vec m;  // memory in use (size d)
};

struct SimTrace {
  std::size_t T = 0;
  std::vector<LayerDims> layers;
  std::vector<std::vector<TraceStep>> steps;  // [layer][k]

  void validate() const {
    if (steps.size() != layers.size()) throw DimensionError("trace: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (steps[l].size() != T) throw DimensionError("trace: layer " + std::to_string(l) + " has wrong length");
      if (layers[l].dilation < 1) throw DimensionError("trace: invalid dilation");
      for (const auto& s : steps[l]) {
        if (!s.input.idx.empty() && s.input.idx.back() >= layers[l].M)
          throw DimensionError("trace/config mismatch: input index exceeds M in layer " + std::to_string(l));
        if (static_cast<std::size_t>(s.m.size()) != layers[l].d)
          throw DimensionError("trace/config mismatch: memory snapshot size in layer " + std::to_string(l));
      }
    }
  }
};

inline std::vector<LayerDims> network_dims(const Network& net) {
  std::vector<LayerDims> out;
  for (const auto& p : net.layers) out.push_back({p.M(), p.N(), p.d(), p.spec.dilation});
  return out;
}

inline SimTrace make_trace(const Network& net, const ForwardTrace& fwd) {
  SimTrace t;
  t.layers = network_dims(net);
  if (fwd.size() != t.layers.size()) throw DimensionError("make_trace: forward trace layer count mismatch");
  t.T = fwd.empty() ? 0 : fwd[0].size();
  t.steps.resize(fwd.size());
  for (std::size_t l = 0; l < fwd.size(); ++l) {
    t.steps[l].reserve(t.T);
    for (const auto& r : fwd[l]) t.steps[l].push_back({r.input, r.x, r.m});
  }
  return t;
}

inline SimTrace record_trace(const Network& net, const InputSequence& in) {
  ForwardOptions opt;
  opt.record = true;
  return make_trace(net, *network_forward(net, in, opt).trace);
}

struct SimReport {
  ScheduleConfig schedule;
  AccessLedger ledger;
  std::vector<AccessLedger> per_layer;
  double arithmetic_intensity = 0.0;  // MACs per SRAM word moved
  double energy = 0.0;
  double throughput = 0.0;  // timesteps per cycle
};

inline double energy_of(const AccessLedger& L, const CostModel& c) {
  return static_cast<double>(L.sram_reads()) * c.sram_read + static_cast<double>(L.sram_writes()) * c.sram_write +
         static_cast<double>(L.macs()) * c.mac + static_cast<double>(L.register_accesses) * c.register_access;
}

/// Aggregates per-timestep ledgers over all layers. Layers of one timestep run
/// back to back, so the step's critical path is the sum over layers.
inline SimReport simulate_run(const SimTrace& trace, const ScheduleConfig& sched, const CostModel& cost = {}) {
  cost.validate();
  trace.validate();
  if (sched.dilation < 0) throw ConfigError("schedule dilation must be >= 0");
  SimReport r;
  r.schedule = sched;
  r.per_layer.resize(trace.layers.size());
  for (std::size_t k = 0; k < trace.T; ++k) {
    AccessLedger step;
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
      const auto& dims = trace.layers[l];
      const std::int64_t ds = sched.dilation > 0 ? sched.dilation : dims.dilation;
      const bool update = is_memory_update_step(static_cast<std::int64_t>(k), ds);
      const AccessLedger L = simulate_timestep(trace.steps[l][k].input.nnz(), dims, update, sched, cost);
      r.per_layer[l] += L;
      step += L;
    }
    step.steps = 1;
    step.max_step_cycles = step.critical_path_cycles;
    r.ledger += step;
  }
  const auto words = r.ledger.sram_words();
  r.arithmetic_intensity = words ? static_cast<double>(r.ledger.macs()) / static_cast<double>(words) : 0.0;
  r.energy = energy_of(r.ledger, cost);
  r.throughput = r.ledger.critical_path_cycles
                     ? static_cast<double>(trace.T) / static_cast<double>(r.ledger.critical_path_cycles)
                     : 0.0;
  return r;
}

/// Runs every schedule combination; independent runs execute in parallel.
inline std::vector<SimReport> compare_schedules(const SimTrace& trace, const CostModel& cost = {},
                                                std::size_t threads = 1, std::int64_t dilation = 0) {
  auto scheds = all_schedules();
  std::vector<SimReport> out(scheds.size());
  parallel_for(scheds.size(), threads, [&](std::size_t i) {
    scheds[i].dilation = dilation;
    out[i] = simulate_run(trace, scheds[i], cost);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Functional replay

struct ReplayResult {
  std::vector<std::vector<Vec>> u_pre;  // [layer][k]
  std::vector<std::vector<Vec>> m;      // [layer][k]
};

/// Recomputes membrane and memory values from the trace inputs in schedule
/// order. Accumulation order per neuron is fixed (leak, spike inputs by
/// ascending index, recurrent inputs, memory current), so without dependency
/// breaking the result is bit-identical to the layer implementation; with it,
/// the memory current comes from the folded (P, v) form.
inline ReplayResult replay(const Network& net, const SimTrace& trace, const ScheduleConfig& sched) {
  trace.validate();
  if (network_dims(net) != trace.layers) throw DimensionError("replay: trace/config mismatch");
  ReplayResult r;
  r.u_pre.resize(trace.layers.size());
  r.m.resize(trace.layers.size());
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    const auto N = static_cast<Eigen::Index>(p.N());
    const std::size_t d = p.d();
    FoldedReadout fold;
    if (d > 0) fold = fold_readout(p.W_m, p.memory);
    Vec u = Vec::Zero(N), m = Vec::Zero(static_cast<Eigen::Index>(d)), I_m = Vec::Zero(N);
    Frame s_prev;
    for (std::size_t k = 0; k < trace.T; ++k) {
      const Frame& in = trace.steps[l][k].input;
      if (d > 0 && is_memory_update_step(static_cast<std::int64_t>(k), p.spec.dilation)) {
        double x_pre = 0.0;
        for (std::size_t n = 0; n < in.nnz(); ++n) x_pre += p.W_x[in.idx[n]] * in.val[n];
        x_pre += p.b;
        const double x = apply_activation(p.spec.fx, x_pre);
        Vec next;
        memory_step_inplace(m, x, p.memory, next);
        for (Eigen::Index i = 0; i < N; ++i)
          I_m[i] = sched.dependency_breaking ? kernel::row_dot(fold.P, i, m) + fold.v[i] * x
                                             : kernel::row_dot(p.W_m, i, next);
        m = std::move(next);
      }
      Vec u_pre(N);
      Frame out;
      for (Eigen::Index i = 0; i < N; ++i) {
        double acc = p.spec.lif.beta * u[i];
        const double* wf = p.W_f.data() + i * p.W_f.cols();
        for (std::size_t n = 0; n < in.nnz(); ++n) acc += wf[in.idx[n]] * in.val[n];
        if (p.spec.variant == Variant::recurrent) {
          const double* wr = p.W_r.data() + i * p.W_r.cols();
          for (std::size_t n = 0; n < s_prev.nnz(); ++n) acc += wr[s_prev.idx[n]] * s_prev.val[n];
        }
        if (d > 0) acc += I_m[i];
        u_pre[i] = acc;
        const double s = p.spec.spiking ? spike_of(acc, p.spec.lif, ForwardOptions{}) : 0.0;
        u[i] = p.spec.spiking ? reset_of(acc, s, p.spec.lif) : acc;
        if (s != 0.0) out.push(static_cast<std::uint32_t>(i), s);
      }
      s_prev = std::move(out);
      r.u_pre[l].push_back(std::move(u_pre));
      r.m[l].push_back(m);
    }
  }
  return r;
}

}  // namespace dmpsnn
