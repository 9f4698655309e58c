#include <gtest/gtest.h>

#include <cmath>

#include "dmpsnn/hw_dataflow.hpp"
#include "test_helpers.hpp"

using namespace dmpsnn;
using testing_util::random_events;

namespace {

struct Fixture {
  Network net;
  InputSequence in;
  SimTrace trace;
};

Fixture dmp_fixture(std::size_t M, std::size_t N, std::size_t d, std::size_t T, std::int64_t ds, double rate,
                    std::uint64_t seed = 3) {
  auto cfg = testing_util::small_net(M, N, 4, Variant::dmp, d);
  cfg.layers[0].dilation = ds;
  Fixture f{init_network(cfg, seed), random_events(T, M, rate, seed + 1), {}};
  f.trace = record_trace(f.net, f.in);
  return f;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace

TEST(SimulateTimestep, EmptyInputStillRunsNeuronPass) {
  const LayerDims dims{16, 8, 4, 1};
  const auto L = simulate_timestep(0, dims, true, ScheduleConfig{});
  EXPECT_EQ(L.wf_reads, 0u);
  EXPECT_EQ(L.neuron_reads, 8u);
  EXPECT_EQ(L.neuron_writes, 8u);
  EXPECT_EQ(L.p_reads, 8u * 4u);
  EXPECT_EQ(L.v_reads, 8u);
}

TEST(SimulateTimestep, RejectsMoreActiveInputsThanChannels) {
  EXPECT_THROW(simulate_timestep(5, LayerDims{4, 2, 1, 1}, true, ScheduleConfig{}), DimensionError);
}

TEST(SimulateTimestep, HandCountedCriticalPaths) {
  // (N, d) = (8, 4): sequential 16 + 4 + 32 + 8 = 60, broken max(32, 8, 20) + 8 = 40.
  ScheduleConfig on, off;
  off.dependency_breaking = false;
  const LayerDims dims{8, 8, 4, 1};
  EXPECT_EQ(simulate_timestep(0, dims, true, off).memory_critical_cycles, 60u);
  EXPECT_EQ(simulate_timestep(0, dims, true, on).memory_critical_cycles, 40u);
  EXPECT_EQ(memory_critical_path(8, 4, false), 60u);
  EXPECT_EQ(memory_critical_path(8, 4, true), 40u);
  // (128, 10): 100 + 10 + 1280 + 128 = 1518 vs max(1280, 128, 110) + 128 = 1408.
  const LayerDims big{140, 128, 10, 1};
  EXPECT_EQ(simulate_timestep(0, big, true, off).memory_critical_cycles, 1518u);
  EXPECT_EQ(simulate_timestep(0, big, true, on).memory_critical_cycles, 1408u);
}

TEST(SimulateTimestep, BrokenCriticalPathIsMaxOfPaths) {
  ScheduleConfig on;
  const LayerDims dims{20, 8, 4, 1};
  for (std::size_t nnz : {0u, 1u, 3u, 20u}) {
    const auto L = simulate_timestep(nnz, dims, true, on);
    const std::uint64_t paths = std::max<std::uint64_t>({nnz * 8u, 8u * 4u, 8u, 4u * 4u + 4u});
    EXPECT_EQ(L.critical_path_cycles, paths + 8u) << "nnz=" << nnz;
  }
}

TEST(SimulateRun, FusedVersusUnfusedNeuronTraffic) {
  auto f = dmp_fixture(20, 128, 10, 100, 1, 0.1);
  ScheduleConfig fused, unfused;
  unfused.fusion = false;
  const auto a = simulate_run(f.trace, fused);
  const auto b = simulate_run(f.trace, unfused);
  const auto& La = a.per_layer[0];
  const auto& Lb = b.per_layer[0];
  EXPECT_EQ(La.neuron_rmw(), 12800u);
  EXPECT_EQ(Lb.neuron_rmw(), 38400u);
  EXPECT_EQ(b.ledger.neuron_rmw(), 3 * a.ledger.neuron_rmw());
  EXPECT_EQ(b.ledger.neuron_writes, 3 * a.ledger.neuron_writes);
}

TEST(SimulateRun, FusionChangesOnlyNeuronAndRegisterCounters) {
  auto f = dmp_fixture(12, 16, 4, 40, 2, 0.2);
  ScheduleConfig fused, unfused;
  unfused.fusion = false;
  auto a = simulate_run(f.trace, fused).ledger;
  auto b = simulate_run(f.trace, unfused).ledger;
  EXPECT_EQ(a.macs(), b.macs());
  EXPECT_EQ(a.weight_reads(), b.weight_reads());
  EXPECT_EQ(a.spill_reads, b.spill_reads);
  EXPECT_NE(a.register_accesses, b.register_accesses);
}

TEST(SimulateRun, StationarityCountersMatchClosedForm) {
  const std::size_t M = 30, N = 16, d = 6, T = 50;
  for (std::int64_t ds : {1, 3, 7}) {
    auto f = dmp_fixture(M, N, d, T, ds, 0.15, 11);
    std::uint64_t nnz_sum = 0;
    for (const auto& fr : f.in.frames) nnz_sum += fr.nnz();
    const auto het = simulate_run(f.trace, ScheduleConfig{}).per_layer[0];
    EXPECT_EQ(het.wf_reads, nnz_sum * N);
    EXPECT_EQ(het.p_reads + het.v_reads, N * (d + 1) * ceil_div(T, static_cast<std::uint64_t>(ds)));
    ScheduleConfig uo;
    uo.stationarity = Stationarity::uniform_output;
    const auto out = simulate_run(f.trace, uo).per_layer[0];
    EXPECT_EQ(out.wf_reads, M * N * T);
    EXPECT_EQ(out.spike_macs, het.spike_macs);
  }
}

TEST(SimulateRun, InputStationaryReadsAreMonotoneInDensity) {
  const std::size_t M = 25, N = 10, T = 30;
  auto sparse = random_events(T, M, 0.1, 5);
  auto dense = sparse;
  auto extra = random_events(T, M, 0.2, 6);
  for (std::size_t k = 0; k < T; ++k) {
    Vec v = dense.frames[k].dense(M) + extra.frames[k].dense(M);
    dense.frames[k] = Frame::from_dense(v.cwiseMin(1.0));
  }
  const auto net = init_network(testing_util::small_net(M, N, 3, Variant::dmp, 4), 2);
  const auto a = simulate_run(record_trace(net, sparse), ScheduleConfig{}).per_layer[0];
  const auto b = simulate_run(record_trace(net, dense), ScheduleConfig{}).per_layer[0];
  EXPECT_LE(a.wf_reads, b.wf_reads);
}

TEST(SimulateRun, DilationScalesMemoryPathMacs) {
  const std::size_t T = 97;
  auto base = dmp_fixture(16, 12, 5, T, 1, 0.1);
  const auto ref = simulate_run(base.trace, ScheduleConfig{}).per_layer[0].memory_path_macs();
  ASSERT_GT(ref, 0u);
  for (std::int64_t ds : {1, 2, 5, 10}) {
    auto f = dmp_fixture(16, 12, 5, T, ds, 0.1);
    const auto macs = simulate_run(f.trace, ScheduleConfig{}).per_layer[0].memory_path_macs();
    EXPECT_EQ(macs * T, ref * ceil_div(T, static_cast<std::uint64_t>(ds))) << "ds=" << ds;
  }
}

TEST(SimulateRun, ZeroCostModelGivesZeroEnergySameCounts) {
  auto f = dmp_fixture(10, 8, 3, 20, 1, 0.2);
  CostModel zero{0, 0, 0, 0};
  const auto a = simulate_run(f.trace, ScheduleConfig{});
  const auto b = simulate_run(f.trace, ScheduleConfig{}, zero);
  EXPECT_EQ(b.energy, 0.0);
  EXPECT_GT(a.energy, 0.0);
  EXPECT_EQ(a.ledger, b.ledger);
}

TEST(SimulateRun, RejectsNegativeCosts) {
  auto f = dmp_fixture(10, 8, 3, 5, 1, 0.2);
  CostModel bad;
  bad.mac = -1;
  EXPECT_THROW(simulate_run(f.trace, ScheduleConfig{}, bad), ConfigError);
}

TEST(SimulateRun, TraceMismatchIsReported) {
  auto f = dmp_fixture(10, 8, 3, 5, 1, 0.2);
  f.trace.steps[0][2].input.push(99, 1.0);
  EXPECT_THROW(simulate_run(f.trace, ScheduleConfig{}), DimensionError);
  auto g = dmp_fixture(10, 8, 3, 5, 1, 0.2);
  g.trace.steps[0][1].m = Vec::Zero(5);
  EXPECT_THROW(simulate_run(g.trace, ScheduleConfig{}), DimensionError);
}

TEST(CompareSchedules, DefaultScheduleDominatesIntensity) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto f = dmp_fixture(24, 16, 4, 40, 1 + static_cast<std::int64_t>(seed), 0.1, seed);
    const auto table = compare_schedules(f.trace);
    ASSERT_EQ(table.size(), 12u);
    const SimReport* best = nullptr;
    for (const auto& r : table)
      if (r.schedule == ScheduleConfig{}) best = &r;
    ASSERT_NE(best, nullptr);
    for (const auto& r : table) {
      if (&r == best) continue;
      EXPECT_GT(best->arithmetic_intensity, r.arithmetic_intensity) << r.schedule.name();
    }
  }
}

TEST(CompareSchedules, EmptyTraceEqualOnSpikePath) {
  auto f = dmp_fixture(10, 8, 3, 12, 1, 0.0);
  for (const auto& r : compare_schedules(f.trace)) EXPECT_EQ(r.ledger.spike_macs, 0u);
  SimTrace none;
  none.layers = f.trace.layers;
  none.steps.resize(none.layers.size());
  const auto table = compare_schedules(none);
  for (const auto& r : table) {
    EXPECT_EQ(r.ledger.wf_reads, 0u);
    EXPECT_EQ(r.ledger.spike_path_cycles, 0u);
  }
}

TEST(CompareSchedules, ThreadCountDoesNotChangeResults) {
  auto f = dmp_fixture(16, 12, 4, 30, 2, 0.2);
  const auto a = compare_schedules(f.trace, {}, 1);
  const auto b = compare_schedules(f.trace, {}, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].ledger, b[i].ledger);
    EXPECT_EQ(a[i].energy, b[i].energy);
  }
}

TEST(Replay, MatchesLayersBitwiseWithoutBreaking) {
  auto cfg = testing_util::small_net(14, 10, 3, Variant::dmp, 4, 2);
  cfg.layers[1].dilation = 3;
  const auto net = init_network(cfg, 9);
  const auto in = random_events(60, 14, 0.3, 10);
  ForwardOptions opt;
  opt.record = true;
  const auto fwd = *network_forward(net, in, opt).trace;
  const auto trace = make_trace(net, fwd);
  ScheduleConfig off;
  off.dependency_breaking = false;
  for (bool fusion : {true, false}) {
    off.fusion = fusion;
    const auto r = replay(net, trace, off);
    for (std::size_t l = 0; l < fwd.size(); ++l)
      for (std::size_t k = 0; k < fwd[l].size(); ++k) {
        ASSERT_TRUE((r.u_pre[l][k].array() == fwd[l][k].u_pre.array()).all()) << "l=" << l << " k=" << k;
        ASSERT_TRUE((r.m[l][k].array() == fwd[l][k].m.array()).all());
      }
  }
}

TEST(Replay, FoldedFormWithinTolerance) {
  auto cfg = testing_util::small_net(14, 10, 3, Variant::dmp, 4, 2);
  const auto net = init_network(cfg, 4);
  const auto in = random_events(80, 14, 0.3, 12);
  ForwardOptions opt;
  opt.record = true;
  const auto fwd = *network_forward(net, in, opt).trace;
  const auto r = replay(net, make_trace(net, fwd), ScheduleConfig{});
  double worst = 0.0;
  for (std::size_t l = 0; l < fwd.size(); ++l)
    for (std::size_t k = 0; k < fwd[l].size(); ++k)
      worst = std::max(worst, (r.u_pre[l][k] - fwd[l][k].u_pre).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-10);
}

TEST(Schedules, ParseNames) {
  EXPECT_EQ(parse_schedule("fused"), ScheduleConfig{});
  const auto s = parse_schedule("unfused,uniform-output,no-breaking");
  EXPECT_FALSE(s.fusion);
  EXPECT_EQ(s.stationarity, Stationarity::uniform_output);
  EXPECT_FALSE(s.dependency_breaking);
  EXPECT_EQ(parse_schedule(s.name()), s);
  EXPECT_THROW(parse_schedule("sideways"), ConfigError);
}
