#pragma once

// Experiment harness: task materialization, single training runs and
// multi-seed benchmark tables. Every output is a pure function of the
// configuration and seed (wall-clock fields only when explicitly requested).

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dmpsnn/bptt.hpp"
#include "dmpsnn/config.hpp"
#include "dmpsnn/data.hpp"
#include "dmpsnn/hw_dataflow.hpp"
#include "dmpsnn/io.hpp"
#include "dmpsnn/train.hpp"

namespace dmpsnn {

struct TaskData {
  std::vector<Example> train, val, test;
  std::size_t channels = 0;
  std::size_t classes = 0;
};

namespace detail {

template <class Seq>
TaskData split_task(const std::vector<Seq>& all, const SplitSpec& sp_in, std::size_t channels) {
  SplitSpec sp = sp_in;
  if (sp.train == 0 && sp.val == 0 && sp.test == 0) {
    sp.train = all.size() * 3 / 4;
    sp.test = all.size() - sp.train;
  }
  auto parts = split_dataset(all, sp.train, sp.val, sp.test, sp.seed);
  TaskData t;
  t.train = to_examples(parts.train);
  t.val = to_examples(parts.val);
  t.test = to_examples(parts.test);
  t.channels = channels;
  t.classes = num_classes(all);
  return t;
}

}  // namespace detail

inline TaskData load_task(const TaskSpec& spec) {
  if (spec.kind == "delayed-recall") {
    auto all = make_delayed_recall(spec.recall);
    TaskData t = detail::split_task(all, spec.split, spec.recall.channels());
    t.classes = 4;
    return t;
  }
  if (spec.kind == "waveforms" || spec.kind == "dense") {
    std::vector<DenseSequence> all = spec.kind == "waveforms" ? make_waveforms(spec.waves) : load_dense(spec.path);
    if (spec.permute && !all.empty()) {
      const auto perm = make_permutation(all.front().T(), spec.permute_seed);
      for (auto& s : all) s = permute(s, perm);
    }
    TaskData t = detail::split_task(all, spec.split, 1);
    if (spec.kind == "waveforms") t.classes = spec.waves.classes;
    return t;
  }
  if (spec.kind == "events") {
    auto all = load_events(spec.path, spec.use_cache);
    if (!spec.classes.empty()) all = select_classes(all, spec.classes, spec.per_class_cap);
    std::size_t channels = 0;
    for (const auto& s : all) channels = std::max(channels, s.channels);
    for (const auto& s : all)
      if (s.channels != channels) throw SchemaError("sample " + s.id + ": inconsistent channel count");
    return detail::split_task(all, spec.split, channels);
  }
  throw SchemaError("unknown task kind \"" + spec.kind + "\"");
}

struct OutputSpec {
  bool checkpoint = true;
  bool gradient_profile = false;
  std::size_t profile_samples = 1;
  bool trace = false;
};

struct RunConfig {
  TaskSpec task;
  NetworkConfig network;
  TrainConfig train;
  OutputSpec outputs;
};

inline RunConfig run_config_from_json(const Json& j) {
  cfg::Reader r(j, "config", {"task", "network", "train", "outputs"});
  RunConfig c;
  c.task = task_from_json(r.at("task"));
  c.network = network_from_json(r.at("network"));
  c.train = r.has("train") ? train_from_json(r.at("train")) : TrainConfig{};
  if (r.has("outputs")) {
    cfg::Reader o(r.at("outputs"), "config.outputs", {"checkpoint", "gradient_profile", "profile_samples", "trace"});
    c.outputs.checkpoint = o.flag("checkpoint", true);
    c.outputs.gradient_profile = o.flag("gradient_profile", false);
    c.outputs.profile_samples = o.count("profile_samples", 1);
    c.outputs.trace = o.flag("trace", false);
  }
  return c;
}

inline void check_task_fits(const TaskData& t, const NetworkConfig& net) {
  if (t.channels != net.input_channels)
    throw SchemaError("network.input_channels = " + std::to_string(net.input_channels) + " but the task has " +
                      std::to_string(t.channels) + " channels");
  if (t.classes > net.outputs())
    throw SchemaError("network.outputs = " + std::to_string(net.outputs()) + " but the task has " +
                      std::to_string(t.classes) + " classes");
}

inline std::string metrics_line(const EpochMetrics& m, bool with_time) {
  Json j = {{"epoch", m.epoch}, {"split", m.split}, {"loss", m.loss}, {"accuracy", m.accuracy}};
  if (with_time) j["wall_time"] = m.wall_time;
  return j.dump();
}

/// Mean of per-sample normalized gradient profiles (last-timestep loss).
inline std::vector<double> mean_profile(const Network& net, const std::vector<Example>& samples, std::size_t n,
                                        const SurrogateSpec& sg) {
  std::vector<double> acc;
  n = std::min(n, samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = gradient_profile(net, samples[i].input, samples[i].label, sg, true);
    if (acc.empty()) acc.assign(g.size(), 0.0);
    if (g.size() != acc.size()) throw DimensionError("gradient profiles of unequal length");
    for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
  }
  for (auto& v : acc) v /= static_cast<double>(std::max<std::size_t>(n, 1));
  return acc;
}

inline std::string profile_csv(const std::vector<double>& g) {
  std::ostringstream s;
  s << "k,norm\n" << std::setprecision(17);
  for (std::size_t k = 0; k < g.size(); ++k) s << k << ',' << g[k] << '\n';
  return s.str();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

struct RunSummary {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::size_t parameters = 0;
  std::vector<std::string> files;
};

inline void write_manifest(const std::string& out, const std::string& command, const std::vector<std::string>& files) {
  Json j = {{"command", command}, {"files", files}};
  io::write_text(out + "/manifest.json", j.dump(2) + "\n");
}

/// Trains one model and writes metrics.jsonl, summary.json and the requested
/// extras into `out`.
inline RunSummary run_experiment(const RunConfig& rc, const std::string& out, std::size_t threads = 1,
                                 const MetricsSink& echo = {}) {
  ensure_dir(out);
  const TaskData data = load_task(rc.task);
  check_task_fits(data, rc.network);
  Network net = init_network(rc.network, rc.train.seed);
  TrainConfig tc = rc.train;
  tc.threads = threads;

  RunSummary sum;
  sum.parameters = count_parameters(net);
  std::ostringstream metrics;
  const auto history = train(net, data.train, &data.test, tc, [&](const EpochMetrics& m) {
    metrics << metrics_line(m, tc.record_time) << '\n';
    if (echo) echo(m);
  });
  io::write_text(out + "/metrics.jsonl", metrics.str());
  sum.files.push_back("metrics.jsonl");
  for (const auto& m : history) {
    if (m.split == "train") sum.train_accuracy = m.accuracy;
    if (m.split == "test") {
      sum.test_accuracy = m.accuracy;
      sum.test_loss = m.loss;
    }
  }
  if (rc.outputs.checkpoint) {
    save_checkpoint(net, out + "/model");
    sum.files.push_back("model.bin");
    sum.files.push_back("model.json");
  }
  const auto& probe = data.test.empty() ? data.train : data.test;
  if (rc.outputs.gradient_profile) {
    io::write_text(out + "/profile.csv", profile_csv(mean_profile(net, probe, rc.outputs.profile_samples, tc.surrogate)));
    sum.files.push_back("profile.csv");
  }
  if (rc.outputs.trace) {
    write_trace(record_trace(net, probe.at(0).input), out + "/trace.bin");
    sum.files.push_back("trace.bin");
  }
  Json s = {{"train_accuracy", sum.train_accuracy}, {"test_accuracy", sum.test_accuracy},
            {"test_loss", sum.test_loss},           {"parameters", sum.parameters},
            {"epochs", tc.epochs},                  {"seed", tc.seed},
            {"train_samples", data.train.size()},   {"test_samples", data.test.size()}};
  io::write_text(out + "/summary.json", s.dump(2) + "\n");
  sum.files.push_back("summary.json");
  write_manifest(out, "train", sum.files);
  return sum;
}

// ---------------------------------------------------------------------------
// Benchmarks: several models x seeds on one task.

struct BenchModel {
  std::string name;
  NetworkConfig network;
};

struct BenchConfig {
  TaskSpec task;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::vector<BenchModel> models;
};

inline BenchConfig bench_config_from_json(const Json& j) {
  cfg::Reader r(j, "bench", {"task", "train", "seeds", "models"});
  BenchConfig b;
  b.task = task_from_json(r.at("task"));
  if (r.has("train")) b.train = train_from_json(r.at("train"));
  if (r.has("seeds")) {
    const auto& s = r.at("seeds");
    if (!s.is_array() || s.empty()) throw SchemaError("bench.seeds: expected a nonempty array");
    b.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_unsigned()) throw SchemaError("bench.seeds: expected nonnegative integers");
      b.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  const auto& ms = r.at("models");
  if (!ms.is_array() || ms.empty()) throw SchemaError("bench.models: expected a nonempty array");
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const std::string path = "bench.models[" + std::to_string(i) + "]";
    cfg::Reader mr(ms[i], path, {"name", "network"});
    b.models.push_back({mr.text("name", "model" + std::to_string(i)), network_from_json(mr.at("network"), path + ".network")});
  }
  return b;
}

struct BenchRow {
  std::string model;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::size_t parameters = 0;
};

struct BenchResult {
  std::vector<BenchRow> rows;

  double mean_accuracy(const std::string& model) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (r.model == model) {
        s += r.test_accuracy;
        ++n;
      }
    return n ? s / static_cast<double>(n) : std::nan("");
  }
};

inline BenchResult run_bench(const BenchConfig& bc, std::size_t threads = 1) {
  const TaskData data = load_task(bc.task);
  BenchResult res;
  for (const auto& m : bc.models) {
    check_task_fits(data, m.network);
    for (auto seed : bc.seeds) {
      Network net = init_network(m.network, seed);
      TrainConfig tc = bc.train;
      tc.seed = seed;
      tc.threads = threads;
      const auto hist = train(net, data.train, nullptr, tc);
      const auto ev = evaluate(net, data.test, threads);
      res.rows.push_back({m.name, seed, hist.back().accuracy, ev.accuracy, ev.loss, count_parameters(net)});
    }
  }
  return res;
}

inline std::vector<std::string> write_bench(const BenchResult& r, const std::string& out) {
  ensure_dir(out);
  std::ostringstream csv;
  csv << "model,seed,train_accuracy,test_accuracy,test_loss,parameters\n" << std::setprecision(17);
  Json rows = Json::array();
  std::vector<std::string> names;
  for (const auto& x : r.rows) {
    csv << x.model << ',' << x.seed << ',' << x.train_accuracy << ',' << x.test_accuracy << ',' << x.test_loss << ','
        << x.parameters << '\n';
    rows.push_back({{"model", x.model},
                    {"seed", x.seed},
                    {"train_accuracy", x.train_accuracy},
                    {"test_accuracy", x.test_accuracy},
                    {"test_loss", x.test_loss},
                    {"parameters", x.parameters}});
    if (std::find(names.begin(), names.end(), x.model) == names.end()) names.push_back(x.model);
  }
  Json means = Json::object();
  for (const auto& n : names) means[n] = r.mean_accuracy(n);
  io::write_text(out + "/bench.csv", csv.str());
  io::write_text(out + "/bench.json", Json{{"rows", rows}, {"mean_test_accuracy", means}}.dump(2) + "\n");
  return {"bench.csv", "bench.json"};
}

// ---------------------------------------------------------------------------
// Dataflow reports

inline Json ledger_to_json(const AccessLedger& L) {
  return {{"neuron_sram_reads", L.neuron_reads},
          {"neuron_sram_writes", L.neuron_writes},
          {"neuron_rmw", L.neuron_rmw()},
          {"spill_reads", L.spill_reads},
          {"spill_writes", L.spill_writes},
          {"wf_reads", L.wf_reads},
          {"wm_reads", L.wm_reads},
          {"p_reads", L.p_reads},
          {"v_reads", L.v_reads},
          {"wx_reads", L.wx_reads},
          {"ab_reads", L.ab_reads},
          {"register_accesses", L.register_accesses},
          {"row_activations", L.row_activations},
          {"spike_macs", L.spike_macs},
          {"compress_macs", L.compress_macs},
          {"memory_update_macs", L.memory_update_macs},
          {"memory_integration_macs", L.memory_integration_macs},
          {"macs", L.macs()},
          {"memory_updates", L.memory_updates},
          {"spike_path_cycles", L.spike_path_cycles},
          {"memory_update_cycles", L.memory_update_cycles},
          {"memory_integration_cycles", L.memory_integration_cycles},
          {"neuron_cycles", L.neuron_cycles},
          {"critical_path_cycles", L.critical_path_cycles},
          {"memory_critical_cycles", L.memory_critical_cycles},
          {"max_step_cycles", L.max_step_cycles},
          {"sram_words", L.sram_words()},
          {"steps", L.steps}};
}

inline Json report_to_json(const SimReport& r) {
  return {{"schedule", r.schedule.name()},
          {"arithmetic_intensity", r.arithmetic_intensity},
          {"energy_proxy", r.energy},
          {"throughput", r.throughput},
          {"ledger", ledger_to_json(r.ledger)}};
}

inline std::string schedules_csv(const std::vector<SimReport>& rs) {
  std::ostringstream s;
  s << "schedule,arithmetic_intensity,energy_proxy,critical_path_cycles,neuron_rmw,wf_reads,macs\n"
    << std::setprecision(17);
  for (const auto& r : rs)
    s << '"' << r.schedule.name() << "\"," << r.arithmetic_intensity << ',' << r.energy << ','
      << r.ledger.critical_path_cycles << ',' << r.ledger.neuron_rmw() << ',' << r.ledger.wf_reads << ','
      << r.ledger.macs() << '\n';
  return s.str();
}

}  // namespace dmpsnn
