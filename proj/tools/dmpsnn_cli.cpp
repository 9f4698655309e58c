// dmpsnn: command-line entry point.
//
// Exit codes: 0 success, 2 usage errors, 3 config/schema violations,
// 1 anything else (I/O, numeric divergence, ...).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dmpsnn/config.hpp"
#include "dmpsnn/experiment.hpp"
#include "dmpsnn/io.hpp"
#include "dmpsnn/memory_kernel.hpp"

using namespace dmpsnn;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  bool verbose = false;
};

std::size_t default_threads() {
  if (const char* env = std::getenv("DMPSNN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
    throw UsageError("DMPSNN_THREADS must be a positive integer");
  }
  return 1;
}

std::size_t threads_of(const Common& c) { return c.threads > 0 ? c.threads : default_threads(); }

Json matrix_json(const Eigen::MatrixXd& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(r);
  }
  return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

RunConfig load_run(const Common& c) {
  RunConfig rc = run_config_from_json(read_json_file(c.config));
  if (c.seed) rc.train.seed = *c.seed;
  return rc;
}

// Accepts a checkpoint stem, a .bin/.json path, or a run directory.
std::string checkpoint_stem(const std::string& p) {
  namespace fs = std::filesystem;
  if (fs::is_directory(p)) return (fs::path(p) / "model").string();
  const fs::path path(p);
  if (path.extension() == ".bin" || path.extension() == ".json") return (path.parent_path() / path.stem()).string();
  return p;
}

int cmd_gen_matrices(std::size_t d, double theta, double dt, bool no_scaling, const std::string& out) {
  StateSpaceConfig cfg{d, theta, dt, !no_scaling};
  cfg.validate();
  const auto sys = build_pade(d);
  const auto mem = discretize_zoh(sys, cfg);
  Json j = {{"d", d},
            {"theta", theta},
            {"dt", dt},
            {"theta_scaling", !no_scaling},
            {"A", matrix_json(sys.A)},
            {"B", vector_json(sys.B)},
            {"A_bar", matrix_json(mem.A_bar)},
            {"B_bar", vector_json(mem.B_bar)}};
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) {
    ensure_dir(out);
    io::write_text(out + "/matrices.json", text);
    write_manifest(out, "gen-matrices", {"matrices.json"});
  }
  return 0;
}

int cmd_train(const Common& c) {
  RunConfig rc = load_run(c);
  MetricsSink echo;
  if (c.verbose) echo = [](const EpochMetrics& m) { std::cerr << metrics_line(m, false) << "\n"; };
  const auto s = run_experiment(rc, c.out, threads_of(c), echo);
  std::cout << Json{{"test_accuracy", s.test_accuracy}, {"train_accuracy", s.train_accuracy},
                    {"parameters", s.parameters}, {"out", c.out}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& model, bool trace) {
  const RunConfig rc = load_run(c);
  const Network net = load_checkpoint(checkpoint_stem(model));
  const TaskData data = load_task(rc.task);
  check_task_fits(data, net.config);
  ensure_dir(c.out);
  const auto ev = evaluate(net, data.test, threads_of(c));
  Json preds = Json::array();
  for (std::size_t i = 0; i < data.test.size(); ++i)
    preds.push_back({{"id", data.test[i].id}, {"label", data.test[i].label}, {"prediction", ev.predictions[i]}});
  Json j = {{"test_loss", ev.loss}, {"test_accuracy", ev.accuracy}, {"samples", data.test.size()}, {"predictions", preds}};
  io::write_text(c.out + "/eval.json", j.dump(2) + "\n");
  std::vector<std::string> files{"eval.json"};
  if (trace) {
    if (data.test.empty()) throw UsageError("eval --trace: test split is empty");
    write_trace(record_trace(net, data.test.front().input), c.out + "/trace.bin");
    files.push_back("trace.bin");
  }
  write_manifest(c.out, "eval", files);
  std::cout << Json{{"test_accuracy", ev.accuracy}, {"test_loss", ev.loss}}.dump() << "\n";
  return 0;
}

int cmd_grad_profile(const Common& c, const std::string& model, std::size_t samples) {
  const RunConfig rc = load_run(c);
  const Network net = model.empty() ? init_network(rc.network, rc.train.seed) : load_checkpoint(checkpoint_stem(model));
  const TaskData data = load_task(rc.task);
  check_task_fits(data, net.config);
  const auto& probe = data.test.empty() ? data.train : data.test;
  if (probe.empty()) throw UsageError("grad-profile: task has no samples");
  const std::size_t n = samples > 0 ? samples : rc.outputs.profile_samples;
  const auto g = mean_profile(net, probe, n, rc.train.surrogate);
  ensure_dir(c.out);
  io::write_text(c.out + "/profile.csv", profile_csv(g));
  write_manifest(c.out, "grad-profile", {"profile.csv"});
  std::cout << Json{{"T", g.size()}, {"tail_ratio", g.empty() ? 0.0 : g.front() / g.back()}}.dump() << "\n";
  return 0;
}

int cmd_hwsim(const Common& c, const std::string& trace_path, const std::string& schedule, const std::string& compare,
              bool sweep, const std::string& cost_path, std::int64_t dilation) {
  const SimTrace trace = read_trace(trace_path);
  const CostModel cost = cost_path.empty() ? CostModel{} : cost_from_json(read_json_file(cost_path));
  ScheduleConfig primary;
  try {
    primary = parse_schedule(schedule);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("--schedule: ") + e.what());
  }
  primary.dilation = dilation;
  std::vector<SimReport> reports{simulate_run(trace, primary, cost)};
  Json j = {{"trace", {{"T", trace.T}, {"layers", trace.layers.size()}}},
            {"cost", cost_to_json(cost)},
            {"schedule", report_to_json(reports[0])}};
  if (!compare.empty()) {
    ScheduleConfig other;
    try {
      other = parse_schedule(compare);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("--compare: ") + e.what());
    }
    other.dilation = dilation;
    const auto r = simulate_run(trace, other, cost);
    const auto& a = reports[0].ledger;
    auto ratio = [](std::uint64_t num, std::uint64_t den) { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; };
    j["compare"] = report_to_json(r);
    j["ratios"] = {{"neuron_sram", ratio(r.ledger.neuron_rmw(), a.neuron_rmw())},
                   {"wf_reads", ratio(r.ledger.wf_reads, a.wf_reads)},
                   {"critical_path_cycles", ratio(r.ledger.critical_path_cycles, a.critical_path_cycles)},
                   {"sram_words", ratio(r.ledger.sram_words(), a.sram_words())}};
    reports.push_back(r);
  }
  if (sweep) {
    reports = compare_schedules(trace, cost, threads_of(c), dilation);
    Json rows = Json::array();
    for (const auto& r : reports) rows.push_back(report_to_json(r));
    j["sweep"] = rows;
  }
  ensure_dir(c.out);
  io::write_text(c.out + "/report.json", j.dump(2) + "\n");
  io::write_text(c.out + "/schedules.csv", schedules_csv(reports));
  write_manifest(c.out, "hwsim", {"report.json", "schedules.csv"});
  Json brief = {{"schedule", primary.name()}, {"arithmetic_intensity", reports[0].arithmetic_intensity}};
  if (j.contains("ratios")) brief["neuron_sram_ratio"] = j["ratios"]["neuron_sram"];
  std::cout << brief.dump() << "\n";
  return 0;
}

int cmd_bench(const Common& c) {
  BenchConfig bc = bench_config_from_json(read_json_file(c.config));
  if (c.seed) bc.seeds = {*c.seed};
  const auto r = run_bench(bc, threads_of(c));
  auto files = write_bench(r, c.out);
  write_manifest(c.out, "bench", files);
  Json means = Json::object();
  for (const auto& m : bc.models) means[m.name] = r.mean_accuracy(m.name);
  std::cout << Json{{"mean_test_accuracy", means}}.dump() << "\n";
  return 0;
}

int cmd_make_task(const Common& c) {
  TaskSpec t = task_from_json(read_json_file(c.config));
  if (c.seed) {
    t.recall.seed = *c.seed;
    t.waves.seed = *c.seed;
  }
  ensure_dir(c.out);
  std::size_t n = 0;
  if (t.kind == "delayed-recall") {
    const auto d = make_delayed_recall(t.recall);
    write_jsonl(d, c.out + "/data.jsonl");
    n = d.size();
  } else if (t.kind == "waveforms") {
    const auto d = make_waveforms(t.waves);
    write_jsonl(d, c.out + "/data.jsonl");
    n = d.size();
  } else {
    throw SchemaError("make-task: only synthetic kinds (delayed-recall, waveforms) can be generated");
  }
  write_manifest(c.out, "make-task", {"data.jsonl"});
  std::cout << Json{{"samples", n}, {"kind", t.kind}}.dump() << "\n";
  return 0;
}

void print_error(const char* kind, const std::string& msg) {
  std::cerr << Json{{"error", kind}, {"message", msg}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmpsnn: dual-memory-pathway spiking networks, training, gradient analysis and dataflow simulation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common c;
  auto add_common = [&](CLI::App* s, bool needs_config) {
    auto* opt = s->add_option("--config", c.config, "JSON configuration file");
    if (needs_config) opt->required();
    s->add_option("--out", c.out, "output directory")->required();
    s->add_option("--seed", c.seed, "override the configured seed");
    s->add_option("--threads", c.threads, "worker threads (default: DMPSNN_THREADS or 1)");
    s->add_flag("-v,--verbose", c.verbose, "verbose progress on stderr");
  };

  std::size_t gm_d = 0;
  double gm_theta = 40.0, gm_dt = 1.0;
  bool gm_noscale = false;
  std::string gm_out;
  auto* gen = app.add_subcommand("gen-matrices", "print A, B, A_bar, B_bar as JSON");
  gen->add_option("--d", gm_d, "memory dimension")->required();
  gen->add_option("--theta", gm_theta, "state buffer length in timesteps");
  gen->add_option("--dt", gm_dt, "timestep");
  gen->add_flag("--no-theta-scaling", gm_noscale, "discretize A, B without the 1/theta factor");
  gen->add_option("--out", gm_out, "also write matrices.json here");

  auto* tr = app.add_subcommand("train", "train a model from a run config");
  add_common(tr, true);

  std::string model;
  bool eval_trace = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the configured test split");
  add_common(ev, true);
  ev->add_option("--model", model, "checkpoint stem, .bin/.json path, or run directory")->required();
  ev->add_flag("--trace", eval_trace, "also record trace.bin for the first test sample");

  std::size_t prof_samples = 0;
  auto* gp = app.add_subcommand("grad-profile", "per-timestep gradient norms under last-timestep loss");
  add_common(gp, true);
  gp->add_option("--model", model, "checkpoint (default: freshly initialized network)");
  gp->add_option("--samples", prof_samples, "number of samples to average");

  std::string trace_path, schedule = "fused", compare, cost_path;
  bool sweep = false;
  std::int64_t hw_dilation = 0;
  auto* hw = app.add_subcommand("hwsim", "dataflow simulation of a recorded trace");
  hw->add_option("--trace", trace_path, "trace.bin recorded by train or eval")->required();
  hw->add_option("--schedule", schedule, "fused | unfused | comma list (e.g. unfused,uniform-output,no-breaking)");
  hw->add_option("--compare", compare, "second schedule to compare against");
  hw->add_flag("--sweep", sweep, "simulate all 12 schedule combinations");
  hw->add_option("--cost", cost_path, "cost model JSON");
  hw->add_option("--dilation", hw_dilation, "override memory dilation (0: from trace)")->check(CLI::NonNegativeNumber);
  hw->add_option("--out", c.out, "output directory")->required();
  hw->add_option("--threads", c.threads, "worker threads for --sweep");

  auto* be = app.add_subcommand("bench", "multi-model, multi-seed benchmark table");
  add_common(be, true);

  auto* mt = app.add_subcommand("make-task", "write a synthetic task as JSONL");
  add_common(mt, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen) return cmd_gen_matrices(gm_d, gm_theta, gm_dt, gm_noscale, gm_out);
    if (*tr) return cmd_train(c);
    if (*ev) return cmd_eval(c, model, eval_trace);
    if (*gp) return cmd_grad_profile(c, model, prof_samples);
    if (*hw) return cmd_hwsim(c, trace_path, schedule, compare, sweep, cost_path, hw_dilation);
    if (*be) return cmd_bench(c);
    if (*mt) return cmd_make_task(c);
  } catch (const UsageError& e) {
    print_error("usage", e.what());
    return 2;
  } catch (const SchemaError& e) {
    print_error("schema", e.what());
    return 3;
  } catch (const ConfigError& e) {
    print_error("config", e.what());
    return 3;
  } catch (const IoError& e) {
    print_error("io", e.what());
    return 1;
  } catch (const NumericError& e) {
    print_error("numeric", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 2;
}
