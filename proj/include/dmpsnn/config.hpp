#pragma once

// Strict JSON configuration: every object rejects unknown keys and wrong
// types with a SchemaError naming the offending path.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmpsnn/data.hpp"
#include "dmpsnn/errors.hpp"
#include "dmpsnn/hw_dataflow.hpp"
#include "dmpsnn/spiking_layers.hpp"
#include "dmpsnn/train.hpp"

namespace dmpsnn {

using Json = nlohmann::json;

namespace cfg {

class Reader {
 public:
  Reader(const Json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw SchemaError(path_ + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!allowed.count(it.key())) throw SchemaError(path_ + ": unknown key \"" + it.key() + "\"");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const Json& at(const char* key) const {
    if (!has(key)) throw SchemaError(path_ + ": missing key \"" + key + "\"");
    return j_.at(key);
  }
  std::string sub(const char* key) const { return path_ + "." + key; }

  double number(const char* key, double def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw SchemaError(sub(key) + ": expected a number");
    return v.get<double>();
  }
  std::uint64_t count(const char* key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw SchemaError(sub(key) + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t required_count(const char* key) const {
    at(key);
    return count(key, 0);
  }
  bool flag(const char* key, bool def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw SchemaError(sub(key) + ": expected true or false");
    return v.get<bool>();
  }
  std::string text(const char* key, const std::string& def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw SchemaError(sub(key) + ": expected a string");
    return v.get<std::string>();
  }
  template <class E, class Parse>
  E choice(const char* key, E def, Parse parse) const {
    if (!has(key)) return def;
    try {
      return parse(text(key, ""));
    } catch (const ConfigError& e) {
      throw SchemaError(sub(key) + ": " + e.what());
    }
  }

 private:
  const Json& j_;
  std::string path_;
};

inline ReadoutMode parse_readout(const std::string& s) {
  if (s == "mean") return ReadoutMode::mean;
  if (s == "last") return ReadoutMode::last;
  throw ConfigError("unknown readout \"" + s + "\" (expected mean or last)");
}

inline std::string to_string(ReadoutMode m) { return m == ReadoutMode::mean ? "mean" : "last"; }

}  // namespace cfg

inline Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw SchemaError(path + ": malformed JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Network

// Shared layer keys; globals give the defaults for every layer.
inline void read_layer_fields(const cfg::Reader& r, LayerSpec& s) {
  s.variant = r.choice("variant", s.variant, parse_variant);
  s.memory.d = r.count("memory_dim", s.memory.d);
  s.memory.theta = r.number("theta", s.memory.theta);
  s.dilation = static_cast<std::int64_t>(r.count("dilation", static_cast<std::uint64_t>(s.dilation)));
  s.max_delay = r.count("max_delay", s.max_delay);
  s.lif.beta = r.number("beta", s.lif.beta);
  s.lif.threshold = r.number("threshold", s.lif.threshold);
  s.lif.reset = r.choice("reset", s.lif.reset, parse_reset);
  s.fx = r.choice("fx", s.fx, parse_activation);
  s.init_gain = r.number("init_gain", s.init_gain);
}

inline const std::set<std::string> kLayerKeys = {"variant", "memory_dim", "theta", "dilation", "max_delay",
                                                 "beta",    "threshold",  "reset", "fx",       "init_gain"};

inline NetworkConfig network_from_json(const Json& j, const std::string& path = "network") {
  std::set<std::string> keys = kLayerKeys;
  keys.insert({"input_channels", "outputs", "hidden", "readout", "readout_layer", "dt", "theta_scaling"});
  cfg::Reader r(j, path, keys);
  LayerSpec base;
  base.variant = Variant::plain;
  base.memory.d = 0;
  base.memory.dt = r.number("dt", 1.0);
  base.memory.theta_scaling = r.flag("theta_scaling", true);
  read_layer_fields(r, base);

  NetworkConfig net;
  net.input_channels = r.required_count("input_channels");
  net.readout = r.choice("readout", ReadoutMode::mean, cfg::parse_readout);
  std::size_t width = net.input_channels;
  if (r.has("hidden")) {
    const auto& h = r.at("hidden");
    if (!h.is_array()) throw SchemaError(r.sub("hidden") + ": expected an array");
    for (std::size_t i = 0; i < h.size(); ++i) {
      std::set<std::string> lk = kLayerKeys;
      lk.insert("neurons");
      cfg::Reader lr(h[i], r.sub("hidden") + "[" + std::to_string(i) + "]", lk);
      LayerSpec s = base;
      read_layer_fields(lr, s);
      s.inputs = width;
      s.neurons = lr.required_count("neurons");
      if (s.variant != Variant::dmp) s.memory.d = 0;
      net.layers.push_back(s);
      width = s.neurons;
    }
  }
  LayerSpec out = base;
  out.variant = Variant::plain;
  out.memory.d = 0;
  if (r.has("readout_layer")) {
    cfg::Reader orr(r.at("readout_layer"), r.sub("readout_layer"), kLayerKeys);
    read_layer_fields(orr, out);
    if (out.variant != Variant::dmp) out.memory.d = 0;
  }
  out.inputs = width;
  out.neurons = r.required_count("outputs");
  out.spiking = false;
  out.lif.reset = ResetMode::none;
  net.layers.push_back(out);
  try {
    net.validate();
  } catch (const ConfigError& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return net;
}

inline Json layer_to_json(const LayerSpec& s, bool hidden) {
  Json j = {{"variant", to_string(s.variant)}, {"beta", s.lif.beta}, {"threshold", s.lif.threshold},
            {"fx", to_string(s.fx)},           {"dilation", s.dilation}};
  if (hidden) {
    j["neurons"] = s.neurons;
    j["reset"] = to_string(s.lif.reset);
  }
  if (s.variant == Variant::dmp) {
    j["memory_dim"] = s.memory.d;
    j["theta"] = s.memory.theta;
  }
  if (s.variant == Variant::delay) j["max_delay"] = s.max_delay;
  if (s.init_gain > 0.0) j["init_gain"] = s.init_gain;
  return j;
}

inline Json network_to_json(const NetworkConfig& n) {
  Json hidden = Json::array();
  for (std::size_t l = 0; l + 1 < n.layers.size(); ++l) hidden.push_back(layer_to_json(n.layers[l], true));
  const auto& out = n.layers.back();
  return {{"input_channels", n.input_channels},
          {"outputs", out.neurons},
          {"readout", cfg::to_string(n.readout)},
          {"dt", out.memory.dt},
          {"theta_scaling", out.memory.theta_scaling},
          {"hidden", hidden},
          {"readout_layer", layer_to_json(out, false)}};
}

// ---------------------------------------------------------------------------
// Training

inline TrainConfig train_from_json(const Json& j, const std::string& path = "train") {
  cfg::Reader r(j, path,
                {"epochs", "batch_size", "lr", "cosine", "grad_clip", "surrogate", "seed", "freeze_memory_readout",
                 "record_time"});
  TrainConfig t;
  t.epochs = r.count("epochs", t.epochs);
  t.batch_size = r.count("batch_size", t.batch_size);
  t.optimizer.lr = r.number("lr", t.optimizer.lr);
  t.optimizer.cosine = r.flag("cosine", t.optimizer.cosine);
  t.optimizer.grad_clip = r.number("grad_clip", t.optimizer.grad_clip);
  t.seed = r.count("seed", t.seed);
  t.freeze_memory_readout = r.flag("freeze_memory_readout", t.freeze_memory_readout);
  t.record_time = r.flag("record_time", t.record_time);
  if (r.has("surrogate")) {
    cfg::Reader sr(r.at("surrogate"), r.sub("surrogate"), {"kind", "param"});
    t.surrogate.kind = sr.choice("kind", t.surrogate.kind, parse_surrogate_kind);
    t.surrogate.param = sr.number("param", t.surrogate.param);
  }
  if (t.batch_size == 0) throw SchemaError(r.sub("batch_size") + ": must be positive");
  if (!(t.optimizer.lr > 0.0)) throw SchemaError(r.sub("lr") + ": must be positive");
  try {
    t.surrogate.validate();
  } catch (const ConfigError& e) {
    throw SchemaError(r.sub("surrogate") + ": " + e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Tasks

struct SplitSpec {
  std::size_t train = 0, val = 0, test = 0;
  std::uint64_t seed = 0;
};

struct TaskSpec {
  std::string kind = "delayed-recall";  // delayed-recall | waveforms | events | dense
  DelayedRecallSpec recall{};
  WaveformSpec waves{};
  std::string path;  // events / dense files
  bool use_cache = true;
  std::vector<std::size_t> classes;  // events: class subset (empty = all)
  std::size_t per_class_cap = 0;
  bool permute = false;
  std::uint64_t permute_seed = 0;
  SplitSpec split{};
};

inline TaskSpec task_from_json(const Json& j, const std::string& path = "task") {
  cfg::Reader r(j, path,
                {"kind", "n_samples", "gap", "cue_steps", "go_steps", "distractors", "cue_rate", "noise_rate", "T",
                 "classes", "noise", "seed", "path", "use_cache", "class_subset", "per_class_cap", "permute_seed",
                 "split"});
  TaskSpec t;
  t.kind = r.text("kind", t.kind);
  // keys that only make sense for one family of tasks
  static const std::set<std::string> recall_keys = {"gap", "cue_steps", "go_steps", "distractors", "cue_rate",
                                                    "noise_rate"};
  static const std::set<std::string> wave_keys = {"T", "classes", "noise"};
  static const std::set<std::string> file_keys = {"path", "use_cache", "class_subset", "per_class_cap"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const bool misplaced = (recall_keys.count(k) && t.kind != "delayed-recall") ||
                           (wave_keys.count(k) && t.kind != "waveforms") ||
                           (file_keys.count(k) && t.kind != "events" && t.kind != "dense") ||
                           ((k == "n_samples" || k == "seed") && (t.kind == "events" || t.kind == "dense"));
    if (misplaced) throw SchemaError(r.sub(k.c_str()) + ": not used by task kind \"" + t.kind + "\"");
  }
  const std::uint64_t seed = r.count("seed", 0);
  if (t.kind == "delayed-recall") {
    auto& s = t.recall;
    s.n_samples = r.count("n_samples", s.n_samples);
    s.gap = r.count("gap", s.gap);
    s.cue_steps = r.count("cue_steps", s.cue_steps);
    s.go_steps = r.count("go_steps", s.go_steps);
    s.distractors = r.count("distractors", s.distractors);
    s.cue_rate = r.number("cue_rate", s.cue_rate);
    s.noise_rate = r.number("noise_rate", s.noise_rate);
    s.seed = seed;
    if (s.cue_steps < 2) throw SchemaError(r.sub("cue_steps") + ": must be >= 2");
  } else if (t.kind == "waveforms") {
    auto& s = t.waves;
    s.n_samples = r.count("n_samples", s.n_samples);
    s.T = r.count("T", s.T);
    s.classes = r.count("classes", s.classes);
    s.noise = r.number("noise", s.noise);
    s.seed = seed;
    if (s.classes < 1 || s.T < 1) throw SchemaError(path + ": waveform task needs T >= 1 and classes >= 1");
  } else if (t.kind == "events" || t.kind == "dense") {
    t.path = r.text("path", "");
    if (t.path.empty()) throw SchemaError(r.sub("path") + ": required for file-backed tasks");
    t.use_cache = r.flag("use_cache", t.use_cache);
    if (r.has("class_subset")) {
      const auto& c = r.at("class_subset");
      if (!c.is_array()) throw SchemaError(r.sub("class_subset") + ": expected an array");
      for (const auto& v : c) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
          throw SchemaError(r.sub("class_subset") + ": expected nonnegative integers");
        t.classes.push_back(v.get<std::size_t>());
      }
    }
    t.per_class_cap = r.count("per_class_cap", 0);
  } else {
    throw SchemaError(r.sub("kind") + ": unknown task kind \"" + t.kind + "\"");
  }
  if (r.has("permute_seed")) {
    t.permute = true;
    t.permute_seed = r.count("permute_seed", 0);
  }
  if (r.has("split")) {
    cfg::Reader sr(r.at("split"), r.sub("split"), {"train", "val", "test", "seed"});
    t.split.train = sr.required_count("train");
    t.split.val = sr.count("val", 0);
    t.split.test = sr.count("test", 0);
    t.split.seed = sr.count("seed", 0);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Cost model

inline CostModel cost_from_json(const Json& j, const std::string& path = "cost") {
  cfg::Reader r(j, path,
                {"sram_read", "sram_write", "mac", "register_access", "words_per_row", "parallel_paths",
                 "neuron_register_slots", "memory_register_slots"});
  CostModel c;
  c.sram_read = r.number("sram_read", c.sram_read);
  c.sram_write = r.number("sram_write", c.sram_write);
  c.mac = r.number("mac", c.mac);
  c.register_access = r.number("register_access", c.register_access);
  c.words_per_row = r.count("words_per_row", c.words_per_row);
  c.parallel_paths = r.count("parallel_paths", c.parallel_paths);
  c.neuron_register_slots = r.count("neuron_register_slots", c.neuron_register_slots);
  c.memory_register_slots = r.count("memory_register_slots", c.memory_register_slots);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return c;
}

inline Json cost_to_json(const CostModel& c) {
  return {{"sram_read", c.sram_read},
          {"sram_write", c.sram_write},
          {"mac", c.mac},
          {"register_access", c.register_access},
          {"words_per_row", c.words_per_row},
          {"parallel_paths", c.parallel_paths},
          {"neuron_register_slots", c.neuron_register_slots},
          {"memory_register_slots", c.memory_register_slots}};
}

}  // namespace dmpsnn
