#pragma once

// Event and dense sequence datasets: JSONL ingestion with a packed binary
// cache, synthetic long-horizon tasks, encoders and split helpers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmpsnn/errors.hpp"
#include "dmpsnn/spiking_layers.hpp"
#include "dmpsnn/train.hpp"

namespace dmpsnn {

struct EventSequence {
  std::string id;
  std::size_t label = 0;
  std::size_t T = 0;
  std::size_t channels = 0;
  std::vector<std::array<std::uint32_t, 2>> events;  // (timestep, channel), sorted

  void validate() const {
    for (const auto& e : events) {
      if (e[0] >= T) throw SchemaError("sample " + id + ": event timestep " + std::to_string(e[0]) + " >= T");
      if (e[1] >= channels)
        throw SchemaError("sample " + id + ": channel " + std::to_string(e[1]) + " >= declared width " +
                          std::to_string(channels));
    }
    if (!std::is_sorted(events.begin(), events.end())) throw SchemaError("sample " + id + ": events not sorted");
  }

  // Sort and collapse duplicates; spike tensors are binary.
  void normalize() {
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());
  }

  InputSequence to_input() const {
    InputSequence in{T, channels, std::vector<Frame>(T)};
    for (const auto& e : events) {
      Frame& f = in.frames[e[0]];
      if (!f.idx.empty() && f.idx.back() == e[1])
        f.val.back() += 1.0;
      else
        f.push(e[1], 1.0);
    }
    return in;
  }
};

struct DenseSequence {
  std::string id;
  std::size_t label = 0;
  std::vector<double> values;  // one analog input per timestep, in [0, 1]

  std::size_t T() const { return values.size(); }

  void validate() const {
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0)) throw SchemaError("sample " + id + ": dense value outside [0, 1]");
  }

  InputSequence to_input() const {
    InputSequence in{values.size(), 1, std::vector<Frame>(values.size())};
    for (std::size_t k = 0; k < values.size(); ++k)
      if (values[k] != 0.0) in.frames[k].push(0, values[k]);
    return in;
  }
};

template <class Seq>
std::vector<Example> to_examples(const std::vector<Seq>& data) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back({s.id, s.to_input(), s.label});
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, std::size_t line) {
  if (!j.is_object()) throw SchemaError("expected a JSON object", line);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw SchemaError("unknown key \"" + it.key() + "\"", line);
}

template <class T>
T get_field(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw SchemaError(std::string("missing key \"") + key + "\"", line);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string("bad type for \"") + key + "\"", line);
  }
}

inline std::size_t get_count(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto& v = j.contains(key) ? j.at(key) : throw SchemaError(std::string("missing key \"") + key + "\"", line);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw SchemaError(std::string("\"") + key + "\" must be a nonnegative integer", line);
  return v.get<std::size_t>();
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class F>
void for_each_line(const std::string& text, F&& fn) {
  std::size_t line = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line;
    std::string s = text.substr(pos, end - pos);
    pos = end + 1;
    if (s.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(s);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(std::string("malformed JSON: ") + e.what(), line);
    }
    fn(j, line);
  }
}

}  // namespace detail

inline EventSequence parse_event_line(const nlohmann::json& j, std::size_t line) {
  detail::check_keys(j, {"id", "label", "T", "channels", "events"}, line);
  EventSequence s;
  s.id = detail::get_field<std::string>(j, "id", line);
  s.label = detail::get_count(j, "label", line);
  s.T = detail::get_count(j, "T", line);
  s.channels = detail::get_count(j, "channels", line);
  const auto& ev = j.contains("events") ? j.at("events") : throw SchemaError("missing key \"events\"", line);
  if (!ev.is_array()) throw SchemaError("\"events\" must be an array", line);
  s.events.reserve(ev.size());
  for (const auto& e : ev) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
        e[0].get<std::int64_t>() < 0 || e[1].get<std::int64_t>() < 0)
      throw SchemaError("events must be [timestep, channel] pairs of nonnegative integers", line);
    const auto k = e[0].get<std::uint64_t>(), ch = e[1].get<std::uint64_t>();
    if (k >= s.T) throw SchemaError("event timestep " + std::to_string(k) + " >= T = " + std::to_string(s.T), line);
    if (ch >= s.channels)
      throw SchemaError("channel " + std::to_string(ch) + " overflows declared width " + std::to_string(s.channels),
                        line);
    s.events.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(ch)});
  }
  s.normalize();
  return s;
}

inline DenseSequence parse_dense_line(const nlohmann::json& j, std::size_t line) {
  detail::check_keys(j, {"id", "label", "T", "values"}, line);
  DenseSequence s;
  s.id = detail::get_field<std::string>(j, "id", line);
  s.label = detail::get_count(j, "label", line);
  s.values = detail::get_field<std::vector<double>>(j, "values", line);
  if (j.contains("T") && detail::get_count(j, "T", line) != s.values.size())
    throw SchemaError("\"T\" does not match the number of values", line);
  for (double v : s.values)
    if (!(v >= 0.0 && v <= 1.0)) throw SchemaError("dense value outside [0, 1]", line);
  return s;
}

inline nlohmann::json to_json(const EventSequence& s) {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : s.events) ev.push_back({e[0], e[1]});
  return {{"id", s.id}, {"label", s.label}, {"T", s.T}, {"channels", s.channels}, {"events", ev}};
}

inline nlohmann::json to_json(const DenseSequence& s) {
  return {{"id", s.id}, {"label", s.label}, {"T", s.T()}, {"values", s.values}};
}

template <class Seq>
void write_jsonl(const std::vector<Seq>& data, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  for (const auto& s : data) f << to_json(s).dump() << '\n';
  if (!f) throw IoError("write failed: " + path);
}

// Packed cache: magic, source hash, then samples with length-prefixed fields.
namespace detail {

constexpr char kCacheMagic[8] = {'D', 'M', 'P', 'E', 'V', 'C', '0', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("truncated cache");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

inline std::string pack_events(const std::vector<EventSequence>& data, std::uint64_t hash) {
  std::string out(kCacheMagic, 8);
  put<std::uint64_t>(out, hash);
  put<std::uint64_t>(out, data.size());
  for (const auto& s : data) {
    put<std::uint64_t>(out, s.id.size());
    out += s.id;
    put<std::uint64_t>(out, s.label);
    put<std::uint64_t>(out, s.T);
    put<std::uint64_t>(out, s.channels);
    put<std::uint64_t>(out, s.events.size());
    for (const auto& e : s.events) {
      put<std::uint32_t>(out, e[0]);
      put<std::uint32_t>(out, e[1]);
    }
  }
  return out;
}

inline bool unpack_events(const std::string& in, std::uint64_t hash, std::vector<EventSequence>& data) {
  if (in.size() < 24 || std::memcmp(in.data(), kCacheMagic, 8) != 0) return false;
  std::size_t pos = 8;
  if (take<std::uint64_t>(in, pos) != hash) return false;
  const auto n = take<std::uint64_t>(in, pos);
  data.clear();
  data.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    EventSequence s;
    const auto len = take<std::uint64_t>(in, pos);
    if (pos + len > in.size()) throw IoError("truncated cache");
    s.id.assign(in.data() + pos, len);
    pos += len;
    s.label = take<std::uint64_t>(in, pos);
    s.T = take<std::uint64_t>(in, pos);
    s.channels = take<std::uint64_t>(in, pos);
    const auto ne = take<std::uint64_t>(in, pos);
    s.events.resize(ne);
    for (auto& e : s.events) {
      e[0] = take<std::uint32_t>(in, pos);
      e[1] = take<std::uint32_t>(in, pos);
    }
    data.push_back(std::move(s));
  }
  return true;
}

}  // namespace detail

/// Loads an event JSONL file. With use_cache, a packed copy is written next to
/// the source (`<path>.cache`) and reused while the source hash matches.
inline std::vector<EventSequence> load_events(const std::string& path, bool use_cache = false) {
  const std::string text = detail::read_file(path);
  const std::uint64_t hash = detail::fnv1a(text);
  const std::string cache_path = path + ".cache";
  std::vector<EventSequence> data;
  if (use_cache && std::filesystem::exists(cache_path)) {
    try {
      if (detail::unpack_events(detail::read_file(cache_path), hash, data)) return data;
    } catch (const IoError&) {
      // stale or truncated cache: rebuild below
    }
  }
  data.clear();
  detail::for_each_line(text, [&](const nlohmann::json& j, std::size_t line) {
    data.push_back(parse_event_line(j, line));
  });
  if (use_cache) {
    std::ofstream f(cache_path, std::ios::binary);
    if (f) f << detail::pack_events(data, hash);
  }
  return data;
}

inline std::vector<DenseSequence> load_dense(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::vector<DenseSequence> data;
  detail::for_each_line(text, [&](const nlohmann::json& j, std::size_t line) {
    data.push_back(parse_dense_line(j, line));
  });
  return data;
}

/// True if the first record of a JSONL file carries a "values" array.
inline bool is_dense_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      return nlohmann::json::parse(line).contains("values");
    } catch (const nlohmann::json::parse_error&) {
      return false;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Synthetic tasks

struct DelayedRecallSpec {
  std::size_t n_samples = 256;
  std::size_t gap = 50;
  std::size_t cue_steps = 4;
  std::size_t go_steps = 4;
  std::size_t distractors = 3;  // extra noise-only channels
  double cue_rate = 0.9;
  double noise_rate = 0.02;
  std::uint64_t seed = 0;
  std::string id_prefix = "recall";

  std::size_t channels() const { return 5 + distractors; }
  std::size_t T() const { return cue_steps + gap + go_steps; }
};

/// Two-bit cue recall. Bit 0 selects channel 0 or 1 during the first half of
/// the cue window, bit 1 selects channel 2 or 3 during the second half. After
/// `gap` steps of background noise, channel 4 signals "go" until the end.
/// Label = 2*bit1 + bit0; it is only recoverable by carrying the cue across
/// the gap.
inline std::vector<EventSequence> make_delayed_recall(const DelayedRecallSpec& spec) {
  if (spec.cue_steps < 2) throw ConfigError("delayed recall: cue window must span at least 2 steps");
  std::mt19937_64 rng(spec.seed);
  auto coin = [&](double p) { return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p; };
  const std::size_t T = spec.T(), C = spec.channels(), go = 4;
  const std::size_t half = spec.cue_steps / 2;
  std::vector<EventSequence> out;
  out.reserve(spec.n_samples);
  for (std::size_t n = 0; n < spec.n_samples; ++n) {
    EventSequence s;
    s.id = spec.id_prefix + "-" + std::to_string(n);
    s.label = static_cast<std::size_t>(rng() % 4);
    s.T = T;
    s.channels = C;
    const std::uint32_t ch0 = (s.label & 1) ? 1 : 0;
    const std::uint32_t ch1 = (s.label & 2) ? 3 : 2;
    for (std::size_t k = 0; k < T; ++k) {
      for (std::size_t c = 0; c < C; ++c) {
        bool on = false;
        if (k < spec.cue_steps) {
          const std::uint32_t cue = k < half ? ch0 : ch1;
          on = c == cue ? coin(spec.cue_rate) : false;
        } else if (k >= spec.cue_steps + spec.gap && c == go) {
          on = true;
        } else if (c != go) {
          on = coin(spec.noise_rate);
        }
        if (on) s.events.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(c)});
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct WaveformSpec {
  std::size_t n_samples = 256;
  std::size_t T = 100;
  std::size_t classes = 4;
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::string id_prefix = "wave";
};

/// Dense toy task: class c is a sinusoid with (c + 1) cycles over the window,
/// random phase and amplitude jitter, additive noise, clipped to [0, 1].
inline std::vector<DenseSequence> make_waveforms(const WaveformSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  auto unif = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<DenseSequence> out;
  out.reserve(spec.n_samples);
  for (std::size_t n = 0; n < spec.n_samples; ++n) {
    DenseSequence s;
    s.id = spec.id_prefix + "-" + std::to_string(n);
    s.label = static_cast<std::size_t>(rng() % spec.classes);
    const double cycles = static_cast<double>(s.label + 1);
    const double phase = 2.0 * std::numbers::pi * unif();
    const double amp = 0.35 + 0.1 * unif();
    s.values.resize(spec.T);
    for (std::size_t k = 0; k < spec.T; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(spec.T);
      const double v = 0.5 + amp * std::sin(2.0 * std::numbers::pi * cycles * t + phase) +
                       spec.noise * (2.0 * unif() - 1.0);
      s.values[k] = std::clamp(v, 0.0, 1.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoders and splits

/// Fixed random permutation of [0, n) determined by seed.
inline std::vector<std::size_t> make_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 rng(seed);
  shuffle_indices(p, rng);
  return p;
}

inline DenseSequence permute(const DenseSequence& s, const std::vector<std::size_t>& perm) {
  if (perm.size() != s.values.size()) throw DimensionError("permute: permutation length != T");
  DenseSequence out = s;
  for (std::size_t k = 0; k < perm.size(); ++k) out.values[k] = s.values[perm[k]];
  return out;
}

template <class Seq>
struct Splits {
  std::vector<Seq> train, val, test;
};

/// Shuffles by seed and cuts into disjoint train/val/test parts. Sample ids
/// must be unique.
template <class Seq>
Splits<Seq> split_dataset(const std::vector<Seq>& data, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                          std::uint64_t seed) {
  std::set<std::string> ids;
  for (const auto& s : data)
    if (!ids.insert(s.id).second) throw SchemaError("duplicate sample id " + s.id);
  if (n_train + n_val + n_test > data.size())
    throw ConfigError("split sizes exceed dataset size " + std::to_string(data.size()));
  auto order = make_permutation(data.size(), seed);
  Splits<Seq> out;
  std::size_t i = 0;
  for (; i < n_train; ++i) out.train.push_back(data[order[i]]);
  for (; i < n_train + n_val; ++i) out.val.push_back(data[order[i]]);
  for (; i < n_train + n_val + n_test; ++i) out.test.push_back(data[order[i]]);
  return out;
}

/// Keeps the listed classes (relabelled 0..K-1 in list order), at most `cap`
/// samples each (0 = no cap), preserving file order.
template <class Seq>
std::vector<Seq> select_classes(const std::vector<Seq>& data, const std::vector<std::size_t>& classes,
                                std::size_t cap) {
  std::map<std::size_t, std::size_t> remap, seen;
  for (std::size_t i = 0; i < classes.size(); ++i) remap[classes[i]] = i;
  std::vector<Seq> out;
  for (const auto& s : data) {
    auto it = remap.find(s.label);
    if (it == remap.end()) continue;
    if (cap > 0 && seen[s.label] >= cap) continue;
    ++seen[s.label];
    Seq c = s;
    c.label = it->second;
    out.push_back(std::move(c));
  }
  return out;
}

template <class Seq>
std::size_t num_classes(const std::vector<Seq>& data) {
  std::size_t c = 0;
  for (const auto& s : data) c = std::max(c, s.label + 1);
  return c;
}

/// Raw spike (time, unit) pairs -> binned, channel-pooled event sequence.
/// Each source spike maps to exactly one (bin, group) cell; with `binarize`
/// cells collapse to a single event.
struct RawSpikes {
  std::string id;
  std::size_t label = 0;
  std::vector<double> times;
  std::vector<std::uint32_t> units;
};

struct PoolBinSpec {
  std::size_t source_channels = 700;
  std::size_t group = 5;
  std::size_t bins = 100;
  double duration = 1.0;  // time span mapped onto the bins
  bool binarize = true;
};

inline EventSequence pool_and_bin(const RawSpikes& raw, const PoolBinSpec& spec, std::size_t* cell_count = nullptr) {
  if (spec.group == 0 || spec.source_channels % spec.group != 0)
    throw ConfigError("channel count must be divisible by the group size");
  if (spec.bins == 0 || !(spec.duration > 0.0)) throw ConfigError("bins and duration must be positive");
  if (raw.times.size() != raw.units.size()) throw DimensionError("pool_and_bin: times/units length mismatch");
  EventSequence s;
  s.id = raw.id;
  s.label = raw.label;
  s.T = spec.bins;
  s.channels = spec.source_channels / spec.group;
  for (std::size_t i = 0; i < raw.times.size(); ++i) {
    if (raw.units[i] >= spec.source_channels) throw SchemaError("unit id " + std::to_string(raw.units[i]) + " out of range");
    auto bin = static_cast<std::int64_t>(std::floor(raw.times[i] / spec.duration * static_cast<double>(spec.bins)));
    bin = std::clamp<std::int64_t>(bin, 0, static_cast<std::int64_t>(spec.bins) - 1);
    s.events.push_back({static_cast<std::uint32_t>(bin), static_cast<std::uint32_t>(raw.units[i] / spec.group)});
  }
  std::sort(s.events.begin(), s.events.end());
  if (cell_count) *cell_count = s.events.size();
  if (spec.binarize) s.events.erase(std::unique(s.events.begin(), s.events.end()), s.events.end());
  return s;
}

}  // namespace dmpsnn
