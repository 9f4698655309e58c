#pragma once

// Binary trace files and checkpoint archives.
//
// Trace layout (little-endian):
//   "DMPTRC01", u32 layers, u32 T,
//   per layer: u32 M, u32 N, u32 d, u32 dilation,
//   per step, per layer: u32 nnz, u32 idx[nnz], f64 val[nnz], f64 x, f64 m[d].
//
// Checkpoint: model.bin holds every tensor as row-major float32, back to back;
// model.json lists names, shapes and element offsets plus the network config.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dmpsnn/config.hpp"
#include "dmpsnn/errors.hpp"
#include "dmpsnn/hw_dataflow.hpp"
#include "dmpsnn/spiking_layers.hpp"

namespace dmpsnn {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace io {

class Writer {
 public:
  template <class T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string name) : buf_(std::move(bytes)), name_(std::move(name)) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw IoError(name_ + ": truncated file");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string raw(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError(name_ + ": truncated file");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline void write_text(const std::string& path, const std::string& text) { write_bytes(path, text); }

}  // namespace io

constexpr char kTraceMagic[8] = {'D', 'M', 'P', 'T', 'R', 'C', '0', '1'};

inline std::string encode_trace(const SimTrace& t) {
  t.validate();
  io::Writer w;
  w.raw(kTraceMagic, 8);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.layers.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.T));
  for (const auto& L : t.layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(L.M));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(L.N));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(L.d));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(L.dilation));
  }
  for (std::size_t k = 0; k < t.T; ++k)
    for (std::size_t l = 0; l < t.layers.size(); ++l) {
      const auto& s = t.steps[l][k];
      w.put<std::uint32_t>(static_cast<std::uint32_t>(s.input.nnz()));
      for (auto i : s.input.idx) w.put<std::uint32_t>(i);
      for (double v : s.input.val) w.put<double>(v);
      w.put<double>(s.x);
      for (Eigen::Index i = 0; i < s.m.size(); ++i) w.put<double>(s.m[i]);
    }
  return w.bytes();
}

inline SimTrace decode_trace(std::string bytes, const std::string& name = "trace") {
  io::Reader r(std::move(bytes), name);
  if (r.raw(8) != std::string(kTraceMagic, 8)) throw IoError(name + ": not a trace file (bad magic)");
  SimTrace t;
  const auto L = r.get<std::uint32_t>();
  t.T = r.get<std::uint32_t>();
  for (std::uint32_t l = 0; l < L; ++l) {
    LayerDims d;
    d.M = r.get<std::uint32_t>();
    d.N = r.get<std::uint32_t>();
    d.d = r.get<std::uint32_t>();
    d.dilation = r.get<std::uint32_t>();
    t.layers.push_back(d);
  }
  t.steps.assign(L, std::vector<TraceStep>(t.T));
  for (std::size_t k = 0; k < t.T; ++k)
    for (std::size_t l = 0; l < L; ++l) {
      auto& s = t.steps[l][k];
      const auto nnz = r.get<std::uint32_t>();
      s.input.idx.resize(nnz);
      s.input.val.resize(nnz);
      for (auto& i : s.input.idx) i = r.get<std::uint32_t>();
      for (auto& v : s.input.val) v = r.get<double>();
      s.x = r.get<double>();
      s.m.resize(static_cast<Eigen::Index>(t.layers[l].d));
      for (Eigen::Index i = 0; i < s.m.size(); ++i) s.m[i] = r.get<double>();
    }
  if (!r.done()) throw IoError(name + ": trailing bytes after trace");
  t.validate();
  return t;
}

inline void write_trace(const SimTrace& t, const std::string& path) { io::write_bytes(path, encode_trace(t)); }
inline SimTrace read_trace(const std::string& path) { return decode_trace(io::slurp(path), path); }

// ---------------------------------------------------------------------------
// Checkpoints

struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  double* data;
  std::size_t size;
};

inline std::vector<TensorRef> trainable_tensors(Network& net) {
  std::vector<TensorRef> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& p = net.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.push_back({pre + "W_f", {p.N(), p.M()}, p.W_f.data(), static_cast<std::size_t>(p.W_f.size())});
    if (p.d() > 0) {
      out.push_back({pre + "W_m", {p.N(), p.d()}, p.W_m.data(), static_cast<std::size_t>(p.W_m.size())});
      out.push_back({pre + "W_x", {p.M()}, p.W_x.data(), static_cast<std::size_t>(p.W_x.size())});
      out.push_back({pre + "b", {1}, &p.b, 1});
    }
    if (p.spec.variant == Variant::recurrent)
      out.push_back({pre + "W_r", {p.N(), p.N()}, p.W_r.data(), static_cast<std::size_t>(p.W_r.size())});
  }
  return out;
}

/// Writes `<stem>.bin` and `<stem>.json`.
inline void save_checkpoint(const Network& net_in, const std::string& stem) {
  Network net = net_in;
  io::Writer w;
  Json tensors = Json::array();
  std::size_t offset = 0;
  for (const auto& t : trainable_tensors(net)) {
    for (std::size_t i = 0; i < t.size; ++i) w.put<float>(static_cast<float>(t.data[i]));
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"dtype", "float32"}});
    offset += t.size;
  }
  Json delays = Json::object();
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    if (net.layers[l].spec.variant == Variant::delay) delays["layer" + std::to_string(l)] = net.layers[l].delays;
  Json manifest = {{"format", "dmpsnn-checkpoint-1"},
                   {"network", network_to_json(net.config)},
                   {"tensors", tensors},
                   {"delays", delays},
                   {"elements", offset}};
  io::write_bytes(stem + ".bin", w.bytes());
  io::write_text(stem + ".json", manifest.dump(2) + "\n");
}

inline Network load_checkpoint(const std::string& stem) {
  const Json manifest = read_json_file(stem + ".json");
  if (!manifest.is_object() || manifest.value("format", "") != "dmpsnn-checkpoint-1")
    throw SchemaError(stem + ".json: not a checkpoint manifest");
  Network net = init_network(network_from_json(manifest.at("network"), "network"), 0);
  const std::string bin = io::slurp(stem + ".bin");
  const auto refs = trainable_tensors(net);
  const auto& listed = manifest.at("tensors");
  if (!listed.is_array() || listed.size() != refs.size())
    throw SchemaError(stem + ".json: tensor list does not match the network");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& e = listed[i];
    if (e.at("name").get<std::string>() != refs[i].name || e.at("shape").get<std::vector<std::size_t>>() != refs[i].shape)
      throw SchemaError(stem + ".json: tensor " + refs[i].name + " missing or misshapen");
    const auto off = e.at("offset").get<std::size_t>();
    if ((off + refs[i].size) * sizeof(float) > bin.size()) throw IoError(stem + ".bin: truncated");
    for (std::size_t n = 0; n < refs[i].size; ++n) {
      float f;
      std::memcpy(&f, bin.data() + (off + n) * sizeof(float), sizeof(float));
      refs[i].data[n] = f;
    }
  }
  if (manifest.contains("delays"))
    for (auto it = manifest.at("delays").begin(); it != manifest.at("delays").end(); ++it) {
      const std::size_t l = std::stoul(it.key().substr(5));
      if (l >= net.layers.size()) throw SchemaError(stem + ".json: delay entry for unknown layer");
      net.layers[l].delays = it.value().get<std::vector<std::size_t>>();
    }
  net.validate();
  return net;
}

}  // namespace dmpsnn
