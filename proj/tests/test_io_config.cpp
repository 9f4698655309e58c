#include <gtest/gtest.h>

#include <filesystem>

#include "dmpsnn/experiment.hpp"
#include "dmpsnn/io.hpp"
#include "test_helpers.hpp"

using namespace dmpsnn;
using testing_util::random_events;
using testing_util::small_net;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "dmpsnn_io_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

SimTrace small_trace(Variant v, std::size_t d) {
  const Network net = init_network(small_net(6, 8, 3, v, d), 4);
  return record_trace(net, random_events(25, 6, 0.3, 2));
}

Json shd_like(const char* variant) {
  return Json::parse(std::string(R"({"input_channels":140,"outputs":20,"variant":")") + variant +
                     R"(","memory_dim":10,"theta":40,"hidden":[{"neurons":128},{"neurons":128}]})");
}

}  // namespace

TEST(Trace, RoundTripIsExact) {
  const auto t = small_trace(Variant::dmp, 3);
  const auto bytes = encode_trace(t);
  const auto back = decode_trace(bytes);
  EXPECT_EQ(encode_trace(back), bytes);
  ASSERT_EQ(back.T, t.T);
  for (std::size_t l = 0; l < t.layers.size(); ++l)
    for (std::size_t k = 0; k < t.T; ++k) {
      EXPECT_EQ(back.steps[l][k].input.idx, t.steps[l][k].input.idx);
      EXPECT_EQ(back.steps[l][k].x, t.steps[l][k].x);
      EXPECT_TRUE((back.steps[l][k].m.array() == t.steps[l][k].m.array()).all());
    }
  const auto p = scratch("t.bin");
  write_trace(t, p);
  EXPECT_EQ(encode_trace(read_trace(p)), bytes);
}

TEST(Trace, RejectsBadMagicTruncationAndTrailingBytes) {
  const auto bytes = encode_trace(small_trace(Variant::plain, 0));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_trace(bad), IoError);
  EXPECT_THROW(decode_trace(bytes.substr(0, bytes.size() - 3)), IoError);
  EXPECT_THROW(decode_trace(bytes + "z"), IoError);
  EXPECT_THROW(read_trace(scratch("does_not_exist.bin")), IoError);
}

TEST(Checkpoint, RoundTripToFloat32) {
  const Network net = init_network(small_net(6, 8, 3, Variant::dmp, 3, 2), 9);
  const auto stem = scratch("ckpt");
  save_checkpoint(net, stem);
  const Network back = load_checkpoint(stem);
  ASSERT_EQ(back.layers.size(), net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& a = net.layers[l];
    const auto& b = back.layers[l];
    EXPECT_TRUE((b.W_f.array() == a.W_f.cast<float>().cast<double>().array()).all());
    if (a.d() > 0) {
      EXPECT_TRUE((b.W_m.array() == a.W_m.cast<float>().cast<double>().array()).all());
      EXPECT_EQ(b.b, static_cast<double>(static_cast<float>(a.b)));
      // fixed memory matrices are rebuilt, not stored
      EXPECT_TRUE((b.memory.A_bar.array() == a.memory.A_bar.array()).all());
    }
  }
  EXPECT_EQ(fs::file_size(stem + ".bin"), count_parameters(net) * sizeof(float));
}

TEST(Checkpoint, DelayVariantKeepsDelays) {
  auto cfg = small_net(6, 8, 3, Variant::delay, 0);
  cfg.layers[0].max_delay = 5;
  const Network net = init_network(cfg, 3);
  const auto stem = scratch("ckpt_delay");
  save_checkpoint(net, stem);
  EXPECT_EQ(load_checkpoint(stem).layers[0].delays, net.layers[0].delays);
}

TEST(NetworkJson, RoundTrip) {
  const auto cfg = network_from_json(shd_like("dmp"));
  const auto again = network_from_json(network_to_json(cfg));
  EXPECT_EQ(network_to_json(again).dump(), network_to_json(cfg).dump());
  ASSERT_EQ(cfg.layers.size(), 3u);
  EXPECT_EQ(cfg.layers[0].memory.d, 10u);
  EXPECT_FALSE(cfg.layers[2].spiking);
  EXPECT_EQ(cfg.layers[2].memory.d, 0u);  // plain readout unless asked
}

TEST(NetworkJson, TwoHiddenLayerParameterCount) {
  // 140 -> 128 -> 128 -> 20 feedforward: about 37K weights
  const Network fsnn = init_network(network_from_json(shd_like("plain")), 0);
  EXPECT_EQ(count_parameters(fsnn), 36864u);
  const Network dmp = init_network(network_from_json(shd_like("dmp")), 0);
  EXPECT_EQ(count_parameters(dmp), 36864u + 2 * 1280 + 140 + 128 + 2);
}

TEST(Config, StrictSchema) {
  auto j = shd_like("dmp");
  j["hiden"] = Json::array();
  EXPECT_THROW(network_from_json(j), SchemaError);
  j = shd_like("dmp");
  j["hidden"][0]["neurons"] = -4;
  EXPECT_THROW(network_from_json(j), SchemaError);
  j = shd_like("dmp");
  j["variant"] = "lstm";
  EXPECT_THROW(network_from_json(j), SchemaError);
  j = shd_like("dmp");
  j["memory_dim"] = 200;  // larger than the layer width
  EXPECT_THROW(network_from_json(j), SchemaError);
  j = shd_like("dmp");
  j.erase("outputs");
  EXPECT_THROW(network_from_json(j), SchemaError);

  EXPECT_THROW(train_from_json(Json::parse(R"({"epochs":"ten"})")), SchemaError);
  EXPECT_THROW(train_from_json(Json::parse(R"({"surrogate":{"kind":"gauss"}})")), SchemaError);
  EXPECT_THROW(task_from_json(Json::parse(R"({"kind":"mnist"})")), SchemaError);
  EXPECT_THROW(task_from_json(Json::parse(R"({"kind":"waveforms","gap":3})")), SchemaError);
  EXPECT_THROW(task_from_json(Json::parse(R"({"kind":"events","path":"a.jsonl","seed":1})")), SchemaError);
  EXPECT_THROW(cost_from_json(Json::parse(R"({"sram_read":-1})")), SchemaError);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"task":{"kind":"delayed-recall"}})")), SchemaError);
}

TEST(Config, SchemaErrorNamesPath) {
  auto j = shd_like("dmp");
  j["hidden"][1]["beta"] = "slow";
  try {
    network_from_json(j);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("network.hidden[1].beta"), std::string::npos) << e.what();
  }
}

TEST(Config, CostRoundTrip) {
  CostModel c;
  c.sram_read = 2.5;
  c.parallel_paths = 2;
  const auto back = cost_from_json(cost_to_json(c));
  EXPECT_EQ(cost_to_json(back).dump(), cost_to_json(c).dump());
}

TEST(Config, ShippedConfigsParse) {
  const std::string dir = DMPSNN_CONFIG_DIR;
  for (const char* f : {"recall_bench.json", "recall_gap0_bench.json", "waves_dilation_bench.json", "shd_bench.json"})
    EXPECT_NO_THROW(bench_config_from_json(read_json_file(dir + "/" + f))) << f;
  EXPECT_NO_THROW(run_config_from_json(read_json_file(dir + "/recall_dmp.json")));
  EXPECT_NO_THROW(cost_from_json(read_json_file(dir + "/cost_default.json")));
  EXPECT_NO_THROW(task_from_json(read_json_file(dir + "/task_recall.json")));
}
