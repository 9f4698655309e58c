#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dmpsnn/data.hpp"

using namespace dmpsnn;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("dmpsnn_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name, const std::string& content) const {
    const auto p = (path_ / name).string();
    std::ofstream(p) << content;
    return p;
  }

 private:
  fs::path path_;
};

}  // namespace

TEST(LoadEvents, EmptyFileGivesEmptyDataset) {
  TempDir t;
  EXPECT_TRUE(load_events(t.file("e.jsonl", "")).empty());
}

TEST(LoadEvents, SingleEventSemantics) {
  TempDir t;
  const auto d = load_events(t.file("e.jsonl", R"({"id":"a","label":2,"T":10,"channels":8,"events":[[3,7]]})"
                                               "\n"));
  ASSERT_EQ(d.size(), 1u);
  const auto in = d[0].to_input();
  for (std::size_t k = 0; k < 10; ++k) {
    const Vec v = in.frames[k].dense(8);
    EXPECT_EQ(v.sum(), k == 3 ? 1.0 : 0.0);
    if (k == 3) EXPECT_EQ(v[7], 1.0);
  }
  EXPECT_EQ(d[0].label, 2u);
}

TEST(LoadEvents, MalformedLineReportsLineNumber) {
  TempDir t;
  const std::string good = R"({"id":"a","label":0,"T":4,"channels":2,"events":[]})";
  const auto p = t.file("e.jsonl", good + "\n" + good + "\n{not json\n");
  try {
    load_events(p);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadEvents, ChannelOverflowAndBadTimestepAreSchemaErrors) {
  TempDir t;
  EXPECT_THROW(load_events(t.file("a.jsonl", R"({"id":"a","label":0,"T":4,"channels":2,"events":[[0,2]]})")),
               SchemaError);
  EXPECT_THROW(load_events(t.file("b.jsonl", R"({"id":"a","label":0,"T":4,"channels":2,"events":[[4,0]]})")),
               SchemaError);
  EXPECT_THROW(load_events(t.file("c.jsonl", R"({"id":"a","label":0,"T":4,"channels":2,"events":[],"x":1})")),
               SchemaError);
  EXPECT_THROW(load_events(t.file("d.jsonl", R"({"id":"a","label":-1,"T":4,"channels":2,"events":[]})")),
               SchemaError);
  EXPECT_THROW(load_events(t.file("e.jsonl", R"({"id":"a","label":0,"T":4,"channels":2,"events":[[1]]})")),
               SchemaError);
}

TEST(LoadEvents, SortsAndCollapsesDuplicates) {
  TempDir t;
  const auto d =
      load_events(t.file("e.jsonl", R"({"id":"a","label":0,"T":5,"channels":3,"events":[[4,1],[0,2],[4,1],[0,0]]})"));
  ASSERT_EQ(d[0].events.size(), 3u);
  EXPECT_TRUE(std::is_sorted(d[0].events.begin(), d[0].events.end()));
  d[0].validate();
}

TEST(LoadEvents, CacheRoundTripAndInvalidation) {
  TempDir t;
  std::vector<EventSequence> src(3);
  for (std::size_t i = 0; i < src.size(); ++i) {
    src[i].id = "s" + std::to_string(i);
    src[i].label = i;
    src[i].T = 6;
    src[i].channels = 4;
    src[i].events = {{0, static_cast<std::uint32_t>(i)}, {5, 3}};
  }
  const auto p = t.file("e.jsonl", "");
  write_jsonl(src, p);
  const auto first = load_events(p, true);
  ASSERT_TRUE(fs::exists(p + ".cache"));
  const auto second = load_events(p, true);
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].id, second[i].id);
    EXPECT_EQ(first[i].events, second[i].events);
    EXPECT_EQ(first[i].label, src[i].label);
  }
  src.pop_back();
  write_jsonl(src, p);
  EXPECT_EQ(load_events(p, true).size(), 2u);
}

TEST(LoadDense, ParsesAndValidates) {
  TempDir t;
  const auto d = load_dense(t.file("d.jsonl", R"({"id":"a","label":1,"T":3,"values":[0,0.5,1]})"));
  ASSERT_EQ(d.size(), 1u);
  const auto in = d[0].to_input();
  EXPECT_EQ(in.channels, 1u);
  EXPECT_EQ(in.frames[0].nnz(), 0u);
  EXPECT_EQ(in.frames[1].val[0], 0.5);
  EXPECT_THROW(load_dense(t.file("e.jsonl", R"({"id":"a","label":1,"values":[1.5]})")), SchemaError);
  EXPECT_THROW(load_dense(t.file("f.jsonl", R"({"id":"a","label":1,"T":2,"values":[1]})")), SchemaError);
}

TEST(DelayedRecall, StructureAndLabels) {
  DelayedRecallSpec s;
  s.n_samples = 200;
  s.gap = 10;
  s.noise_rate = 0.0;
  s.cue_rate = 1.0;
  const auto d = make_delayed_recall(s);
  std::set<std::size_t> labels;
  for (const auto& x : d) {
    labels.insert(x.label);
    EXPECT_EQ(x.T, 18u);
    EXPECT_EQ(x.channels, 8u);
    x.validate();
    for (const auto& e : x.events) {
      const std::uint32_t k = e[0], ch = e[1];
      if (k < 2) EXPECT_EQ(ch, (x.label & 1) ? 1u : 0u);
      else if (k < 4) EXPECT_EQ(ch, (x.label & 2) ? 3u : 2u);
      else EXPECT_EQ(ch, 4u) << "only the go channel is active after the cue without noise";
      if (ch == 4) EXPECT_GE(k, 14u);
    }
  }
  EXPECT_EQ(labels.size(), 4u);  // chance level 1/4
}

TEST(DelayedRecall, SeedDeterminism) {
  DelayedRecallSpec s;
  s.n_samples = 10;
  const auto a = make_delayed_recall(s), b = make_delayed_recall(s);
  s.seed = 1;
  const auto c = make_delayed_recall(s);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].events, b[i].events);
    differs |= a[i].events != c[i].events;
  }
  EXPECT_TRUE(differs);
}

TEST(Waveforms, ValuesBounded) {
  WaveformSpec w;
  w.n_samples = 20;
  for (const auto& s : make_waveforms(w)) {
    EXPECT_EQ(s.T(), 100u);
    s.validate();
  }
}

TEST(Permutation, FixedPerSeed) {
  const auto a = make_permutation(784, 3), b = make_permutation(784, 3), c = make_permutation(784, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  DenseSequence s{"x", 0, {0.1, 0.2, 0.3}};
  const auto p = permute(s, {2, 0, 1});
  EXPECT_EQ(p.values, (std::vector<double>{0.3, 0.1, 0.2}));
  EXPECT_THROW(permute(s, {0, 1}), DimensionError);
}

TEST(Splits, DisjointById) {
  WaveformSpec w;
  w.n_samples = 50;
  const auto d = make_waveforms(w);
  const auto sp = split_dataset(d, 30, 10, 10, 5);
  std::set<std::string> ids;
  for (const auto* part : {&sp.train, &sp.val, &sp.test})
    for (const auto& s : *part) EXPECT_TRUE(ids.insert(s.id).second) << s.id;
  EXPECT_EQ(ids.size(), 50u);
  auto dup = d;
  dup[1].id = dup[0].id;
  EXPECT_THROW(split_dataset(dup, 10, 0, 0, 0), SchemaError);
  EXPECT_THROW(split_dataset(d, 40, 10, 10, 0), ConfigError);
}

TEST(SelectClasses, RelabelsAndCaps) {
  std::vector<EventSequence> d;
  for (std::size_t i = 0; i < 12; ++i) d.push_back({"s" + std::to_string(i), i % 4, 1, 1, {}});
  const auto sel = select_classes(d, {3, 1}, 2);
  ASSERT_EQ(sel.size(), 4u);
  for (const auto& s : sel) EXPECT_LT(s.label, 2u);
  EXPECT_EQ(sel[0].id, "s1");
  EXPECT_EQ(sel[0].label, 1u);
  EXPECT_EQ(sel[1].id, "s3");
  EXPECT_EQ(sel[1].label, 0u);
}

TEST(PoolAndBin, ConservesEventsWithoutBinarize) {
  std::mt19937_64 rng(8);
  RawSpikes raw{"r", 3, {}, {}};
  for (int i = 0; i < 5000; ++i) {
    raw.times.push_back(static_cast<double>(rng() % 100000) / 100000.0);
    raw.units.push_back(static_cast<std::uint32_t>(rng() % 700));
  }
  PoolBinSpec spec;
  spec.binarize = false;
  std::size_t cells = 0;
  const auto counted = pool_and_bin(raw, spec, &cells);
  EXPECT_EQ(counted.events.size(), raw.times.size());
  EXPECT_EQ(counted.channels, 140u);
  EXPECT_EQ(counted.T, 100u);
  std::vector<std::size_t> per_group(140, 0), expect(140, 0);
  for (const auto& e : counted.events) ++per_group[e[1]];
  for (auto u : raw.units) ++expect[u / 5];
  EXPECT_EQ(per_group, expect);
  // total input mass survives the conversion to frames
  const auto in = counted.to_input();
  double mass = 0;
  for (const auto& f : in.frames)
    for (double v : f.val) mass += v;
  EXPECT_EQ(mass, 5000.0);

  spec.binarize = true;
  const auto bin = pool_and_bin(raw, spec);
  EXPECT_LE(bin.events.size(), raw.times.size());
  EXPECT_TRUE(std::adjacent_find(bin.events.begin(), bin.events.end()) == bin.events.end());
  raw.units[0] = 700;
  EXPECT_THROW(pool_and_bin(raw, spec), SchemaError);
}
