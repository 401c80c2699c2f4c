#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "windclf/errors.hpp"
#include "windclf/scada_data.hpp"
#include "windclf/synth.hpp"

using namespace windclf;
namespace fs = std::filesystem;

namespace {

FarmDataset parse(const std::string& text, CsvOptions opts = {}) {
  std::istringstream in(text);
  return parse_csv(in, opts);
}

FarmDataset one_signal(const std::vector<double>& values) {
  FarmDataset ds;
  ds.farm_id = "f";
  ds.signal_names = {"power"};
  ds.label_vocab = {"normal", "other"};
  TurbineSeries t{"t1", {}};
  std::int64_t ts = 0;
  for (double v : values) t.records.push_back({ts += 10, {v}, 0});
  ds.turbines.push_back(t);
  return ds;
}

FarmDataset small_farm(int turbines = 2, std::size_t records = 300) {
  FarmDataset ds;
  ds.farm_id = "f";
  ds.signal_names = {"wind_speed", "power"};
  ds.label_vocab = {"normal", "C1", "other"};
  for (int t = 0; t < turbines; ++t) {
    TurbineSeries s{"t" + std::to_string(t), {}};
    for (std::size_t i = 0; i < records; ++i)
      s.records.push_back({static_cast<std::int64_t>(i) * 10, {0.5 * static_cast<double>(i % 17), static_cast<double>(i)},
                           static_cast<std::size_t>(i % 7 == 0)});
    ds.turbines.push_back(s);
  }
  return ds;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("windclf_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                                 ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(LoadCsv, TwoRowFile) {
  const auto ds = parse("timestamp,turbine_id,wind_speed,power,label\n0,T1,5.0,300,normal\n10,T1,6.5,450,\n");
  ASSERT_EQ(ds.turbines.size(), 1u);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.signal_names, (std::vector<std::string>{"wind_speed", "power"}));
  EXPECT_EQ(ds.turbines[0].records[1].signals[1], 450.0);
  EXPECT_EQ(ds.turbines[0].records[0].label, 0u);
  EXPECT_FALSE(ds.turbines[0].records[1].label.has_value());
}

TEST(LoadCsv, HeaderOnlyIsEmptyAndValid) {
  const auto ds = parse("timestamp,turbine_id,wind_speed,power,label\n");
  EXPECT_EQ(ds.size(), 0u);
  EXPECT_NO_THROW(ds.validate());
}

TEST(LoadCsv, NonNumericNamesTheLine) {
  try {
    parse("timestamp,turbine_id,wind_speed,power,label\n0,T1,5,300,normal\n10,T1,5,abc,normal\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(LoadCsv, WrongColumnCount) {
  EXPECT_THROW(parse("timestamp,turbine_id,wind_speed,power,label\n0,T1,5,normal\n"), ParseError);
}

TEST(LoadCsv, NonMonotoneTimestampsRejected) {
  EXPECT_THROW(parse("timestamp,turbine_id,power,label\n10,T1,1,\n0,T1,2,\n"), IntegrityError);
  EXPECT_THROW(parse("timestamp,turbine_id,power,label\n10,T1,1,\n10,T1,2,\n"), IntegrityError);
}

TEST(LoadCsv, TimestampOffPeriodRejected) {
  EXPECT_THROW(parse("timestamp,turbine_id,power,label\n15,T1,1,\n"), IntegrityError);
}

TEST(LoadCsv, InterleavedTurbinesGroupedInOrder) {
  const auto ds = parse("timestamp,turbine_id,power,label\n0,B,1,\n0,A,2,\n10,B,3,\n10,A,4,\n");
  ASSERT_EQ(ds.turbines.size(), 2u);
  EXPECT_EQ(ds.turbines[0].turbine_id, "B");
  EXPECT_EQ(ds.turbines[1].records[1].signals[0], 4.0);
}

TEST(LoadCsv, UnknownLabelRejectedWithExplicitVocab) {
  CsvOptions o;
  o.label_vocab = {"normal", "other"};
  EXPECT_THROW(parse("timestamp,turbine_id,power,label\n0,T1,1,C3\n", o), ParseError);
}

TEST(LoadCsv, InferredVocabIsCanonical) {
  const auto ds = parse("timestamp,turbine_id,power,label\n0,T,1,C10\n10,T,1,C2\n20,T,1,normal\n30,T,1,C1\n");
  EXPECT_EQ(ds.label_vocab, (std::vector<std::string>{"normal", "C1", "C2", "C10", "other"}));
}

TEST(LoadCsv, SchemaSelectsAndOrdersColumns) {
  CsvOptions o;
  o.schema = {"power", "wind_speed"};
  const auto ds = parse("timestamp,turbine_id,wind_speed,pitch,power,label\n0,T,5,1,300,\n", o);
  EXPECT_EQ(ds.signal_names, o.schema);
  EXPECT_EQ(ds.turbines[0].records[0].signals, (std::vector<double>{300, 5}));
  o.schema = {"rotor_speed"};
  EXPECT_THROW(parse("timestamp,turbine_id,power,label\n0,T,5,\n", o), SchemaError);
}

TEST(LoadCsv, CommentsAndBlankLinesSkipped) {
  const auto ds = parse("# provenance\n\ntimestamp,turbine_id,power,label\n# mid\n0,T,1,\n\n");
  EXPECT_EQ(ds.size(), 1u);
}

TEST(MinMaxNormalize, Arithmetic) {
  const auto n = min_max_normalize(one_signal({2, 4, 6}));
  const auto& r = n.turbines[0].records;
  EXPECT_EQ(r[0].signals[0], 0.0);
  EXPECT_EQ(r[1].signals[0], 0.5);
  EXPECT_EQ(r[2].signals[0], 1.0);
  EXPECT_EQ(n.normalization_ranges[0], (SignalRange{2, 6}));
}

TEST(MinMaxNormalize, UnitValuesUnchanged) {
  const auto ds = one_signal({0, 1});
  const auto n = min_max_normalize(ds);
  EXPECT_EQ(n.turbines, ds.turbines);
  EXPECT_EQ(min_max_normalize(n).normalization_ranges[0], (SignalRange{0, 1}));
}

TEST(MinMaxNormalize, ConstantSignalNamed) {
  try {
    min_max_normalize(one_signal({5, 5}));
    FAIL();
  } catch (const DegenerateSignalError& e) {
    EXPECT_EQ(e.signal(), "power");
  }
}

TEST(MinMaxNormalize, DenormalizeRoundTrip) {
  FarmProfile p;
  p.months = 1;
  p.n_turbines = 5;
  p.class_mix = {{"normal", 0.9}, {"C1", 0.1}};
  const auto raw = generate_farm(p);
  const auto back = denormalize(min_max_normalize(raw));
  for (std::size_t t = 0; t < raw.turbines.size(); ++t)
    for (std::size_t i = 0; i < raw.turbines[t].records.size(); ++i)
      for (std::size_t s = 0; s < raw.signal_names.size(); ++s) {
        const double a = raw.turbines[t].records[i].signals[s], b = back.turbines[t].records[i].signals[s];
        EXPECT_LE(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(a)));
      }
}

TEST(MinMaxNormalize, AllValuesInUnitInterval) {
  FarmProfile p;
  p.months = 1;
  p.class_mix = {{"normal", 0.8}, {"C2", 0.2}};
  const auto n = min_max_normalize(generate_farm(p));
  for (const auto& t : n.turbines)
    for (const auto& r : t.records)
      for (double v : r.signals) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
}

TEST(Split, ByRecordCounts) {
  const auto ds = small_farm(1, 300);
  const auto [train, test] = split(ds, {1.0 / 3.0, 1, SplitStrategy::by_record});
  EXPECT_EQ(train.size(), 200u);
  EXPECT_EQ(test.size(), 100u);
}

TEST(Split, DeterministicAndSeedSensitive) {
  const auto ds = small_farm();
  const auto a = split(ds, {1.0 / 3.0, 7, SplitStrategy::by_record});
  const auto b = split(ds, {1.0 / 3.0, 7, SplitStrategy::by_record});
  const auto c = split(ds, {1.0 / 3.0, 8, SplitStrategy::by_record});
  EXPECT_EQ(a, b);
  EXPECT_NE(a.second, c.second);
}

TEST(Split, PartitionsAreDisjointAndCover) {
  const auto ds = small_farm(3, 257);
  for (auto strategy : {SplitStrategy::by_record, SplitStrategy::by_contiguous_block}) {
    for (double f : {0.1, 1.0 / 3.0, 0.5, 0.9}) {
      SplitSpec spec{f, 3, strategy, 20};
      const auto [train, test] = split(ds, spec);
      for (const auto& t : ds.turbines) {
        std::set<std::int64_t> tr, te;
        for (const auto& s : train.turbines)
          if (s.turbine_id == t.turbine_id)
            for (const auto& r : s.records) tr.insert(r.timestamp);
        for (const auto& s : test.turbines)
          if (s.turbine_id == t.turbine_id)
            for (const auto& r : s.records) te.insert(r.timestamp);
        EXPECT_EQ(tr.size() + te.size(), t.records.size());
        for (auto ts : te) EXPECT_EQ(tr.count(ts), 0u);
        EXPECT_LE(std::abs(static_cast<double>(te.size()) - f * static_cast<double>(t.records.size())), 1.0);
      }
    }
  }
}

TEST(Split, ContiguousBlocksKeepRuns) {
  const auto ds = small_farm(1, 1000);
  const auto [train, test] = split(ds, {0.3, 5, SplitStrategy::by_contiguous_block, 100});
  // 300 test records over blocks of 100 give at most three runs.
  std::size_t runs = 0;
  const auto& r = test.turbines[0].records;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (i == 0 || r[i].timestamp != r[i - 1].timestamp + 10) ++runs;
  EXPECT_LE(runs, 3u);
}

TEST(Split, EmptyRejected) {
  FarmDataset ds;
  EXPECT_THROW(split(ds, {}), InsufficientDataError);
}

TEST(CsvRoundTrip, NormalizedSaveReloadsIdentically) {
  TempDir dir;
  FarmProfile p;
  p.months = 1;
  p.class_mix = {{"normal", 0.8}, {"C1", 0.1}, {"C3", 0.1}};
  const auto raw = generate_farm(p);
  save_csv(dir.path / "farm.csv", raw);
  const auto loaded = load_csv(dir.path / "farm.csv");
  EXPECT_EQ(loaded.turbines, raw.turbines);

  const auto norm = min_max_normalize(loaded);
  save_csv(dir.path / "norm.csv", norm, {"comment line"});
  EXPECT_TRUE(fs::exists(dir.path / "norm.ranges.json"));
  auto reloaded = load_csv(dir.path / "norm.csv");
  reloaded.farm_id = norm.farm_id;
  EXPECT_EQ(reloaded, norm);
}

TEST(Relabel, MapsIntoLargerVocab) {
  auto ds = small_farm(1, 20);
  const auto r = relabel(ds, {"normal", "C1", "C4", "other"});
  EXPECT_EQ(label_histogram(r), (std::vector<std::size_t>{17, 3, 0, 0}));
  EXPECT_THROW(relabel(ds, {"normal", "other"}), VocabularyError);
}

TEST(Validate, DetectsBrokenInvariants) {
  auto ds = small_farm(1, 5);
  EXPECT_NO_THROW(ds.validate());
  ds.turbines[0].records[2].timestamp = 0;
  EXPECT_THROW(ds.validate(), IntegrityError);
  ds = small_farm(1, 5);
  ds.turbines[0].records[1].signals.pop_back();
  EXPECT_ANY_THROW(ds.validate());
}
