#include <gtest/gtest.h>

#include <fstream>

#include "pmuidx/config.hpp"
#include "pmuidx/errors.hpp"
#include "test_support.hpp"

namespace pmuidx {
namespace {

TEST(Config, DefaultsAreValid) {
  const EngineConfig c = EngineConfig::defaults();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.pmu_count, 20u);
  EXPECT_EQ(c.window_lengths, (std::vector<std::size_t>{1200, 600, 60, 54, 48, 30, 18, 12, 6}));
  EXPECT_EQ(c.shortest_window(), 6u);
  EXPECT_EQ(c.longest_window(), 1200u);
  EXPECT_DOUBLE_EQ(c.distance(5), 1.0);
  EXPECT_EQ(c.segment_rows, 72'000u);
}

TEST(Config, RenderParseRoundTrip) {
  EngineConfig c = EngineConfig::defaults(6);
  c.window_lengths = {120, 30, 6};
  c.corr_threshold = 0.4;
  c.electrical_distance = {0.0, 0.5, 0.25, 3.0, 1.0, 2.0};
  c.segment_rows = 1000;
  c.signal = SignalSelector::PhaseAngle;
  c.layout.phase_bin_width = 5.0;
  c.generator.v_noise = 0.02;
  const EngineConfig back = parse_config(render_config(c));
  EXPECT_EQ(render_config(back), render_config(c));
  EXPECT_EQ(back.window_lengths, c.window_lengths);
  EXPECT_EQ(back.electrical_distance, c.electrical_distance);
  EXPECT_EQ(back.signal, SignalSelector::PhaseAngle);
  EXPECT_EQ(back.bin_layout(), c.bin_layout());
}

TEST(Config, ElectricalOrderSortsByDistanceThenId) {
  EngineConfig c = EngineConfig::defaults(5);
  c.electrical_distance = {0.0, 2.0, 1.0, 1.0, 0.5};
  EXPECT_EQ(c.electrical_order(), (std::vector<std::size_t>{0, 4, 2, 3, 1}));
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_config("window_lengths = 6, 12\n"), ValidationError);
  EXPECT_THROW(parse_config("corr_threshold = 1.5\n"), ValidationError);
  EXPECT_THROW(parse_config("no_such_key = 1\n"), ValidationError);
  EXPECT_THROW(parse_config("pmu_count = many\n"), ValidationError);
  EXPECT_THROW(parse_config("just text\n"), ParseError);
  EXPECT_THROW(parse_config("pmu_count = 3\nelectrical_distance = 0, 1\n"), ValidationError);
}

TEST(Config, CommentsAndBlankLinesAreIgnored) {
  const EngineConfig c = parse_config("# comment\n\npmu_count = 4\nsegment_rows = 10  \n");
  EXPECT_EQ(c.pmu_count, 4u);
  EXPECT_EQ(c.segment_rows, 10u);
  EXPECT_EQ(c.electrical_distance.size(), 4u);
}

TEST(Config, LoadFromFile) {
  testing::TempDir dir("config");
  {
    std::ofstream out(dir / "engine.conf");
    out << "pmu_count = 3\n";
  }
  EXPECT_EQ(load_config(dir / "engine.conf").pmu_count, 3u);
  EXPECT_THROW(load_config(dir / "missing.conf"), IoError);
}

}  // namespace
}  // namespace pmuidx
