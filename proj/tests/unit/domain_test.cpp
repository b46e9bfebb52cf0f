#include <gtest/gtest.h>

#include <random>

#include "pmuidx/domain.hpp"
#include "pmuidx/errors.hpp"

namespace pmuidx {
namespace {

TEST(Domain, DecomposesTableTwoMinute) {
  const TimeParts p = decompose_time(parse_timestamp("2013-06-24T21:05:00.000Z"));
  EXPECT_EQ(p, (TimeParts{2013, 6, 24, 21, 5, 0, 0}));
}

TEST(Domain, DecomposesStartOfBinSpan) {
  const TimeParts p = decompose_time(parse_timestamp("2010-01-01T00:00:00.000Z"));
  EXPECT_EQ(p, (TimeParts{2010, 1, 1, 0, 0, 0, 0}));
}

TEST(Domain, DecisecondFloorsMilliseconds) {
  EXPECT_EQ(decompose_time(parse_timestamp("2015-03-01T10:20:30.167Z")).decisecond, 1);
  EXPECT_EQ(decompose_time(parse_timestamp("2015-03-01T10:20:30.999Z")).decisecond, 9);
  EXPECT_EQ(decompose_time(parse_timestamp("2015-03-01T10:20:30.099Z")).decisecond, 0);
}

TEST(Domain, DecomposeRejectsYearsOutsideBinSpan) {
  EXPECT_THROW(decompose_time(parse_timestamp("2009-12-31T23:59:59.900Z")), RangeError);
  EXPECT_THROW(decompose_time(parse_timestamp("2021-01-01T00:00:00Z")), RangeError);
  EXPECT_NO_THROW(decompose_time(parse_timestamp("2020-12-31T23:59:59.999Z")));
}

TEST(Domain, ComposeInvertsDecompose) {
  std::mt19937_64 rng(11);
  const std::int64_t lo = parse_timestamp("2010-01-01T00:00:00Z").ms;
  const std::int64_t hi = parse_timestamp("2021-01-01T00:00:00Z").ms;
  std::uniform_int_distribution<std::int64_t> dist(lo, hi - 1);
  for (int i = 0; i < 5000; ++i) {
    const Timestamp ts{dist(rng)};
    const Timestamp truncated{ts.ms - ts.ms % 100};
    EXPECT_EQ(compose_time(decompose_time(ts)), truncated);
  }
}

TEST(Domain, TimestampTextRoundTrip) {
  const Timestamp ts = parse_timestamp("2013-06-24T21:05:07.250Z");
  EXPECT_EQ(format_timestamp(ts), "2013-06-24T21:05:07.250Z");
  EXPECT_EQ(parse_timestamp("2013-06-24T21:05"), parse_timestamp("2013-06-24T21:05:00.000Z"));
}

TEST(Domain, TimestampParseErrorsCarryOffset) {
  try {
    parse_timestamp("2013-06-2XT21:05");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GE(e.offset(), 8u);
  }
  EXPECT_THROW(parse_timestamp("2013-13-01T00:00"), ParseError);
  EXPECT_THROW(parse_timestamp(""), ParseError);
}

TEST(Domain, FrameTimeGivesExactly3600FramesPerMinute) {
  const Timestamp start = parse_timestamp("2013-06-24T21:05:00Z");
  const Timestamp next = parse_timestamp("2013-06-24T21:06:00Z");
  EXPECT_EQ(frame_time(start, 3600), next);
  EXPECT_LT(frame_time(start, 3599), next);
  for (int k = 1; k < 3600; ++k) EXPECT_LT(frame_time(start, k - 1), frame_time(start, k));
}

TEST(Domain, PhaseDeltaIsRawAbsoluteDifference) {
  EXPECT_DOUBLE_EQ(phase_delta(10, 10), 0.0);
  EXPECT_DOUBLE_EQ(phase_delta(-170, 170), 340.0);
  EXPECT_DOUBLE_EQ(phase_delta(45.5, 44.0), 1.5);
}

TEST(Domain, PhaseDeltaStaysInRange) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(-180.0, 180.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = angle(rng);
    const double b = angle(rng);
    const double d = phase_delta(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LT(d, 360.0);
    EXPECT_DOUBLE_EQ(d, phase_delta(b, a));
  }
}

TEST(Domain, NormalizePhaseFolds) {
  EXPECT_DOUBLE_EQ(normalize_phase(180), -180.0);
  EXPECT_DOUBLE_EQ(normalize_phase(0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_phase(365), 5.0);
  EXPECT_DOUBLE_EQ(normalize_phase(-540), -180.0);
  EXPECT_THROW(normalize_phase(std::nan("")), ValidationError);
}

TEST(Domain, NormalizePhaseProperty) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(-5000.0, 5000.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = angle(rng);
    const double n = normalize_phase(a);
    EXPECT_GE(n, -180.0);
    EXPECT_LT(n, 180.0);
    const double turns = (a - n) / 360.0;
    EXPECT_NEAR(turns, std::round(turns), 1e-9);
  }
}

TEST(Domain, SampleMakeValidates) {
  EXPECT_THROW(PhasorSample::make(-1.0, 0.0), ValidationError);
  const PhasorSample s = PhasorSample::make(540.0, 190.0);
  EXPECT_DOUBLE_EQ(s.phi, -170.0);
}

}  // namespace
}  // namespace pmuidx
