#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "pmuidx/errors.hpp"
#include "pmuidx/query.hpp"
#include "random_predicates.hpp"
#include "test_support.hpp"

namespace pmuidx {
namespace {

using testing::TempDir;

// Three PMUs from 21:04:30 for about 5.5 minutes with a couple of dropouts.
class QueryArchive : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("query");
    EngineConfig cfg = EngineConfig::defaults(3);
    cfg.segment_rows = 4096;
    const Timestamp start = parse_timestamp("2013-06-24T21:04:30Z");
    auto g = generate(cfg, start, 20'000,
                      {parse_injection("datadrop:pmu0:+40s:2s", start),
                       parse_injection("misread:pmu2:+100s:3s", start)},
                      21);
    // A few exact values to aim equality leaves at.
    for (std::size_t k = 9000; k < 9050; ++k) g.frames[k].samples[1].v = 533.0;
    for (std::size_t k = 9050; k < 9070; ++k) g.frames[k].samples[1].v = 533.5;
    archive_ = new Archive(Archive::create(dir_->path() / "a", cfg));
    archive_->append_frames(g.frames);
    archive_->sync();
  }
  static void TearDownTestSuite() {
    delete archive_;
    delete dir_;
  }

  static const Archive& archive() { return *archive_; }

  static std::vector<std::uint64_t> ids(const QueryResult& r) {
    std::vector<std::uint64_t> out;
    for (const auto& row : r.rows) out.push_back(row.row);
    return out;
  }

  static TempDir* dir_;
  static Archive* archive_;
};

TempDir* QueryArchive::dir_ = nullptr;
Archive* QueryArchive::archive_ = nullptr;

TEST(QueryParse, TableTwoShapes) {
  EXPECT_EQ(parse_query("pmu1.v = 533"),
            Predicate::leaf(Field::Voltage, 1, Interval::point(533)));
  EXPECT_EQ(parse_query("year = 2012"), Predicate::leaf(Field::Year, -1, Interval::point(2012)));
  const Predicate p = parse_query("pmu1.v = 533 and minute = 6");
  ASSERT_EQ(p.kind, Predicate::Kind::And);
  ASSERT_EQ(p.children.size(), 2u);
  EXPECT_EQ(p.children[0], Predicate::leaf(Field::Voltage, 1, Interval::point(533)));
  EXPECT_EQ(p.children[1], Predicate::leaf(Field::Minute, -1, Interval::point(6)));
}

TEST(QueryParse, OperatorsAndRanges) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(parse_query("pmu0.phi < 10").range, (Interval{-inf, 10, false, false}));
  EXPECT_EQ(parse_query("pmu0.phi <= 10").range, (Interval{-inf, 10, false, true}));
  EXPECT_EQ(parse_query("pmu0.phi > 10").range, (Interval{10, inf, false, false}));
  EXPECT_EQ(parse_query("pmu0.phi >= 10").range, (Interval{10, inf, true, false}));
  EXPECT_EQ(parse_query("pmu2.delta in (1, 2]").range, (Interval{1, 2, false, true}));
  EXPECT_EQ(parse_query("pmu2.v in [0, inf)").range, (Interval{0, inf, true, false}));
  EXPECT_EQ(parse_query("PMU3.V = 1"), parse_query("pmu3.v = 1"));
}

TEST(QueryParse, PrecedenceAndParentheses) {
  const Predicate p = parse_query("hour = 1 or hour = 2 and minute = 3");
  ASSERT_EQ(p.kind, Predicate::Kind::Or);
  EXPECT_EQ(p.children[1].kind, Predicate::Kind::And);
  const Predicate q = parse_query("(hour = 1 or hour = 2) and minute = 3");
  ASSERT_EQ(q.kind, Predicate::Kind::And);
  EXPECT_EQ(q.children[0].kind, Predicate::Kind::Or);
  EXPECT_EQ(parse_query("true"), Predicate::always());
  EXPECT_EQ(parse_query("false"), Predicate::never());
}

TEST(QueryParse, DateMinuteBecomesFieldLeaves) {
  const Predicate p = parse_query("date = 2013-06-24T21:05");
  const Predicate expect = Predicate::all_of({
      Predicate::leaf(Field::Year, -1, Interval::point(2013)),
      Predicate::leaf(Field::Month, -1, Interval::point(6)),
      Predicate::leaf(Field::Day, -1, Interval::point(24)),
      Predicate::leaf(Field::Hour, -1, Interval::point(21)),
      Predicate::leaf(Field::Minute, -1, Interval::point(5)),
  });
  EXPECT_EQ(p, expect);
  EXPECT_EQ(parse_query("date in [2013-06-24T21:05, 2013-06-24T21:06)"), expect);
}

TEST(QueryParse, ErrorsCarryByteOffsets) {
  struct Case {
    const char* text;
    std::size_t offset;
  };
  const Case cases[] = {
      {"pmu1.v = ", 9},
      {"pmu1.x = 3", 0},
      {"pmu1.v = 5 and", 14},
      {"(year = 2012", 12},
      {"year = = 2012", 7},
      {"year = 2012 garbage", 12},
      {"minute = 4 and date = 2013-06-99", 22},
      {"pmu1.v in [5, 3]", 11},
      {"pmu1.v # 3", 7},
      {"date = 2013-06-24T21:05:00.05", 7},
  };
  for (const auto& c : cases) {
    try {
      parse_query(c.text);
      ADD_FAILURE() << "accepted: " << c.text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.offset(), c.offset) << c.text << ": " << e.what();
      EXPECT_NE(std::string(e.what()).find("offset " + std::to_string(c.offset)), std::string::npos);
    }
  }
  const BinLayout l = BinLayout::pmu_layout(3);
  EXPECT_THROW(parse_query("pmu7.v = 1", &l), ParseError);
  EXPECT_NO_THROW(parse_query("pmu2.v = 1", &l));
}

TEST(QueryParse, CanonicalTextRoundTrips) {
  const char* texts[] = {
      "pmu1.v = 533",
      "year = 2012 or (month = 3 and pmu0.phi in (-10, 10])",
      "(pmu0.v < 1 or pmu1.v >= 2.5) and (hour = 3 or hour = 4) and decisecond <= 7",
      "date in [2013-06-24T21:05:10.3, 2013-06-25T03)",
      "true",
      "false",
      "pmu2.delta > 0.001 and true",
  };
  for (const char* t : texts) {
    const Predicate p = parse_query(t);
    EXPECT_EQ(parse_query(to_string(p)), p) << t << " -> " << to_string(p);
  }
  EXPECT_EQ(to_string(parse_query("pmu1.v = 533")), "pmu1.v = 533");
}

// Decomposition against a direct timestamp comparison for random ranges.
TEST(QueryDate, RangeDecompositionMatchesBruteForce) {
  std::mt19937_64 rng(8);
  const std::int64_t base = parse_timestamp("2012-12-31T22:00:00Z").ms / 100;
  std::uniform_int_distribution<std::int64_t> span(0, 3LL * 24 * 36000);
  for (int trial = 0; trial < 200; ++trial) {
    std::int64_t a = base + span(rng);
    std::int64_t b = base + span(rng);
    if (trial % 4 == 0) b = a + static_cast<std::int64_t>(rng() % 50);  // short ranges too
    if (a > b) std::swap(a, b);
    const Timestamp lo{a * 100};
    const Timestamp hi{b * 100};
    const Predicate p = date_range(lo, hi);
    for (int probe = 0; probe < 300; ++probe) {
      std::int64_t t = lo.ms - 5000 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi.ms - lo.ms + 10'000));
      if (probe < 4) t = std::array<std::int64_t, 4>{lo.ms, hi.ms, lo.ms - 1, hi.ms - 1}[probe];
      FrameRecord f;
      f.ts = Timestamp{t};
      ASSERT_EQ(p.matches(f, {}), t >= lo.ms && t < hi.ms)
          << format_timestamp(lo) << " .. " << format_timestamp(hi) << " probe "
          << format_timestamp(f.ts) << " as " << to_string(p);
    }
  }
}

TEST(QueryDate, RangeOutsideBinSpanMatchesNothing) {
  EXPECT_EQ(date_range(parse_timestamp("2005-01-01T00:00"), parse_timestamp("2009-01-01T00:00")),
            Predicate::never());
  EXPECT_EQ(parse_query("date = 2021"), Predicate::never());
  EXPECT_THROW(date_range(Timestamp{1'300'000'000'050}, Timestamp{1'300'000'001'000}),
               ValidationError);
  const Predicate all = parse_query("date >= 2000");
  FrameRecord f;
  f.ts = parse_timestamp("2020-12-31T23:59:59.900Z");
  EXPECT_TRUE(all.matches(f, {}));
}

TEST(QueryPlan, EmptyAndOrBehave) {
  const BinLayout l = BinLayout::pmu_layout(2);
  EXPECT_FALSE(plan(Predicate::never(), l).has_value());
  EXPECT_TRUE(plan(Predicate::always(), l).has_value());
  EXPECT_FALSE(plan(parse_query("pmu0.phi > 500"), l).has_value());
  EXPECT_FALSE(plan(parse_query("pmu0.v < -1 and hour = 3"), l).has_value());
  EXPECT_THROW(plan(parse_query("pmu5.v = 1"), l), ValidationError);
}

TEST_F(QueryArchive, ValueQueryIsCandidacyFiltered) {
  const Predicate p = parse_query("pmu1.v = 533");
  const QueryResult r = execute_bitmap(archive(), p);
  EXPECT_EQ(r.report.returned, 50u);
  EXPECT_EQ(r.report.candidates, 70u);
  EXPECT_TRUE(r.report.candidacy_checked);
  EXPECT_LE(r.report.returned, r.report.candidates);
  for (const auto& row : r.rows) EXPECT_EQ(row.frame.samples[1].v, 533.0);
  EXPECT_EQ(ids(r), ids(execute_linear(archive(), p)));
}

TEST_F(QueryArchive, MinuteQueryReturns3600ExactRows) {
  const QueryResult r = execute_bitmap(archive(), parse_query("date = 2013-06-24T21:06"));
  EXPECT_EQ(r.report.returned, 3600u);
  EXPECT_EQ(r.report.candidates, 3600u);
  EXPECT_FALSE(r.report.candidacy_checked);
  EXPECT_EQ(r.report.bytes_read, 3600 * archive().row_bytes());
  const auto linear = execute_linear(archive(), parse_query("minute = 6"));
  EXPECT_EQ(linear.report.returned, 3600u);
  EXPECT_EQ(ids(r), ids(linear));
}

TEST_F(QueryArchive, ZeroHitQueriesNeverTouchSegments) {
  for (const char* q : {"year = 2012", "false", "pmu1.v = 533.25", "pmu0.phi > 179.99 and pmu0.v < 1",
                        "date = 2013-06-24T22"}) {
    const QueryResult r = execute_bitmap(archive(), parse_query(q));
    EXPECT_EQ(r.report.returned, 0u) << q;
    if (r.report.candidates == 0) {
      EXPECT_EQ(r.report.bytes_read, 0u) << q;
      EXPECT_EQ(r.report.file_opens, 0u) << q;
    }
  }
  const QueryResult y = execute_bitmap(archive(), parse_query("year = 2012"));
  EXPECT_EQ(y.report.candidates, 0u);
  EXPECT_EQ(y.report.bytes_read, 0u);
}

TEST_F(QueryArchive, TautologyReturnsEveryRow) {
  EXPECT_EQ(execute_linear(archive(), Predicate::always()).report.returned, archive().rows());
  EXPECT_EQ(execute_bitmap(archive(), Predicate::always()).report.returned, archive().rows());
}

TEST_F(QueryArchive, LimitTruncatesRowsButNotCount) {
  const QueryResult r =
      execute_bitmap(archive(), parse_query("date = 2013-06-24T21:06"), QueryOptions{10});
  EXPECT_EQ(r.rows.size(), 10u);
  EXPECT_EQ(r.report.returned, 3600u);
}

TEST_F(QueryArchive, RandomPredicatesAgreeWithLinearScan) {
  testing::PredicateGenerator gen(archive().read_range(0, archive().rows(), false), 3, 99);
  int nonempty = 0;
  for (int i = 0; i < 150; ++i) {
    const std::string text = gen.next();
    const Predicate p = parse_query(text);
    const QueryResult b = execute_bitmap(archive(), p);
    const QueryResult l = execute_linear(archive(), p);
    ASSERT_EQ(ids(b), ids(l)) << text;
    ASSERT_EQ(b.report.returned, l.report.returned) << text;
    for (std::size_t k = 0; k < b.rows.size(); ++k) ASSERT_EQ(b.rows[k].frame, l.rows[k].frame);
    if (b.report.candidates == 0) ASSERT_EQ(b.report.bytes_read, 0u) << text;
    nonempty += b.report.returned > 0 ? 1 : 0;
  }
  EXPECT_GT(nonempty, 30);
}

TEST_F(QueryArchive, DeltaQueriesUseStoredPreviousAngles) {
  const Predicate p = parse_query("pmu0.delta > 0.01");
  EXPECT_EQ(ids(execute_bitmap(archive(), p)), ids(execute_linear(archive(), p)));
  // The data drop zeroes the angle, so its edges show large jumps.
  EXPECT_GE(execute_bitmap(archive(), parse_query("pmu0.delta >= 5")).report.returned, 2u);
}

TEST_F(QueryArchive, BenchTableAndCsv) {
  const std::vector<BenchQuery> qs{{"a", "pmu1.v = 533"},
                                   {"b", "date = 2013-06-24T21:06"},
                                   {"c", "year = 2012"}};
  const auto rows = bench(archive(), qs, BenchOptions{3, false});
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].records, 50u);
  EXPECT_EQ(rows[2].records, 3600u);
  EXPECT_EQ(rows[4].records, 0u);
  EXPECT_EQ(rows[1].path, QueryPath::Linear);
  EXPECT_DOUBLE_EQ(rows[1].speedup, 1.0);
  EXPECT_GT(rows[4].speedup, 100.0);

  // A linear scan reads the whole archive whatever the predicate.
  for (const auto& q : qs) {
    const auto r = execute_linear(archive(), parse_query(q.text));
    EXPECT_EQ(r.report.bytes_read, archive().rows() * archive().row_bytes()) << q.text;
  }

  std::ostringstream csv;
  write_bench_csv(csv, rows);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "query_id,path,median_ms,records,speedup");
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
  }
  EXPECT_EQ(n, 6);

  const auto again = bench(archive(), qs, BenchOptions{1, false});
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(again[i].records, rows[i].records);
}

TEST(QueryEmpty, EmptyArchiveReturnsNothing) {
  TempDir dir("query");
  Archive a = Archive::create(dir / "a", EngineConfig::defaults(2));
  EXPECT_EQ(execute_linear(a, Predicate::always()).report.returned, 0u);
  EXPECT_EQ(execute_bitmap(a, parse_query("pmu0.v > 1")).report.returned, 0u);
}

TEST(QueryTable2, PlantedRowsAndSuite) {
  TempDir dir("query");
  EngineConfig cfg = EngineConfig::defaults(3);
  const Archive a = build_table2_archive(dir / "t2", cfg, 20'000, 5);
  EXPECT_EQ(a.rows(), 20'000u);
  EXPECT_EQ(a.first_ts(), table2_start());
  const auto r = execute_bitmap(a, parse_query("pmu1.v = 533"));
  EXPECT_EQ(r.report.returned, kTable2PlantedRows);
  EXPECT_EQ(r.report.candidates, kTable2PlantedRows + 40);
  EXPECT_EQ(table2_suite().size(), 6u);
  const auto rows = bench(a, table2_suite(), BenchOptions{1, true});
  EXPECT_EQ(rows.size(), 12u);
  EXPECT_EQ(rows[0].records, kTable2PlantedRows);
}

}  // namespace
}  // namespace pmuidx
