#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmuidx/archive.hpp"
#include "pmuidx/bin_layout.hpp"
#include "pmuidx/bitmap_index.hpp"
#include "pmuidx/domain.hpp"

namespace pmuidx {

// Boolean tree over attribute ranges. A leaf constrains one date field or
// one PMU attribute (v, phi, delta) to an interval; an equality is a point
// interval. An AND without children is true, an OR without children false.
struct Predicate {
  enum class Kind { Leaf, And, Or };

  Kind kind = Kind::Leaf;
  Field field = Field::Year;  // leaf only
  int pmu = -1;               // leaf only; -1 for date fields
  Interval range{};           // leaf only
  std::vector<Predicate> children;

  static Predicate leaf(Field field, int pmu, Interval range);
  static Predicate all_of(std::vector<Predicate> children);
  static Predicate any_of(std::vector<Predicate> children);
  static Predicate always() { return all_of({}); }
  static Predicate never() { return any_of({}); }

  // `deltas` is only consulted by delta leaves.
  bool matches(const FrameRecord& frame, std::span<const double> deltas) const;
  bool uses_delta() const;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

// Canonical text that parse_query() maps back to an equal predicate.
std::string to_string(const Predicate& p);

// Grammar:
//   expr   := term ("or" term)*
//   term   := factor ("and" factor)*
//   factor := "(" expr ")" | "true" | "false" | leaf
//   leaf   := field op value | field "in" ("[" | "(") value "," value ("]" | ")")
//   op     := "=" | "<" | "<=" | ">" | ">="
//   field  := year | month | day | hour | minute | second | decisecond
//           | date | pmuN.v | pmuN.phi | pmuN.delta
// `date` takes YYYY[-MM[-DD[THH[:MM[:SS[.f]]]]]][Z] literals; each stands for
// the whole unit it names, so `date = 2013-06-24T21:05` is one minute. Date
// leaves are rewritten into the per-field date bins.
//
// Throws ParseError with the byte offset of the problem. With a layout,
// PMU ids it does not have are rejected too.
Predicate parse_query(std::string_view text, const BinLayout* layout = nullptr);

// Rows with ts in [lo, hi) as an OR of ANDs over year..decisecond leaves.
// Bounds must be multiples of 100 ms. Times outside the date bin span match
// nothing.
Predicate date_range(Timestamp lo, Timestamp hi);

// Bin expression for `p`, or nullopt when no row can match.
// Throws ValidationError for attributes missing from the layout.
std::optional<BinExpr> plan(const Predicate& p, const BinLayout& layout);

enum class QueryPath { Bitmap, Linear };
std::string_view query_path_name(QueryPath p);

struct QueryReport {
  std::string predicate;
  QueryPath path = QueryPath::Bitmap;
  std::uint64_t candidates = 0;  // rows the index pointed at (all rows for linear)
  std::uint64_t returned = 0;
  double wall_ms = 0.0;
  std::uint64_t bytes_read = 0;
  std::uint64_t file_opens = 0;
  std::size_t bins_touched = 0;
  bool candidacy_checked = false;
};

struct QueryResult {
  std::vector<ArchivedRow> rows;  // in row order, at most `limit` of them
  QueryReport report;
};

struct QueryOptions {
  // Rows beyond the limit are counted in report.returned but not kept.
  std::optional<std::size_t> limit;
};

// Index evaluation, fetch of the candidate rows and, when a touched bin
// holds more than one value, a candidacy check against `p`. A query
// without candidates never touches the segments.
QueryResult execute_bitmap(const Archive& archive, const Predicate& p, QueryOptions opts = {});
// Reads every row and tests it against `p`.
QueryResult execute_linear(const Archive& archive, const Predicate& p, QueryOptions opts = {});

// ---------------------------------------------------------------------------
// Benchmarks

struct BenchQuery {
  std::string id;
  std::string text;
};

// Six query shapes of the classic bitmap-vs-scan comparison, aimed at an
// archive built by build_table2_archive().
std::vector<BenchQuery> table2_suite();

struct BenchRow {
  std::string query_id;
  QueryPath path = QueryPath::Bitmap;
  double median_ms = 0.0;
  std::uint64_t records = 0;
  double speedup = 1.0;  // linear median / this path's median
};

struct BenchOptions {
  std::size_t repetitions = 3;
  // Drop the segments from the page cache before every run.
  bool cold_cache = true;
};

std::vector<BenchRow> bench(const Archive& archive, std::span<const BenchQuery> queries,
                            const BenchOptions& opts = {});
void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);

inline constexpr std::size_t kTable2PlantedRows = 160;
// 2013-06-24T12:00:00Z
Timestamp table2_start();

// Generates `rows` frames from `table2_start()` straight into a new archive
// at `dir`, in chunks. pmu1.v is set to exactly 533 on kTable2PlantedRows
// consecutive rows (from 14:30, or a quarter into shorter archives) and to
// non-integral values in [533, 534) on the 40 rows after them.
Archive build_table2_archive(const std::filesystem::path& dir, const EngineConfig& config,
                             std::uint64_t rows, std::uint64_t seed,
                             const std::function<void(std::uint64_t)>& progress = {});

}  // namespace pmuidx
