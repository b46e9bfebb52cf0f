#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pmuidx/bin_layout.hpp"
#include "pmuidx/domain.hpp"
#include "pmuidx/wah.hpp"

namespace pmuidx {

// Remembers the previous phase angle of every PMU so each row can be binned
// on delta = |phi_t - phi_{t-1}|. The first row of a stream gets delta 0.
class DeltaTracker {
 public:
  explicit DeltaTracker(std::size_t pmu_count = 0) : prev_(pmu_count) {}

  double next(std::size_t pmu, double phi);
  void seed(std::size_t pmu, double phi) { prev_.at(pmu) = phi; }
  void reset() {
    for (auto& p : prev_) p.reset();
  }
  std::size_t pmu_count() const { return prev_.size(); }

 private:
  std::vector<std::optional<double>> prev_;
};

// Expands one frame into one value per layout attribute (date parts, then
// phi/v/delta per PMU in layout order). Updates the tracker.
std::vector<double> row_values(const BinLayout& layout, const FrameRecord& frame,
                               DeltaTracker& tracker);
// Same as above with precomputed per-PMU deltas.
void row_values(const BinLayout& layout, const FrameRecord& frame, std::span<const double> deltas,
                std::vector<double>& out);

// Boolean expression over attribute value ranges.
struct BinExpr {
  enum class Kind { Leaf, And, Or };

  Kind kind = Kind::Leaf;
  std::size_t attribute = 0;  // leaf only
  Interval range{};           // leaf only
  std::vector<BinExpr> children;

  static BinExpr leaf(std::size_t attribute, Interval range) {
    BinExpr e;
    e.attribute = attribute;
    e.range = range;
    return e;
  }
  static BinExpr all_of(std::vector<BinExpr> children) {
    BinExpr e;
    e.kind = Kind::And;
    e.children = std::move(children);
    return e;
  }
  static BinExpr any_of(std::vector<BinExpr> children) {
    BinExpr e;
    e.kind = Kind::Or;
    e.children = std::move(children);
    return e;
  }
};

struct ResultBitVector {
  WahVector bits;
  std::uint64_t hits = 0;
  // True when no touched bin needs a candidacy check.
  bool exact = true;
  std::size_t bins_touched = 0;
};

// m x n bitmap: one compressed column per bin, one row per record.
//
// Columns are padded lazily: appending a row only touches the columns whose
// bit is set, and column() pads a copy with trailing zeros up to rows().
class BitmapIndex {
 public:
  BitmapIndex() = default;
  explicit BitmapIndex(BinLayout layout);

  const BinLayout& layout() const { return layout_; }
  std::uint64_t rows() const { return rows_; }
  std::size_t bin_count() const { return columns_.size(); }

  // One value per attribute. Returns the new row id.
  std::uint64_t append_values(std::span<const double> values);
  std::uint64_t append_frame(const FrameRecord& frame, DeltaTracker& tracker);

  void close() { closed_ = true; }
  bool closed() const { return closed_; }

  WahVector column(std::size_t bin) const;
  // Pads every column to rows(). Evaluation does not require it.
  void seal();

  // Candidate rows for `expr`. Each leaf ORs the bins its range touches.
  ResultBitVector evaluate(const BinExpr& expr) const;

  std::size_t compressed_bytes() const;
  // Size of the plain m x n bit matrix in bytes.
  std::uint64_t uncompressed_bytes() const;

  // Binary format, little-endian:
  //   "PMUBIDX1" | u32 version | u64 layout_len | layout | u64 m | u64 n
  //   | (n+1) x u64 word offsets | n x (u32 active word, u8 active bits)
  //   | words (u32) | u32 crc32 of all preceding bytes
  void save(const std::filesystem::path& path) const;
  static BitmapIndex load(const std::filesystem::path& path);

  friend bool operator==(const BitmapIndex& a, const BitmapIndex& b);

 private:
  WahVector evaluate_node(const BinExpr& expr, bool& exact, std::size_t& touched) const;

  BinLayout layout_;
  std::vector<WahVector> columns_;
  std::uint64_t rows_ = 0;
  bool closed_ = false;
  std::vector<std::size_t> scratch_;
};

}  // namespace pmuidx
