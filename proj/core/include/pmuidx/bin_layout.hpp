#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pmuidx {

// Closed/open real interval. Infinite bounds are allowed.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = true;
  bool hi_closed = false;

  static Interval point(double v) { return {v, v, true, true}; }
  static Interval half_open(double lo, double hi) { return {lo, hi, true, false}; }
  static Interval closed(double lo, double hi) { return {lo, hi, true, true}; }

  bool empty() const;
  bool contains(double v) const;
  bool intersects(const Interval& other) const;
  // True when every point of `inner` lies in *this.
  bool covers(const Interval& inner) const;

  friend bool operator==(const Interval&, const Interval&) = default;
};

// One column of the bitmap: the set of values it stands for. A bin is exact
// when it holds a single value, so a hit needs no candidacy check.
struct Bin {
  std::vector<Interval> parts;
  bool exact = false;

  bool contains(double v) const;

  friend bool operator==(const Bin&, const Bin&) = default;
};

enum class Field : std::uint8_t {
  Year,
  Month,
  Day,
  Hour,
  Minute,
  Second,
  Decisecond,
  Phase,
  Voltage,
  Delta,
  Generic,
};

std::string_view field_name(Field f);
bool is_date_field(Field f);

// One bin per integer in [first, first + count).
struct IntegerBinning {
  std::int64_t first = 0;
  std::size_t count = 0;
  friend bool operator==(const IntegerBinning&, const IntegerBinning&) = default;
};

// `count` bins of equal width covering [lo, lo + count * width).
struct EqualWidthBinning {
  double lo = 0.0;
  double width = 1.0;
  std::size_t count = 0;
  friend bool operator==(const EqualWidthBinning&, const EqualWidthBinning&) = default;
};

// Skewed voltage layout:
//   bin 0                    exactly 0 (data drop)
//   bins 1..side             [central_lo - side*w, central_lo) in steps of w
//   bin side+1               [central_lo, central_hi)
//   bins side+2..2*side+1    [central_hi, central_hi + side*w) in steps of w
//   bin 2*side+2             everything else on [0, inf)
struct VoltageBinning {
  double central_lo = 535.0;
  double central_hi = 545.0;
  std::size_t side_bins = 10;
  double side_width = 1.0;
  friend bool operator==(const VoltageBinning&, const VoltageBinning&) = default;
};

// Arbitrary bins searched linearly. Must partition the attribute's domain.
struct ExplicitBinning {
  std::vector<Bin> bins;
  friend bool operator==(const ExplicitBinning&, const ExplicitBinning&) = default;
};

using Binning =
    std::variant<IntegerBinning, EqualWidthBinning, VoltageBinning, ExplicitBinning>;

struct Attribute {
  std::string name;
  Field field = Field::Generic;
  int pmu = -1;
  Binning binning;
  std::size_t first_bin = 0;  // global column of this attribute's bin 0

  std::size_t bin_count() const;
  // Local bin index of `value`. Throws ValidationError on NaN and RangeError
  // when the value lies outside the attribute's domain.
  std::size_t bin_of(double value) const;
  Bin bin(std::size_t local) const;
  // Domain covered by all bins together.
  std::vector<Interval> domain() const;

  friend bool operator==(const Attribute&, const Attribute&) = default;
};

struct LayoutParams {
  double phase_bin_width = 10.0;
  VoltageBinning voltage{};
  double delta_bin_width = 2.0;

  friend bool operator==(const LayoutParams&, const LayoutParams&) = default;
};

class BinLayout {
 public:
  BinLayout() = default;
  explicit BinLayout(std::vector<Attribute> attributes);

  // Seven date attributes followed by phase, voltage and delta per PMU.
  static BinLayout pmu_layout(std::size_t pmu_count, const LayoutParams& params = {});

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t total_bins() const { return total_bins_; }
  std::size_t pmu_count() const { return pmu_count_; }

  const Attribute* find(std::string_view name) const;
  // Index into attributes() or nullopt.
  std::optional<std::size_t> index_of(Field field, int pmu = -1) const;
  const Attribute& at(std::size_t attr) const { return attributes_.at(attr); }

  // Global column for `value` under attribute `attr`.
  std::size_t bin_of(std::size_t attr, double value) const;

  void serialize(std::vector<std::uint8_t>& out) const;
  // Throws FormatError on malformed input; advances `pos`.
  static BinLayout deserialize(const std::uint8_t* data, std::size_t size, std::size_t& pos);

  friend bool operator==(const BinLayout&, const BinLayout&) = default;

 private:
  std::vector<Attribute> attributes_;
  std::size_t total_bins_ = 0;
  std::size_t pmu_count_ = 0;
};

}  // namespace pmuidx
