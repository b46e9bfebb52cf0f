#include "pmuidx/bin_layout.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <type_traits>

#include "binio.hpp"
#include "pmuidx/domain.hpp"
#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// floor((v - lo) / w) corrected so that v lies in [lo + k*w, lo + (k+1)*w)
// under the same floating-point arithmetic used by Attribute::bin().
std::size_t equal_width_index(double v, double lo, double w, std::size_t count) {
  auto k = static_cast<std::int64_t>(std::floor((v - lo) / w));
  const auto last = static_cast<std::int64_t>(count) - 1;
  if (k > last) k = last;
  if (k < 0) k = 0;
  while (k > 0 && v < lo + static_cast<double>(k) * w) --k;
  while (k < last && v >= lo + static_cast<double>(k + 1) * w) ++k;
  return static_cast<std::size_t>(k);
}

double equal_width_edge(double lo, double w, std::size_t k) {
  return lo + static_cast<double>(k) * w;
}

[[noreturn]] void out_of_domain(const std::string& name, double v) {
  throw RangeError("value " + std::to_string(v) + " is outside the domain of attribute '" +
                   name + "'");
}

}  // namespace

bool Interval::empty() const {
  if (lo > hi) return true;
  if (lo == hi) return !(lo_closed && hi_closed);
  return false;
}

bool Interval::contains(double v) const {
  const bool above = lo_closed ? v >= lo : v > lo;
  const bool below = hi_closed ? v <= hi : v < hi;
  return above && below;
}

bool Interval::intersects(const Interval& o) const {
  Interval x;
  if (lo > o.lo) {
    x.lo = lo;
    x.lo_closed = lo_closed;
  } else if (o.lo > lo) {
    x.lo = o.lo;
    x.lo_closed = o.lo_closed;
  } else {
    x.lo = lo;
    x.lo_closed = lo_closed && o.lo_closed;
  }
  if (hi < o.hi) {
    x.hi = hi;
    x.hi_closed = hi_closed;
  } else if (o.hi < hi) {
    x.hi = o.hi;
    x.hi_closed = o.hi_closed;
  } else {
    x.hi = hi;
    x.hi_closed = hi_closed && o.hi_closed;
  }
  return !x.empty();
}

bool Interval::covers(const Interval& inner) const {
  if (inner.empty()) return true;
  const bool lo_ok = inner.lo > lo || (inner.lo == lo && (lo_closed || !inner.lo_closed));
  const bool hi_ok = inner.hi < hi || (inner.hi == hi && (hi_closed || !inner.hi_closed));
  return lo_ok && hi_ok;
}

bool Bin::contains(double v) const {
  for (const auto& p : parts) {
    if (p.contains(v)) return true;
  }
  return false;
}

std::string_view field_name(Field f) {
  switch (f) {
    case Field::Year: return "year";
    case Field::Month: return "month";
    case Field::Day: return "day";
    case Field::Hour: return "hour";
    case Field::Minute: return "minute";
    case Field::Second: return "second";
    case Field::Decisecond: return "decisecond";
    case Field::Phase: return "phi";
    case Field::Voltage: return "v";
    case Field::Delta: return "delta";
    case Field::Generic: return "generic";
  }
  return "unknown";
}

bool is_date_field(Field f) { return f <= Field::Decisecond; }

std::size_t Attribute::bin_count() const {
  return std::visit(
      Overloaded{
          [](const IntegerBinning& b) { return b.count; },
          [](const EqualWidthBinning& b) { return b.count; },
          [](const VoltageBinning& b) { return 2 * b.side_bins + 3; },
          [](const ExplicitBinning& b) { return b.bins.size(); },
      },
      binning);
}

std::size_t Attribute::bin_of(double v) const {
  if (std::isnan(v)) throw ValidationError("NaN value for attribute '" + name + "'");
  return std::visit(
      Overloaded{
          [&](const IntegerBinning& b) -> std::size_t {
            const double k = v - static_cast<double>(b.first);
            if (k != std::floor(k) || k < 0 || k >= static_cast<double>(b.count)) {
              out_of_domain(name, v);
            }
            return static_cast<std::size_t>(k);
          },
          [&](const EqualWidthBinning& b) -> std::size_t {
            if (v < b.lo || v >= equal_width_edge(b.lo, b.width, b.count)) out_of_domain(name, v);
            return equal_width_index(v, b.lo, b.width, b.count);
          },
          [&](const VoltageBinning& b) -> std::size_t {
            if (v < 0.0) out_of_domain(name, v);
            if (v == 0.0) return 0;
            const double lo_edge = b.central_lo - static_cast<double>(b.side_bins) * b.side_width;
            if (v >= lo_edge && v < b.central_lo) {
              return 1 + equal_width_index(v, lo_edge, b.side_width, b.side_bins);
            }
            if (v >= b.central_lo && v < b.central_hi) return b.side_bins + 1;
            const double hi_edge = equal_width_edge(b.central_hi, b.side_width, b.side_bins);
            if (v >= b.central_hi && v < hi_edge) {
              return b.side_bins + 2 + equal_width_index(v, b.central_hi, b.side_width, b.side_bins);
            }
            return 2 * b.side_bins + 2;
          },
          [&](const ExplicitBinning& b) -> std::size_t {
            for (std::size_t i = 0; i < b.bins.size(); ++i) {
              if (b.bins[i].contains(v)) return i;
            }
            out_of_domain(name, v);
          },
      },
      binning);
}

Bin Attribute::bin(std::size_t k) const {
  if (k >= bin_count()) throw RangeError("bin index out of range for '" + name + "'");
  return std::visit(
      Overloaded{
          [&](const IntegerBinning& b) {
            const double v = static_cast<double>(b.first + static_cast<std::int64_t>(k));
            return Bin{{Interval::point(v)}, true};
          },
          [&](const EqualWidthBinning& b) {
            return Bin{{Interval::half_open(equal_width_edge(b.lo, b.width, k),
                                            equal_width_edge(b.lo, b.width, k + 1))},
                       false};
          },
          [&](const VoltageBinning& b) {
            const double lo_edge = b.central_lo - static_cast<double>(b.side_bins) * b.side_width;
            const double hi_edge = equal_width_edge(b.central_hi, b.side_width, b.side_bins);
            if (k == 0) return Bin{{Interval::point(0.0)}, true};
            if (k <= b.side_bins) {
              return Bin{{Interval::half_open(equal_width_edge(lo_edge, b.side_width, k - 1),
                                              equal_width_edge(lo_edge, b.side_width, k))},
                         false};
            }
            if (k == b.side_bins + 1) {
              return Bin{{Interval::half_open(b.central_lo, b.central_hi)}, false};
            }
            if (k <= 2 * b.side_bins + 1) {
              const std::size_t j = k - b.side_bins - 2;
              return Bin{{Interval::half_open(equal_width_edge(b.central_hi, b.side_width, j),
                                              equal_width_edge(b.central_hi, b.side_width, j + 1))},
                         false};
            }
            return Bin{{Interval{0.0, lo_edge, false, false}, Interval{hi_edge, kInf, true, false}},
                       false};
          },
          [&](const ExplicitBinning& b) { return b.bins[k]; },
      },
      binning);
}

std::vector<Interval> Attribute::domain() const {
  return std::visit(
      Overloaded{
          [](const IntegerBinning& b) {
            return std::vector<Interval>{Interval::closed(
                static_cast<double>(b.first),
                static_cast<double>(b.first + static_cast<std::int64_t>(b.count) - 1))};
          },
          [](const EqualWidthBinning& b) {
            return std::vector<Interval>{
                Interval::half_open(b.lo, equal_width_edge(b.lo, b.width, b.count))};
          },
          [](const VoltageBinning&) {
            return std::vector<Interval>{Interval{0.0, kInf, true, false}};
          },
          [](const ExplicitBinning& b) {
            std::vector<Interval> out;
            for (const auto& bin : b.bins) out.insert(out.end(), bin.parts.begin(), bin.parts.end());
            return out;
          },
      },
      binning);
}

BinLayout::BinLayout(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
  std::size_t next = 0;
  int max_pmu = -1;
  for (auto& a : attributes_) {
    if (a.bin_count() == 0) throw ValidationError("attribute '" + a.name + "' has no bins");
    a.first_bin = next;
    next += a.bin_count();
    if (a.pmu > max_pmu) max_pmu = a.pmu;
  }
  total_bins_ = next;
  pmu_count_ = static_cast<std::size_t>(max_pmu + 1);
}

BinLayout BinLayout::pmu_layout(std::size_t pmu_count, const LayoutParams& params) {
  const double phase_bins = 360.0 / params.phase_bin_width;
  const double delta_bins = 360.0 / params.delta_bin_width;
  if (!(params.phase_bin_width > 0) || phase_bins != std::floor(phase_bins)) {
    throw ValidationError("phase bin width must divide 360");
  }
  if (!(params.delta_bin_width > 0) || delta_bins != std::floor(delta_bins)) {
    throw ValidationError("delta bin width must divide 360");
  }
  const auto& vb = params.voltage;
  if (!(vb.side_width > 0) || !(vb.central_hi > vb.central_lo) ||
      vb.central_lo - static_cast<double>(vb.side_bins) * vb.side_width <= 0.0) {
    throw ValidationError("voltage binning must keep all side bins above zero");
  }

  std::vector<Attribute> attrs;
  auto date = [&](Field f, std::int64_t first, std::size_t count) {
    attrs.push_back(Attribute{std::string(field_name(f)), f, -1, IntegerBinning{first, count}, 0});
  };
  date(Field::Year, kFirstBinYear, kLastBinYear - kFirstBinYear + 1);
  date(Field::Month, 1, 12);
  date(Field::Day, 1, 31);
  date(Field::Hour, 0, 24);
  date(Field::Minute, 0, 60);
  date(Field::Second, 0, 60);
  date(Field::Decisecond, 0, 10);
  for (std::size_t p = 0; p < pmu_count; ++p) {
    const std::string prefix = "pmu" + std::to_string(p) + ".";
    const int id = static_cast<int>(p);
    attrs.push_back(Attribute{prefix + "phi", Field::Phase, id,
                              EqualWidthBinning{-180.0, params.phase_bin_width,
                                                static_cast<std::size_t>(phase_bins)},
                              0});
    attrs.push_back(Attribute{prefix + "v", Field::Voltage, id, vb, 0});
    attrs.push_back(Attribute{prefix + "delta", Field::Delta, id,
                              EqualWidthBinning{0.0, params.delta_bin_width,
                                                static_cast<std::size_t>(delta_bins)},
                              0});
  }
  return BinLayout(std::move(attrs));
}

const Attribute* BinLayout::find(std::string_view name) const {
  for (const auto& a : attributes_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::optional<std::size_t> BinLayout::index_of(Field field, int pmu) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (attributes_[i].field == field && attributes_[i].pmu == pmu) return i;
  }
  return std::nullopt;
}

std::size_t BinLayout::bin_of(std::size_t attr, double value) const {
  const Attribute& a = attributes_.at(attr);
  return a.first_bin + a.bin_of(value);
}

namespace {

enum class BinningKind : std::uint8_t { Integer = 1, EqualWidth = 2, Voltage = 3, Explicit = 4 };

void put_interval(std::vector<std::uint8_t>& out, const Interval& iv) {
  detail::put_f64(out, iv.lo);
  detail::put_f64(out, iv.hi);
  detail::put_u8(out, iv.lo_closed ? 1 : 0);
  detail::put_u8(out, iv.hi_closed ? 1 : 0);
}

}  // namespace

void BinLayout::serialize(std::vector<std::uint8_t>& out) const {
  using namespace detail;
  put_u32(out, static_cast<std::uint32_t>(attributes_.size()));
  for (const auto& a : attributes_) {
    put_str(out, a.name);
    put_u8(out, static_cast<std::uint8_t>(a.field));
    put_i64(out, a.pmu);
    std::visit(Overloaded{
                   [&](const IntegerBinning& b) {
                     put_u8(out, static_cast<std::uint8_t>(BinningKind::Integer));
                     put_i64(out, b.first);
                     put_u64(out, b.count);
                   },
                   [&](const EqualWidthBinning& b) {
                     put_u8(out, static_cast<std::uint8_t>(BinningKind::EqualWidth));
                     put_f64(out, b.lo);
                     put_f64(out, b.width);
                     put_u64(out, b.count);
                   },
                   [&](const VoltageBinning& b) {
                     put_u8(out, static_cast<std::uint8_t>(BinningKind::Voltage));
                     put_f64(out, b.central_lo);
                     put_f64(out, b.central_hi);
                     put_u64(out, b.side_bins);
                     put_f64(out, b.side_width);
                   },
                   [&](const ExplicitBinning& b) {
                     put_u8(out, static_cast<std::uint8_t>(BinningKind::Explicit));
                     put_u32(out, static_cast<std::uint32_t>(b.bins.size()));
                     for (const auto& bin : b.bins) {
                       put_u8(out, bin.exact ? 1 : 0);
                       put_u32(out, static_cast<std::uint32_t>(bin.parts.size()));
                       for (const auto& iv : bin.parts) put_interval(out, iv);
                     }
                   },
               },
               a.binning);
  }
}

BinLayout BinLayout::deserialize(const std::uint8_t* data, std::size_t size, std::size_t& pos) {
  detail::Reader in(data, size, pos);
  const std::uint32_t n = in.u32();
  if (n > 1'000'000) throw FormatError("implausible attribute count");
  std::vector<Attribute> attrs;
  attrs.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Attribute a;
    a.name = in.str();
    const std::uint8_t field = in.u8();
    if (field > static_cast<std::uint8_t>(Field::Generic)) throw FormatError("bad field tag");
    a.field = static_cast<Field>(field);
    a.pmu = static_cast<int>(in.i64());
    switch (static_cast<BinningKind>(in.u8())) {
      case BinningKind::Integer: {
        IntegerBinning b;
        b.first = in.i64();
        b.count = in.u64();
        a.binning = b;
        break;
      }
      case BinningKind::EqualWidth: {
        EqualWidthBinning b;
        b.lo = in.f64();
        b.width = in.f64();
        b.count = in.u64();
        a.binning = b;
        break;
      }
      case BinningKind::Voltage: {
        VoltageBinning b;
        b.central_lo = in.f64();
        b.central_hi = in.f64();
        b.side_bins = in.u64();
        b.side_width = in.f64();
        a.binning = b;
        break;
      }
      case BinningKind::Explicit: {
        ExplicitBinning b;
        const std::uint32_t nb = in.u32();
        in.need(nb);
        for (std::uint32_t k = 0; k < nb; ++k) {
          Bin bin;
          bin.exact = in.u8() != 0;
          const std::uint32_t np = in.u32();
          in.need(static_cast<std::size_t>(np) * 18);
          for (std::uint32_t j = 0; j < np; ++j) {
            Interval iv;
            iv.lo = in.f64();
            iv.hi = in.f64();
            iv.lo_closed = in.u8() != 0;
            iv.hi_closed = in.u8() != 0;
            bin.parts.push_back(iv);
          }
          b.bins.push_back(std::move(bin));
        }
        a.binning = std::move(b);
        break;
      }
      default:
        throw FormatError("bad binning tag");
    }
    if (a.bin_count() == 0 || a.bin_count() > (1u << 24)) throw FormatError("bad bin count");
    attrs.push_back(std::move(a));
  }
  return BinLayout(std::move(attrs));
}

}  // namespace pmuidx
