#include "pmuidx/domain.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace {

using std::chrono::days;
using std::chrono::sys_days;

constexpr std::int64_t kMsPerDay = 86'400'000;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

PhasorSample PhasorSample::make(double v, double phi) {
  if (!std::isfinite(v) || v < 0.0) {
    throw ValidationError("voltage magnitude must be finite and non-negative, got " +
                          std::to_string(v));
  }
  return PhasorSample{v, normalize_phase(phi)};
}

TimeParts civil_time(Timestamp ts) {
  const std::int64_t day = floor_div(ts.ms, kMsPerDay);
  const std::int64_t in_day = ts.ms - day * kMsPerDay;
  const std::chrono::year_month_day ymd{sys_days{days{day}}};
  TimeParts p;
  p.year = static_cast<int>(ymd.year());
  p.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
  p.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
  p.hour = static_cast<int>(in_day / 3'600'000);
  p.minute = static_cast<int>((in_day / 60'000) % 60);
  p.second = static_cast<int>((in_day / 1000) % 60);
  p.decisecond = static_cast<int>((in_day % 1000) / 100);
  return p;
}

TimeParts decompose_time(Timestamp ts) {
  TimeParts p = civil_time(ts);
  if (p.year < kFirstBinYear || p.year > kLastBinYear) {
    throw RangeError("timestamp year " + std::to_string(p.year) +
                     " is outside the date bin span 2010-2020");
  }
  return p;
}

Timestamp compose_time(const TimeParts& p) {
  const std::chrono::year_month_day ymd{std::chrono::year{p.year},
                                        std::chrono::month{static_cast<unsigned>(p.month)},
                                        std::chrono::day{static_cast<unsigned>(p.day)}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date");
  if (p.hour < 0 || p.hour > 23 || p.minute < 0 || p.minute > 59 || p.second < 0 ||
      p.second > 59 || p.decisecond < 0 || p.decisecond > 9) {
    throw ValidationError("invalid time of day");
  }
  const std::int64_t day = sys_days{ymd}.time_since_epoch().count();
  return Timestamp{day * kMsPerDay + p.hour * 3'600'000LL + p.minute * 60'000LL +
                   p.second * 1000LL + p.decisecond * 100LL};
}

std::string format_timestamp(Timestamp ts) {
  const TimeParts p = civil_time(ts);
  const std::int64_t ms = ts.ms - floor_div(ts.ms, 1000) * 1000;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", p.year, p.month,
                p.day, p.hour, p.minute, p.second, static_cast<int>(ms));
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  std::size_t pos = 0;
  auto fail = [&](const char* what) -> Timestamp {
    throw ParseError(std::string("bad timestamp '") + std::string(text) + "': " + what, pos);
  };
  auto digits = [&](std::size_t n, int& out) -> bool {
    if (pos + n > text.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const char c = text[pos + i];
      if (c < '0' || c > '9') return false;
      v = v * 10 + (c - '0');
    }
    out = v;
    pos += n;
    return true;
  };
  auto expect = [&](char c) -> bool {
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  };

  TimeParts p;
  if (!digits(4, p.year) || !expect('-') || !digits(2, p.month) || !expect('-') ||
      !digits(2, p.day)) {
    return fail("expected YYYY-MM-DD");
  }
  if (!(expect('T') || expect(' '))) return fail("expected 'T'");
  if (!digits(2, p.hour) || !expect(':') || !digits(2, p.minute)) return fail("expected HH:MM");
  int ms = 0;
  if (expect(':')) {
    if (!digits(2, p.second)) return fail("expected seconds");
    if (expect('.')) {
      const std::size_t start = pos;
      int scale = 100;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        if (pos - start >= 3) return fail("sub-millisecond precision is not supported");
        ms += (text[pos] - '0') * scale;
        scale /= 10;
        ++pos;
      }
      if (pos == start) return fail("expected fraction digits");
    }
  }
  expect('Z');
  if (pos != text.size()) return fail("trailing characters");

  Timestamp base;
  try {
    base = compose_time(p);
  } catch (const ValidationError& e) {
    return fail(e.what());
  }
  return Timestamp{base.ms + ms};
}

double phase_delta(double phi_now, double phi_prev) { return std::fabs(phi_now - phi_prev); }

double normalize_phase(double phi) {
  if (!std::isfinite(phi)) throw ValidationError("phase angle must be finite");
  if (phi >= -180.0 && phi < 180.0) return phi;
  double r = std::fmod(phi + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  r -= 180.0;
  // fmod can land exactly on +180 through rounding of the shift.
  if (r >= 180.0) r -= 360.0;
  return r;
}

}  // namespace pmuidx
