#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pmuidx {

// UTC instant with millisecond precision, counted from the Unix epoch.
struct Timestamp {
  std::int64_t ms = 0;

  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;
};

inline constexpr std::int64_t kNominalHz = 60;

// Timestamp of the k-th frame of a 60 Hz stream that starts at `start`.
// Rounded to the nearest millisecond so a minute holds exactly 3600 frames.
constexpr Timestamp frame_time(Timestamp start, std::int64_t k,
                               std::int64_t hz = kNominalHz) {
  return Timestamp{start.ms + (k * 1000 + hz / 2) / hz};
}

// Positive-sequence voltage phasor of one PMU at one instant. The PMU id is
// the sample's position within its FrameRecord.
struct PhasorSample {
  double v = 0.0;    // voltage magnitude, physical units (kV)
  double phi = 0.0;  // phase angle, degrees in [-180, 180)

  // Validates v >= 0 and folds phi into [-180, 180).
  static PhasorSample make(double v, double phi);

  friend bool operator==(const PhasorSample&, const PhasorSample&) = default;
};

struct FrameRecord {
  Timestamp ts;
  std::vector<PhasorSample> samples;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

// Calendar decomposition used by the date bins. decisecond = floor(ms / 100).
struct TimeParts {
  int year = 0;
  int month = 0;
  int day = 0;
  int hour = 0;
  int minute = 0;
  int second = 0;
  int decisecond = 0;

  friend bool operator==(const TimeParts&, const TimeParts&) = default;
};

inline constexpr int kFirstBinYear = 2010;
inline constexpr int kLastBinYear = 2020;

// Throws RangeError outside 2010-2020.
TimeParts decompose_time(Timestamp ts);
// Same decomposition without the year-span check.
TimeParts civil_time(Timestamp ts);
// Inverse of decompose_time for timestamps truncated to 100 ms.
Timestamp compose_time(const TimeParts& parts);

// "2013-06-24T21:05:00.000Z"
std::string format_timestamp(Timestamp ts);
// Accepts YYYY-MM-DDTHH:MM[:SS[.fff]][Z]. Throws ParseError.
Timestamp parse_timestamp(std::string_view text);

// Raw |phi_now - phi_prev|, in [0, 360). Not wrap-aware.
double phase_delta(double phi_now, double phi_prev);

// Reduces any finite angle into [-180, 180). Throws ValidationError on NaN/inf.
double normalize_phase(double phi);

}  // namespace pmuidx
