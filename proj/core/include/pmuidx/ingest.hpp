#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmuidx/config.hpp"
#include "pmuidx/domain.hpp"

namespace pmuidx {

// ---------------------------------------------------------------------------
// PDC CSV: header "ts,v0,phi0,...,v{P-1},phi{P-1}", one row per frame,
// ISO-8601 UTC timestamps with milliseconds, LF line endings.

class CsvFrameReader {
 public:
  // Reads and checks the header line. Throws ParseError.
  explicit CsvFrameReader(std::istream& in);

  // Next frame, or nullopt at end of input. Blank lines are skipped.
  // Throws ParseError naming line and column, OrderingError when timestamps
  // do not strictly increase.
  std::optional<FrameRecord> next();

  std::size_t pmu_count() const { return pmu_count_; }
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t pmu_count_ = 0;
  std::size_t line_ = 0;
  std::optional<Timestamp> last_ts_;
  std::string buf_;
};

std::vector<FrameRecord> parse_stream(std::istream& in);

void write_csv_header(std::ostream& out, std::size_t pmu_count);
void write_csv_row(std::ostream& out, const FrameRecord& frame);
std::string render_csv(std::span<const FrameRecord> frames);

// ---------------------------------------------------------------------------
// Synthetic streams with labeled injected events.

enum class InjectionKind : std::uint8_t { DataDrop, Misread, Lightning };

std::string_view injection_kind_name(InjectionKind k);
InjectionKind parse_injection_kind(std::string_view s);

struct InjectionSpec {
  InjectionKind kind = InjectionKind::DataDrop;
  std::size_t pmu = 0;
  Timestamp start;
  std::int64_t duration_ms = 0;
  // Lightning only; zero selects the generator defaults.
  double peak_v = 0.0;
  double kick_phi = 0.0;
};

// "kind:pmuN:+OFFSET:DURATION", e.g. "lightning:pmu0:+60s:10s". Offsets and
// durations accept ms, s and m suffixes and are relative to `stream_start`.
InjectionSpec parse_injection(std::string_view text, Timestamp stream_start);

// Frames [start_ts, end_ts] (inclusive frame timestamps) of `pmu` were
// overridden by the injection.
struct GroundTruthLabel {
  InjectionKind kind = InjectionKind::DataDrop;
  std::size_t pmu = 0;
  Timestamp start_ts;
  Timestamp end_ts;

  friend bool operator==(const GroundTruthLabel&, const GroundTruthLabel&) = default;
};

// Deterministic 60 Hz stream. Baseline voltage is a shared mean-reverting
// walk around the nominal value plus a static per-PMU offset and small
// independent noise; the angle rotates slowly and in common. Injections:
//   DataDrop  v = 0, phi = 0
//   Misread   repeats the last emitted (v, phi)
//   Lightning exponential voltage dip and angle kick at the struck PMU, seen
//             at every other PMU attenuated by 1/(1+d) and delayed by
//             ceil(d / lag_distance_per_frame) frames, d = |dist_p - dist_s|
class StreamGenerator {
 public:
  // Throws ValidationError on overlapping injections for one PMU, on
  // injections that cover no frame and on a Misread starting at frame 0.
  StreamGenerator(const EngineConfig& config, Timestamp start, std::uint64_t n_frames,
                  std::vector<InjectionSpec> injections, std::uint64_t seed);

  std::optional<FrameRecord> next();
  std::uint64_t produced() const { return k_; }
  std::uint64_t total() const { return n_frames_; }
  const std::vector<GroundTruthLabel>& labels() const { return labels_; }

 private:
  struct Active {
    InjectionSpec spec;
    std::uint64_t first = 0;  // frame indices, inclusive
    std::uint64_t last = 0;
  };

  EngineConfig config_;
  Timestamp start_;
  std::uint64_t n_frames_;
  std::uint64_t k_ = 0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double drift_ = 0.0;
  double phase0_ = 0.0;
  std::vector<double> v_offset_;
  std::vector<double> phi_offset_;
  std::vector<PhasorSample> last_emitted_;
  std::vector<Active> injections_;
  std::vector<GroundTruthLabel> labels_;
};

struct GeneratedStream {
  std::vector<FrameRecord> frames;
  std::vector<GroundTruthLabel> labels;
};

GeneratedStream generate(const EngineConfig& config, Timestamp start, std::uint64_t n_frames,
                         std::vector<InjectionSpec> injections, std::uint64_t seed);

void write_labels_csv(std::ostream& out, std::span<const GroundTruthLabel> labels);

// ---------------------------------------------------------------------------
// Replay pacing: frame k is released (k+1) * (1/hz) / speed after start.
// An infinite speed never sleeps.

class Pacer {
 public:
  explicit Pacer(double speed, int hz = 60);

  // Sleeps until the next frame is due.
  void wait_next();
  // Restarts the schedule from now (used after a pause).
  void rebase();
  double speed() const { return speed_; }

 private:
  double speed_;
  std::chrono::nanoseconds period_{0};
  std::chrono::steady_clock::time_point origin_;
  std::uint64_t released_ = 0;
};

void pace(std::span<const FrameRecord> frames, double speed,
          const std::function<void(const FrameRecord&)>& sink);

}  // namespace pmuidx
