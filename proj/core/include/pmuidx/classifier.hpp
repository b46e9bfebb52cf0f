#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pmuidx/config.hpp"
#include "pmuidx/correlation.hpp"
#include "pmuidx/domain.hpp"

namespace pmuidx {

enum class EventKind : std::uint8_t { DataDrop, Misread, PowerEvent };

std::string_view event_kind_name(EventKind k);

struct EventFlag {
  EventKind kind = EventKind::DataDrop;
  std::size_t pmu = 0;
  std::size_t window_length = 0;  // window that triggered (longest, for PowerEvent)
  Timestamp start_ts;             // onset of the condition
  Timestamp last_ts;              // newest frame the condition held
  Timestamp detected_ts;          // frame at which the flag was raised
  bool active = true;

  friend bool operator==(const EventFlag&, const EventFlag&) = default;
};

// Turns frames and their correlation triangles into coalesced event flags.
//
//   DataDrop   v == 0 on `dropout_frames` consecutive frames
//   Misread    (v, phi) repeated bit-identically across the shortest window
//              with v != 0, or the PMU's whole column undefined in it
//   PowerEvent no data flag or zero voltage overlaps the window, and some PMU's mean |r|
//              over its pairs is below the threshold in a 1-10 s window while
//              staying at or above it in every sub-second window
//
// A continuing condition extends last_ts. PowerEvent flags also absorb
// re-triggers that arrive within one long window of the previous trigger.
class EventClassifier {
 public:
  explicit EventClassifier(const EngineConfig& config);

  // Returns the flags active after this frame.
  std::vector<EventFlag> observe(const FrameRecord& frame,
                                 std::span<const CorrelationTriangle> triangles);

  // Every flag raised since construction/reset, oldest first.
  const std::vector<EventFlag>& history() const { return history_; }
  std::vector<EventFlag> active() const;
  void reset();

 private:
  struct PmuState {
    std::size_t zero_run = 0;
    Timestamp zero_start;
    std::size_t repeat_run = 0;  // length of the run of identical samples
    Timestamp repeat_start;      // first repeated frame of the run
    PhasorSample last{};
    bool has_last = false;
    long drop_flag = -1;  // index into history_
    long misread_flag = -1;
  };

  void raise_or_extend(long& slot, EventKind kind, std::size_t pmu, std::size_t window,
                       Timestamp start, Timestamp now);
  void close(long& slot);
  void detect_power_event(const FrameRecord& frame, std::span<const CorrelationTriangle> triangles);

  std::size_t pmu_count_;
  std::vector<std::size_t> windows_;
  double threshold_;
  std::size_t dropout_frames_;
  std::size_t shortest_;
  std::size_t long_lo_;   // 1 s of samples
  std::size_t long_hi_;   // 10 s of samples
  std::size_t coalesce_frames_;

  std::vector<PmuState> pmus_;
  std::vector<EventFlag> history_;
  std::vector<Timestamp> recent_ts_;  // ring of the newest frame timestamps
  std::uint64_t frame_no_ = 0;
  long power_flag_ = -1;
  std::uint64_t power_last_frame_ = 0;
  Timestamp last_data_flag_ts_{INT64_MIN};  // newest flagged or zero-voltage frame
};

}  // namespace pmuidx
