#include "pmuidx/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace pmuidx {

namespace {

// Mean |r| of every PMU over its pairs; undefined cells count as 0.
std::vector<double> mean_abs_correlation(const CorrelationTriangle& t) {
  const std::size_t P = t.pmu_count;
  std::vector<double> sum(P, 0.0);
  std::size_t c = 0;
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = i + 1; j < P; ++j, ++c) {
      const double a = t.cells[c] ? std::fabs(*t.cells[c]) : 0.0;
      sum[i] += a;
      sum[j] += a;
    }
  }
  for (auto& s : sum) s /= static_cast<double>(P - 1);
  return sum;
}

bool column_undefined(const CorrelationTriangle& t, std::size_t p) {
  for (std::size_t q = 0; q < t.pmu_count; ++q) {
    if (q != p && t.at(p, q)) return false;
  }
  return true;
}

}  // namespace

std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::DataDrop: return "DataDrop";
    case EventKind::Misread: return "Misread";
    case EventKind::PowerEvent: return "PowerEvent";
  }
  return "Unknown";
}

EventClassifier::EventClassifier(const EngineConfig& config)
    : pmu_count_(config.pmu_count),
      windows_(config.window_lengths),
      threshold_(config.corr_threshold),
      dropout_frames_(config.dropout_frames),
      shortest_(config.shortest_window()),
      long_lo_(static_cast<std::size_t>(config.sample_hz)),
      long_hi_(static_cast<std::size_t>(config.sample_hz) * 10) {
  config.validate();
  coalesce_frames_ = 0;
  for (const std::size_t w : windows_) {
    if (w >= long_lo_ && w <= long_hi_) coalesce_frames_ = std::max(coalesce_frames_, w);
  }
  pmus_.assign(pmu_count_, PmuState{});
  recent_ts_.assign(config.longest_window(), Timestamp{});
}

void EventClassifier::reset() {
  pmus_.assign(pmu_count_, PmuState{});
  history_.clear();
  std::fill(recent_ts_.begin(), recent_ts_.end(), Timestamp{});
  frame_no_ = 0;
  power_flag_ = -1;
  power_last_frame_ = 0;
  last_data_flag_ts_ = Timestamp{INT64_MIN};
}

std::vector<EventFlag> EventClassifier::active() const {
  std::vector<EventFlag> out;
  for (const auto& f : history_) {
    if (f.active) out.push_back(f);
  }
  return out;
}

void EventClassifier::raise_or_extend(long& slot, EventKind kind, std::size_t pmu,
                                      std::size_t window, Timestamp start, Timestamp now) {
  if (slot >= 0) {
    history_[static_cast<std::size_t>(slot)].last_ts = now;
  } else {
    history_.push_back(EventFlag{kind, pmu, window, start, now, now, true});
    slot = static_cast<long>(history_.size() - 1);
  }
  if (kind != EventKind::PowerEvent) last_data_flag_ts_ = std::max(last_data_flag_ts_, now);
}

void EventClassifier::close(long& slot) {
  if (slot >= 0) history_[static_cast<std::size_t>(slot)].active = false;
  slot = -1;
}

std::vector<EventFlag> EventClassifier::observe(const FrameRecord& frame,
                                                std::span<const CorrelationTriangle> triangles) {
  const Timestamp now = frame.ts;
  recent_ts_[frame_no_ % recent_ts_.size()] = now;
  ++frame_no_;

  const CorrelationTriangle* shortest = nullptr;
  for (const auto& t : triangles) {
    if (t.window_length == shortest_) shortest = &t;
  }

  for (std::size_t p = 0; p < pmu_count_ && p < frame.samples.size(); ++p) {
    PmuState& st = pmus_[p];
    const PhasorSample& s = frame.samples[p];

    if (s.v == 0.0) {
      if (st.zero_run++ == 0) st.zero_start = now;
      // A drop is suspect before it is long enough to flag.
      last_data_flag_ts_ = now;
    } else {
      st.zero_run = 0;
    }
    if (st.has_last && s == st.last) {
      if (++st.repeat_run == 2) st.repeat_start = now;
    } else {
      st.repeat_run = 1;
    }
    st.last = s;
    st.has_last = true;

    bool degenerate = false;
    if (shortest != nullptr && column_undefined(*shortest, p)) {
      for (std::size_t q = 0; q < pmu_count_ && !degenerate; ++q) {
        degenerate = q != p && !column_undefined(*shortest, q);
      }
    }
    Timestamp window_start = now;
    if (shortest != nullptr) {
      const std::size_t back = shortest->samples - 1;
      window_start = recent_ts_[(frame_no_ - 1 - back) % recent_ts_.size()];
    }

    if (st.zero_run >= dropout_frames_ || (degenerate && s.v == 0.0)) {
      raise_or_extend(st.drop_flag, EventKind::DataDrop, p, shortest_,
                      st.zero_run > 0 ? st.zero_start : window_start, now);
    } else {
      close(st.drop_flag);
    }

    const bool frozen = s.v != 0.0 && st.repeat_run >= shortest_;
    if (frozen || (degenerate && s.v != 0.0)) {
      raise_or_extend(st.misread_flag, EventKind::Misread, p, shortest_,
                      frozen ? st.repeat_start : window_start, now);
    } else {
      close(st.misread_flag);
    }
  }

  detect_power_event(frame, triangles);
  return active();
}

void EventClassifier::detect_power_event(const FrameRecord& frame,
                                         std::span<const CorrelationTriangle> triangles) {
  const Timestamp now = frame.ts;

  std::size_t short_expected = 0;
  for (const std::size_t w : windows_) short_expected += w < long_lo_ ? 1 : 0;

  std::vector<double> short_min(pmu_count_, 2.0);
  std::size_t short_seen = 0;
  for (const auto& t : triangles) {
    if (t.window_length >= long_lo_) continue;
    ++short_seen;
    const auto stat = mean_abs_correlation(t);
    for (std::size_t p = 0; p < pmu_count_; ++p) short_min[p] = std::min(short_min[p], stat[p]);
  }

  const CorrelationTriangle* trigger = nullptr;
  if (short_seen == short_expected && short_expected > 0) {
    // Longest qualifying window first.
    for (const auto& t : triangles) {
      if (t.window_length < long_lo_ || t.window_length > long_hi_) continue;
      if (t.samples < long_lo_) continue;
      const Timestamp span_start = recent_ts_[(frame_no_ - t.samples) % recent_ts_.size()];
      if (last_data_flag_ts_ >= span_start) continue;
      const auto stat = mean_abs_correlation(t);
      bool any = false;
      for (std::size_t p = 0; p < pmu_count_ && !any; ++p) {
        any = stat[p] < threshold_ && short_min[p] >= threshold_;
      }
      if (any && (trigger == nullptr || t.window_length > trigger->window_length)) trigger = &t;
    }
  }

  if (trigger == nullptr) {
    if (power_flag_ >= 0 && frame_no_ - power_last_frame_ > coalesce_frames_) close(power_flag_);
    return;
  }

  // Localize on the PMU with the most decorrelated pairs; ties to lowest id.
  std::vector<std::size_t> low(pmu_count_, 0);
  std::size_t c = 0;
  for (std::size_t i = 0; i < pmu_count_; ++i) {
    for (std::size_t j = i + 1; j < pmu_count_; ++j, ++c) {
      const auto& r = trigger->cells[c];
      if (!r || std::fabs(*r) < threshold_) {
        ++low[i];
        ++low[j];
      }
    }
  }
  const std::size_t pmu =
      static_cast<std::size_t>(std::max_element(low.begin(), low.end()) - low.begin());

  if (power_flag_ >= 0 && frame_no_ - power_last_frame_ <= coalesce_frames_) {
    EventFlag& f = history_[static_cast<std::size_t>(power_flag_)];
    f.last_ts = now;
    f.window_length = std::max(f.window_length, trigger->window_length);
  } else {
    close(power_flag_);
    history_.push_back(
        EventFlag{EventKind::PowerEvent, pmu, trigger->window_length, now, now, now, true});
    power_flag_ = static_cast<long>(history_.size() - 1);
  }
  power_last_frame_ = frame_no_;
}

}  // namespace pmuidx
