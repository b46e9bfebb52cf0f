#include "pmuidx/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace {

// Double-double helpers for the centered cross sums.
struct DD {
  double hi;
  double lo;
};

DD two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

DD dd_add(DD a, DD b) {
  const DD s = two_sum(a.hi, b.hi);
  const double lo = s.lo + a.lo + b.lo;
  return two_sum(s.hi, lo);
}

DD dd_mul(DD a, DD b) {
  const double p = a.hi * b.hi;
  const double e = std::fma(a.hi, b.hi, -p) + (a.hi * b.lo + a.lo * b.hi);
  return two_sum(p, e);
}

// n * S_ab - S_a * S_b, i.e. n^2 times the (co)variance.
double centered(double n, DD sab, DD sa, DD sb) {
  const DD prod = dd_mul(sa, sb);
  const DD scaled = dd_mul({n, 0.0}, sab);
  const DD d = dd_add(scaled, {-prod.hi, -prod.lo});
  return d.hi + d.lo;
}

}  // namespace

std::optional<double> PairWindowState::correlation(double eps) const {
  if (n < 2) return std::nullopt;
  const double nn = static_cast<double>(n);
  const DD sx{sum_x, err[0]};
  const DD sy{sum_y, err[1]};
  const double cxx = centered(nn, {sum_x2, err[3]}, sx, sx);
  const double cyy = centered(nn, {sum_y2, err[4]}, sy, sy);
  if (cxx / nn <= eps || cyy / nn <= eps) return std::nullopt;
  const double cxy = centered(nn, {sum_xy, err[2]}, sx, sy);
  return std::clamp(cxy / std::sqrt(cxx * cyy), -1.0, 1.0);
}

OrderedTriangle snapshot_ordered(const CorrelationTriangle& t, std::span<const std::size_t> order) {
  const std::size_t P = t.pmu_count;
  if (order.size() != P) throw ValidationError("order must list every PMU exactly once");
  std::vector<bool> seen(P, false);
  for (const std::size_t id : order) {
    if (id >= P || seen[id]) throw ValidationError("order is not a permutation of PMU ids");
    seen[id] = true;
  }
  OrderedTriangle out;
  out.window_length = t.window_length;
  out.ts = t.ts;
  out.order.assign(order.begin(), order.end());
  out.cells.resize(t.cells.size());
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t b = a + 1; b < P; ++b) {
      out.cells[CorrelationTriangle::cell_index(P, a, b)] = t.at(order[a], order[b]);
    }
  }
  return out;
}

CorrelationEngine::CorrelationEngine(std::size_t pmu_count, std::vector<std::size_t> window_lengths,
                                     SignalSelector signal, std::uint64_t recompute_every)
    : pmu_count_(pmu_count),
      windows_(std::move(window_lengths)),
      signal_(signal),
      recompute_every_(recompute_every) {
  if (pmu_count_ < 2) throw ValidationError("correlation needs at least two PMUs");
  if (windows_.empty()) throw ValidationError("at least one window length is required");
  for (const std::size_t w : windows_) {
    if (w < 2) throw ValidationError("window lengths must be >= 2");
  }
  if (recompute_every_ == 0) throw ValidationError("recompute interval must be positive");
  capacity_ = *std::max_element(windows_.begin(), windows_.end());
  ring_.assign(capacity_ * pmu_count_, 0.0);
  shift_.assign(pmu_count_, 0.0);
  same_run_.assign(pmu_count_, 0);
  states_.assign(windows_.size() * pair_count(), PairWindowState{});
  incoming_.resize(pmu_count_);
  outgoing_.resize(pmu_count_);
}

CorrelationEngine::CorrelationEngine(const EngineConfig& config)
    : CorrelationEngine(config.pmu_count, config.window_lengths, config.signal) {}

void CorrelationEngine::reset() {
  std::fill(ring_.begin(), ring_.end(), 0.0);
  std::fill(shift_.begin(), shift_.end(), 0.0);
  std::fill(same_run_.begin(), same_run_.end(), 0);
  std::fill(states_.begin(), states_.end(), PairWindowState{});
  head_ = 0;
  stored_ = 0;
  pushes_ = 0;
  last_ts_.reset();
}

std::size_t CorrelationEngine::window_fill(std::size_t w) const {
  return std::min(stored_, windows_[w]);
}

// Row written `frames_back` pushes ago (1 = newest).
const double* CorrelationEngine::ring_row(std::size_t frames_back) const {
  const std::size_t idx = (head_ + capacity_ - frames_back) % capacity_;
  return ring_.data() + idx * pmu_count_;
}

const PairWindowState& CorrelationEngine::state(std::size_t w, std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  if (w >= windows_.size() || j >= pmu_count_ || i == j) throw RangeError("no such pair/window");
  return states_[w * pair_count() + CorrelationTriangle::cell_index(pmu_count_, i, j)];
}

std::vector<double> CorrelationEngine::window_values(std::size_t w, std::size_t pmu) const {
  const std::size_t n = window_fill(w);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t back = n; back >= 1; --back) out.push_back(ring_row(back)[pmu]);
  return out;
}

void CorrelationEngine::recompute() {
  for (std::size_t p = 0; p < pmu_count_; ++p) shift_[p] = ring_row(1)[p];
  const std::size_t pairs = pair_count();
  for (std::size_t w = 0; w < windows_.size(); ++w) {
    PairWindowState* st = states_.data() + w * pairs;
    std::fill(st, st + pairs, PairWindowState{});
    const std::size_t n = window_fill(w);
    for (std::size_t back = n; back >= 1; --back) {
      const double* row = ring_row(back);
      std::size_t c = 0;
      for (std::size_t i = 0; i < pmu_count_; ++i) {
        const double x = row[i] - shift_[i];
        for (std::size_t j = i + 1; j < pmu_count_; ++j, ++c) st[c].add(x, row[j] - shift_[j]);
      }
    }
  }
}

std::vector<CorrelationTriangle> CorrelationEngine::push(const FrameRecord& frame) {
  if (frame.samples.size() != pmu_count_) {
    throw ValidationError("frame carries " + std::to_string(frame.samples.size()) +
                          " samples, engine expects " + std::to_string(pmu_count_));
  }
  if (last_ts_ && frame.ts <= *last_ts_) {
    throw OrderingError("frame " + format_timestamp(frame.ts) + " does not follow " +
                        format_timestamp(*last_ts_));
  }

  for (std::size_t p = 0; p < pmu_count_; ++p) {
    const double x = signal_of(frame.samples[p]);
    if (pushes_ == 0) shift_[p] = x;
    same_run_[p] = (stored_ > 0 && ring_row(1)[p] == x) ? same_run_[p] + 1 : 1;
    incoming_[p] = x - shift_[p];
  }

  const std::size_t pairs = pair_count();
  for (std::size_t w = 0; w < windows_.size(); ++w) {
    PairWindowState* st = states_.data() + w * pairs;
    const bool full = stored_ >= windows_[w];
    if (full) {
      const double* old = ring_row(windows_[w]);
      for (std::size_t p = 0; p < pmu_count_; ++p) outgoing_[p] = old[p] - shift_[p];
    }
    std::size_t c = 0;
    for (std::size_t i = 0; i < pmu_count_; ++i) {
      const double xi = incoming_[i];
      const double oi = outgoing_[i];
      for (std::size_t j = i + 1; j < pmu_count_; ++j, ++c) {
        if (full) st[c].remove(oi, outgoing_[j]);
        st[c].add(xi, incoming_[j]);
      }
    }
  }

  double* row = ring_.data() + head_ * pmu_count_;
  for (std::size_t p = 0; p < pmu_count_; ++p) row[p] = signal_of(frame.samples[p]);
  head_ = (head_ + 1) % capacity_;
  stored_ = std::min(stored_ + 1, capacity_);
  ++pushes_;
  last_ts_ = frame.ts;
  if (pushes_ % recompute_every_ == 0) recompute();

  std::vector<CorrelationTriangle> out;
  out.reserve(windows_.size());
  for (std::size_t w = 0; w < windows_.size(); ++w) {
    const std::size_t n = window_fill(w);
    if (n < 2) continue;
    CorrelationTriangle t;
    t.window_length = windows_[w];
    t.samples = n;
    t.ts = frame.ts;
    t.pmu_count = pmu_count_;
    t.cells.resize(pairs);
    const PairWindowState* st = states_.data() + w * pairs;
    std::size_t c = 0;
    for (std::size_t i = 0; i < pmu_count_; ++i) {
      for (std::size_t j = i + 1; j < pmu_count_; ++j, ++c) {
        // A bit-identical run covering the window has exactly zero variance,
        // whatever rounding is left in the running sums.
        if (same_run_[i] >= n || same_run_[j] >= n) continue;
        t.cells[c] = st[c].correlation();
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace pmuidx
