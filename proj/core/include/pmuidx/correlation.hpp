#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pmuidx/config.hpp"
#include "pmuidx/domain.hpp"

namespace pmuidx {

inline constexpr double kVarianceEpsilon = 1e-12;

// Running sums of one PMU pair over one sliding window. Each sum is an
// unevaluated pair sum_* + err[k] that holds the exact total of the exact
// products (two-sum plus fma), so values leaving the window cancel exactly
// and nearly-constant windows keep their small variance.
struct PairWindowState {
  double sum_x = 0.0;
  double sum_y = 0.0;
  double sum_xy = 0.0;
  double sum_x2 = 0.0;
  double sum_y2 = 0.0;
  std::size_t n = 0;
  double err[5] = {};

  void add(double x, double y) { update(x, y, 1.0); }
  void remove(double x, double y) { update(x, y, -1.0); }

  // r = (Sxy - SxSy/n) / sqrt((Sxx - Sx^2/n)(Syy - Sy^2/n)), clamped to
  // [-1, 1]. nullopt when n < 2 or either variance term is <= eps.
  std::optional<double> correlation(double eps = kVarianceEpsilon) const;

 private:
  static void accumulate(double& sum, double& comp, double v, double v_err) {
    const double t = sum + v;
    const double bv = t - sum;
    comp += ((sum - (t - bv)) + (v - bv)) + v_err;
    sum = t;
  }
  void update(double x, double y, double sign) {
    const double xy = x * y;
    const double xx = x * x;
    const double yy = y * y;
    accumulate(sum_x, err[0], sign * x, 0.0);
    accumulate(sum_y, err[1], sign * y, 0.0);
    accumulate(sum_xy, err[2], sign * xy, sign * std::fma(x, y, -xy));
    accumulate(sum_x2, err[3], sign * xx, sign * std::fma(x, x, -xx));
    accumulate(sum_y2, err[4], sign * yy, sign * std::fma(y, y, -yy));
    n = sign > 0 ? n + 1 : n - 1;
  }
};

// Upper triangle of the correlation matrix for one window length. Cell (i, j)
// exists for i < j; nullopt marks an undefined (zero-variance) cell.
struct CorrelationTriangle {
  std::size_t window_length = 0;
  std::size_t samples = 0;  // n actually in the window (< window_length while warming up)
  Timestamp ts;
  std::size_t pmu_count = 0;
  std::vector<std::optional<double>> cells;

  static std::size_t cell_index(std::size_t pmu_count, std::size_t i, std::size_t j) {
    return i * pmu_count - i * (i + 1) / 2 + (j - i - 1);
  }
  // Symmetric accessor; i != j.
  std::optional<double> at(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return cells[cell_index(pmu_count, i, j)];
  }
};

// Triangle re-indexed so that position k holds PMU order[k].
struct OrderedTriangle {
  std::size_t window_length = 0;
  Timestamp ts;
  std::vector<std::size_t> order;
  std::vector<std::optional<double>> cells;  // upper triangle over positions

  std::optional<double> at(std::size_t row, std::size_t col) const {
    if (row > col) std::swap(row, col);
    return cells[CorrelationTriangle::cell_index(order.size(), row, col)];
  }
};

// Throws ValidationError unless `order` is a permutation of 0..P-1.
OrderedTriangle snapshot_ordered(const CorrelationTriangle& triangle,
                                 std::span<const std::size_t> order);

// Incremental Pearson correlation for every PMU pair over several window
// lengths at once. One ring buffer holds the newest max(window) frames; each
// window keeps its own tail position into it, so a push adds the new sample
// to every window and subtracts the sample leaving each full window.
//
// Values are stored relative to a per-PMU reference level (Pearson r is
// shift-invariant) to keep the sums well conditioned; every
// `recompute_every` pushes the reference moves to the newest value and all
// sums are rebuilt from the ring to cancel accumulated rounding.
class CorrelationEngine {
 public:
  static constexpr std::uint64_t kDefaultRecomputeInterval = 65'536;

  CorrelationEngine(std::size_t pmu_count, std::vector<std::size_t> window_lengths,
                    SignalSelector signal = SignalSelector::VoltageMagnitude,
                    std::uint64_t recompute_every = kDefaultRecomputeInterval);
  explicit CorrelationEngine(const EngineConfig& config);

  // One triangle per window holding at least two samples. Throws
  // OrderingError when frame.ts does not exceed the previous frame's.
  std::vector<CorrelationTriangle> push(const FrameRecord& frame);
  void reset();

  std::size_t pmu_count() const { return pmu_count_; }
  const std::vector<std::size_t>& window_lengths() const { return windows_; }
  std::uint64_t frames_seen() const { return pushes_; }
  std::optional<Timestamp> last_ts() const { return last_ts_; }

  const PairWindowState& state(std::size_t window_idx, std::size_t i, std::size_t j) const;
  // Raw retained values of `pmu` in window `window_idx`, oldest first.
  std::vector<double> window_values(std::size_t window_idx, std::size_t pmu) const;
  double reference_level(std::size_t pmu) const { return shift_[pmu]; }

 private:
  double signal_of(const PhasorSample& s) const {
    return signal_ == SignalSelector::VoltageMagnitude ? s.v : s.phi;
  }
  std::size_t pair_count() const { return pmu_count_ * (pmu_count_ - 1) / 2; }
  std::size_t window_fill(std::size_t w) const;
  const double* ring_row(std::size_t frames_back) const;
  void recompute();

  std::size_t pmu_count_;
  std::vector<std::size_t> windows_;
  SignalSelector signal_;
  std::uint64_t recompute_every_;

  std::size_t capacity_;
  std::vector<double> ring_;  // capacity_ rows of pmu_count_ raw values
  std::size_t head_ = 0;      // next row to write
  std::size_t stored_ = 0;
  std::uint64_t pushes_ = 0;
  std::optional<Timestamp> last_ts_;

  std::vector<double> shift_;
  std::vector<std::size_t> same_run_;  // identical consecutive raw values
  std::vector<PairWindowState> states_;  // window-major, then pair
  std::vector<double> incoming_;
  std::vector<double> outgoing_;
};

}  // namespace pmuidx
