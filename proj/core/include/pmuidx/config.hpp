#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pmuidx/bin_layout.hpp"

namespace pmuidx {

enum class SignalSelector : std::uint8_t { VoltageMagnitude, PhaseAngle };

// Parameters of the synthetic stream generator. Distances come from
// EngineConfig::electrical_distance.
struct GeneratorParams {
  double nominal_v = 540.0;
  double drift_step = 0.05;       // std-dev of the shared voltage walk per frame
  double drift_reversion = 0.999; // AR(1) coefficient of the shared walk
  double drift_limit = 4.0;       // shared walk is clamped to +-limit
  double pmu_offset = 0.3;        // per-PMU static offset drawn from +-offset
  double v_noise = 0.01;          // independent per-PMU noise std-dev
  double phase_rate = 0.01;       // common angle rotation, degrees per frame
  double phi_noise = 0.002;       // independent angle noise std-dev
  double lightning_peak_v = 20.0; // dip at the struck bus
  double lightning_kick_phi = 2.0;
  double lightning_tau_frames = 60.0;
  double lag_distance_per_frame = 0.01;  // delta in lag = ceil(distance / delta)
};

struct EngineConfig {
  std::size_t pmu_count = 20;
  int sample_hz = 60;
  std::vector<std::size_t> window_lengths{1200, 600, 60, 54, 48, 30, 18, 12, 6};
  double corr_threshold = 0.5;
  // Electrical distance of each PMU to the reference PMU 0, indexed by id.
  std::vector<double> electrical_distance;
  LayoutParams layout{};
  std::size_t segment_rows = 72'000;
  SignalSelector signal = SignalSelector::VoltageMagnitude;
  std::size_t dropout_frames = 3;  // consecutive zeros before a DataDrop flag
  GeneratorParams generator{};

  // Distances default to 0.2 * id when left empty.
  static EngineConfig defaults(std::size_t pmu_count = 20);

  // Throws ValidationError describing the first violated invariant.
  void validate() const;

  double distance(std::size_t pmu) const;
  // PMU ids by ascending distance to PMU 0, ties by id.
  std::vector<std::size_t> electrical_order() const;
  BinLayout bin_layout() const { return BinLayout::pmu_layout(pmu_count, layout); }
  std::size_t shortest_window() const { return window_lengths.back(); }
  std::size_t longest_window() const { return window_lengths.front(); }
};

// key = value lines, '#' comments. Unknown keys are rejected.
EngineConfig parse_config(const std::string& text);
EngineConfig load_config(const std::filesystem::path& path);
std::string render_config(const EngineConfig& config);

}  // namespace pmuidx
