#include "pmuidx/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end) {
    throw ValidationError("config key '" + key + "': expected a non-negative integer, got '" +
                          v + "'");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

EngineConfig EngineConfig::defaults(std::size_t pmu_count) {
  EngineConfig c;
  c.pmu_count = pmu_count;
  c.electrical_distance.resize(pmu_count);
  for (std::size_t i = 0; i < pmu_count; ++i) c.electrical_distance[i] = 0.2 * static_cast<double>(i);
  return c;
}

void EngineConfig::validate() const {
  if (pmu_count < 2) throw ValidationError("pmu_count must be at least 2");
  if (sample_hz <= 0) throw ValidationError("sample_hz must be positive");
  if (window_lengths.empty()) throw ValidationError("window_lengths must not be empty");
  for (std::size_t i = 0; i < window_lengths.size(); ++i) {
    if (window_lengths[i] < 2) throw ValidationError("every window length must be >= 2");
    if (i > 0 && window_lengths[i] >= window_lengths[i - 1]) {
      throw ValidationError("window_lengths must be strictly decreasing");
    }
  }
  if (!(corr_threshold > 0.0 && corr_threshold < 1.0)) {
    throw ValidationError("corr_threshold must lie in (0, 1)");
  }
  if (electrical_distance.size() != pmu_count) {
    throw ValidationError("electrical_distance needs one entry per PMU");
  }
  for (double d : electrical_distance) {
    if (!std::isfinite(d) || d < 0.0) throw ValidationError("electrical distances must be >= 0");
  }
  if (electrical_distance[0] != 0.0) {
    throw ValidationError("PMU 0 is the reference and must have distance 0");
  }
  if (segment_rows == 0) throw ValidationError("segment_rows must be positive");
  if (dropout_frames == 0) throw ValidationError("dropout_frames must be positive");
  (void)bin_layout();
}

double EngineConfig::distance(std::size_t pmu) const { return electrical_distance.at(pmu); }

std::vector<std::size_t> EngineConfig::electrical_order() const {
  std::vector<std::size_t> order(pmu_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return electrical_distance[a] < electrical_distance[b];
  });
  return order;
}

EngineConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value", lineno);
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }

  EngineConfig c;
  if (auto it = kv.find("pmu_count"); it != kv.end()) {
    c = EngineConfig::defaults(to_count(it->first, it->second));
    kv.erase(it);
  } else {
    c = EngineConfig::defaults();
  }

  GeneratorParams& g = c.generator;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
      {"sample_hz", [&](auto& k, auto& v) { c.sample_hz = static_cast<int>(to_count(k, v)); }},
      {"window_lengths",
       [&](auto& k, auto& v) {
         c.window_lengths.clear();
         for (const auto& item : split_list(v)) c.window_lengths.push_back(to_count(k, item));
       }},
      {"corr_threshold", [&](auto& k, auto& v) { c.corr_threshold = to_double(k, v); }},
      {"electrical_distance",
       [&](auto& k, auto& v) {
         c.electrical_distance.clear();
         for (const auto& item : split_list(v)) c.electrical_distance.push_back(to_double(k, item));
       }},
      {"segment_rows", [&](auto& k, auto& v) { c.segment_rows = to_count(k, v); }},
      {"signal",
       [&](auto& k, auto& v) {
         if (v == "voltage") {
           c.signal = SignalSelector::VoltageMagnitude;
         } else if (v == "phase") {
           c.signal = SignalSelector::PhaseAngle;
         } else {
           throw ValidationError("config key '" + k + "': expected voltage or phase");
         }
       }},
      {"dropout_frames", [&](auto& k, auto& v) { c.dropout_frames = to_count(k, v); }},
      {"phase_bin_width", [&](auto& k, auto& v) { c.layout.phase_bin_width = to_double(k, v); }},
      {"delta_bin_width", [&](auto& k, auto& v) { c.layout.delta_bin_width = to_double(k, v); }},
      {"voltage_central_lo", [&](auto& k, auto& v) { c.layout.voltage.central_lo = to_double(k, v); }},
      {"voltage_central_hi", [&](auto& k, auto& v) { c.layout.voltage.central_hi = to_double(k, v); }},
      {"voltage_side_bins", [&](auto& k, auto& v) { c.layout.voltage.side_bins = to_count(k, v); }},
      {"voltage_side_width", [&](auto& k, auto& v) { c.layout.voltage.side_width = to_double(k, v); }},
      {"gen.nominal_v", [&](auto& k, auto& v) { g.nominal_v = to_double(k, v); }},
      {"gen.drift_step", [&](auto& k, auto& v) { g.drift_step = to_double(k, v); }},
      {"gen.drift_reversion", [&](auto& k, auto& v) { g.drift_reversion = to_double(k, v); }},
      {"gen.drift_limit", [&](auto& k, auto& v) { g.drift_limit = to_double(k, v); }},
      {"gen.pmu_offset", [&](auto& k, auto& v) { g.pmu_offset = to_double(k, v); }},
      {"gen.v_noise", [&](auto& k, auto& v) { g.v_noise = to_double(k, v); }},
      {"gen.phase_rate", [&](auto& k, auto& v) { g.phase_rate = to_double(k, v); }},
      {"gen.phi_noise", [&](auto& k, auto& v) { g.phi_noise = to_double(k, v); }},
      {"gen.lightning_peak_v", [&](auto& k, auto& v) { g.lightning_peak_v = to_double(k, v); }},
      {"gen.lightning_kick_phi", [&](auto& k, auto& v) { g.lightning_kick_phi = to_double(k, v); }},
      {"gen.lightning_tau_frames", [&](auto& k, auto& v) { g.lightning_tau_frames = to_double(k, v); }},
      {"gen.lag_distance_per_frame",
       [&](auto& k, auto& v) { g.lag_distance_per_frame = to_double(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string render_config(const EngineConfig& c) {
  std::ostringstream out;
  auto list = [](const auto& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += ", ";
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(xs[i])>>) {
        s += num(xs[i]);
      } else {
        s += std::to_string(xs[i]);
      }
    }
    return s;
  };
  const auto& g = c.generator;
  out << "# pmuidx engine configuration\n"
      << "pmu_count = " << c.pmu_count << "\n"
      << "sample_hz = " << c.sample_hz << "\n"
      << "window_lengths = " << list(c.window_lengths) << "\n"
      << "corr_threshold = " << num(c.corr_threshold) << "\n"
      << "electrical_distance = " << list(c.electrical_distance) << "\n"
      << "segment_rows = " << c.segment_rows << "\n"
      << "signal = " << (c.signal == SignalSelector::VoltageMagnitude ? "voltage" : "phase") << "\n"
      << "dropout_frames = " << c.dropout_frames << "\n"
      << "\n# bin layout\n"
      << "phase_bin_width = " << num(c.layout.phase_bin_width) << "\n"
      << "voltage_central_lo = " << num(c.layout.voltage.central_lo) << "\n"
      << "voltage_central_hi = " << num(c.layout.voltage.central_hi) << "\n"
      << "voltage_side_bins = " << c.layout.voltage.side_bins << "\n"
      << "voltage_side_width = " << num(c.layout.voltage.side_width) << "\n"
      << "delta_bin_width = " << num(c.layout.delta_bin_width) << "\n"
      << "\n# synthetic generator\n"
      << "gen.nominal_v = " << num(g.nominal_v) << "\n"
      << "gen.drift_step = " << num(g.drift_step) << "\n"
      << "gen.drift_reversion = " << num(g.drift_reversion) << "\n"
      << "gen.drift_limit = " << num(g.drift_limit) << "\n"
      << "gen.pmu_offset = " << num(g.pmu_offset) << "\n"
      << "gen.v_noise = " << num(g.v_noise) << "\n"
      << "gen.phase_rate = " << num(g.phase_rate) << "\n"
      << "gen.phi_noise = " << num(g.phi_noise) << "\n"
      << "gen.lightning_peak_v = " << num(g.lightning_peak_v) << "\n"
      << "gen.lightning_kick_phi = " << num(g.lightning_kick_phi) << "\n"
      << "gen.lightning_tau_frames = " << num(g.lightning_tau_frames) << "\n"
      << "gen.lag_distance_per_frame = " << num(g.lag_distance_per_frame) << "\n";
  return out.str();
}

}  // namespace pmuidx
