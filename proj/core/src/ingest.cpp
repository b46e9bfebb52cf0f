#include "pmuidx/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void csv_error(std::size_t line, std::size_t column, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                       what,
                   line);
}

void append_number(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

std::int64_t parse_duration_ms(std::string_view s, std::string_view whole) {
  std::size_t i = 0;
  while (i < s.size() && ((s[i] >= '0' && s[i] <= '9') || s[i] == '.')) ++i;
  double value = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + i, value);
  if (i == 0 || r.ptr != s.data() + i) {
    throw ParseError("bad duration in injection '" + std::string(whole) + "'", 0);
  }
  const std::string_view unit = s.substr(i);
  double scale = 0.0;
  if (unit == "ms") {
    scale = 1.0;
  } else if (unit == "s" || unit.empty()) {
    scale = 1000.0;
  } else if (unit == "m") {
    scale = 60'000.0;
  } else {
    throw ParseError("bad duration unit in injection '" + std::string(whole) + "'", 0);
  }
  return static_cast<std::int64_t>(std::llround(value * scale));
}

// Index of the first frame whose timestamp is >= ts.
std::uint64_t first_frame_at_or_after(Timestamp start, Timestamp ts, int hz) {
  if (ts <= start) return 0;
  auto k = static_cast<std::uint64_t>((ts.ms - start.ms) * hz / 1000);
  while (k > 0 && frame_time(start, static_cast<std::int64_t>(k - 1), hz) >= ts) --k;
  while (frame_time(start, static_cast<std::int64_t>(k), hz) < ts) ++k;
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------

CsvFrameReader::CsvFrameReader(std::istream& in) : in_(in) {
  while (std::getline(in_, buf_)) {
    ++line_;
    if (!strip(buf_).empty()) break;
  }
  const std::string_view header = strip(buf_);
  if (header.empty()) throw ParseError("line 1: missing header", 1);
  const auto fields = split_fields(header);
  if (fields.size() < 3 || fields.size() % 2 == 0 || strip(fields[0]) != "ts") {
    csv_error(line_, 1, "header must be ts,v0,phi0,...");
  }
  pmu_count_ = (fields.size() - 1) / 2;
  for (std::size_t p = 0; p < pmu_count_; ++p) {
    const std::string id = std::to_string(p);
    if (strip(fields[1 + 2 * p]) != "v" + id) csv_error(line_, 2 + 2 * p, "expected column v" + id);
    if (strip(fields[2 + 2 * p]) != "phi" + id) {
      csv_error(line_, 3 + 2 * p, "expected column phi" + id);
    }
  }
}

std::optional<FrameRecord> CsvFrameReader::next() {
  while (std::getline(in_, buf_)) {
    ++line_;
    const std::string_view row = strip(buf_);
    if (row.empty()) continue;
    const auto fields = split_fields(row);
    if (fields.size() != 1 + 2 * pmu_count_) {
      csv_error(line_, std::min(fields.size(), 1 + 2 * pmu_count_) + 1,
                "expected " + std::to_string(1 + 2 * pmu_count_) + " fields, found " +
                    std::to_string(fields.size()));
    }
    FrameRecord frame;
    try {
      frame.ts = parse_timestamp(strip(fields[0]));
    } catch (const ParseError& e) {
      csv_error(line_, 1, e.what());
    }
    frame.samples.resize(pmu_count_);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const std::string_view f = strip(fields[i]);
      double value = 0.0;
      const auto r = std::from_chars(f.data(), f.data() + f.size(), value);
      if (f.empty() || r.ec != std::errc{} || r.ptr != f.data() + f.size() || !std::isfinite(value)) {
        csv_error(line_, i + 1, "expected a real number, got '" + std::string(f) + "'");
      }
      PhasorSample& s = frame.samples[(i - 1) / 2];
      if (i % 2 == 1) {
        if (value < 0.0) csv_error(line_, i + 1, "voltage magnitude must be non-negative");
        s.v = value;
      } else {
        s.phi = normalize_phase(value);
      }
    }
    if (last_ts_ && frame.ts <= *last_ts_) {
      throw OrderingError("line " + std::to_string(line_) + ": timestamp " +
                          format_timestamp(frame.ts) + " does not follow " +
                          format_timestamp(*last_ts_));
    }
    last_ts_ = frame.ts;
    return frame;
  }
  return std::nullopt;
}

std::vector<FrameRecord> parse_stream(std::istream& in) {
  CsvFrameReader reader(in);
  std::vector<FrameRecord> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

void write_csv_header(std::ostream& out, std::size_t pmu_count) {
  std::string line = "ts";
  for (std::size_t p = 0; p < pmu_count; ++p) {
    line += ",v" + std::to_string(p) + ",phi" + std::to_string(p);
  }
  line += '\n';
  out << line;
}

void write_csv_row(std::ostream& out, const FrameRecord& frame) {
  std::string line = format_timestamp(frame.ts);
  for (const auto& s : frame.samples) {
    line += ',';
    append_number(line, s.v);
    line += ',';
    append_number(line, s.phi);
  }
  line += '\n';
  out << line;
}

std::string render_csv(std::span<const FrameRecord> frames) {
  std::ostringstream out;
  write_csv_header(out, frames.empty() ? 0 : frames.front().samples.size());
  for (const auto& f : frames) write_csv_row(out, f);
  return out.str();
}

// ---------------------------------------------------------------------------

std::string_view injection_kind_name(InjectionKind k) {
  switch (k) {
    case InjectionKind::DataDrop: return "datadrop";
    case InjectionKind::Misread: return "misread";
    case InjectionKind::Lightning: return "lightning";
  }
  return "unknown";
}

InjectionKind parse_injection_kind(std::string_view s) {
  if (s == "datadrop" || s == "drop" || s == "dropout") return InjectionKind::DataDrop;
  if (s == "misread") return InjectionKind::Misread;
  if (s == "lightning") return InjectionKind::Lightning;
  throw ParseError("unknown injection kind '" + std::string(s) + "'", 0);
}

InjectionSpec parse_injection(std::string_view text, Timestamp stream_start) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon == std::string_view::npos ? colon : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts.size() != 4) {
    throw ParseError("injection '" + std::string(text) + "' must be kind:pmuN:+offset:duration", 0);
  }
  InjectionSpec spec;
  spec.kind = parse_injection_kind(parts[0]);
  std::string_view pmu = parts[1];
  if (pmu.substr(0, 3) == "pmu") pmu.remove_prefix(3);
  const auto r = std::from_chars(pmu.data(), pmu.data() + pmu.size(), spec.pmu);
  if (pmu.empty() || r.ptr != pmu.data() + pmu.size()) {
    throw ParseError("bad PMU in injection '" + std::string(text) + "'", 0);
  }
  std::string_view offset = parts[2];
  if (!offset.empty() && offset.front() == '+') offset.remove_prefix(1);
  spec.start = Timestamp{stream_start.ms + parse_duration_ms(offset, text)};
  spec.duration_ms = parse_duration_ms(parts[3], text);
  return spec;
}

StreamGenerator::StreamGenerator(const EngineConfig& config, Timestamp start,
                                 std::uint64_t n_frames, std::vector<InjectionSpec> injections,
                                 std::uint64_t seed)
    : config_(config), start_(start), n_frames_(n_frames), rng_(seed) {
  config_.validate();
  if (n_frames == 0) throw ValidationError("n_frames must be at least 1");
  const std::size_t P = config_.pmu_count;
  const int hz = config_.sample_hz;

  for (auto& spec : injections) {
    if (spec.pmu >= P) throw ValidationError("injection targets unknown PMU " + std::to_string(spec.pmu));
    if (spec.duration_ms <= 0) throw ValidationError("injection duration must be positive");
    const std::uint64_t first = first_frame_at_or_after(start_, spec.start, hz);
    const std::uint64_t end = first_frame_at_or_after(start_, Timestamp{spec.start.ms + spec.duration_ms}, hz);
    if (first >= end || first >= n_frames_) {
      throw ValidationError("injection at " + format_timestamp(spec.start) + " covers no frame");
    }
    if (spec.kind == InjectionKind::Misread && first == 0) {
      throw ValidationError("a misread needs a previously emitted frame to repeat");
    }
    if (spec.kind == InjectionKind::Lightning) {
      if (spec.peak_v == 0.0) spec.peak_v = config_.generator.lightning_peak_v;
      if (spec.kick_phi == 0.0) spec.kick_phi = config_.generator.lightning_kick_phi;
    }
    injections_.push_back(Active{spec, first, std::min(end, n_frames_) - 1});
  }
  for (std::size_t i = 0; i < injections_.size(); ++i) {
    for (std::size_t j = i + 1; j < injections_.size(); ++j) {
      const auto& a = injections_[i];
      const auto& b = injections_[j];
      if (a.spec.pmu == b.spec.pmu && a.first <= b.last && b.first <= a.last) {
        throw ValidationError("overlapping injections on PMU " + std::to_string(a.spec.pmu));
      }
    }
  }
  // Overrides are applied in this order: additive lightning first, then
  // data drops, then misreads which repeat whatever was emitted last.
  std::stable_sort(injections_.begin(), injections_.end(), [](const Active& a, const Active& b) {
    auto rank = [](InjectionKind k) {
      return k == InjectionKind::Lightning ? 0 : k == InjectionKind::DataDrop ? 1 : 2;
    };
    return rank(a.spec.kind) < rank(b.spec.kind);
  });
  for (const auto& a : injections_) {
    labels_.push_back(GroundTruthLabel{a.spec.kind, a.spec.pmu,
                                       frame_time(start_, static_cast<std::int64_t>(a.first), hz),
                                       frame_time(start_, static_cast<std::int64_t>(a.last), hz)});
  }
  std::sort(labels_.begin(), labels_.end(), [](const auto& a, const auto& b) {
    return a.start_ts < b.start_ts || (a.start_ts == b.start_ts && a.pmu < b.pmu);
  });

  const auto& g = config_.generator;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  phase0_ = 180.0 * unit(rng_);
  v_offset_.resize(P);
  phi_offset_.resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    v_offset_[p] = g.pmu_offset * unit(rng_);
    phi_offset_[p] = 30.0 * unit(rng_);
  }
  last_emitted_.resize(P);
}

std::optional<FrameRecord> StreamGenerator::next() {
  if (k_ >= n_frames_) return std::nullopt;
  const auto& g = config_.generator;
  const std::size_t P = config_.pmu_count;
  const std::uint64_t k = k_++;

  drift_ = std::clamp(g.drift_reversion * drift_ + g.drift_step * normal_(rng_), -g.drift_limit,
                      g.drift_limit);
  const double theta = phase0_ + g.phase_rate * static_cast<double>(k);

  FrameRecord frame;
  frame.ts = frame_time(start_, static_cast<std::int64_t>(k), config_.sample_hz);
  frame.samples.resize(P);
  std::vector<double> v(P);
  std::vector<double> phi(P);
  for (std::size_t p = 0; p < P; ++p) {
    v[p] = g.nominal_v + drift_ + v_offset_[p] + g.v_noise * normal_(rng_);
    phi[p] = theta + phi_offset_[p] + g.phi_noise * normal_(rng_);
  }

  for (const auto& a : injections_) {
    if (k < a.first || k > a.last) continue;
    const std::size_t s = a.spec.pmu;
    switch (a.spec.kind) {
      case InjectionKind::Lightning:
        for (std::size_t p = 0; p < P; ++p) {
          const double d = std::fabs(config_.distance(p) - config_.distance(s));
          const auto lag = static_cast<std::uint64_t>(std::ceil(d / g.lag_distance_per_frame));
          if (k < a.first + lag) continue;
          const double shape =
              std::exp(-static_cast<double>(k - a.first - lag) / g.lightning_tau_frames) / (1.0 + d);
          v[p] -= a.spec.peak_v * shape;
          phi[p] += a.spec.kick_phi * shape;
        }
        break;
      case InjectionKind::DataDrop:
        v[s] = 0.0;
        phi[s] = 0.0;
        break;
      case InjectionKind::Misread:
        v[s] = last_emitted_[s].v;
        phi[s] = last_emitted_[s].phi;
        break;
    }
  }
  for (std::size_t p = 0; p < P; ++p) {
    frame.samples[p] = PhasorSample{std::max(0.0, v[p]), normalize_phase(phi[p])};
  }
  last_emitted_ = frame.samples;
  return frame;
}

GeneratedStream generate(const EngineConfig& config, Timestamp start, std::uint64_t n_frames,
                         std::vector<InjectionSpec> injections, std::uint64_t seed) {
  StreamGenerator gen(config, start, n_frames, std::move(injections), seed);
  GeneratedStream out;
  out.frames.reserve(n_frames);
  while (auto f = gen.next()) out.frames.push_back(std::move(*f));
  out.labels = gen.labels();
  return out;
}

void write_labels_csv(std::ostream& out, std::span<const GroundTruthLabel> labels) {
  out << "kind,pmu,start_ts,end_ts\n";
  for (const auto& l : labels) {
    out << injection_kind_name(l.kind) << ',' << l.pmu << ',' << format_timestamp(l.start_ts) << ','
        << format_timestamp(l.end_ts) << '\n';
  }
}

// ---------------------------------------------------------------------------

Pacer::Pacer(double speed, int hz) : speed_(speed) {
  if (!(speed > 0.0)) throw ValidationError("replay speed must be positive");
  if (std::isfinite(speed)) {
    period_ = std::chrono::nanoseconds(
        static_cast<std::int64_t>(std::llround(1e9 / (static_cast<double>(hz) * speed))));
  }
  rebase();
}

void Pacer::rebase() {
  origin_ = std::chrono::steady_clock::now();
  released_ = 0;
}

void Pacer::wait_next() {
  ++released_;
  if (period_.count() == 0) return;
  std::this_thread::sleep_until(origin_ + period_ * static_cast<std::int64_t>(released_));
}

void pace(std::span<const FrameRecord> frames, double speed,
          const std::function<void(const FrameRecord&)>& sink) {
  Pacer pacer(speed);
  for (const auto& f : frames) {
    pacer.wait_next();
    sink(f);
  }
}

}  // namespace pmuidx
