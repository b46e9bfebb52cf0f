// Acceptance suite: one PASS/FAIL line per primary criterion, non-zero exit
// when any fails. Scratch data goes to $PMUIDX_ACCEPTANCE_DIR (default: the
// system temp dir) and is removed afterwards.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "pmuidx/archive.hpp"
#include "pmuidx/classifier.hpp"
#include "pmuidx/correlation.hpp"
#include "pmuidx/ingest.hpp"
#include "pmuidx/query.hpp"
#include "pmuidx/wah.hpp"
#include "random_predicates.hpp"

namespace fs = std::filesystem;
using namespace pmuidx;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path work_root() {
  const char* env = std::getenv("PMUIDX_ACCEPTANCE_DIR");
  fs::path base = env && *env ? fs::path(env) : fs::temp_directory_path();
  fs::path dir = base / ("pmuidx-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

Verdict correlation_oracle() {
  const auto t0 = Clock::now();
  constexpr std::size_t kPmus = 5;
  constexpr std::size_t kFrames = 100'000;
  const std::vector<std::size_t> windows = EngineConfig::defaults().window_lengths;
  const std::size_t cap = windows.front();
  CorrelationEngine engine(kPmus, windows);

  // Correlated noise around 540 kV with dropouts (zeros), frozen stretches
  // and level jumps mixed in.
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ring(cap * kPmus);
  std::vector<double> level(kPmus, 540.0);
  std::vector<int> drop_left(kPmus, 0), freeze_left(kPmus, 0);
  std::vector<double> last(kPmus, 540.0);

  std::uint64_t checked = 0;
  std::uint64_t undefined = 0;
  double worst = 0.0;
  std::vector<double> centered(cap * kPmus);

  for (std::size_t k = 0; k < kFrames; ++k) {
    FrameRecord f;
    f.ts = Timestamp{1'370'000'000'000 + static_cast<std::int64_t>(k) * 17};
    const double common = noise(rng);
    for (std::size_t p = 0; p < kPmus; ++p) {
      if (drop_left[p] == 0 && freeze_left[p] == 0) {
        const double r = u(rng);
        if (r < 2e-4) drop_left[p] = 1 + static_cast<int>(u(rng) * 300);
        else if (r < 4e-4) freeze_left[p] = 1 + static_cast<int>(u(rng) * 300);
        else if (r < 5e-4) level[p] = 500.0 + 80.0 * u(rng);
      }
      double v;
      if (drop_left[p] > 0) {
        --drop_left[p];
        v = 0.0;
      } else if (freeze_left[p] > 0) {
        --freeze_left[p];
        v = last[p];
      } else {
        v = level[p] + 0.5 * common * (1.0 + static_cast<double>(p)) + 0.3 * noise(rng);
      }
      last[p] = v;
      f.samples.push_back({v, 0.0});
      ring[(k % cap) * kPmus + p] = v;
    }
    const auto out = engine.push(f);

    for (const auto& tri : out) {
      const std::size_t n = std::min<std::size_t>(tri.window_length, k + 1);
      if (tri.samples != n) return {false, fmt("frame %zu: window %zu reports %zu samples, expected %zu", k, tri.window_length, tri.samples, n)};
      // Two-pass direct formula over the retained samples.
      double mean[kPmus] = {};
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = &ring[((k - i) % cap) * kPmus];
        for (std::size_t p = 0; p < kPmus; ++p) mean[p] += row[p];
      }
      for (std::size_t p = 0; p < kPmus; ++p) mean[p] /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = &ring[((k - i) % cap) * kPmus];
        for (std::size_t p = 0; p < kPmus; ++p) centered[i * kPmus + p] = row[p] - mean[p];
      }
      double ss[kPmus] = {};
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < kPmus; ++p) ss[p] += centered[i * kPmus + p] * centered[i * kPmus + p];
      }
      for (std::size_t a = 0; a < kPmus; ++a) {
        for (std::size_t b = a + 1; b < kPmus; ++b) {
          const auto got = tri.at(a, b);
          if (!got) {
            ++undefined;
            continue;
          }
          double sab = 0.0;
          for (std::size_t i = 0; i < n; ++i) sab += centered[i * kPmus + a] * centered[i * kPmus + b];
          if (ss[a] == 0.0 || ss[b] == 0.0) {
            return {false, fmt("frame %zu window %zu pair (%zu,%zu): defined r for a constant series", k, tri.window_length, a, b)};
          }
          const double want = std::clamp(sab / std::sqrt(ss[a] * ss[b]), -1.0, 1.0);
          const double err = std::abs(*got - want);
          worst = std::max(worst, err);
          ++checked;
          if (err > 1e-9) {
            return {false, fmt("frame %zu window %zu pair (%zu,%zu): r=%.15f, direct %.15f", k, tri.window_length, a, b, *got, want)};
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {secs < 60.0, fmt("%llu defined cells checked (%llu undefined), max |err| %.2e, %.1f s (limit 60 s)",
                           static_cast<unsigned long long>(checked),
                           static_cast<unsigned long long>(undefined), worst, secs)};
}

// ---------------------------------------------------------------------------

Verdict wah_codec() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  const double densities[] = {0.0, 1e-4, 0.01, 0.5, 1.0};
  std::uniform_real_distribution<double> loglen(0.0, 5.0);
  auto random_bits = [&](std::size_t n, double d) {
    std::bernoulli_distribution b(d);
    std::vector<bool> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = b(rng);
    return bits;
  };
  std::size_t ops = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::pow(10.0, loglen(rng))), 1, 100'000);
    const auto x = random_bits(n, densities[i % 5]);
    const auto y = random_bits(n, densities[(i / 5 + i) % 5]);
    const WahVector a = WahVector::from_bits(x);
    const WahVector b = WahVector::from_bits(y);
    if (a.to_bits() != x || a.size() != n) return {false, fmt("vector %d (n=%zu): round trip differs", i, n)};
    std::vector<bool> and_bits(n), or_bits(n);
    for (std::size_t k = 0; k < n; ++k) {
      and_bits[k] = x[k] && y[k];
      or_bits[k] = x[k] || y[k];
    }
    if (wah_and(a, b).to_bits() != and_bits) return {false, fmt("vector %d (n=%zu): AND differs", i, n)};
    if (wah_or(a, b).to_bits() != or_bits) return {false, fmt("vector %d (n=%zu): OR differs", i, n)};
    ops += 3;
  }
  const double secs = seconds_since(t0);
  return {secs < 30.0, fmt("1000 vectors, %zu checks exact, %.1f s (limit 30 s)", ops, secs)};
}

// ---------------------------------------------------------------------------

Verdict query_equivalence(const fs::path& root) {
  const auto t0 = Clock::now();
  const EngineConfig cfg = EngineConfig::defaults();
  const Timestamp start = parse_timestamp("2013-06-24T21:03:30Z");
  std::vector<InjectionSpec> inj{parse_injection("datadrop:pmu4:+60s:2s", start),
                                 parse_injection("misread:pmu9:+200s:3s", start),
                                 parse_injection("lightning:pmu0:+400s:10s", start)};
  auto g = generate(cfg, start, 100'000, inj, 31);
  for (std::size_t k = 50'000; k < 50'100; ++k) g.frames[k].samples[1].v = 533.0;
  Archive archive = Archive::create(root / "equiv", cfg);
  archive.append_frames(g.frames);
  archive.sync();

  testing::PredicateGenerator gen(archive.read_range(0, archive.rows()), cfg.pmu_count, 4242);
  std::vector<std::string> texts;
  for (int i = 0; i < 196; ++i) texts.push_back(gen.next());
  texts.insert(texts.end(), {"year = 2012", "pmu1.v = 533", "date = 2013-06-24T21:05",
                             "date = 2013-06-24T23"});

  std::size_t zero_candidates = 0;
  std::size_t nonempty = 0;
  for (const auto& t : texts) {
    const Predicate p = parse_query(t, &archive.index().layout());
    const QueryResult b = execute_bitmap(archive, p);
    const QueryResult l = execute_linear(archive, p);
    if (b.rows != l.rows) {
      return {false, fmt("'%s': bitmap %llu rows, linear %llu rows", t.c_str(),
                         static_cast<unsigned long long>(b.rows.size()),
                         static_cast<unsigned long long>(l.rows.size()))};
    }
    if (b.report.candidates == 0) {
      ++zero_candidates;
      if (b.report.bytes_read != 0 || b.report.file_opens != 0) {
        return {false, fmt("'%s': zero-hit query read %llu bytes", t.c_str(),
                           static_cast<unsigned long long>(b.report.bytes_read))};
      }
    }
    if (!b.rows.empty()) ++nonempty;
  }
  return {true, fmt("%zu predicates identical on %llu rows (%zu non-empty, %zu zero-hit with 0 bytes read), %.1f s",
                    texts.size(), static_cast<unsigned long long>(archive.rows()), nonempty,
                    zero_candidates, seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Verdict bin_layout() {
  const EngineConfig cfg = EngineConfig::defaults();
  BitmapIndex idx(cfg.bin_layout());
  DeltaTracker tracker(cfg.pmu_count);
  const Timestamp start = parse_timestamp("2013-06-24T21:00:00Z");
  const auto g = generate(cfg, start, 5000, {parse_injection("datadrop:pmu3:+20s:2s", start)}, 9);
  for (const auto& f : g.frames) idx.append_frame(f, tracker);
  std::vector<int> per_row(g.frames.size(), 0);
  for (std::size_t b = 0; b < idx.bin_count(); ++b) {
    idx.column(b).for_each_set([&](std::uint64_t r) { ++per_row[r]; });
  }
  const auto [lo, hi] = std::minmax_element(per_row.begin(), per_row.end());
  const bool ok = idx.bin_count() == 4988 && *lo == 67 && *hi == 67;
  return {ok, fmt("%zu bins, %zu attributes, bits set per row in [%d, %d] over %zu rows", idx.bin_count(),
                  idx.layout().attributes().size(), *lo, *hi, per_row.size())};
}

// ---------------------------------------------------------------------------

struct BigArchive {
  std::optional<Archive> archive;
  double build_s = 0.0;
};

Verdict speedup(BigArchive& big, const fs::path& root) {
  const auto t0 = Clock::now();
  const EngineConfig cfg = EngineConfig::defaults();
  big.archive.emplace(build_table2_archive(root / "table2", cfg, 4'000'000, 7));
  big.build_s = seconds_since(t0);
  const auto suite = table2_suite();
  const auto rows = bench(*big.archive, suite, BenchOptions{3, true});
  const auto t_total = seconds_since(t0);
  double q1 = 0.0;
  std::uint64_t q1_records = 0;
  std::string table;
  for (const auto& r : rows) {
    if (r.path != QueryPath::Bitmap) continue;
    if (r.query_id == "1") {
      q1 = r.speedup;
      q1_records = r.records;
    }
    const BenchRow& lin = *std::find_if(rows.begin(), rows.end(), [&](const BenchRow& x) {
      return x.query_id == r.query_id && x.path == QueryPath::Linear;
    });
    table += fmt("\n    Q%s %llu records: bitmap %.2f ms, linear %.1f ms, %.0fx", r.query_id.c_str(),
                 static_cast<unsigned long long>(r.records), r.median_ms, lin.median_ms, r.speedup);
  }
  const bool ok = q1 >= 30.0 && q1_records == kTable2PlantedRows && t_total < 15 * 60;
  return {ok, fmt("Q1 (pmu1.v = 533, %llu records) median speedup %.0fx on %llu rows (need >= 30x); "
                  "build %.0f s, total %.0f s (limit 900 s)",
                  static_cast<unsigned long long>(q1_records), q1,
                  static_cast<unsigned long long>(big.archive->rows()), big.build_s, t_total) +
                  table};
}

Verdict compression(const BigArchive& big) {
  if (!big.archive) return {false, "no large archive (speedup stage failed to build it)"};
  const BitmapIndex& idx = big.archive->index();
  const BinLayout& l = idx.layout();
  std::uint64_t central = 0;
  std::uint64_t total = 0;
  for (std::size_t p = 0; p < l.pmu_count(); ++p) {
    const Attribute& v = l.at(*l.index_of(Field::Voltage, static_cast<int>(p)));
    central += idx.column(v.first_bin + v.bin_of(540.0)).count();
    total += idx.rows();
  }
  const double frac = static_cast<double>(central) / static_cast<double>(total);
  const double ratio =
      static_cast<double>(idx.uncompressed_bytes()) / static_cast<double>(idx.compressed_bytes());
  const bool ok = idx.rows() >= 1'000'000 && frac >= 0.95 && ratio >= 50.0;
  return {ok, fmt("ratio %.1f (need >= 50) on %llu rows, %.2f%% of voltages in the central bin; "
                  "%llu -> %llu bytes",
                  ratio, static_cast<unsigned long long>(idx.rows()), 100.0 * frac,
                  static_cast<unsigned long long>(idx.uncompressed_bytes()),
                  static_cast<unsigned long long>(idx.compressed_bytes()))};
}

Verdict date_query(const BigArchive& big, const fs::path& root) {
  // Standalone gapless archive, plus the large one when it exists.
  const EngineConfig cfg = EngineConfig::defaults();
  Archive small = Archive::create(root / "minute", cfg);
  small.append_frames(generate(cfg, parse_timestamp("2013-06-24T21:04:00Z"), 3 * 3600, {}, 3).frames);
  const Predicate p = parse_query("date = 2013-06-24T21:05");
  std::string detail;
  bool ok = true;
  for (const Archive* a : std::initializer_list<const Archive*>{&small, big.archive ? &*big.archive : nullptr}) {
    if (!a) continue;
    const auto b = execute_bitmap(*a, p, QueryOptions{0});
    const auto l = execute_linear(*a, p, QueryOptions{0});
    ok = ok && b.report.returned == 3600 && l.report.returned == 3600 && !b.report.candidacy_checked;
    detail += fmt("%s%llu-row archive: bitmap %llu, linear %llu rows, no candidacy check: %s",
                  detail.empty() ? "" : "; ", static_cast<unsigned long long>(a->rows()),
                  static_cast<unsigned long long>(b.report.returned),
                  static_cast<unsigned long long>(l.report.returned),
                  b.report.candidacy_checked ? "no" : "yes");
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------

Verdict event_detection() {
  const auto t0 = Clock::now();
  const EngineConfig cfg = EngineConfig::defaults();
  const Timestamp start = parse_timestamp("2013-06-24T12:00:00Z");
  std::mt19937_64 rng(20130624);
  std::vector<InjectionKind> kinds;
  kinds.insert(kinds.end(), 20, InjectionKind::DataDrop);
  kinds.insert(kinds.end(), 20, InjectionKind::Misread);
  kinds.insert(kinds.end(), 10, InjectionKind::Lightning);
  std::shuffle(kinds.begin(), kinds.end(), rng);

  // One injection per 40 s slot, at a random PMU and offset.
  constexpr std::int64_t kSlotMs = 40'000;
  std::vector<InjectionSpec> inj;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    InjectionSpec s;
    s.kind = kinds[i];
    s.pmu = std::uniform_int_distribution<std::size_t>(0, cfg.pmu_count - 1)(rng);
    s.start = Timestamp{start.ms + static_cast<std::int64_t>(i) * kSlotMs + 10'000 +
                        std::uniform_int_distribution<std::int64_t>(0, 5'000)(rng)};
    s.duration_ms = s.kind == InjectionKind::Lightning
                        ? 10'000
                        : std::uniform_int_distribution<std::int64_t>(500, 5'000)(rng);
    inj.push_back(s);
  }
  StreamGenerator gen(cfg, start, 60 * 40 * kinds.size(), inj, 99);
  CorrelationEngine engine(cfg);
  EventClassifier cls(cfg);
  while (auto f = gen.next()) cls.observe(*f, engine.push(*f));
  const auto& labels = gen.labels();
  const auto& flags = cls.history();

  auto flag_kind = [](InjectionKind k) {
    return k == InjectionKind::DataDrop  ? EventKind::DataDrop
           : k == InjectionKind::Misread ? EventKind::Misread
                                         : EventKind::PowerEvent;
  };
  // A flag matches a label of its kind when it satisfies the timing rules.
  auto matches = [&](const EventFlag& f, const GroundTruthLabel& l) {
    if (f.kind != flag_kind(l.kind)) return false;
    if (l.kind == InjectionKind::Lightning) {
      return f.window_length == 600 && f.start_ts >= l.start_ts &&
             f.start_ts.ms <= l.end_ts.ms + 10'000;
    }
    return f.pmu == l.pmu && f.window_length <= 54 && f.start_ts >= l.start_ts &&
           f.start_ts <= l.end_ts && f.detected_ts.ms - l.start_ts.ms <= 1'000;
  };

  std::string detail;
  bool ok = true;
  for (const EventKind k : {EventKind::DataDrop, EventKind::Misread, EventKind::PowerEvent}) {
    std::size_t n_labels = 0, hit_labels = 0, n_flags = 0, good_flags = 0;
    double worst_latency = 0.0;
    for (const auto& l : labels) {
      if (flag_kind(l.kind) != k) continue;
      ++n_labels;
      for (const auto& f : flags) {
        if (matches(f, l)) {
          ++hit_labels;
          worst_latency = std::max(worst_latency, (f.detected_ts.ms - l.start_ts.ms) / 1000.0);
          break;
        }
      }
    }
    for (const auto& f : flags) {
      if (f.kind != k) continue;
      ++n_flags;
      good_flags += std::any_of(labels.begin(), labels.end(),
                                [&](const GroundTruthLabel& l) { return matches(f, l); });
    }
    const double precision = n_flags ? static_cast<double>(good_flags) / n_flags : 0.0;
    const double recall = n_labels ? static_cast<double>(hit_labels) / n_labels : 0.0;
    ok = ok && precision >= 0.95 && recall >= 0.95;
    detail += fmt("%s%s P=%.2f R=%.2f (%zu flags, %zu labels, max latency %.2f s)",
                  detail.empty() ? "" : "; ", std::string(event_kind_name(k)).c_str(), precision,
                  recall, n_flags, n_labels, worst_latency);
  }
  return {ok, detail + fmt("; %.1f s", seconds_since(t0))};
}

}  // namespace

int main() {
  const fs::path root = work_root();
  int failures = 0;
  auto report = [&](const char* name, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-22s %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  };

  BigArchive big;
  report("correlation-oracle", correlation_oracle);
  report("wah-codec", wah_codec);
  report("query-equivalence", [&] { return query_equivalence(root); });
  report("bin-layout", bin_layout);
  report("event-detection", event_detection);
  report("speedup", [&] { return speedup(big, root); });
  report("compression", [&] { return compression(big); });
  report("date-query-count", [&] { return date_query(big, root); });

  big.archive.reset();
  std::error_code ec;
  fs::remove_all(root, ec);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
