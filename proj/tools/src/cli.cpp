#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pmuidx/archive.hpp"
#include "pmuidx/classifier.hpp"
#include "pmuidx/config.hpp"
#include "pmuidx/correlation.hpp"
#include "pmuidx/errors.hpp"
#include "pmuidx/ingest.hpp"
#include "pmuidx/query.hpp"
#include "pmuidx/service.hpp"

namespace pmuidx::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kDefaultStart = "2013-06-24T12:00:00Z";

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct Globals {
  std::string config_path;
  std::string data_dir = "pmu-data";
  bool json = false;
};

EngineConfig load_engine_config(const Globals& g) {
  if (g.config_path.empty()) return EngineConfig::defaults();
  if (!fs::exists(g.config_path)) throw ValidationError("config file not found: " + g.config_path);
  return load_config(g.config_path);
}

Archive open_or_create(const Globals& g) {
  if (Archive::exists(g.data_dir)) return Archive::open(g.data_dir);
  return Archive::create(g.data_dir, load_engine_config(g));
}

Archive open_existing(const Globals& g) {
  if (!Archive::exists(g.data_dir)) {
    throw ValidationError("no archive in " + g.data_dir + " (run ingest or bench first)");
  }
  return Archive::open(g.data_dir);
}

json flag_json(const EventFlag& f) {
  return json{{"kind", std::string(event_kind_name(f.kind))},
              {"pmu", f.pmu},
              {"window_length", f.window_length},
              {"start_ts", format_timestamp(f.start_ts)},
              {"last_ts", format_timestamp(f.last_ts)},
              {"detected_ts", format_timestamp(f.detected_ts)}};
}

void print_flags(std::ostream& out, const std::vector<EventFlag>& flags) {
  for (const auto& f : flags) {
    out << event_kind_name(f.kind) << " pmu" << f.pmu << " window " << f.window_length << ' '
        << format_timestamp(f.start_ts) << " .. " << format_timestamp(f.last_ts) << '\n';
  }
}

std::vector<InjectionSpec> parse_injections(const std::vector<std::string>& specs, Timestamp start) {
  std::vector<InjectionSpec> out;
  for (const auto& s : specs) out.push_back(parse_injection(s, start));
  return out;
}

// Runs frames through a fresh engine and classifier; returns every flag.
class Detector {
 public:
  explicit Detector(const EngineConfig& c) : engine_(c), classifier_(c) {}
  void push(const FrameRecord& f) { classifier_.observe(f, engine_.push(f)); }
  const std::vector<EventFlag>& flags() const { return classifier_.history(); }

 private:
  CorrelationEngine engine_;
  EventClassifier classifier_;
};

// ---------------------------------------------------------------------------

struct GenArgs {
  std::uint64_t frames = 0;
  std::string start = kDefaultStart;
  std::uint64_t seed = 1;
  std::vector<std::string> inject;
  std::string out = "-";
  std::string labels;
};

int cmd_gen(const Globals& g, const GenArgs& a, std::ostream& out) {
  const EngineConfig config = load_engine_config(g);
  const Timestamp start = parse_timestamp(a.start);
  StreamGenerator gen(config, start, a.frames, parse_injections(a.inject, start), a.seed);
  const std::string labels_path =
      !a.labels.empty() ? a.labels : (a.out == "-" ? std::string() : a.out + ".labels.csv");

  std::ofstream file;
  if (a.out != "-") {
    file.open(a.out, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write " + a.out);
  }
  std::ostream& csv = a.out == "-" ? out : file;
  write_csv_header(csv, config.pmu_count);
  while (auto f = gen.next()) write_csv_row(csv, *f);
  csv.flush();
  if (!csv) throw IoError("write failed on " + a.out);

  if (!labels_path.empty()) {
    std::ofstream lf(labels_path, std::ios::trunc);
    write_labels_csv(lf, gen.labels());
    if (!lf) throw IoError("cannot write " + labels_path);
  }
  if (a.out != "-") {
    if (g.json) {
      out << json{{"frames", a.frames}, {"csv", a.out}, {"labels", labels_path},
                  {"injections", gen.labels().size()}}.dump()
          << '\n';
    } else {
      out << "wrote " << a.frames << " frames to " << a.out << " and "
          << gen.labels().size() << " labels to " << labels_path << '\n';
    }
  }
  return kExitOk;
}

struct IngestArgs {
  std::string csv;
  bool detect = false;
  std::size_t batch = 3600;
};

int cmd_ingest(const Globals& g, const IngestArgs& a, std::ostream& out) {
  std::ifstream file;
  if (a.csv != "-") {
    if (!fs::exists(a.csv)) throw ValidationError("input file not found: " + a.csv);
    file.open(a.csv, std::ios::binary);
    if (!file) throw IoError("cannot read " + a.csv);
  }
  std::istream& in = a.csv == "-" ? std::cin : file;
  CsvFrameReader reader(in);

  Archive archive = open_or_create(g);
  if (reader.pmu_count() != archive.config().pmu_count) {
    throw ValidationError("input has " + std::to_string(reader.pmu_count()) +
                          " PMUs, the archive expects " +
                          std::to_string(archive.config().pmu_count));
  }
  std::optional<Detector> detector;
  if (a.detect) detector.emplace(archive.config());

  const std::uint64_t before = archive.rows();
  std::vector<FrameRecord> batch;
  batch.reserve(a.batch);
  try {
    while (auto f = reader.next()) {
      if (detector) detector->push(*f);
      batch.push_back(std::move(*f));
      if (batch.size() >= a.batch) {
        archive.append_frames(batch);
        batch.clear();
      }
    }
    archive.append_frames(batch);
  } catch (...) {
    archive.sync();
    throw;
  }
  archive.sync();

  const std::uint64_t added = archive.rows() - before;
  if (g.json) {
    json j{{"rows_appended", added}, {"rows", archive.rows()}};
    if (detector) {
      json flags = json::array();
      for (const auto& f : detector->flags()) flags.push_back(flag_json(f));
      j["events"] = flags;
    }
    out << j.dump() << '\n';
  } else {
    out << "appended " << added << " rows; archive holds " << archive.rows() << " rows\n";
    if (detector) print_flags(out, detector->flags());
  }
  return kExitOk;
}

int cmd_index(const Globals& g, bool rebuild, std::ostream& out) {
  if (!Archive::exists(g.data_dir)) throw ValidationError("no archive in " + g.data_dir);
  if (rebuild) fs::remove(fs::path(g.data_dir) / "index.bin");
  Archive archive = Archive::open(g.data_dir);
  if (rebuild) archive.sync();
  const BitmapIndex& ix = archive.index();
  const double ratio = ix.compressed_bytes() == 0
                           ? 0.0
                           : static_cast<double>(ix.uncompressed_bytes()) /
                                 static_cast<double>(ix.compressed_bytes());
  if (g.json) {
    out << json{{"rows", ix.rows()},
                {"bins", ix.bin_count()},
                {"attributes", ix.layout().attributes().size()},
                {"compressed_bytes", ix.compressed_bytes()},
                {"uncompressed_bytes", ix.uncompressed_bytes()},
                {"compression_ratio", ratio}}
               .dump()
        << '\n';
  } else {
    out << "rows " << ix.rows() << "\nbins " << ix.bin_count() << "\nattributes "
        << ix.layout().attributes().size() << "\ncompressed_bytes " << ix.compressed_bytes()
        << "\nuncompressed_bytes " << ix.uncompressed_bytes() << "\ncompression_ratio " << ratio
        << '\n';
  }
  return kExitOk;
}

struct QueryArgs {
  std::string text;
  bool linear = false;
  std::size_t limit = 20;
};

int cmd_query(const Globals& g, const QueryArgs& a, std::ostream& out) {
  Archive archive = open_existing(g);
  const Predicate p = parse_query(a.text, &archive.index().layout());
  const QueryOptions opts{a.limit};
  const QueryResult r = a.linear ? execute_linear(archive, p, opts) : execute_bitmap(archive, p, opts);
  const QueryReport& rep = r.report;
  if (g.json) {
    json rows = json::array();
    for (const auto& row : r.rows) {
      json v = json::array();
      json phi = json::array();
      for (const auto& s : row.frame.samples) {
        v.push_back(s.v);
        phi.push_back(s.phi);
      }
      rows.push_back(json{{"row", row.row}, {"ts", format_timestamp(row.frame.ts)}, {"v", v},
                          {"phi", phi}});
    }
    out << json{{"rows", rows},
                {"total", rep.returned},
                {"report",
                 {{"predicate", rep.predicate},
                  {"path", std::string(query_path_name(rep.path))},
                  {"candidates", rep.candidates},
                  {"returned", rep.returned},
                  {"wall_ms", rep.wall_ms},
                  {"bytes_read", rep.bytes_read},
                  {"file_opens", rep.file_opens},
                  {"bins_touched", rep.bins_touched},
                  {"candidacy_checked", rep.candidacy_checked}}}}
               .dump()
        << '\n';
    return kExitOk;
  }
  out << "# " << rep.predicate << '\n'
      << "# path " << query_path_name(rep.path) << ", " << rep.returned << " rows, "
      << rep.candidates << " candidates, " << rep.bytes_read << " bytes read, " << rep.wall_ms
      << " ms\n";
  if (!r.rows.empty()) {
    write_csv_header(out, archive.config().pmu_count);
    for (const auto& row : r.rows) write_csv_row(out, row.frame);
  }
  if (rep.returned > r.rows.size()) {
    out << "# " << rep.returned - r.rows.size() << " more rows not shown\n";
  }
  return kExitOk;
}

struct BenchArgs {
  std::uint64_t rows = 4'000'000;
  std::string suite = "table2";
  std::size_t reps = 3;
  bool warm = false;
  std::string out;
  std::uint64_t seed = 7;
};

int cmd_bench(const Globals& g, const BenchArgs& a, std::ostream& out, std::ostream& err) {
  if (a.suite != "table2") throw ValidationError("unknown suite '" + a.suite + "' (have: table2)");
  if (a.reps == 0) throw ValidationError("--reps must be at least 1");
  std::optional<Archive> archive;
  if (Archive::exists(g.data_dir)) {
    archive.emplace(Archive::open(g.data_dir));
    if (archive->rows() < a.rows) {
      throw ValidationError("archive in " + g.data_dir + " holds " +
                            std::to_string(archive->rows()) + " rows, fewer than --rows " +
                            std::to_string(a.rows));
    }
  } else {
    const EngineConfig config = load_engine_config(g);
    err << "generating " << a.rows << " rows into " << g.data_dir << '\n';
    std::uint64_t next_report = 0;
    archive.emplace(build_table2_archive(g.data_dir, config, a.rows, a.seed, [&](std::uint64_t k) {
      if (k >= next_report) {
        err << "  " << k << " rows\n";
        next_report += 1'000'000;
      }
    }));
  }
  const auto queries = table2_suite();
  const auto rows = bench(*archive, queries, BenchOptions{a.reps, !a.warm});

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::trunc);
    if (!file) throw IoError("cannot write " + a.out);
  }
  std::ostream& dst = a.out.empty() ? out : file;
  if (g.json) {
    json list = json::array();
    for (const auto& r : rows) {
      list.push_back(json{{"query_id", r.query_id},
                          {"path", std::string(query_path_name(r.path))},
                          {"median_ms", r.median_ms},
                          {"records", r.records},
                          {"speedup", r.speedup}});
    }
    dst << list.dump() << '\n';
  } else {
    write_bench_csv(dst, rows);
  }
  return kExitOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string csv;
  bool generate = false;
  std::uint64_t frames = 216'000;
  std::uint64_t seed = 1;
  std::vector<std::string> inject;
  std::string start;
  double speed = 1.0;
  double duration = 0.0;
  int stream_interval_ms = 100;
};

int cmd_serve(const Globals& g, const ServeArgs& a, std::ostream& out) {
  if (!a.csv.empty() && a.generate) throw ValidationError("--csv and --generate are exclusive");
  if (!(a.speed > 0.0)) throw ValidationError("--speed must be positive");
  if (a.port < 0 || a.port > 65535) throw ValidationError("--port out of range");
  if (!a.csv.empty() && !fs::exists(a.csv)) throw ValidationError("input file not found: " + a.csv);

  Archive archive = open_or_create(g);
  const EngineConfig config = archive.config();

  // Live source: generator continuing after the archive tail, or a CSV file.
  std::optional<StreamGenerator> gen;
  std::ifstream csv_file;
  std::optional<CsvFrameReader> reader;
  if (a.generate) {
    Timestamp start = a.start.empty() ? parse_timestamp(kDefaultStart) : parse_timestamp(a.start);
    if (a.start.empty() && archive.last_ts()) start = Timestamp{archive.last_ts()->ms + 1000};
    gen.emplace(config, start, a.frames, parse_injections(a.inject, start), a.seed);
  } else if (!a.csv.empty()) {
    csv_file.open(a.csv, std::ios::binary);
    reader.emplace(csv_file);
  }

  ServiceOptions opts;
  opts.host = a.host;
  opts.port = a.port;
  opts.stream.min_interval = std::chrono::milliseconds(a.stream_interval_ms);
  Service service(std::move(archive), opts);
  const int port = service.start();
  if (g.json) {
    out << json{{"listening", a.host + ":" + std::to_string(port)}}.dump() << '\n';
  } else {
    out << "listening on http://" << a.host << ':' << port << '\n';
  }
  out.flush();

  g_interrupted = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::atomic<bool> feeding{true};
  std::thread feeder([&] {
    Pacer pacer(a.speed, config.sample_hz);
    while (feeding && !g_interrupted) {
      std::optional<FrameRecord> f;
      if (gen) {
        f = gen->next();
      } else if (reader) {
        f = reader->next();
      }
      if (!f) break;
      pacer.wait_next();
      service.submit_live({std::move(*f)});
    }
  });

  const auto t0 = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    if (a.duration > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= a.duration) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  feeding = false;
  feeder.join();
  service.wait_idle();
  service.stop();
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
  return kExitOk;
}

struct ReplayArgs {
  std::string from;
  std::string to;
  double speed = 0.0;  // 0 = as fast as possible
};

int cmd_replay(const Globals& g, const ReplayArgs& a, std::ostream& out) {
  const Timestamp from = parse_timestamp(a.from);
  const Timestamp to = parse_timestamp(a.to);
  if (from > to) throw ValidationError("--from is after --to");
  if (a.speed < 0.0) throw ValidationError("--speed must not be negative");
  Archive archive = open_existing(g);
  if (archive.rows() == 0 || from < *archive.first_ts() || to > *archive.last_ts()) {
    throw RangeError("replay range is outside the archive");
  }
  const std::uint64_t first = archive.lower_bound(from);
  const std::uint64_t last = archive.lower_bound(Timestamp{to.ms + 1});

  Detector detector(archive.config());
  Pacer pacer(a.speed == 0.0 ? std::numeric_limits<double>::infinity() : a.speed,
              archive.config().sample_hz);
  for (std::uint64_t row = first; row < last && !g_interrupted;) {
    const std::uint64_t n = std::min<std::uint64_t>(3600, last - row);
    for (const auto& r : archive.read_range(row, n)) {
      pacer.wait_next();
      detector.push(r.frame);
    }
    row += n;
  }
  if (g.json) {
    json flags = json::array();
    for (const auto& f : detector.flags()) flags.push_back(flag_json(f));
    out << json{{"frames", last - first}, {"events", flags}}.dump() << '\n';
  } else {
    out << "replayed " << last - first << " frames\n";
    print_flags(out, detector.flags());
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PMU stream correlation, archive and bitmap query tool", "pmuidx"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Engine configuration file (key = value)");
  app.add_option("--data-dir", g.data_dir, "Archive directory")->capture_default_str();
  app.add_flag("--json", g.json, "Machine-readable output");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic PDC CSV stream with labels");
  gen_cmd->add_option("--frames", gen.frames, "Number of frames")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--start", gen.start, "First frame timestamp")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--inject", gen.inject, "kind:pmuN:+OFFSET:DURATION (repeatable)");
  gen_cmd->add_option("--out", gen.out, "CSV output, - for stdout")->capture_default_str();
  gen_cmd->add_option("--labels", gen.labels, "Label CSV (default: <out>.labels.csv)");

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Append a PDC CSV stream to the archive");
  ingest_cmd->add_option("--csv", ingest.csv, "Input CSV, - for stdin")->required();
  ingest_cmd->add_flag("--detect", ingest.detect, "Also run event detection and print flags");
  ingest_cmd->add_option("--batch", ingest.batch, "Frames per append")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  bool rebuild = false;
  auto* index_cmd = app.add_subcommand("index", "Show bitmap index statistics");
  index_cmd->add_flag("--rebuild", rebuild, "Rebuild the index from the segment files");

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Run a selection query");
  query_cmd->add_option("query", query.text, "Query text, e.g. \"pmu1.v = 533\"")->required();
  query_cmd->add_flag("--linear", query.linear, "Use the linear scan instead of the index");
  query_cmd->add_option("--limit", query.limit, "Rows to print")->capture_default_str();

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Bitmap index vs linear scan benchmark");
  bench_cmd->add_option("--rows", bench_args.rows, "Archive rows")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench_cmd->add_option("--suite", bench_args.suite, "Query suite")->capture_default_str();
  bench_cmd->add_option("--reps", bench_args.reps, "Repetitions per query")->capture_default_str();
  bench_cmd->add_flag("--warm", bench_args.warm, "Keep the page cache between runs");
  bench_cmd->add_option("--out", bench_args.out, "CSV output file (default stdout)");
  bench_cmd->add_option("--seed", bench_args.seed, "Generator seed")->capture_default_str();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "0 picks a free port")->capture_default_str();
  serve_cmd->add_option("--csv", serve.csv, "Feed this CSV as the live stream");
  serve_cmd->add_flag("--generate", serve.generate, "Feed a synthetic live stream");
  serve_cmd->add_option("--frames", serve.frames, "Frames to generate")->capture_default_str();
  serve_cmd->add_option("--seed", serve.seed)->capture_default_str();
  serve_cmd->add_option("--inject", serve.inject, "Injection for --generate (repeatable)");
  serve_cmd->add_option("--start", serve.start, "First generated timestamp");
  serve_cmd->add_option("--speed", serve.speed, "Live feed speed factor")->capture_default_str();
  serve_cmd->add_option("--duration", serve.duration, "Stop after this many seconds (0 = never)");
  serve_cmd->add_option("--stream-interval-ms", serve.stream_interval_ms,
                        "Minimum gap between stream messages per subscriber")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run an archived range through detection");
  replay_cmd->add_option("--from", replay.from)->required();
  replay_cmd->add_option("--to", replay.to)->required();
  replay_cmd->add_option("--speed", replay.speed, "Speed factor (0 = unpaced)")
      ->capture_default_str();

  std::vector<const char*> argv{"pmuidx"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (*gen_cmd) return cmd_gen(g, gen, out);
    if (*ingest_cmd) return cmd_ingest(g, ingest, out);
    if (*index_cmd) return cmd_index(g, rebuild, out);
    if (*query_cmd) return cmd_query(g, query, out);
    if (*bench_cmd) return cmd_bench(g, bench_args, out, err);
    if (*serve_cmd) return cmd_serve(g, serve, out);
    if (*replay_cmd) return cmd_replay(g, replay, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_validation() ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace pmuidx::cli
