#include "pmuidx/archive.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "binio.hpp"
#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigFile = "engine.conf";
constexpr const char* kFileMapFile = "filemap.bin";
constexpr const char* kIndexFile = "index.bin";
constexpr std::size_t kScanChunkBytes = 4u << 20;
constexpr std::size_t kPendingFlushBytes = 4u << 20;

std::string errno_text() { return std::strerror(errno); }

// Owns a file descriptor for the duration of one read.
class Fd {
 public:
  Fd(const fs::path& path, int flags, ReadStats* stats) : path_(path) {
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      if (errno == ENOENT) throw IntegrityError("missing segment file " + path.string());
      throw IoError("cannot open " + path.string() + ": " + errno_text());
    }
    if (stats != nullptr) ++stats->file_opens;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { ::close(fd_); }

  void pread_exact(std::uint8_t* dst, std::size_t n, std::uint64_t off, ReadStats* stats) const {
    std::size_t done = 0;
    while (done < n) {
      const ssize_t r = ::pread(fd_, dst + done, n - done, static_cast<off_t>(off + done));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw IoError("read failed on " + path_.string() + ": " + errno_text());
      }
      if (r == 0) throw IntegrityError("segment file truncated: " + path_.string());
      done += static_cast<std::size_t>(r);
    }
    if (stats != nullptr) {
      stats->bytes_read += n;
      ++stats->reads;
    }
  }
  int get() const { return fd_; }

 private:
  fs::path path_;
  int fd_ = -1;
};

void write_all(int fd, const std::uint8_t* p, std::size_t n, const fs::path& path) {
  while (n > 0) {
    const ssize_t w = ::write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw IoError("write failed on " + path.string() + ": " + errno_text());
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

std::string segment_name(std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "seg-" + digits + ".bin";
}

}  // namespace

// ---------------------------------------------------------------------------

FileMap::FileMap(std::vector<FileMapEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const std::uint64_t prev = i == 0 ? 0 : entries_[i - 1].total_row_count;
    if (entries_[i].total_row_count <= prev) {
      throw ValidationError("file map counts must strictly increase (entry " + std::to_string(i) +
                            ")");
    }
  }
}

FileLocation FileMap::locate(std::uint64_t position) const {
  if (position < 1 || position > rows()) {
    throw RangeError("position " + std::to_string(position) + " outside [1, " +
                     std::to_string(rows()) + "]");
  }
  const auto it = std::lower_bound(
      entries_.begin(), entries_.end(), position,
      [](const FileMapEntry& e, std::uint64_t p) { return e.total_row_count < p; });
  const std::size_t idx = static_cast<std::size_t>(it - entries_.begin());
  const std::uint64_t prev = idx == 0 ? 0 : entries_[idx - 1].total_row_count;
  return FileLocation{idx, it->file, position - prev - 1};
}

void FileMap::add_file(std::string file, std::uint64_t rows) {
  if (rows == 0) throw ValidationError("file map entry without rows");
  entries_.push_back(FileMapEntry{this->rows() + rows, std::move(file)});
}

void FileMap::extend_last(std::uint64_t rows) {
  if (entries_.empty()) throw StateError("file map has no entry to extend");
  entries_.back().total_row_count += rows;
}

std::vector<std::uint8_t> FileMap::serialize() const {
  std::vector<std::uint8_t> out;
  for (const auto& e : entries_) {
    detail::put_u64(out, e.total_row_count);
    detail::put_str(out, e.file);
  }
  return out;
}

FileMap FileMap::deserialize(std::span<const std::uint8_t> bytes) {
  std::vector<FileMapEntry> entries;
  std::size_t pos = 0;
  detail::Reader r(bytes.data(), bytes.size(), pos);
  while (pos < bytes.size()) {
    FileMapEntry e;
    e.total_row_count = r.u64();
    e.file = r.str();
    entries.push_back(std::move(e));
  }
  try {
    return FileMap(std::move(entries));
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
}

void FileMap::save(const fs::path& path) const {
  const auto bytes = serialize();
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

FileMap FileMap::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

Archive::Archive(Archive&& o) noexcept
    : dir_(std::move(o.dir_)),
      config_(std::move(o.config_)),
      row_bytes_(o.row_bytes_),
      file_map_(std::move(o.file_map_)),
      segments_(std::move(o.segments_)),
      index_(std::move(o.index_)),
      prev_phi_(std::move(o.prev_phi_)),
      has_prev_(o.has_prev_),
      first_ts_(o.first_ts_),
      last_ts_(o.last_ts_),
      tail_fd_(std::exchange(o.tail_fd_, -1)) {}

Archive& Archive::operator=(Archive&& o) noexcept {
  if (this != &o) {
    if (tail_fd_ >= 0) ::close(tail_fd_);
    dir_ = std::move(o.dir_);
    config_ = std::move(o.config_);
    row_bytes_ = o.row_bytes_;
    file_map_ = std::move(o.file_map_);
    segments_ = std::move(o.segments_);
    index_ = std::move(o.index_);
    prev_phi_ = std::move(o.prev_phi_);
    has_prev_ = o.has_prev_;
    first_ts_ = o.first_ts_;
    last_ts_ = o.last_ts_;
    tail_fd_ = std::exchange(o.tail_fd_, -1);
  }
  return *this;
}

Archive::~Archive() {
  if (tail_fd_ >= 0) ::close(tail_fd_);
}

bool Archive::exists(const fs::path& dir) { return fs::exists(dir / kConfigFile); }

Archive Archive::create(const fs::path& dir, const EngineConfig& config) {
  config.validate();
  if (exists(dir)) throw StateError("archive already exists in " + dir.string());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / kConfigFile);
    out << render_config(config);
    if (!out) throw IoError("cannot write " + (dir / kConfigFile).string());
  }
  Archive a;
  a.dir_ = dir;
  a.config_ = config;
  a.row_bytes_ = 8 + 16 * config.pmu_count;
  a.index_ = BitmapIndex(config.bin_layout());
  a.prev_phi_.assign(config.pmu_count, 0.0);
  a.sync();
  return a;
}

Archive Archive::open(const fs::path& dir) {
  if (!exists(dir)) throw StateError("no archive in " + dir.string());
  Archive a;
  a.dir_ = dir;
  a.config_ = load_config(dir / kConfigFile);
  a.row_bytes_ = 8 + 16 * a.config_.pmu_count;
  a.prev_phi_.assign(a.config_.pmu_count, 0.0);

  // The segments are the ground truth; the sidecars are caches of them.
  std::vector<std::string> names;
  for (const auto& de : fs::directory_iterator(dir)) {
    const std::string n = de.path().filename().string();
    if (n.size() == 14 && n.rfind("seg-", 0) == 0 && n.ends_with(".bin")) names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  std::uint64_t total = 0;
  FileMap scanned;
  for (const auto& n : names) {
    const std::uint64_t size = fs::file_size(dir / n);
    if (size % a.row_bytes_ != 0) {
      throw IntegrityError("segment " + (dir / n).string() + " holds a partial row");
    }
    const std::uint64_t rows = size / a.row_bytes_;
    if (rows == 0) continue;
    a.segments_.push_back(Segment{n, total, rows});
    scanned.add_file(n, rows);
    total += rows;
  }

  const fs::path fm = dir / kFileMapFile;
  bool stale_map = true;
  if (fs::exists(fm)) {
    FileMap stored = FileMap::load(fm);
    stale_map = !(stored == scanned);
    for (const auto& e : stored.entries()) {
      if (!fs::exists(dir / e.file)) {
        throw IntegrityError("missing segment file " + (dir / e.file).string());
      }
    }
  }
  a.file_map_ = std::move(scanned);

  bool rebuild = true;
  const fs::path ix = dir / kIndexFile;
  if (fs::exists(ix)) {
    BitmapIndex loaded = BitmapIndex::load(ix);
    if (loaded.rows() == total && loaded.layout() == a.config_.bin_layout()) {
      a.index_ = std::move(loaded);
      rebuild = false;
    }
  }
  if (rebuild) a.rebuild_from_segments();
  // Write back whatever had to be reconstructed.
  if (rebuild || stale_map) a.sync();

  if (total > 0) {
    a.first_ts_ = a.read_ts(0);
    const auto last = a.read_range(total - 1, 1);
    a.last_ts_ = last.front().frame.ts;
    for (std::size_t p = 0; p < a.config_.pmu_count; ++p) {
      a.prev_phi_[p] = last.front().frame.samples[p].phi;
    }
    a.has_prev_ = true;
  }
  return a;
}

void Archive::rebuild_from_segments() {
  index_ = BitmapIndex(config_.bin_layout());
  std::vector<double> values;
  scan([&](std::uint64_t, const FrameRecord& f, std::span<const double> deltas) {
    row_values(index_.layout(), f, deltas, values);
    index_.append_values(values);
  });
}

fs::path Archive::segment_path(std::size_t i) const { return dir_ / segments_.at(i).file; }

void Archive::check_sample_count(const FrameRecord& f) const {
  if (f.samples.size() != config_.pmu_count) {
    throw ValidationError("frame has " + std::to_string(f.samples.size()) + " samples, expected " +
                          std::to_string(config_.pmu_count));
  }
}

void Archive::encode_row(const FrameRecord& f, std::uint8_t* p) const {
  detail::store_u64(p, static_cast<std::uint64_t>(f.ts.ms));
  p += 8;
  for (const auto& s : f.samples) {
    detail::store_f64(p, s.v);
    detail::store_f64(p + 8, s.phi);
    p += 16;
  }
}

void Archive::decode_row(const std::uint8_t* p, FrameRecord& out) const {
  out.ts = Timestamp{static_cast<std::int64_t>(detail::load_u64(p))};
  p += 8;
  out.samples.resize(config_.pmu_count);
  for (auto& s : out.samples) {
    s.v = detail::load_f64(p);
    s.phi = detail::load_f64(p + 8);
    p += 16;
  }
}

std::pair<std::uint64_t, std::uint64_t> Archive::append_frames(
    std::span<const FrameRecord> frames) {
  const std::uint64_t first = rows();
  std::vector<std::uint8_t> pending;
  std::vector<double> values;
  std::vector<double> deltas(config_.pmu_count);

  const auto flush = [&] {
    if (pending.empty()) return;
    const fs::path path = segment_path(segments_.size() - 1);
    if (tail_fd_ < 0) {
      tail_fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
      if (tail_fd_ < 0) throw IoError("cannot open " + path.string() + ": " + errno_text());
    }
    write_all(tail_fd_, pending.data(), pending.size(), path);
    pending.clear();
  };

  try {
    for (const auto& f : frames) {
      check_sample_count(f);
      if (last_ts_ && f.ts <= *last_ts_) {
        throw OrderingError("frame at " + format_timestamp(f.ts) + " is not after the archive tail " +
                            format_timestamp(*last_ts_));
      }
      for (std::size_t p = 0; p < config_.pmu_count; ++p) {
        deltas[p] = has_prev_ ? phase_delta(f.samples[p].phi, prev_phi_[p]) : 0.0;
      }
      row_values(index_.layout(), f, deltas, values);
      index_.append_values(values);

      if (segments_.empty() || segments_.back().rows >= config_.segment_rows) {
        flush();
        if (tail_fd_ >= 0) {
          ::close(tail_fd_);
          tail_fd_ = -1;
        }
        const std::string name = segment_name(segments_.size());
        segments_.push_back(Segment{name, rows(), 1});
        file_map_.add_file(name, 1);
      } else {
        ++segments_.back().rows;
        file_map_.extend_last(1);
      }
      const std::size_t at = pending.size();
      pending.resize(at + row_bytes_);
      encode_row(f, pending.data() + at);
      if (pending.size() >= kPendingFlushBytes) flush();

      for (std::size_t p = 0; p < config_.pmu_count; ++p) prev_phi_[p] = f.samples[p].phi;
      has_prev_ = true;
      if (!first_ts_) first_ts_ = f.ts;
      last_ts_ = f.ts;
    }
    flush();
  } catch (...) {
    flush();
    throw;
  }
  return {first, rows()};
}

void Archive::sync() const {
  if (tail_fd_ >= 0) ::fdatasync(tail_fd_);
  file_map_.save(dir_ / kFileMapFile);
  index_.save(dir_ / kIndexFile);
}

void Archive::read_rows_raw(std::uint64_t first, std::uint64_t count,
                            std::vector<std::uint8_t>& buf, ReadStats* stats) const {
  buf.resize(count * row_bytes_);
  std::uint64_t done = 0;
  while (done < count) {
    const FileLocation loc = file_map_.locate(first + done + 1);
    const Segment& seg = segments_[loc.entry];
    const std::uint64_t n = std::min(count - done, seg.rows - loc.offset);
    Fd fd(dir_ / seg.file, O_RDONLY, stats);
    fd.pread_exact(buf.data() + done * row_bytes_, n * row_bytes_, loc.offset * row_bytes_, stats);
    done += n;
  }
}

Timestamp Archive::read_ts(std::uint64_t row) const {
  const FileLocation loc = file_map_.locate(row + 1);
  Fd fd(dir_ / segments_[loc.entry].file, O_RDONLY, nullptr);
  std::uint8_t b[8];
  fd.pread_exact(b, 8, loc.offset * row_bytes_, nullptr);
  return Timestamp{static_cast<std::int64_t>(detail::load_u64(b))};
}

std::vector<ArchivedRow> Archive::read_range(std::uint64_t first, std::uint64_t count,
                                             bool with_deltas, ReadStats* stats) const {
  if (first > rows() || count > rows() - first) {
    throw RangeError("rows [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") outside the archive of " + std::to_string(rows()) + " rows");
  }
  std::vector<ArchivedRow> out;
  if (count == 0) return out;
  const bool lead = with_deltas && first > 0;
  std::vector<std::uint8_t> buf;
  read_rows_raw(first - (lead ? 1 : 0), count + (lead ? 1 : 0), buf, stats);
  FrameRecord prev;
  const std::uint8_t* p = buf.data();
  if (lead) {
    decode_row(p, prev);
    p += row_bytes_;
  }
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i, p += row_bytes_) {
    ArchivedRow r;
    r.row = first + i;
    decode_row(p, r.frame);
    if (with_deltas) {
      r.deltas.assign(config_.pmu_count, 0.0);
      const FrameRecord* before = i > 0 ? &out.back().frame : (lead ? &prev : nullptr);
      if (before != nullptr) {
        for (std::size_t k = 0; k < config_.pmu_count; ++k) {
          r.deltas[k] = phase_delta(r.frame.samples[k].phi, before->samples[k].phi);
        }
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ArchivedRow> Archive::fetch(const WahVector& hits, bool with_deltas,
                                        ReadStats* stats) const {
  if (hits.size() != rows()) {
    throw ValidationError("result vector has " + std::to_string(hits.size()) +
                          " bits, archive has " + std::to_string(rows()) + " rows");
  }
  // Contiguous runs of set bits, split at segment boundaries.
  struct Run {
    std::uint64_t first;
    std::uint64_t count;
  };
  std::vector<Run> runs;
  std::size_t seg = 0;
  hits.for_each_set([&](std::uint64_t pos) {
    while (pos >= segments_[seg].first_row + segments_[seg].rows) ++seg;
    if (!runs.empty() && runs.back().first + runs.back().count == pos &&
        pos != segments_[seg].first_row) {
      ++runs.back().count;
    } else {
      runs.push_back(Run{pos, 1});
    }
  });

  std::vector<ArchivedRow> out;
  std::vector<std::uint8_t> buf;
  FrameRecord prev;
  std::optional<std::uint64_t> prev_row;
  std::size_t open_seg = SIZE_MAX;
  std::optional<Fd> fd;
  for (const Run& run : runs) {
    const FileLocation loc = file_map_.locate(run.first + 1);
    const Segment& s = segments_[loc.entry];
    if (loc.entry != open_seg) {
      fd.reset();
      fd.emplace(dir_ / s.file, O_RDONLY, stats);
      open_seg = loc.entry;
    }
    // One extra leading row supplies the phase delta of the run's first row.
    const bool need_prev = with_deltas && run.first > 0 && prev_row != run.first - 1;
    const bool lead = need_prev && loc.offset > 0;
    if (need_prev && !lead) {
      std::vector<std::uint8_t> one;
      read_rows_raw(run.first - 1, 1, one, stats);
      decode_row(one.data(), prev);
    }
    const std::uint64_t n = run.count + (lead ? 1 : 0);
    buf.resize(n * row_bytes_);
    fd->pread_exact(buf.data(), buf.size(), (loc.offset - (lead ? 1 : 0)) * row_bytes_, stats);
    const std::uint8_t* p = buf.data();
    if (lead) {
      decode_row(p, prev);
      p += row_bytes_;
    }
    const bool have_prev = with_deltas && run.first > 0;
    for (std::uint64_t i = 0; i < run.count; ++i, p += row_bytes_) {
      ArchivedRow r;
      r.row = run.first + i;
      decode_row(p, r.frame);
      if (with_deltas) {
        r.deltas.assign(config_.pmu_count, 0.0);
        const FrameRecord* before = i > 0 ? &out.back().frame : (have_prev ? &prev : nullptr);
        if (before != nullptr) {
          for (std::size_t k = 0; k < config_.pmu_count; ++k) {
            r.deltas[k] = phase_delta(r.frame.samples[k].phi, before->samples[k].phi);
          }
        }
      }
      out.push_back(std::move(r));
    }
    if (with_deltas) {
      prev = out.back().frame;
      prev_row = out.back().row;
    }
  }
  return out;
}

void Archive::scan(
    const std::function<void(std::uint64_t, const FrameRecord&, std::span<const double>)>& f,
    ReadStats* stats) const {
  FrameRecord frame;
  std::vector<double> prev(config_.pmu_count, 0.0);
  std::vector<double> deltas(config_.pmu_count, 0.0);
  bool have_prev = false;
  std::vector<std::uint8_t> buf;
  const std::uint64_t chunk_rows = std::max<std::uint64_t>(1, kScanChunkBytes / row_bytes_);
  for (const Segment& s : segments_) {
    Fd fd(dir_ / s.file, O_RDONLY, stats);
    for (std::uint64_t off = 0; off < s.rows; off += chunk_rows) {
      const std::uint64_t n = std::min(chunk_rows, s.rows - off);
      buf.resize(n * row_bytes_);
      fd.pread_exact(buf.data(), buf.size(), off * row_bytes_, stats);
      const std::uint8_t* p = buf.data();
      for (std::uint64_t i = 0; i < n; ++i, p += row_bytes_) {
        decode_row(p, frame);
        for (std::size_t k = 0; k < config_.pmu_count; ++k) {
          deltas[k] = have_prev ? phase_delta(frame.samples[k].phi, prev[k]) : 0.0;
          prev[k] = frame.samples[k].phi;
        }
        have_prev = true;
        f(s.first_row + off + i, frame, deltas);
      }
    }
  }
}

std::uint64_t Archive::lower_bound(Timestamp ts) const {
  std::uint64_t lo = 0;
  std::uint64_t hi = rows();
  while (lo < hi) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (read_ts(mid) < ts) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

bool Archive::drop_page_cache() const {
#if defined(POSIX_FADV_DONTNEED)
  bool ok = true;
  for (const Segment& s : segments_) {
    Fd fd(dir_ / s.file, O_RDONLY, nullptr);
    ::fdatasync(fd.get());
    ok = ::posix_fadvise(fd.get(), 0, 0, POSIX_FADV_DONTNEED) == 0 && ok;
  }
  return ok;
#else
  return false;
#endif
}

}  // namespace pmuidx
