#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmuidx/bitmap_index.hpp"
#include "pmuidx/config.hpp"
#include "pmuidx/domain.hpp"
#include "pmuidx/wah.hpp"

namespace pmuidx {

// One File Map row: `total_row_count` rows are stored in this file and all
// files before it.
struct FileMapEntry {
  std::uint64_t total_row_count = 0;
  std::string file;  // relative to the archive directory

  friend bool operator==(const FileMapEntry&, const FileMapEntry&) = default;
};

struct FileLocation {
  std::size_t entry = 0;
  std::string file;
  std::uint64_t offset = 0;  // row within the file, 0-based
};

// Position -> file mapping by upper-bound search over cumulative counts.
class FileMap {
 public:
  FileMap() = default;
  explicit FileMap(std::vector<FileMapEntry> entries);

  const std::vector<FileMapEntry>& entries() const { return entries_; }
  std::uint64_t rows() const { return entries_.empty() ? 0 : entries_.back().total_row_count; }

  // `position` is the 1-based ordinal of a row. Throws RangeError outside
  // [1, rows()].
  FileLocation locate(std::uint64_t position) const;

  // Opens a new file entry holding `rows` rows.
  void add_file(std::string file, std::uint64_t rows);
  // Grows the last entry by `rows`.
  void extend_last(std::uint64_t rows);

  // Sidecar: repeated (u64 total_row_count, u32 length, UTF-8 path).
  std::vector<std::uint8_t> serialize() const;
  static FileMap deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static FileMap load(const std::filesystem::path& path);

  friend bool operator==(const FileMap&, const FileMap&) = default;

 private:
  std::vector<FileMapEntry> entries_;
};

struct ArchivedRow {
  std::uint64_t row = 0;  // 0-based global row id
  FrameRecord frame;
  std::vector<double> deltas;  // per-PMU |phi - phi_prev|; empty unless requested

  friend bool operator==(const ArchivedRow&, const ArchivedRow&) = default;
};

// Bytes and files touched by reads; used by the query reports.
struct ReadStats {
  std::uint64_t bytes_read = 0;
  std::uint64_t file_opens = 0;
  std::uint64_t reads = 0;
};

// Append-only record store. A directory holds
//   engine.conf        configuration the archive was created with
//   seg-NNNNNN.bin     fixed-width rows: i64 epoch ms + P x (f64 v, f64 phi)
//   filemap.bin        File Map sidecar (rebuilt from the segments if missing)
//   index.bin          bitmap index over every row
// Every appended row also goes into the bitmap index. sync() persists the
// File Map and the index; segment bytes are written by append_frames itself.
//
// One appender at a time. Reads are const and use positional I/O, so they
// may run concurrently with each other but not with an append.
class Archive {
 public:
  static Archive create(const std::filesystem::path& dir, const EngineConfig& config);
  // Rebuilds the File Map and the index from the segments when either is
  // missing or disagrees with them.
  static Archive open(const std::filesystem::path& dir);
  static bool exists(const std::filesystem::path& dir);

  Archive(Archive&&) noexcept;
  Archive& operator=(Archive&&) noexcept;
  ~Archive();

  const EngineConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }
  const FileMap& file_map() const { return file_map_; }
  const BitmapIndex& index() const { return index_; }
  std::uint64_t rows() const { return file_map_.rows(); }
  std::size_t row_bytes() const { return row_bytes_; }
  std::optional<Timestamp> first_ts() const { return first_ts_; }
  std::optional<Timestamp> last_ts() const { return last_ts_; }

  // Returns the ids [first, last) of the new rows. Throws OrderingError
  // when a frame is not later than the archive tail and ValidationError or
  // RangeError when it cannot be binned; nothing of the failing frame is
  // written, frames before it are.
  std::pair<std::uint64_t, std::uint64_t> append_frames(std::span<const FrameRecord> frames);
  void sync() const;

  // Rows at the set positions of `hits` in position order. Consecutive hits
  // in one file are read with a single positional read.
  std::vector<ArchivedRow> fetch(const WahVector& hits, bool with_deltas,
                                 ReadStats* stats = nullptr) const;
  // Rows [first, first + count).
  std::vector<ArchivedRow> read_range(std::uint64_t first, std::uint64_t count,
                                      bool with_deltas = false, ReadStats* stats = nullptr) const;
  // Streams every row in order. The frame and deltas are reused between
  // calls.
  void scan(const std::function<void(std::uint64_t, const FrameRecord&, std::span<const double>)>& f,
            ReadStats* stats = nullptr) const;

  // First row with ts >= `ts`, or rows() if none.
  std::uint64_t lower_bound(Timestamp ts) const;

  // Asks the kernel to drop cached pages of every segment so the next read
  // goes to the device. Best effort; returns false when unsupported.
  bool drop_page_cache() const;

 private:
  Archive() = default;
  struct Segment {
    std::string file;
    std::uint64_t first_row = 0;
    std::uint64_t rows = 0;
  };

  std::filesystem::path segment_path(std::size_t i) const;
  void decode_row(const std::uint8_t* p, FrameRecord& out) const;
  void encode_row(const FrameRecord& f, std::uint8_t* p) const;
  Timestamp read_ts(std::uint64_t row) const;
  void read_rows_raw(std::uint64_t first, std::uint64_t count, std::vector<std::uint8_t>& buf,
                     ReadStats* stats) const;
  void rebuild_from_segments();
  void check_sample_count(const FrameRecord& f) const;

  std::filesystem::path dir_;
  EngineConfig config_;
  std::size_t row_bytes_ = 0;
  FileMap file_map_;
  std::vector<Segment> segments_;
  BitmapIndex index_;
  std::vector<double> prev_phi_;
  bool has_prev_ = false;
  std::optional<Timestamp> first_ts_;
  std::optional<Timestamp> last_ts_;
  int tail_fd_ = -1;
};

}  // namespace pmuidx
