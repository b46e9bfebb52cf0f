#include "pmuidx/bitmap_index.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "binio.hpp"
#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace {

constexpr char kMagic[8] = {'P', 'M', 'U', 'B', 'I', 'D', 'X', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

double DeltaTracker::next(std::size_t pmu, double phi) {
  auto& prev = prev_.at(pmu);
  const double d = prev ? phase_delta(phi, *prev) : 0.0;
  prev = phi;
  return d;
}

void row_values(const BinLayout& layout, const FrameRecord& frame, std::span<const double> deltas,
                std::vector<double>& out) {
  const TimeParts t = decompose_time(frame.ts);
  const auto& attrs = layout.attributes();
  out.resize(attrs.size());
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    const Attribute& a = attrs[i];
    double v = 0.0;
    switch (a.field) {
      case Field::Year: v = t.year; break;
      case Field::Month: v = t.month; break;
      case Field::Day: v = t.day; break;
      case Field::Hour: v = t.hour; break;
      case Field::Minute: v = t.minute; break;
      case Field::Second: v = t.second; break;
      case Field::Decisecond: v = t.decisecond; break;
      case Field::Phase: v = frame.samples.at(static_cast<std::size_t>(a.pmu)).phi; break;
      case Field::Voltage: v = frame.samples.at(static_cast<std::size_t>(a.pmu)).v; break;
      case Field::Delta: v = deltas[static_cast<std::size_t>(a.pmu)]; break;
      case Field::Generic:
        throw ValidationError("attribute '" + a.name + "' cannot be filled from a frame");
    }
    out[i] = v;
  }
}

std::vector<double> row_values(const BinLayout& layout, const FrameRecord& frame,
                               DeltaTracker& tracker) {
  if (frame.samples.size() != tracker.pmu_count()) {
    throw ValidationError("frame has " + std::to_string(frame.samples.size()) +
                          " samples, tracker expects " + std::to_string(tracker.pmu_count()));
  }
  std::vector<double> deltas(frame.samples.size());
  for (std::size_t p = 0; p < deltas.size(); ++p) deltas[p] = tracker.next(p, frame.samples[p].phi);
  std::vector<double> out;
  row_values(layout, frame, deltas, out);
  return out;
}

BitmapIndex::BitmapIndex(BinLayout layout)
    : layout_(std::move(layout)), columns_(layout_.total_bins()) {}

std::uint64_t BitmapIndex::append_values(std::span<const double> values) {
  if (closed_) throw StateError("bitmap index is closed for append");
  const auto& attrs = layout_.attributes();
  if (values.size() != attrs.size()) {
    throw ValidationError("row has " + std::to_string(values.size()) + " values, layout has " +
                          std::to_string(attrs.size()) + " attributes");
  }
  // Resolve every bin first so a bad value leaves the index untouched.
  scratch_.resize(attrs.size());
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    scratch_[i] = attrs[i].first_bin + attrs[i].bin_of(values[i]);
  }
  for (const std::size_t col : scratch_) {
    WahVector& c = columns_[col];
    c.pad_to(rows_);
    c.append(true);
  }
  return rows_++;
}

std::uint64_t BitmapIndex::append_frame(const FrameRecord& frame, DeltaTracker& tracker) {
  if (closed_) throw StateError("bitmap index is closed for append");
  const std::vector<double> values = row_values(layout_, frame, tracker);
  return append_values(values);
}

WahVector BitmapIndex::column(std::size_t bin) const {
  WahVector c = columns_.at(bin);
  c.pad_to(rows_);
  return c;
}

void BitmapIndex::seal() {
  for (auto& c : columns_) c.pad_to(rows_);
}

WahVector BitmapIndex::evaluate_node(const BinExpr& e, bool& exact, std::size_t& touched) const {
  if (e.kind == BinExpr::Kind::Leaf) {
    if (e.attribute >= layout_.attributes().size()) {
      throw ValidationError("expression references unknown attribute " + std::to_string(e.attribute));
    }
    const Attribute& a = layout_.at(e.attribute);
    bool in_domain = false;
    for (const auto& d : a.domain()) in_domain = in_domain || d.intersects(e.range);
    if (!in_domain) {
      throw RangeError("range does not intersect the domain of attribute '" + a.name + "'");
    }
    WahVector acc;
    acc.pad_to(rows_);
    const std::size_t n = a.bin_count();
    for (std::size_t k = 0; k < n; ++k) {
      const Bin bin = a.bin(k);
      bool hit = false;
      bool covered = true;
      for (const auto& part : bin.parts) {
        if (part.intersects(e.range)) hit = true;
        if (!e.range.covers(part)) covered = false;
      }
      if (!hit) continue;
      ++touched;
      if (!bin.exact && !covered) exact = false;
      acc = wah_or(acc, column(a.first_bin + k));
    }
    return acc;
  }
  if (e.children.empty()) throw ValidationError("boolean node without operands");
  WahVector acc = evaluate_node(e.children.front(), exact, touched);
  for (std::size_t i = 1; i < e.children.size(); ++i) {
    const WahVector rhs = evaluate_node(e.children[i], exact, touched);
    acc = e.kind == BinExpr::Kind::And ? wah_and(acc, rhs) : wah_or(acc, rhs);
  }
  return acc;
}

ResultBitVector BitmapIndex::evaluate(const BinExpr& expr) const {
  ResultBitVector r;
  r.bits = evaluate_node(expr, r.exact, r.bins_touched);
  r.hits = r.bits.count();
  return r;
}

std::size_t BitmapIndex::compressed_bytes() const {
  std::size_t total = 0;
  for (const auto& c : columns_) {
    // Size as saved, i.e. padded to the row count.
    if (c.size() < rows_) {
      WahVector padded = c;
      padded.pad_to(rows_);
      total += padded.compressed_bytes();
    } else {
      total += c.compressed_bytes();
    }
  }
  return total;
}

std::uint64_t BitmapIndex::uncompressed_bytes() const {
  return (rows_ * columns_.size() + 7) / 8;
}

void BitmapIndex::save(const std::filesystem::path& path) const {
  using namespace detail;
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  std::vector<std::uint8_t> layout_blob;
  layout_.serialize(layout_blob);
  put_u64(out, layout_blob.size());
  out.insert(out.end(), layout_blob.begin(), layout_blob.end());
  put_u64(out, rows_);
  put_u64(out, columns_.size());

  std::vector<WahVector> padded;
  padded.reserve(columns_.size());
  for (std::size_t i = 0; i < columns_.size(); ++i) padded.push_back(column(i));

  std::uint64_t offset = 0;
  put_u64(out, offset);
  for (const auto& c : padded) {
    offset += c.words().size();
    put_u64(out, offset);
  }
  for (const auto& c : padded) {
    put_u32(out, c.active_word());
    put_u8(out, static_cast<std::uint8_t>(c.active_bits()));
  }
  out.reserve(out.size() + offset * 4 + 4);
  for (const auto& c : padded) {
    for (const std::uint32_t w : c.words()) put_u32(out, w);
  }
  put_u32(out, crc_of(out.data(), out.size()));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write index file " + tmp.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to index file " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace index file " + path.string() + ": " + ec.message());
}

BitmapIndex BitmapIndex::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open index file " + path.string());
  const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)),
                                       std::istreambuf_iterator<char>());
  const std::string where = " in index file " + path.string();
  if (data.size() < sizeof kMagic + 8 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("bad magic" + where);
  }
  const std::uint32_t stored_crc = detail::load_u32(data.data() + data.size() - 4);
  if (crc_of(data.data(), data.size() - 4) != stored_crc) throw FormatError("checksum mismatch" + where);

  try {
    std::size_t pos = sizeof kMagic;
    const std::size_t body = data.size() - 4;
    detail::Reader in(data.data(), body, pos);
    if (in.u32() != kVersion) throw FormatError("unsupported version");
    const std::uint64_t layout_len = in.u64();
    in.need(layout_len);
    std::size_t layout_pos = pos;
    BinLayout layout = BinLayout::deserialize(data.data(), pos + layout_len, layout_pos);
    if (layout_pos != pos + layout_len) throw FormatError("layout length mismatch");
    pos += layout_len;

    BitmapIndex idx(std::move(layout));
    idx.rows_ = in.u64();
    const std::uint64_t n = in.u64();
    if (n != idx.columns_.size()) throw FormatError("bin count disagrees with layout");
    in.need((n + 1) * 8 + n * 5);
    std::vector<std::uint64_t> offsets(n + 1);
    for (auto& o : offsets) o = in.u64();
    std::vector<std::pair<std::uint32_t, unsigned>> active(n);
    for (auto& a : active) {
      a.first = in.u32();
      a.second = in.u8();
    }
    const std::size_t words_at = pos;
    if (offsets.front() != 0 || body - words_at != offsets.back() * 4) {
      throw FormatError("word table size mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (offsets[i + 1] < offsets[i]) throw FormatError("offsets not monotone");
      std::vector<std::uint32_t> words(offsets[i + 1] - offsets[i]);
      for (std::size_t k = 0; k < words.size(); ++k) {
        words[k] = detail::load_u32(data.data() + words_at + (offsets[i] + k) * 4);
      }
      idx.columns_[i] = WahVector::from_parts(std::move(words), active[i].first, active[i].second);
      if (idx.columns_[i].size() != idx.rows_) throw FormatError("column length differs from row count");
    }
    return idx;
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + where);
  }
}

bool operator==(const BitmapIndex& a, const BitmapIndex& b) {
  if (!(a.layout_ == b.layout_) || a.rows_ != b.rows_ || a.columns_.size() != b.columns_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.columns_.size(); ++i) {
    if (!(a.column(i) == b.column(i))) return false;
  }
  return true;
}

}  // namespace pmuidx
