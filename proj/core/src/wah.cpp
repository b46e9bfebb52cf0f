#include "pmuidx/wah.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "pmuidx/errors.hpp"

namespace pmuidx {

namespace {

// Walks a canonical word sequence one run at a time.
class RunCursor {
 public:
  explicit RunCursor(const std::vector<std::uint32_t>& words) : words_(words) { load(); }

  bool done() const { return idx_ >= words_.size(); }
  bool is_fill() const { return fill_; }
  bool fill_bit() const { return fill_bit_; }
  std::uint64_t remaining() const { return remaining_; }
  // Literal payload of the current group (all-ones/all-zeros for fills).
  std::uint32_t literal() const {
    if (fill_) return fill_bit_ ? WahVector::kLiteralMask : 0u;
    return words_[idx_];
  }

  void advance(std::uint64_t groups) {
    while (groups > 0 && !done()) {
      const std::uint64_t take = std::min(groups, remaining_);
      remaining_ -= take;
      groups -= take;
      if (remaining_ == 0) {
        ++idx_;
        load();
      }
    }
  }

 private:
  void load() {
    if (done()) return;
    const std::uint32_t w = words_[idx_];
    fill_ = (w & WahVector::kFillFlag) != 0;
    if (fill_) {
      fill_bit_ = (w & WahVector::kFillValue) != 0;
      remaining_ = w & WahVector::kCountMask;
    } else {
      remaining_ = 1;
    }
  }

  const std::vector<std::uint32_t>& words_;
  std::size_t idx_ = 0;
  bool fill_ = false;
  bool fill_bit_ = false;
  std::uint64_t remaining_ = 0;
};

enum class Op { And, Or };

WahVector binary_op(const WahVector& a, const WahVector& b, Op op);

}  // namespace

// Grants binary_op access to the private append primitives.
class WahBuilder {
 public:
  static void fill(WahVector& v, bool bit, std::uint64_t groups) {
    v.push_fill(bit, groups);
    v.size_ += groups * WahVector::kGroupBits;
  }
  static void group(WahVector& v, std::uint32_t literal) {
    v.push_group(literal);
    v.size_ += WahVector::kGroupBits;
  }
  static void tail(WahVector& v, std::uint32_t active, unsigned bits) {
    v.active_ = active;
    v.active_bits_ = bits;
    v.size_ += bits;
  }
};

void WahVector::push_fill(bool bit, std::uint64_t groups) {
  if (groups == 0) return;
  if (!words_.empty()) {
    std::uint32_t& last = words_.back();
    if ((last & kFillFlag) && (((last & kFillValue) != 0) == bit)) {
      const std::uint64_t total = (last & kCountMask) + groups;
      if (total > kCountMask) throw StateError("WAH fill run exceeds 2^30 - 1 groups");
      last = (last & ~kCountMask) | static_cast<std::uint32_t>(total);
      return;
    }
  }
  if (groups > kCountMask) throw StateError("WAH fill run exceeds 2^30 - 1 groups");
  words_.push_back(kFillFlag | (bit ? kFillValue : 0u) | static_cast<std::uint32_t>(groups));
}

void WahVector::push_group(std::uint32_t literal) {
  literal &= kLiteralMask;
  if (literal == 0) {
    push_fill(false, 1);
  } else if (literal == kLiteralMask) {
    push_fill(true, 1);
  } else {
    words_.push_back(literal);
  }
}

void WahVector::append(bool bit) {
  if (bit) active_ |= (1u << active_bits_);
  ++active_bits_;
  ++size_;
  if (active_bits_ == kGroupBits) {
    push_group(active_);
    active_ = 0;
    active_bits_ = 0;
  }
}

void WahVector::append_run(bool bit, std::uint64_t n) {
  if (n == 0) return;
  size_ += n;
  if (active_bits_ > 0) {
    const unsigned take = static_cast<unsigned>(std::min<std::uint64_t>(n, kGroupBits - active_bits_));
    if (bit) {
      const std::uint32_t mask = ((take == 32 ? 0u : (1u << take)) - 1u) << active_bits_;
      active_ |= mask;
    }
    active_bits_ += take;
    n -= take;
    if (active_bits_ < kGroupBits) return;
    push_group(active_);
    active_ = 0;
    active_bits_ = 0;
  }
  push_fill(bit, n / kGroupBits);
  const unsigned rest = static_cast<unsigned>(n % kGroupBits);
  if (rest > 0) {
    active_ = bit ? ((1u << rest) - 1u) : 0u;
    active_bits_ = rest;
  }
}

void WahVector::pad_to(std::uint64_t n) {
  if (n > size_) append_run(false, n - size_);
}

WahVector WahVector::from_bits(const std::vector<bool>& bits) {
  WahVector v;
  for (bool b : bits) v.append(b);
  return v;
}

WahVector WahVector::from_parts(std::vector<std::uint32_t> words, std::uint32_t active_word,
                                unsigned active_bits) {
  if (active_bits >= kGroupBits) throw FormatError("WAH active word holds 31 or more bits");
  if (active_bits < 32 && (active_word >> active_bits) != 0) {
    throw FormatError("WAH active word has bits beyond its length");
  }
  WahVector v;
  std::uint64_t groups = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::uint32_t w = words[i];
    if (w & kFillFlag) {
      if ((w & kCountMask) == 0) throw FormatError("WAH fill word with zero count");
      if (i > 0 && (words[i - 1] & kFillFlag) &&
          ((words[i - 1] & kFillValue) == (w & kFillValue))) {
        throw FormatError("adjacent WAH fills share a fill value");
      }
      groups += w & kCountMask;
    } else {
      if (w == 0 || w == kLiteralMask) throw FormatError("non-canonical WAH literal");
      ++groups;
    }
  }
  v.words_ = std::move(words);
  v.active_ = active_word;
  v.active_bits_ = active_bits;
  v.size_ = groups * kGroupBits + active_bits;
  return v;
}

std::uint64_t WahVector::count() const {
  std::uint64_t c = 0;
  for (const std::uint32_t w : words_) {
    if (w & kFillFlag) {
      if (w & kFillValue) c += static_cast<std::uint64_t>(w & kCountMask) * kGroupBits;
    } else {
      c += static_cast<std::uint64_t>(std::popcount(w));
    }
  }
  return c + static_cast<std::uint64_t>(std::popcount(active_));
}

bool WahVector::test(std::uint64_t pos) const {
  if (pos >= size_) throw RangeError("bit position " + std::to_string(pos) + " out of range");
  std::uint64_t start = 0;
  for (const std::uint32_t w : words_) {
    if (w & kFillFlag) {
      const std::uint64_t n = static_cast<std::uint64_t>(w & kCountMask) * kGroupBits;
      if (pos < start + n) return (w & kFillValue) != 0;
      start += n;
    } else {
      if (pos < start + kGroupBits) return ((w >> (pos - start)) & 1u) != 0;
      start += kGroupBits;
    }
  }
  return ((active_ >> (pos - start)) & 1u) != 0;
}

std::vector<bool> WahVector::to_bits() const {
  std::vector<bool> out(size_, false);
  for_each_set([&](std::uint64_t p) { out[p] = true; });
  return out;
}

std::vector<std::uint64_t> WahVector::set_positions() const {
  std::vector<std::uint64_t> out;
  for_each_set([&](std::uint64_t p) { out.push_back(p); });
  return out;
}

namespace {

WahVector binary_op(const WahVector& a, const WahVector& b, Op op) {
  if (a.size() != b.size()) {
    throw ValidationError("WAH operands differ in length: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  // A fill with this value decides the result regardless of the other side.
  const bool absorbing = (op == Op::Or);

  WahVector out;
  RunCursor x(a.words());
  RunCursor y(b.words());
  while (!x.done() && !y.done()) {
    if (x.is_fill() && y.is_fill()) {
      const std::uint64_t n = std::min(x.remaining(), y.remaining());
      const bool bit = op == Op::And ? (x.fill_bit() && y.fill_bit()) : (x.fill_bit() || y.fill_bit());
      WahBuilder::fill(out, bit, n);
      x.advance(n);
      y.advance(n);
    } else if ((x.is_fill() && x.fill_bit() == absorbing) ||
               (y.is_fill() && y.fill_bit() == absorbing)) {
      RunCursor& f = x.is_fill() && x.fill_bit() == absorbing ? x : y;
      RunCursor& other = (&f == &x) ? y : x;
      const std::uint64_t n = f.remaining();
      WahBuilder::fill(out, absorbing, n);
      f.advance(n);
      other.advance(n);
    } else {
      const std::uint32_t l =
          op == Op::And ? (x.literal() & y.literal()) : (x.literal() | y.literal());
      WahBuilder::group(out, l);
      x.advance(1);
      y.advance(1);
    }
  }
  const std::uint32_t tail =
      op == Op::And ? (a.active_word() & b.active_word()) : (a.active_word() | b.active_word());
  WahBuilder::tail(out, tail, a.active_bits());
  return out;
}

}  // namespace

WahVector wah_and(const WahVector& a, const WahVector& b) { return binary_op(a, b, Op::And); }
WahVector wah_or(const WahVector& a, const WahVector& b) { return binary_op(a, b, Op::Or); }

WahVector wah_not(const WahVector& a) {
  WahVector out;
  for (const std::uint32_t w : a.words()) {
    if (w & WahVector::kFillFlag) {
      WahBuilder::fill(out, (w & WahVector::kFillValue) == 0, w & WahVector::kCountMask);
    } else {
      WahBuilder::group(out, ~w & WahVector::kLiteralMask);
    }
  }
  const unsigned bits = a.active_bits();
  const std::uint32_t mask = bits == 0 ? 0u : ((1u << bits) - 1u);
  WahBuilder::tail(out, ~a.active_word() & mask, bits);
  return out;
}

}  // namespace pmuidx
